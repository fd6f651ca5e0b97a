//! Experiment protocols shared by the command-line tool and the acceptance
//! suite. Everything here computes in memory; callers decide what to write.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::checkpoint::{Checkpoint, Provenance};
use crate::data::{load_mnist_idx, make_toy_dataset, one_hot, Dataset};
use crate::error::{PcError, PcResult};
use crate::experiment::{DatasetSpec, ExperimentConfig, Preset};
use crate::learning::train;
use crate::metrics::{error_norms, normalized_correlation, RunReport};
use crate::minnorm::{min_norm_solve, verify_theorem, TheoremReport};
use crate::modes::{discriminate, generate, sample_to_pixels};
use crate::network::{Activation, ModeConfig, PcNetwork};
use crate::report::{csv_bytes, num, pgm_bytes, OutputSet};

/// Training split plus an optional held-out split.
#[derive(Debug, Clone)]
pub struct LoadedData {
    pub train: Dataset,
    pub test: Option<Dataset>,
}

impl LoadedData {
    /// The held-out split when there is one, else the training split.
    pub fn eval_split(&self) -> &Dataset {
        self.test.as_ref().unwrap_or(&self.train)
    }
}

fn idx_file(dir: &Path, stem: &str) -> PathBuf {
    let gz = dir.join(format!("{stem}.gz"));
    if gz.exists() {
        gz
    } else {
        dir.join(stem)
    }
}

pub fn load_data(cfg: &ExperimentConfig) -> PcResult<LoadedData> {
    match &cfg.dataset {
        DatasetSpec::Toy {
            n_samples,
            noise_sd,
            n_classes,
            dim,
        } => Ok(LoadedData {
            train: make_toy_dataset(cfg.data_seed(), *n_samples, *noise_sd, *n_classes, *dim)?,
            test: None,
        }),
        DatasetSpec::Mnist {
            train_limit,
            test_limit,
            ..
        } => {
            let dir = cfg.mnist_dir();
            let split = |prefix: &str, limit: &Option<usize>| -> PcResult<Dataset> {
                let ds = load_mnist_idx(
                    &idx_file(&dir, &format!("{prefix}-images-idx3-ubyte")),
                    &idx_file(&dir, &format!("{prefix}-labels-idx1-ubyte")),
                )?;
                Ok(match limit {
                    Some(n) => ds.slice(0, *n),
                    None => ds,
                })
            };
            Ok(LoadedData {
                train: split("train", train_limit)?,
                test: Some(split("t10k", test_limit)?),
            })
        }
    }
}

/// Exemplars when the dataset has them, otherwise per-class mean inputs.
pub fn reference_inputs(ds: &Dataset) -> Vec<DVector<f64>> {
    match ds.exemplars() {
        Some(ex) => ex.to_vec(),
        None => ds.class_means(),
    }
}

#[derive(Debug, Clone)]
pub struct TrainRun {
    pub net: PcNetwork,
    pub report: RunReport,
    pub checkpoint: Checkpoint,
}

pub fn run_train(cfg: &ExperimentConfig, data: &LoadedData) -> PcResult<TrainRun> {
    cfg.validate()?;
    let mut net = PcNetwork::random(cfg.layers(), cfg.weight_seed())?;
    let report = train(&mut net, &data.train, &cfg.mode, &cfg.learning_config())?;
    let checkpoint = Checkpoint::from_network(
        &net,
        Provenance {
            seed: cfg.seed,
            epochs: cfg.learning.epochs as u32,
            dataset: cfg.dataset.descriptor(),
            preset: cfg.preset.to_string(),
            lambda_m: cfg.learning.lambda_m,
            lambda_w: cfg.learning.lambda_w,
            lambda_x: cfg.mode.lambda_x,
            decay: cfg.decay,
        },
        data.train.meta().image_shape,
        reference_inputs(&data.train),
    );
    Ok(TrainRun {
        net,
        report,
        checkpoint,
    })
}

/// One row per epoch: mean settled energy and mean error norm per layer.
/// Wall time is left out so reruns with the same seed compare equal.
pub fn train_report_csv(report: &RunReport) -> PcResult<Vec<u8>> {
    let depth = report.per_epoch_error_norms.first().map_or(0, Vec::len);
    let mut header = vec!["epoch".to_string(), "energy".to_string()];
    header.extend((0..depth).map(|i| format!("error_norm_{i}")));
    let rows: Vec<Vec<String>> = report
        .per_epoch_energy
        .iter()
        .zip(&report.per_epoch_error_norms)
        .enumerate()
        .map(|(e, (energy, norms))| {
            let mut row = vec![(e + 1).to_string(), num(*energy)];
            row.extend(norms.iter().map(|&v| num(v)));
            row
        })
        .collect();
    csv_bytes(&header, &rows)
}

pub fn checkpoint_path(cfg: &ExperimentConfig) -> PathBuf {
    cfg.out.join(format!("{}.ckpt", cfg.file_stem()))
}

pub fn train_outputs(cfg: &ExperimentConfig, run: &TrainRun) -> PcResult<OutputSet> {
    let mut set = OutputSet::new();
    set.add(checkpoint_path(cfg), run.checkpoint.to_bytes());
    set.add(
        cfg.out.join(format!("{}-train.csv", cfg.file_stem())),
        train_report_csv(&run.report)?,
    );
    Ok(set)
}

/// Rebuilds the data a checkpoint was trained on from its provenance.
/// `dataset` (`toy`, `mnist` or a directory) overrides the recorded source.
pub fn checkpoint_data(ckpt: &Checkpoint, dataset: Option<&str>) -> PcResult<LoadedData> {
    let mut cfg = ExperimentConfig::preset(Preset::PaperToy);
    cfg.dataset = DatasetSpec::from_descriptor(&ckpt.provenance.dataset)?;
    if let Some(d) = dataset {
        cfg.set("dataset", d)?;
    }
    cfg.seed = ckpt.provenance.seed;
    load_data(&cfg)
}

/// Settle parameters a checkpoint was trained with, applied on top of `base`.
pub fn checkpoint_mode(ckpt: &Checkpoint, base: &ModeConfig) -> ModeConfig {
    base.with_lambda_x(ckpt.provenance.lambda_x)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    pub accuracy: f64,
    /// Mean settled error norm per layer.
    pub mean_error_norms: Vec<f64>,
    pub converged_fraction: f64,
    pub predictions: Vec<usize>,
}

/// Discriminative pass over every sample in `ds`.
pub fn evaluate(net: &PcNetwork, ds: &Dataset, mode: &ModeConfig) -> PcResult<EvalResult> {
    if ds.is_empty() {
        return Err(PcError::Domain("cannot evaluate on an empty dataset".into()));
    }
    if ds.input_dim() != net.input_size() || ds.n_classes() != net.output_size() {
        return Err(PcError::ShapeMismatch(format!(
            "dataset is {}->{} but the network is {}->{}",
            ds.input_dim(),
            ds.n_classes(),
            net.input_size(),
            net.output_size()
        )));
    }
    let mut work = net.clone();
    let mut norms = vec![0.0; net.depth()];
    let mut predictions = Vec::with_capacity(ds.len());
    let mut converged = 0;
    for input in ds.inputs() {
        let d = discriminate(&mut work, input, mode)?;
        for (acc, v) in norms.iter_mut().zip(error_norms(&work)) {
            *acc += v;
        }
        converged += usize::from(d.converged);
        predictions.push(d.class);
    }
    let n = ds.len() as f64;
    let hits = predictions.iter().zip(ds.labels()).filter(|(p, l)| p == l).count();
    Ok(EvalResult {
        accuracy: hits as f64 / n,
        mean_error_norms: norms.iter().map(|v| v / n).collect(),
        converged_fraction: converged as f64 / n,
        predictions,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassSample {
    pub class: usize,
    pub sample: DVector<f64>,
    /// Correlation with every reference input; NaN for a zero sample.
    pub correlations: Vec<f64>,
    /// Reference the sample correlates with most, if any is defined.
    pub nearest: Option<usize>,
    /// What the network itself reads the sample as.
    pub classified_as: usize,
    pub converged: bool,
    pub residual: f64,
}

impl ClassSample {
    pub fn own_correlation(&self) -> Option<f64> {
        self.correlations.get(self.class).copied().filter(|c| !c.is_nan())
    }
}

/// Generates one sample per class in `classes` and scores it against
/// `references` and against the network's own discriminative read-out.
pub fn generate_classes(
    net: &PcNetwork,
    classes: &[usize],
    references: &[DVector<f64>],
    mode: &ModeConfig,
) -> PcResult<Vec<ClassSample>> {
    let n_out = net.output_size();
    if let Some(&bad) = classes.iter().find(|&&c| c >= n_out) {
        return Err(PcError::Domain(format!(
            "class {bad} out of range for a {n_out}-class network"
        )));
    }
    if let Some(r) = references.iter().find(|r| r.len() != net.input_size()) {
        return Err(PcError::ShapeMismatch(format!(
            "reference input has {} entries, the network takes {}",
            r.len(),
            net.input_size()
        )));
    }
    let mut work = net.clone();
    classes
        .iter()
        .map(|&class| {
            let g = generate(&mut work, &one_hot(class, n_out)?, mode)?;
            let correlations: Vec<f64> = references
                .iter()
                .map(|r| normalized_correlation(&g.sample, r).unwrap_or(f64::NAN))
                .collect();
            let nearest = correlations
                .iter()
                .enumerate()
                .filter(|(_, c)| !c.is_nan())
                .fold(None, |best: Option<(usize, f64)>, (i, &c)| match best {
                    Some((_, b)) if b >= c => best,
                    _ => Some((i, c)),
                })
                .map(|(i, _)| i);
            let classified_as = discriminate(&mut work, &g.sample, mode)?.class;
            Ok(ClassSample {
                class,
                sample: g.sample,
                correlations,
                nearest,
                classified_as,
                converged: g.converged,
                residual: g.residual,
            })
        })
        .collect()
}

/// CSV of generated samples, plus one PGM per class for image data.
pub fn generate_outputs(
    out: &Path,
    stem: &str,
    samples: &[ClassSample],
    image_shape: Option<(usize, usize)>,
) -> PcResult<OutputSet> {
    let mut set = OutputSet::new();
    let n_refs = samples.first().map_or(0, |s| s.correlations.len());
    let dim = samples.first().map_or(0, |s| s.sample.len());
    let mut header = vec![
        "class".to_string(),
        "own_correlation".into(),
        "nearest_reference".into(),
        "classified_as".into(),
        "converged".into(),
        "residual".into(),
    ];
    header.extend((0..n_refs).map(|i| format!("corr_{i}")));
    if image_shape.is_none() {
        header.extend((0..dim).map(|i| format!("x_{i}")));
    }
    let rows: Vec<Vec<String>> = samples
        .iter()
        .map(|s| {
            let mut row = vec![
                s.class.to_string(),
                s.own_correlation().map_or("nan".into(), num),
                s.nearest.map_or("none".into(), |n| n.to_string()),
                s.classified_as.to_string(),
                s.converged.to_string(),
                num(s.residual),
            ];
            row.extend(s.correlations.iter().map(|&c| num(c)));
            if image_shape.is_none() {
                row.extend(s.sample.iter().map(|&v| num(v)));
            }
            row
        })
        .collect();
    set.add(out.join(format!("{stem}-generated.csv")), csv_bytes(&header, &rows)?);
    if let Some((r, c)) = image_shape {
        for s in samples {
            set.add(
                out.join(format!("{stem}-class{}.pgm", s.class)),
                pgm_bytes(r, c, &sample_to_pixels(&s.sample))?,
            );
        }
    }
    Ok(set)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TheoremCheck {
    pub m: usize,
    pub n: usize,
    pub r: usize,
    pub reports: Vec<TheoremReport>,
}

impl TheoremCheck {
    pub fn passed(&self) -> bool {
        self.reports.iter().all(|r| r.passed)
    }
    pub fn failures(&self) -> usize {
        self.reports.iter().filter(|r| !r.passed).count()
    }
    pub fn worst_reconstruction(&self) -> f64 {
        self.reports.iter().map(|r| r.reconstruction_error).fold(0.0, f64::max)
    }
    pub fn worst_recovery(&self) -> f64 {
        self.reports.iter().map(|r| r.worst_recovery_error).fold(0.0, f64::max)
    }
    pub fn smallest_margin(&self) -> f64 {
        self.reports.iter().map(|r| r.worst_norm_margin).fold(f64::INFINITY, f64::min)
    }
}

/// Null-space directions probed per column of `X`.
pub const THEOREM_PERTURBATIONS: usize = 20;

/// Verifies the minimum-norm construction on `trials` Gaussian instances
/// with `X` of size `m x r` and `Y` of size `n x r`.
pub fn theorem_check(m: usize, n: usize, r: usize, trials: usize, seed: u64) -> PcResult<TheoremCheck> {
    if !(r >= 1 && r <= n && n < m) {
        return Err(PcError::Hypothesis(format!(
            "need 1 <= r <= n < m, got m={m}, n={n}, r={r}"
        )));
    }
    let reports = (0..trials)
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(t as u64));
            let x = DMatrix::from_fn(m, r, |_, _| StandardNormal.sample(&mut rng));
            let y = DMatrix::from_fn(n, r, |_, _| StandardNormal.sample(&mut rng));
            verify_theorem(&x, &y, THEOREM_PERTURBATIONS, seed ^ (t as u64).rotate_left(32))
        })
        .collect::<PcResult<Vec<_>>>()?;
    Ok(TheoremCheck { m, n, r, reports })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub seed: u64,
    /// Correlation of each class's generated sample with its exemplar.
    pub correlations: Vec<f64>,
    /// Discriminative accuracy on the training samples.
    pub accuracy: f64,
}

impl TrialResult {
    pub fn mean_correlation(&self) -> f64 {
        self.correlations.iter().sum::<f64>() / self.correlations.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table1Cell {
    pub activation: Activation,
    pub decay: bool,
    pub trials: Vec<TrialResult>,
}

impl Table1Cell {
    pub fn mean_correlation(&self) -> f64 {
        self.trials.iter().map(TrialResult::mean_correlation).sum::<f64>() / self.trials.len() as f64
    }
    pub fn mean_accuracy(&self) -> f64 {
        self.trials.iter().map(|t| t.accuracy).sum::<f64>() / self.trials.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table1 {
    pub cells: Vec<Table1Cell>,
}

impl Table1 {
    pub fn cell(&self, activation: Activation, decay: bool) -> &Table1Cell {
        self.cells
            .iter()
            .find(|c| c.activation == activation && c.decay == decay)
            .expect("every activation/decay pair is run")
    }

    /// Rows decay / no decay, columns linear / tanh.
    pub fn render(&self) -> String {
        let mut s = format!("{:<10}{:>10}{:>10}\n", "", "linear", "tanh");
        for (label, decay) in [("decay", true), ("no decay", false)] {
            s += &format!(
                "{label:<10}{:>10.3}{:>10.3}\n",
                self.cell(Activation::Linear, decay).mean_correlation(),
                self.cell(Activation::Tanh, decay).mean_correlation()
            );
        }
        s
    }

    pub fn to_csv(&self) -> PcResult<Vec<u8>> {
        let n_classes = self.cells[0].trials[0].correlations.len();
        let mut header = vec!["activation".to_string(), "decay".into(), "seed".into()];
        header.extend((0..n_classes).map(|c| format!("corr_{c}")));
        header.extend(["mean_correlation".to_string(), "accuracy".into()]);
        let mut rows = Vec::new();
        for cell in &self.cells {
            for t in &cell.trials {
                let mut row = vec![
                    cell.activation.to_string(),
                    if cell.decay { "on" } else { "off" }.to_string(),
                    t.seed.to_string(),
                ];
                row.extend(t.correlations.iter().map(|&c| num(c)));
                row.extend([num(t.mean_correlation()), num(t.accuracy)]);
                rows.push(row);
            }
        }
        csv_bytes(&header, &rows)
    }
}

/// Trains and samples one network for a single `table1` cell.
pub fn table1_trial(cfg: &ExperimentConfig) -> PcResult<TrialResult> {
    let data = load_data(cfg)?;
    let run = run_train(cfg, &data)?;
    let exemplars = data
        .train
        .exemplars()
        .ok_or_else(|| PcError::InvalidConfig("table1 needs a dataset with exemplars".into()))?;
    let classes: Vec<usize> = (0..data.train.n_classes()).collect();
    let samples = generate_classes(&run.net, &classes, exemplars, &cfg.mode)?;
    let correlations = samples
        .iter()
        .map(|s| s.own_correlation().unwrap_or(0.0))
        .collect();
    let accuracy = evaluate(&run.net, &data.train, &cfg.mode)?.accuracy;
    Ok(TrialResult {
        seed: cfg.seed,
        correlations,
        accuracy,
    })
}

/// Every {linear, tanh} x {decay, no decay} cell over `trials` seeds
/// `seed, seed + 1, ...`. Trials run in parallel; results are ordered.
pub fn table1(base: &ExperimentConfig, trials: usize, seed: u64) -> PcResult<Table1> {
    let mut jobs = Vec::new();
    for activation in [Activation::Linear, Activation::Tanh] {
        for decay in [true, false] {
            for t in 0..trials {
                let mut cfg = base.clone().with_decay(decay);
                cfg.activation = activation;
                cfg.seed = seed.wrapping_add(t as u64);
                jobs.push(cfg);
            }
        }
    }
    for cfg in &jobs {
        cfg.validate()?;
    }
    let results = jobs
        .par_iter()
        .map(table1_trial)
        .collect::<PcResult<Vec<_>>>()?;
    let cells = jobs
        .chunks(trials)
        .zip(results.chunks(trials))
        .map(|(cfgs, trials)| Table1Cell {
            activation: cfgs[0].activation,
            decay: cfgs[0].decay,
            trials: trials.to_vec(),
        })
        .collect();
    Ok(Table1 { cells })
}

/// Generated sample against the exact minimum-norm and ridge solutions for
/// one class of a trained two-layer linear net.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleComparison {
    pub seed: u64,
    pub class: usize,
    /// `|x - x_minnorm| / |x_minnorm|`.
    pub min_norm_error: f64,
    /// Same against `(W M + nu lambda_x I)^-1 W Y`, the fixed point of the
    /// decayed dynamics.
    pub ridge_error: f64,
    pub converged: bool,
}

/// Trains `nets` two-layer linear networks (seeds `seed..seed + nets`) with
/// `cfg` and compares every class's generated sample with the oracle.
pub fn oracle_comparison(cfg: &ExperimentConfig, nets: usize, seed: u64) -> PcResult<Vec<OracleComparison>> {
    if cfg.sizes.len() != 2 || cfg.activation != Activation::Linear {
        return Err(PcError::InvalidConfig(
            "the oracle comparison needs a two-layer linear network".into(),
        ));
    }
    let mut out = Vec::new();
    for k in 0..nets {
        let mut cfg = cfg.clone();
        cfg.seed = seed.wrapping_add(k as u64);
        let data = load_data(&cfg)?;
        let run = run_train(&cfg, &data)?;
        let net = &run.net;
        let (m, w) = (&net.forward[0], &net.backward[0]);
        let ridge_lhs = w * m + DMatrix::identity(m.ncols(), m.ncols()) * (net.nu[1] * cfg.mode.lambda_x);
        let lu = ridge_lhs.lu();
        let classes: Vec<usize> = (0..net.output_size()).collect();
        for s in generate_classes(net, &classes, &[], &cfg.mode)? {
            let y = one_hot(s.class, net.output_size())?;
            let exact = min_norm_solve(m, &y)?.x;
            let ridge = lu
                .solve(&(w * &y))
                .ok_or_else(|| PcError::IllPosed("ridge system is singular".into()))?;
            out.push(OracleComparison {
                seed: cfg.seed,
                class: s.class,
                min_norm_error: (&s.sample - &exact).norm() / exact.norm(),
                ridge_error: (&s.sample - &ridge).norm() / ridge.norm(),
                converged: s.converged,
            });
        }
    }
    Ok(out)
}

/// Per-class outcome of the MNIST generative check.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerativeQuality {
    pub samples: Vec<ClassSample>,
}

impl GenerativeQuality {
    /// Classes whose sample is closest to its own reference.
    pub fn nearest_own(&self) -> usize {
        self.samples.iter().filter(|s| s.nearest == Some(s.class)).count()
    }
    /// Classes whose sample the network reads back as that class.
    pub fn classified_back(&self) -> usize {
        self.samples.iter().filter(|s| s.classified_as == s.class).count()
    }
    /// Classes meeting both conditions at once.
    pub fn both(&self) -> usize {
        self.samples
            .iter()
            .filter(|s| s.nearest == Some(s.class) && s.classified_as == s.class)
            .count()
    }
}

pub fn generative_quality(net: &PcNetwork, references: &[DVector<f64>], mode: &ModeConfig) -> PcResult<GenerativeQuality> {
    let classes: Vec<usize> = (0..net.output_size()).collect();
    Ok(GenerativeQuality {
        samples: generate_classes(net, &classes, references, mode)?,
    })
}
