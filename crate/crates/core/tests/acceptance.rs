//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each,
//! and exits nonzero if a criterion fails that is not listed in
//! `KNOWN_RED` (those are explained in the README).
//!
//! MNIST criteria need the IDX files from `scripts/fetch_mnist.py` under
//! `$PCGEN_DATA_DIR/mnist` or `data/mnist`; without them they are skipped.

use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use pcgen::data::{decode_idx_images, decode_idx_labels, encode_idx_images, encode_idx_labels};
use pcgen::harness::{
    evaluate, generative_quality, load_data, oracle_comparison, reference_inputs, run_train,
    table1, theorem_check, train_report_csv, LoadedData,
};
use pcgen::{
    Activation, Checkpoint, ExperimentConfig, LayerSpec, ModeConfig, PcNetwork, Preset,
};

/// Criteria expected to fail with the documented configuration.
const KNOWN_RED: &[u32] = &[2, 3, 7];

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn criterion_1() -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    for (m, n, r) in [(10, 5, 3), (3, 2, 2), (20, 10, 4)] {
        let check = match theorem_check(m, n, r, 100, 1) {
            Ok(c) => c,
            Err(e) => return Outcome::Fail(format!("({m},{n},{r}): {e}")),
        };
        let good = check.passed()
            && check.worst_reconstruction() < 1e-10
            && check.worst_recovery() < 1e-8
            && check.smallest_margin() > 0.0;
        ok &= good;
        lines.push(format!(
            "({m},{n},{r}) recon {:.1e} recovery {:.1e} margin {:.1e}",
            check.worst_reconstruction(),
            check.worst_recovery(),
            check.smallest_margin()
        ));
    }
    verdict(ok, lines.join("; "))
}

fn criterion_2() -> Outcome {
    let base = ExperimentConfig::preset(Preset::PaperToy);
    let table = match table1(&base, 10, 0) {
        Ok(t) => t,
        Err(e) => return Outcome::Fail(e.to_string()),
    };
    let c = |a, d| table.cell(a, d).mean_correlation();
    let (ld, ln) = (c(Activation::Linear, true), c(Activation::Linear, false));
    let (td, tn) = (c(Activation::Tanh, true), c(Activation::Tanh, false));
    let ok = ld >= 0.95 && td >= 0.90 && ln <= 0.70 && ld > ln && td > tn;
    verdict(
        ok,
        format!(
            "linear decay {ld:.3} (>= 0.95), tanh decay {td:.3} (>= 0.90), \
             linear no-decay {ln:.3} (<= 0.70), tanh no-decay {tn:.3}"
        ),
    )
}

fn criterion_3() -> Outcome {
    // Three inputs, two classes: the smallest underdetermined linear case.
    let mut cfg = ExperimentConfig::preset(Preset::PaperToy).with_decay(true);
    cfg.sizes = vec![3, 2];
    cfg.set("dim", "3").unwrap();
    cfg.set("n_classes", "2").unwrap();
    let (mut rows, mut diverged) = (Vec::new(), 0);
    for seed in 0..20 {
        match oracle_comparison(&cfg, 1, seed) {
            Ok(r) => rows.extend(r),
            Err(pcgen::PcError::Divergence { .. }) => diverged += 1,
            Err(e) => return Outcome::Fail(e.to_string()),
        }
    }
    let worst = rows.iter().map(|r| r.min_norm_error).fold(0.0, f64::max);
    let ridge = rows.iter().map(|r| r.ridge_error).fold(0.0, f64::max);
    verdict(
        diverged == 0 && worst < 1e-3,
        format!(
            "worst relative distance to min-norm solution {worst:.3e} (< 1e-3) over {} samples, \
             {diverged}/20 nets diverged in training; distance to the decayed fixed point {ridge:.3e}",
            rows.len()
        ),
    )
}

fn random_vec(n: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    DVector::from_fn(n, |_, _| StandardNormal.sample(rng))
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let cfg = ModeConfig {
        t_max: 100.0,
        ..ModeConfig::default()
    }
    .training();
    let (mut worst_grad, mut worst_prop) = (0.0f64, 0.0f64);
    for k in 0..10 {
        let sizes: Vec<usize> = (0..3).map(|_| 2 + (rand::Rng::random_range(&mut rng, 0..7))).collect();
        let mut net = match PcNetwork::random(LayerSpec::stack(&sizes, Activation::Tanh), 100 + k) {
            Ok(n) => n,
            Err(e) => return Outcome::Fail(e.to_string()),
        };
        net.nu[2] = 0.5 + k as f64 * 0.2;
        let (x, y) = (random_vec(sizes[0], &mut rng), random_vec(sizes[2], &mut rng));
        net.feedforward_init(&x).unwrap();
        match net.settle(Some(&x), Some(&y), &cfg) {
            Ok(o) if o.converged => {}
            Ok(_) => return Outcome::Fail(format!("net {k} did not settle")),
            Err(e) => return Outcome::Fail(e.to_string()),
        }
        let mu = net.prediction_for(2);
        let loss = |m: &DVector<f64>| 0.5 * (&y - m).norm_squared();
        let h = 1e-6;
        let grad = DVector::from_fn(mu.len(), |i, _| {
            let (mut a, mut b) = (mu.clone(), mu.clone());
            a[i] += h;
            b[i] -= h;
            (loss(&a) - loss(&b)) / (2.0 * h)
        });
        let expected = -grad / net.nu[2];
        worst_grad = worst_grad.max((&net.eps[2] - &expected).norm() / expected.norm());
        let propagated = (&net.backward[1] * &net.eps[2])
            .component_mul(&Activation::Tanh.derivative_map(&net.x[1]));
        worst_prop = worst_prop.max((&net.eps[1] - propagated).amax());
    }
    verdict(
        worst_grad < 1e-4 && worst_prop < 10.0 * cfg.tol,
        format!("gradient rel. error {worst_grad:.2e} (< 1e-4), propagation {worst_prop:.2e} (< {:.0e})", 10.0 * cfg.tol),
    )
}

fn criterion_5() -> Outcome {
    let cfg = ModeConfig {
        t_max: 60.0,
        ..ModeConfig::default()
    };
    let mut worst = 0.0f64;
    let mut settled = 0;
    let mut total = 0;
    for act in [Activation::Linear, Activation::Tanh] {
        for decay in [false, true] {
            let mut exp = ExperimentConfig::preset(Preset::PaperToy).with_decay(decay);
            exp.activation = act;
            exp.seed = 5;
            let data = load_data(&exp).unwrap();
            let mut net = match run_train(&exp, &data) {
                Ok(r) => r.net,
                Err(e) => return Outcome::Fail(e.to_string()),
            };
            // The feed-forward warm start is already the equilibrium, so
            // start from a perturbed state instead.
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            for x in data.train.inputs().iter().take(50) {
                net.feedforward_init(x).unwrap();
                for i in 1..net.depth() {
                    let n = net.x[i].len();
                    net.x[i] += random_vec(n, &mut rng) * 0.1;
                }
                let o = net.settle(Some(x), None, &cfg.discriminative()).unwrap();
                settled += usize::from(o.converged);
                total += 1;
                worst = net.eps.iter().map(|e| e.amax()).fold(worst, f64::max);
            }
        }
    }
    verdict(
        worst < 10.0 * cfg.tol,
        format!("max |eps|_inf {worst:.2e} (< {:.0e}), {settled}/{total} settles converged", 10.0 * cfg.tol),
    )
}

/// The scaled MNIST preset, reading from the workspace `data/` directory
/// unless `PCGEN_DATA_DIR` says otherwise (tests run inside the crate).
fn mnist_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::preset(Preset::MnistScaled);
    if std::env::var_os(pcgen::experiment::DATA_DIR_ENV).is_none() {
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist");
        cfg.set("data_dir", dir.to_str().unwrap()).unwrap();
    }
    cfg
}

struct MnistRuns {
    decay: (pcgen::harness::TrainRun, f64),
    plain: (pcgen::harness::TrainRun, f64),
    data: LoadedData,
}

fn mnist_runs() -> Result<MnistRuns, String> {
    let cfg = mnist_config();
    let dir = cfg.mnist_dir();
    if !dir.join("train-images-idx3-ubyte.gz").exists() && !dir.join("train-images-idx3-ubyte").exists() {
        return Err(format!("no MNIST files under {} (run scripts/fetch_mnist.py)", dir.display()));
    }
    let data = load_data(&cfg).map_err(|e| e.to_string())?;
    let run = |decay: bool| -> Result<(pcgen::harness::TrainRun, f64), String> {
        let cfg = cfg.clone().with_decay(decay);
        let t = Instant::now();
        let run = run_train(&cfg, &data).map_err(|e| e.to_string())?;
        let acc = evaluate(&run.net, data.eval_split(), &cfg.mode)
            .map_err(|e| e.to_string())?
            .accuracy;
        eprintln!("  mnist decay={decay}: accuracy {acc:.3} in {:.0}s", t.elapsed().as_secs_f64());
        Ok((run, acc))
    };
    let plain = run(false)?;
    let decay = run(true)?;
    Ok(MnistRuns { decay, plain, data })
}

fn criterion_6(runs: &Result<MnistRuns, String>) -> Outcome {
    let runs = match runs {
        Ok(r) => r,
        Err(e) => return Outcome::Skip(e.clone()),
    };
    let (plain, decay) = (runs.plain.1, runs.decay.1);
    verdict(
        plain >= 0.85 && decay < plain && decay >= 0.70,
        format!("no decay {plain:.3} (>= 0.85), decay {decay:.3} (< no decay, >= 0.70)"),
    )
}

fn criterion_7(runs: &Result<MnistRuns, String>) -> Outcome {
    let runs = match runs {
        Ok(r) => r,
        Err(e) => return Outcome::Skip(e.clone()),
    };
    let means = reference_inputs(&runs.data.train);
    let quality = |run: &pcgen::harness::TrainRun, decay: bool| {
        let mode = mnist_config().with_decay(decay).mode;
        generative_quality(&run.net, &means, &mode)
    };
    let (d, p) = match (quality(&runs.decay.0, true), quality(&runs.plain.0, false)) {
        (Ok(d), Ok(p)) => (d, p),
        (Err(e), _) | (_, Err(e)) => return Outcome::Fail(e.to_string()),
    };
    let plain_misses = 10 - p.nearest_own();
    verdict(
        d.both() >= 8 && plain_misses > 5,
        format!(
            "decay: {} classes nearest own mean and read back ({} nearest, {} read back; need 8); \
             no decay: {plain_misses} classes miss their own mean (need > 5)",
            d.both(),
            d.nearest_own(),
            d.classified_back()
        ),
    )
}

fn criterion_8() -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;

    // IDX: synthetic data, plus the real files when present.
    let images = pcgen::data::IdxImages {
        rows: 28,
        cols: 28,
        pixels: (0..3 * 784).map(|i| (i * 7 % 256) as u8).collect(),
    };
    let labels = vec![3u8, 1, 4];
    let enc = encode_idx_images(&images);
    let p = Path::new("mem");
    ok &= decode_idx_images(&enc, p).map(|d| encode_idx_images(&d) == enc).unwrap_or(false);
    let enc_l = encode_idx_labels(&labels);
    ok &= decode_idx_labels(&enc_l, p).map(|d| encode_idx_labels(&d) == enc_l).unwrap_or(false);
    let real = mnist_config().mnist_dir().join("t10k-images-idx3-ubyte.gz");
    if real.exists() {
        let raw = read_gz(&real);
        ok &= decode_idx_images(&raw, &real).map(|d| encode_idx_images(&d) == raw).unwrap_or(false);
        notes.push("real t10k images re-encode byte-exact".to_string());
    }

    // Checkpoint save -> load -> save.
    let cfg = ExperimentConfig::preset(Preset::PaperToy).with_decay(true);
    let data = load_data(&cfg).unwrap();
    let run = run_train(&cfg, &data).unwrap();
    let bytes = run.checkpoint.to_bytes();
    ok &= Checkpoint::from_bytes(&bytes).map(|c| c.to_bytes() == bytes).unwrap_or(false);

    // Identical seeds, identical reports.
    let again = run_train(&cfg, &load_data(&cfg).unwrap()).unwrap();
    ok &= train_report_csv(&run.report).unwrap() == train_report_csv(&again.report).unwrap();
    let t1 = table1(&cfg, 2, 3).and_then(|t| t.to_csv()).unwrap();
    let t2 = table1(&cfg, 2, 3).and_then(|t| t.to_csv()).unwrap();
    ok &= t1 == t2;
    notes.push("IDX, checkpoint and CSV reports reproduce byte-for-byte".into());
    verdict(ok, notes.join("; "))
}

fn read_gz(path: &PathBuf) -> Vec<u8> {
    use std::io::Read;
    let mut out = Vec::new();
    flate2::read::GzDecoder::new(std::fs::File::open(path).unwrap())
        .read_to_end(&mut out)
        .unwrap();
    out
}

fn main() {
    // `cargo test` passes harness flags such as `--nocapture`; a filter
    // argument that names nothing here means another target was requested.
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    if !filter.is_empty() && !filter.iter().any(|f| "acceptance".contains(f.as_str())) {
        return;
    }

    let started = Instant::now();
    let mut unexpected = Vec::new();
    let mut report = |n: u32, name: &str, outcome: Outcome| {
        let (tag, detail) = match &outcome {
            Outcome::Pass(d) => ("PASS", d),
            Outcome::Fail(d) if KNOWN_RED.contains(&n) => ("FAIL (known)", d),
            Outcome::Fail(d) => ("FAIL", d),
            Outcome::Skip(d) => ("SKIP", d),
        };
        println!("criterion {n} [{name}]: {tag}: {detail}");
        match outcome {
            Outcome::Fail(_) if !KNOWN_RED.contains(&n) => unexpected.push(n),
            Outcome::Pass(_) if KNOWN_RED.contains(&n) => {
                println!("  note: criterion {n} is listed as known red but passed");
            }
            _ => {}
        }
    };

    report(1, "min-norm oracle", criterion_1());
    report(2, "toy correlation table", criterion_2());
    report(3, "dynamics vs oracle", criterion_3());
    report(4, "gradient identity", criterion_4());
    report(5, "discriminative equilibrium", criterion_5());
    let runs = mnist_runs();
    report(6, "mnist accuracy", criterion_6(&runs));
    report(7, "mnist generation", criterion_7(&runs));
    report(8, "formats and determinism", criterion_8());

    println!("acceptance finished in {:.0}s", started.elapsed().as_secs_f64());
    if !unexpected.is_empty() {
        eprintln!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
