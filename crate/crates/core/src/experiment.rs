//! Experiment presets and flat `key = value` configuration.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{PcError, PcResult};
use crate::learning::LearningConfig;
use crate::network::{validate_layers, Activation, LayerSpec, ModeConfig};

/// Decay rates used by every `decay = on` preset.
pub const DECAY_LAMBDA_M: f64 = 0.05;
pub const DECAY_LAMBDA_W: f64 = 0.025;
pub const DECAY_LAMBDA_X: f64 = 0.05;

/// Environment variable naming the default dataset root.
pub const DATA_DIR_ENV: &str = "PCGEN_DATA_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// 10-5-3 net on the synthetic exemplar task.
    PaperToy,
    /// 784-600-600-10 tanh net on the full training set, 10 epochs.
    PaperMnist,
    /// 784-100-100-10 tanh net, 5000 training / 1000 test images, 3 epochs.
    MnistScaled,
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::PaperToy, Preset::PaperMnist, Preset::MnistScaled];

    pub fn name(self) -> &'static str {
        match self {
            Preset::PaperToy => "paper-toy",
            Preset::PaperMnist => "paper-mnist",
            Preset::MnistScaled => "mnist-scaled",
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = PcError;

    fn from_str(s: &str) -> PcResult<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| {
                PcError::InvalidConfig(format!(
                    "unknown preset {s:?} (expected one of paper-toy, paper-mnist, mnist-scaled)"
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSpec {
    Toy {
        n_samples: usize,
        noise_sd: f64,
        n_classes: usize,
        dim: usize,
    },
    /// IDX files under `dir`, or under the default root when `None`.
    Mnist {
        dir: Option<PathBuf>,
        train_limit: Option<usize>,
        test_limit: Option<usize>,
    },
}

impl DatasetSpec {
    pub fn name(&self) -> &'static str {
        match self {
            DatasetSpec::Toy { .. } => "toy",
            DatasetSpec::Mnist { .. } => "mnist",
        }
    }

    /// Portable one-line description, e.g.
    /// `toy n_samples=200 noise_sd=0.1 n_classes=3 dim=10`. The MNIST
    /// directory is machine-specific and left out.
    pub fn descriptor(&self) -> String {
        let opt = |v: &Option<usize>| v.map_or("all".to_string(), |n| n.to_string());
        match self {
            DatasetSpec::Toy {
                n_samples,
                noise_sd,
                n_classes,
                dim,
            } => format!("toy n_samples={n_samples} noise_sd={noise_sd} n_classes={n_classes} dim={dim}"),
            DatasetSpec::Mnist {
                train_limit,
                test_limit,
                ..
            } => format!("mnist train_limit={} test_limit={}", opt(train_limit), opt(test_limit)),
        }
    }

    pub fn from_descriptor(text: &str) -> PcResult<Self> {
        let mut words = text.split_whitespace();
        let kind = words.next().unwrap_or("");
        if kind != "toy" && kind != "mnist" {
            return Err(PcError::InvalidConfig(format!("unknown dataset kind in {text:?}")));
        }
        let mut cfg = ExperimentConfig::preset(Preset::PaperToy);
        cfg.set("dataset", kind)?;
        for word in words {
            let (k, v) = word
                .split_once('=')
                .ok_or_else(|| PcError::InvalidConfig(format!("bad dataset field {word:?}")))?;
            cfg.set(k, v)?;
        }
        Ok(cfg.dataset)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub preset: Preset,
    pub sizes: Vec<usize>,
    pub activation: Activation,
    /// Settle parameters; the gates are set per mode at run time.
    pub mode: ModeConfig,
    pub learning: LearningConfig,
    pub decay: bool,
    pub dataset: DatasetSpec,
    pub trials: usize,
    pub seed: u64,
    pub out: PathBuf,
}

impl ExperimentConfig {
    pub fn preset(preset: Preset) -> Self {
        let base = ExperimentConfig {
            preset,
            sizes: vec![10, 5, 3],
            activation: Activation::Linear,
            mode: ModeConfig::default(),
            learning: LearningConfig::default(),
            decay: false,
            dataset: DatasetSpec::Toy {
                n_samples: 200,
                noise_sd: 0.1,
                n_classes: 3,
                dim: 10,
            },
            trials: 10,
            seed: 0,
            out: PathBuf::from("out"),
        };
        let mnist = |sizes: Vec<usize>, epochs, train_limit, test_limit| ExperimentConfig {
            sizes,
            activation: Activation::Tanh,
            learning: LearningConfig {
                epochs,
                weight_dt: MNIST_WEIGHT_DT,
                ..LearningConfig::default()
            },
            dataset: DatasetSpec::Mnist {
                dir: None,
                train_limit,
                test_limit,
            },
            trials: 1,
            ..base.clone()
        };
        match preset {
            Preset::PaperToy => base,
            Preset::PaperMnist => mnist(vec![784, 600, 600, 10], 10, None, None),
            Preset::MnistScaled => mnist(vec![784, 100, 100, 10], 3, Some(5000), Some(1000)),
        }
    }

    /// Switches all three decay rates between the standard values and zero.
    pub fn with_decay(mut self, on: bool) -> Self {
        self.decay = on;
        let (m, w, x) = if on {
            (DECAY_LAMBDA_M, DECAY_LAMBDA_W, DECAY_LAMBDA_X)
        } else {
            (0.0, 0.0, 0.0)
        };
        self.learning.lambda_m = m;
        self.learning.lambda_w = w;
        self.mode.lambda_x = x;
        self
    }

    pub fn layers(&self) -> Vec<LayerSpec> {
        LayerSpec::stack(&self.sizes, self.activation)
    }

    pub fn data_seed(&self) -> u64 {
        self.seed
    }

    pub fn weight_seed(&self) -> u64 {
        self.seed.wrapping_add(1)
    }

    pub fn shuffle_seed(&self) -> u64 {
        self.seed.wrapping_add(2)
    }

    /// Learning config with the shuffle seed derived from `seed`.
    pub fn learning_config(&self) -> LearningConfig {
        LearningConfig {
            shuffle_seed: self.shuffle_seed(),
            ..self.learning
        }
    }

    /// Stem shared by every output file of this run.
    pub fn file_stem(&self) -> String {
        format!(
            "{}-{}-decay-{}-seed{}",
            self.preset,
            self.activation,
            if self.decay { "on" } else { "off" },
            self.seed
        )
    }

    pub fn validate(&self) -> PcResult<()> {
        validate_layers(&self.layers())?;
        self.mode.validate()?;
        self.learning.validate()?;
        if self.trials == 0 {
            return Err(PcError::InvalidConfig("trials must be at least 1".into()));
        }
        match &self.dataset {
            DatasetSpec::Toy {
                n_samples,
                noise_sd,
                n_classes,
                dim,
            } => {
                if *n_samples < *n_classes || *n_classes == 0 || !(*noise_sd >= 0.0) {
                    return Err(PcError::InvalidConfig(format!(
                        "toy dataset needs n_samples >= n_classes >= 1 and noise_sd >= 0 \
                         (n_samples={n_samples}, n_classes={n_classes}, noise_sd={noise_sd})"
                    )));
                }
                self.check_io_sizes(*dim, *n_classes)
            }
            DatasetSpec::Mnist { .. } => self.check_io_sizes(784, 10),
        }
    }

    fn check_io_sizes(&self, input: usize, output: usize) -> PcResult<()> {
        let (first, last) = (self.sizes[0], self.sizes[self.sizes.len() - 1]);
        if first != input || last != output {
            return Err(PcError::InvalidConfig(format!(
                "{} data needs a {input}-...-{output} network, got {first}-...-{last}",
                self.dataset.name()
            )));
        }
        Ok(())
    }

    /// Sets one field from its textual form. Keys match [`Self::to_pairs`].
    pub fn set(&mut self, key: &str, value: &str) -> PcResult<()> {
        let bad = |what: &str| {
            PcError::InvalidConfig(format!("invalid value {value:?} for {key}: expected {what}"))
        };
        let real = || value.parse::<f64>().map_err(|_| bad("a number"));
        let count = || value.parse::<usize>().map_err(|_| bad("a non-negative integer"));
        let limit = || -> PcResult<Option<usize>> {
            if value == "all" {
                Ok(None)
            } else {
                Ok(Some(value.parse().map_err(|_| bad("an integer or \"all\""))?))
            }
        };
        match key {
            "preset" => {
                let preset: Preset = value.parse()?;
                *self = ExperimentConfig {
                    seed: self.seed,
                    out: self.out.clone(),
                    ..ExperimentConfig::preset(preset)
                }
                .with_decay(self.decay);
            }
            "sizes" => {
                self.sizes = value
                    .split(',')
                    .map(|s| s.trim().parse::<usize>())
                    .collect::<Result<_, _>>()
                    .map_err(|_| bad("comma-separated layer sizes"))?;
            }
            "activation" => {
                self.activation = Activation::from_tag(value).ok_or_else(|| bad("linear or tanh"))?
            }
            "decay" => {
                let on = parse_switch(value).ok_or_else(|| bad("on or off"))?;
                *self = self.clone().with_decay(on);
            }
            "tau" => self.mode.tau = real()?,
            "dt" => self.mode.dt = real()?,
            "tol" => self.mode.tol = real()?,
            "t_max" => self.mode.t_max = real()?,
            "lambda_x" => self.mode.lambda_x = real()?,
            "gamma" => self.learning.gamma = real()?,
            "weight_dt" => self.learning.weight_dt = real()?,
            "lambda_m" => self.learning.lambda_m = real()?,
            "lambda_w" => self.learning.lambda_w = real()?,
            "epochs" => self.learning.epochs = count()?,
            "trials" => self.trials = count()?,
            "seed" => self.seed = value.parse().map_err(|_| bad("an unsigned integer"))?,
            "out" => self.out = PathBuf::from(value),
            "dataset" => self.set_dataset(value)?,
            "n_samples" | "noise_sd" | "n_classes" | "dim" => {
                let DatasetSpec::Toy {
                    n_samples,
                    noise_sd,
                    n_classes,
                    dim,
                } = &mut self.dataset
                else {
                    return Err(PcError::InvalidConfig(format!("{key} only applies to the toy dataset")));
                };
                match key {
                    "n_samples" => *n_samples = count()?,
                    "noise_sd" => *noise_sd = real()?,
                    "n_classes" => *n_classes = count()?,
                    _ => *dim = count()?,
                }
            }
            "data_dir" | "train_limit" | "test_limit" => {
                let DatasetSpec::Mnist {
                    dir,
                    train_limit,
                    test_limit,
                } = &mut self.dataset
                else {
                    return Err(PcError::InvalidConfig(format!("{key} only applies to MNIST")));
                };
                match key {
                    "data_dir" => *dir = Some(PathBuf::from(value)),
                    "train_limit" => *train_limit = limit()?,
                    _ => *test_limit = limit()?,
                }
            }
            _ => return Err(PcError::InvalidConfig(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    /// `toy`, `mnist`, or a directory holding MNIST IDX files.
    fn set_dataset(&mut self, value: &str) -> PcResult<()> {
        let mnist = || ExperimentConfig::preset(Preset::MnistScaled).dataset;
        match value {
            "toy" => {
                if !matches!(self.dataset, DatasetSpec::Toy { .. }) {
                    self.dataset = ExperimentConfig::preset(Preset::PaperToy).dataset;
                }
            }
            "mnist" => {
                if !matches!(self.dataset, DatasetSpec::Mnist { .. }) {
                    self.dataset = mnist();
                }
            }
            path => {
                if !matches!(self.dataset, DatasetSpec::Mnist { .. }) {
                    self.dataset = mnist();
                }
                if let DatasetSpec::Mnist { dir, .. } = &mut self.dataset {
                    *dir = Some(PathBuf::from(path));
                }
            }
        }
        Ok(())
    }

    /// Applies `key = value` lines. Blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str) -> PcResult<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(PcError::ConfigParse {
                    line: n + 1,
                    message: format!("expected key = value, got {line:?}"),
                });
            };
            self.set(key.trim(), value.trim()).map_err(|e| PcError::ConfigParse {
                line: n + 1,
                message: e.to_string(),
            })?;
        }
        Ok(())
    }

    /// Every setting as `(key, value)`, in a stable order. Feeding the pairs
    /// back through [`Self::set`] reproduces the config.
    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        let sizes = self.sizes.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
        let mut pairs = vec![
            ("preset", self.preset.to_string()),
            ("sizes", sizes),
            ("activation", self.activation.to_string()),
            ("decay", if self.decay { "on" } else { "off" }.to_string()),
            ("tau", self.mode.tau.to_string()),
            ("dt", self.mode.dt.to_string()),
            ("tol", self.mode.tol.to_string()),
            ("t_max", self.mode.t_max.to_string()),
            ("lambda_x", self.mode.lambda_x.to_string()),
            ("gamma", self.learning.gamma.to_string()),
            ("weight_dt", self.learning.weight_dt.to_string()),
            ("lambda_m", self.learning.lambda_m.to_string()),
            ("lambda_w", self.learning.lambda_w.to_string()),
            ("epochs", self.learning.epochs.to_string()),
            ("trials", self.trials.to_string()),
            ("seed", self.seed.to_string()),
            ("out", self.out.display().to_string()),
            ("dataset", self.dataset.name().to_string()),
        ];
        let opt = |v: &Option<usize>| v.map_or("all".to_string(), |n| n.to_string());
        match &self.dataset {
            DatasetSpec::Toy {
                n_samples,
                noise_sd,
                n_classes,
                dim,
            } => pairs.extend([
                ("n_samples", n_samples.to_string()),
                ("noise_sd", noise_sd.to_string()),
                ("n_classes", n_classes.to_string()),
                ("dim", dim.to_string()),
            ]),
            DatasetSpec::Mnist {
                dir,
                train_limit,
                test_limit,
            } => {
                if let Some(dir) = dir {
                    pairs.push(("data_dir", dir.display().to_string()));
                }
                pairs.extend([("train_limit", opt(train_limit)), ("test_limit", opt(test_limit))]);
            }
        }
        pairs
    }

    /// Directory holding the MNIST IDX files: the configured one, else
    /// `$PCGEN_DATA_DIR/mnist`, else `data/mnist`.
    pub fn mnist_dir(&self) -> PathBuf {
        if let DatasetSpec::Mnist { dir: Some(dir), .. } = &self.dataset {
            return dir.clone();
        }
        default_data_root().join("mnist")
    }
}

/// Step size for MNIST weight updates. With 784 inputs `|s(x[0])|^2` runs
/// into the hundreds, so the unit step used on the toy task overshoots.
/// Larger steps also compound the per-update decay: at 0.01 a decay run
/// loses most of its accuracy, at 0.003 the plain run undertrains.
pub const MNIST_WEIGHT_DT: f64 = 0.005;

pub fn default_data_root() -> PathBuf {
    std::env::var_os(DATA_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new("data").to_path_buf())
}

pub fn parse_switch(value: &str) -> Option<bool> {
    match value {
        "on" | "true" | "1" | "yes" => Some(true),
        "off" | "false" | "0" | "no" => Some(false),
        _ => None,
    }
}
