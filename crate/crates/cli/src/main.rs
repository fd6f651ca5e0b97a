//! `pcgen`: train, evaluate and sample predictive coding networks.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use pcgen::harness::{
    checkpoint_data, checkpoint_mode, evaluate, generate_classes, generate_outputs, load_data,
    run_train, table1, theorem_check, train_outputs,
};
use pcgen::report::{csv_bytes, num, OutputSet};
use pcgen::{Checkpoint, ExperimentConfig, ModeConfig, Preset};

#[derive(Parser)]
#[command(name = "pcgen", version, about = "Predictive coding networks with decay-driven generation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a network and write a checkpoint plus a per-epoch report.
    Train(ExperimentArgs),
    /// Classify a dataset with a trained checkpoint.
    Eval(EvalArgs),
    /// Generate one input per class from a checkpoint.
    Generate(GenerateArgs),
    /// Check the minimum-norm construction on random instances.
    TheoremCheck(TheoremArgs),
    /// Generative correlations for {linear, tanh} x {decay, no decay}.
    Table1(ExperimentArgs),
}

#[derive(Args, Clone)]
struct SettleArgs {
    /// Euler step for the node dynamics.
    #[arg(long)]
    dt: Option<f64>,
    /// Equilibrium tolerance on the largest node derivative.
    #[arg(long)]
    tol: Option<f64>,
}

impl SettleArgs {
    fn apply(&self, mode: &mut ModeConfig) {
        if let Some(dt) = self.dt {
            mode.dt = dt;
        }
        if let Some(tol) = self.tol {
            mode.tol = tol;
        }
    }
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long, default_value = "paper-toy")]
    preset: String,
    /// Flat `key = value` file applied on top of the preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Weight and activity decay at the preset rates.
    #[arg(long, value_parser = ["on", "off"])]
    decay: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Number of trials (table1 only).
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// `toy`, `mnist`, or a directory of MNIST IDX files.
    #[arg(long)]
    dataset: Option<String>,
    /// Extra `key=value` overrides, applied last.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[command(flatten)]
    settle: SettleArgs,
}

impl ExperimentArgs {
    fn config(&self) -> Result<ExperimentConfig> {
        let preset: Preset = self.preset.parse()?;
        let mut cfg = ExperimentConfig::preset(preset);
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            cfg.apply_text(&text)
                .with_context(|| format!("in config {}", path.display()))?;
        }
        if let Some(d) = &self.decay {
            cfg.set("decay", d)?;
        }
        if let Some(d) = &self.dataset {
            cfg.set("dataset", d)?;
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(epochs) = self.epochs {
            cfg.learning.epochs = epochs;
        }
        if let Some(trials) = self.trials {
            cfg.trials = trials;
        }
        if let Some(out) = &self.out {
            cfg.out = out.clone();
        }
        self.settle.apply(&mut cfg.mode);
        for kv in &self.overrides {
            let (k, v) = kv
                .split_once('=')
                .with_context(|| format!("--set expects KEY=VALUE, got {kv:?}"))?;
            cfg.set(k.trim(), v.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Overrides the dataset recorded in the checkpoint.
    #[arg(long)]
    dataset: Option<String>,
    /// Also write an evaluation CSV into this directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    settle: SettleArgs,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Comma-separated class indices; every class when omitted.
    #[arg(long, value_delimiter = ',')]
    classes: Option<Vec<usize>>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[command(flatten)]
    settle: SettleArgs,
}

#[derive(Args)]
struct TheoremArgs {
    #[arg(long, default_value_t = 10)]
    m: usize,
    #[arg(long, default_value_t = 5)]
    n: usize,
    #[arg(long, default_value_t = 3)]
    r: usize,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn stem_of(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "checkpoint".into())
}

fn sci(values: &[f64]) -> String {
    values.iter().map(|v| format!("{v:.3e}")).collect::<Vec<_>>().join(", ")
}

fn commit(set: OutputSet) -> Result<()> {
    for path in set.commit()? {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn cmd_train(args: &ExperimentArgs) -> Result<ExitCode> {
    let cfg = args.config()?;
    let data = load_data(&cfg)?;
    let run = run_train(&cfg, &data)?;
    for (e, energy) in run.report.per_epoch_energy.iter().enumerate() {
        let norms = &run.report.per_epoch_error_norms[e];
        println!("epoch {}: energy {energy:.6}, error norms [{}]", e + 1, sci(norms));
    }
    println!(
        "converged {:.1}% of settles in {:.1}s",
        100.0 * run.report.converged_fraction,
        run.report.wall_time
    );
    commit(train_outputs(&cfg, &run)?)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_eval(args: &EvalArgs) -> Result<ExitCode> {
    let ckpt = Checkpoint::load(&args.checkpoint)?;
    let net = ckpt.network()?;
    let data = checkpoint_data(&ckpt, args.dataset.as_deref())?;
    let mut mode = checkpoint_mode(&ckpt, &ModeConfig::default());
    args.settle.apply(&mut mode);
    let ds = data.eval_split();
    let eval = evaluate(&net, ds, &mode)?;
    println!("accuracy {:.4} on {} samples", eval.accuracy, ds.len());
    println!("mean error norms [{}]", sci(&eval.mean_error_norms));
    println!("converged {:.1}%", 100.0 * eval.converged_fraction);
    if let Some(out) = &args.out {
        let mut header = vec!["samples".to_string(), "accuracy".into(), "converged_fraction".into()];
        header.extend((0..eval.mean_error_norms.len()).map(|i| format!("error_norm_{i}")));
        let mut row = vec![ds.len().to_string(), num(eval.accuracy), num(eval.converged_fraction)];
        row.extend(eval.mean_error_norms.iter().map(|&v| num(v)));
        let mut set = OutputSet::new();
        set.add(
            out.join(format!("{}-eval.csv", stem_of(&args.checkpoint))),
            csv_bytes(&header, &[row])?,
        );
        commit(set)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_generate(args: &GenerateArgs) -> Result<ExitCode> {
    let ckpt = Checkpoint::load(&args.checkpoint)?;
    let net = ckpt.network()?;
    let classes = args
        .classes
        .clone()
        .unwrap_or_else(|| (0..net.output_size()).collect());
    if classes.is_empty() {
        bail!("no classes requested");
    }
    let mut mode = checkpoint_mode(&ckpt, &ModeConfig::default());
    args.settle.apply(&mut mode);
    let samples = generate_classes(&net, &classes, &ckpt.references, &mode)?;
    println!("class  own-corr  nearest  read-as  converged");
    for s in &samples {
        println!(
            "{:>5}  {:>8}  {:>7}  {:>7}  {}",
            s.class,
            s.own_correlation().map_or("n/a".into(), |c| format!("{c:.4}")),
            s.nearest.map_or("n/a".into(), |n| n.to_string()),
            s.classified_as,
            s.converged
        );
    }
    commit(generate_outputs(
        &args.out,
        &stem_of(&args.checkpoint),
        &samples,
        ckpt.image_shape,
    )?)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_theorem_check(args: &TheoremArgs) -> Result<ExitCode> {
    let check = theorem_check(args.m, args.n, args.r, args.trials, args.seed)?;
    println!(
        "m={} n={} r={}: {}/{} instances pass",
        check.m,
        check.n,
        check.r,
        check.reports.len() - check.failures(),
        check.reports.len()
    );
    println!("worst |AX - Y|            {:.3e}", check.worst_reconstruction());
    println!("worst recovery rel. error {:.3e}", check.worst_recovery());
    println!("smallest norm margin      {:.3e}", check.smallest_margin());
    Ok(if check.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn cmd_table1(args: &ExperimentArgs) -> Result<ExitCode> {
    let cfg = args.config()?;
    let table = table1(&cfg, cfg.trials, cfg.seed)?;
    print!("{}", table.render());
    let mut set = OutputSet::new();
    set.add(
        cfg.out.join(format!("table1-{}-seed{}.csv", cfg.preset, cfg.seed)),
        table.to_csv()?,
    );
    commit(set)?;
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Generate(a) => cmd_generate(a),
        Command::TheoremCheck(a) => cmd_theorem_check(a),
        Command::Table1(a) => cmd_table1(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
