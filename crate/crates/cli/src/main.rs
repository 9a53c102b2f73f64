use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use countstrata::counts::DEFAULT_BETA;
use countstrata::eval::{ingest_predictions, render_report};
use countstrata::json::{from_json, to_json};
use countstrata::loss::bin_loss;
use countstrata::sampling::{assign_bins, plan_epoch};
use countstrata::select::{bins_at_gamma, optimal_bins, select_gamma, DEFAULT_GAMMAS, DEFAULT_RATIOS, DEFAULT_SEEDS};
use countstrata::stratify::optimal_partition;
use countstrata::synth::{run_comparison, PartitionConfig, SynthSpec, TrainerConfig};
use countstrata::{
    build_histogram, evaluate, ingest_counts, CountRecord, GridSpec, LikelihoodKind, LossConfig, Partition,
    PriorConfig, Scheme,
};

/// Bayesian stratification of crowd counts: binning, balanced sampling,
/// bin-aware loss and per-bin evaluation.
#[derive(Parser)]
#[command(name = "countstrata", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Find MAP-optimal bins for a counts CSV (`id,count`) and write partition JSON.
    Bin(BinArgs),
    /// Run the cross-validated γ grid search and write the tuning report.
    Tune(TuneArgs),
    /// Write one epoch of bin-balanced minibatches.
    Plan(PlanArgs),
    /// Per-record bin loss for a predictions CSV (`id,count_true,count_pred`).
    Loss(LossArgs),
    /// Per-bin and pooled error statistics for a predictions CSV.
    Eval(EvalArgs),
    /// Synthetic benchmark comparing plain training with bin-aware training.
    Synth(SynthArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Likelihood {
    Multinomial,
    Poisson,
}

impl From<Likelihood> for LikelihoodKind {
    fn from(l: Likelihood) -> Self {
        match l {
            Likelihood::Multinomial => LikelihoodKind::Multinomial,
            Likelihood::Poisson => LikelihoodKind::Poisson,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    Rr,
    Rs,
}

impl From<SchemeArg> for Scheme {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::Rr => Scheme::Rr,
            SchemeArg::Rs => Scheme::Rs,
        }
    }
}

#[derive(Args)]
struct ModelArgs {
    /// Additive smoothing added to every count cell.
    #[arg(long, default_value_t = DEFAULT_BETA)]
    beta: u64,
    #[arg(long, value_enum, default_value = "multinomial")]
    likelihood: Likelihood,
}

#[derive(Args)]
struct GridArgs {
    /// Comma-separated γ grid.
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_GAMMAS.to_vec())]
    gammas: Vec<f64>,
    /// Comma-separated held-out fractions.
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_RATIOS.to_vec())]
    ratios: Vec<f64>,
    /// Number of split seeds per grid cell (seeds 0..n).
    #[arg(long, default_value_t = DEFAULT_SEEDS)]
    n_seeds: usize,
}

#[derive(Args)]
struct BinArgs {
    counts: PathBuf,
    /// Output path; standard output when omitted.
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// γ to use with --no-tune.
    #[arg(long)]
    gamma: Option<f64>,
    /// Skip the grid search and bin at --gamma directly.
    #[arg(long, requires = "gamma")]
    no_tune: bool,
    /// Cap on the number of bins (requires --no-tune).
    #[arg(long, requires = "no_tune")]
    alpha: Option<usize>,
    #[command(flatten)]
    grid: GridArgs,
    #[command(flatten)]
    model: ModelArgs,
}

#[derive(Args)]
struct TuneArgs {
    counts: PathBuf,
    #[arg(short, long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    grid: GridArgs,
    #[command(flatten)]
    model: ModelArgs,
}

#[derive(Args)]
struct PlanArgs {
    counts: PathBuf,
    partition: PathBuf,
    #[arg(short, long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    scheme: SchemeArg,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    batch_size: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct LossArgs {
    predictions: PathBuf,
    partition: PathBuf,
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// Weight of the logarithmic inside-bin branch.
    #[arg(long, default_value_t = 1.0)]
    lambda1: f64,
    /// Weight of the bin loss when combined with a model loss.
    #[arg(long, default_value_t = 1.0)]
    lambda2: f64,
}

#[derive(Args)]
struct EvalArgs {
    predictions: PathBuf,
    partition: PathBuf,
    /// Report JSON path; standard output when omitted.
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// Also write the plot-ready per-bin CSV here.
    #[arg(long)]
    plot: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// Number of seeds to run.
    #[arg(long, default_value_t = 10)]
    seeds: u64,
    /// First seed; runs use seed, seed+1, ...
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    n_samples: Option<usize>,
    #[arg(long)]
    log_mean: Option<f64>,
    #[arg(long)]
    log_sd: Option<f64>,
    #[arg(long)]
    max_count: Option<u64>,
    #[arg(long)]
    noise_spread: Option<f64>,
    #[arg(long)]
    bias: Option<f64>,
    /// Fixed γ for the training partition.
    #[arg(long, conflicts_with = "tune")]
    gamma: Option<f64>,
    /// Pick γ by grid search on each training split (slow).
    #[arg(long)]
    tune: bool,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    lambda1: f64,
    #[arg(long, default_value_t = 1.0)]
    lambda2: f64,
    #[command(flatten)]
    model: ModelArgs,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Bin(a) => cmd_bin(a),
        Command::Tune(a) => cmd_tune(a),
        Command::Plan(a) => cmd_plan(a),
        Command::Loss(a) => cmd_loss(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Synth(a) => cmd_synth(a),
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn read_counts(path: &Path) -> Result<Vec<CountRecord>> {
    ingest_counts(&read(path)?).with_context(|| format!("in {}", path.display()))
}

fn read_partition(path: &Path) -> Result<Partition> {
    from_json(&read(path)?).with_context(|| format!("in {}", path.display()))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("cannot write {}", path.display())),
        None => {
            std::io::stdout().lock().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn grid_spec(grid: GridArgs, model: &ModelArgs) -> GridSpec {
    GridSpec {
        gammas: grid.gammas,
        ratios: grid.ratios,
        n_seeds: grid.n_seeds,
        beta: model.beta,
        likelihood: model.likelihood.into(),
    }
}

fn cmd_bin(a: BinArgs) -> Result<()> {
    let records = read_counts(&a.counts)?;
    let kind = a.model.likelihood.into();
    let partition = match (a.no_tune, a.gamma, a.alpha) {
        (true, Some(gamma), None) => bins_at_gamma(&records, gamma, a.model.beta, kind)?,
        (true, Some(gamma), Some(alpha)) => {
            let hist = build_histogram(&records, None)?.smooth(a.model.beta);
            optimal_partition(&hist, &PriorConfig::new(gamma)?.with_alpha(alpha)?, kind)?
        }
        (false, Some(_), _) => bail!("--gamma only applies together with --no-tune"),
        _ => optimal_bins(&records, &grid_spec(a.grid, &a.model))?,
    };
    emit(a.out.as_deref(), &to_json(&partition)?)
}

fn cmd_tune(a: TuneArgs) -> Result<()> {
    let records = read_counts(&a.counts)?;
    let selection = select_gamma(&records, &grid_spec(a.grid, &a.model))?;
    emit(a.out.as_deref(), &to_json(&selection)?)
}

fn cmd_plan(a: PlanArgs) -> Result<()> {
    let records = read_counts(&a.counts)?;
    let partition = read_partition(&a.partition)?;
    let assignment = assign_bins(&records, &partition);
    if !assignment.clamped.is_empty() {
        eprintln!(
            "note: {} record(s) above the partition range were placed in the last bin",
            assignment.clamped.len()
        );
    }
    let batch_size = usize::try_from(a.batch_size).context("batch size too large")?;
    let plan = plan_epoch(&assignment, a.scheme.into(), batch_size, a.seed)?;
    emit(a.out.as_deref(), &to_json(&plan)?)
}

fn cmd_loss(a: LossArgs) -> Result<()> {
    let cfg = LossConfig::new(a.lambda1, a.lambda2)?;
    let preds = ingest_predictions(&read(&a.predictions)?)
        .with_context(|| format!("in {}", a.predictions.display()))?;
    let partition = read_partition(&a.partition)?;
    let mut out = String::from("id,y,y_hat,bin_lo,bin_hi,bin_loss\n");
    for p in &preds {
        let bin = partition.bin_for(p.y);
        // clamped counts lie above the last bin; score them against the bin widened to reach y
        let scored = countstrata::Bin { lo: bin.lo, hi: bin.hi.max(p.y) };
        let l = bin_loss(p.y as f64, p.y_hat, scored, cfg.lambda1)?;
        let _ = writeln!(out, "{},{},{},{},{},{:.4}", p.id, p.y, p.y_hat, bin.lo, bin.hi, l);
    }
    emit(a.out.as_deref(), &out)
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let preds = ingest_predictions(&read(&a.predictions)?)
        .with_context(|| format!("in {}", a.predictions.display()))?;
    let partition = read_partition(&a.partition)?;
    let report = evaluate(&preds, &partition)?;
    if let Some(plot) = &a.plot {
        fs::write(plot, render_report(&report)).with_context(|| format!("cannot write {}", plot.display()))?;
    }
    emit(a.out.as_deref(), &to_json(&report)?)
}

fn cmd_synth(a: SynthArgs) -> Result<()> {
    if a.seeds == 0 {
        bail!("--seeds must be at least 1");
    }
    let defaults = SynthSpec::default();
    let spec = SynthSpec {
        n_samples: a.n_samples.unwrap_or(defaults.n_samples),
        log_mean: a.log_mean.unwrap_or(defaults.log_mean),
        log_sd: a.log_sd.unwrap_or(defaults.log_sd),
        max_count: a.max_count.unwrap_or(defaults.max_count),
        noise_spread: a.noise_spread.unwrap_or(defaults.noise_spread),
        bias: a.bias.unwrap_or(defaults.bias),
        seed: a.seed,
    };
    let partition = PartitionConfig {
        gamma: if a.tune { None } else { a.gamma.or(PartitionConfig::default().gamma) },
        beta: a.model.beta,
        likelihood: a.model.likelihood.into(),
    };
    let trainer_defaults = TrainerConfig::default();
    let last = a.seed.checked_add(a.seeds).context("seed range overflows")?;
    let trainer = TrainerConfig {
        epochs: a.epochs.unwrap_or(trainer_defaults.epochs),
        batch_size: a.batch_size.unwrap_or(trainer_defaults.batch_size),
        learning_rate: a.learning_rate.unwrap_or(trainer_defaults.learning_rate),
        loss: LossConfig::new(a.lambda1, a.lambda2)?,
        seeds: (a.seed..last).collect(),
        ..trainer_defaults
    };
    let report = run_comparison(&spec, &partition, &trainer)?;
    eprintln!(
        "pooled std below baseline: rr {}/{n}, rs {}/{n}, either {}/{n}",
        report.wins.rr,
        report.wins.rs,
        report.wins.either,
        n = report.wins.seeds
    );
    emit(a.out.as_deref(), &to_json(&report)?)
}
