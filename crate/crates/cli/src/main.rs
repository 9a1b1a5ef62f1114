use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use factprobe_cli::config::{parse_families, parse_regimes};
use factprobe_cli::{pipeline, CliError, CliResult, ExperimentConfig, EXIT_OK, EXIT_USAGE};

/// Fact-checking probes and evidence-leakage diagnostics.
#[derive(Parser, Debug)]
#[command(name = "factprobe", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides the configuration.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Comma-separated model families (forest, recurrent, contextual).
    #[arg(long, global = true, value_delimiter = ',')]
    families: Option<Vec<String>>,
    /// Comma-separated input regimes (claim, evidence, claim+evidence).
    #[arg(long, global = true, value_delimiter = ',')]
    regimes: Option<Vec<String>>,
    /// Fit grid cells in parallel. Results are identical to a sequential run.
    #[arg(long, global = true)]
    parallel: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Filter, split and hash the configured datasets.
    Prepare,
    /// Grid-search and checkpoint every (family, regime) per dataset.
    Train,
    /// Score checkpoints within and across datasets.
    Evaluate,
    /// Evidence-removal curves for probes that read evidence.
    Ablate,
    /// Run prepare, train, evaluate and ablate in order.
    Run,
    /// Write a synthetic leakage corpus.
    Synth(SynthArgs),
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// File stem under <out>/synth.
    #[arg(long, default_value = "synthetic")]
    name: String,
    #[arg(long)]
    n: Option<usize>,
    /// Marker probability of the rank-1 snippet.
    #[arg(long)]
    leakage: Option<f64>,
    /// Per-rank decay of the marker probability.
    #[arg(long)]
    rank_decay: Option<f64>,
    /// Marker probability of the claim.
    #[arg(long)]
    claim_signal: Option<f64>,
}

fn config(common: &Common) -> CliResult<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(o) = &common.out {
        cfg.out = o.clone();
    }
    if let Some(f) = &common.families {
        cfg.families = parse_families(f)?;
    }
    if let Some(r) = &common.regimes {
        cfg.regimes = parse_regimes(r)?;
    }
    cfg.parallel |= common.parallel;
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> CliResult<()> {
    let mut cfg = config(&cli.common)?;
    match cli.command {
        Command::Prepare => {
            pipeline::prepare(&cfg)?;
        }
        Command::Train => {
            pipeline::train(&cfg)?;
        }
        Command::Evaluate => {
            let reports = pipeline::evaluate_all(&cfg)?;
            print!("{}", factprobe::eval::metrics_markdown(&reports));
        }
        Command::Ablate => {
            pipeline::ablate_all(&cfg)?;
        }
        Command::Run => {
            let (reports, _) = pipeline::run_all(&cfg)?;
            print!("{}", factprobe::eval::metrics_markdown(&reports));
        }
        Command::Synth(a) => {
            if a.name.is_empty() || a.name.contains(['/', '\\']) {
                return Err(CliError::Usage(format!("bad synthetic corpus name '{}'", a.name)));
            }
            let s = &mut cfg.synth;
            s.n = a.n.unwrap_or(s.n);
            s.leakage = a.leakage.unwrap_or(s.leakage);
            s.rank_decay = a.rank_decay.unwrap_or(s.rank_decay);
            s.claim_signal = a.claim_signal.unwrap_or(s.claim_signal);
            s.validate()?;
            let path = pipeline::synth(&cfg, &a.name)?;
            println!("{}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
