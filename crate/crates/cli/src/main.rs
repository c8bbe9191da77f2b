//! `labelind`: runs the label-imputation experiment grid from the command line.
//!
//! Exit status is 0 on success, 1 on a usage or configuration error and 2
//! when the data or a run directory is at fault.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use label_indeterminacy::evaluation::{self, EvaluationReport};
use label_indeterminacy::experiment::{self, ExperimentConfig};
use label_indeterminacy::imputation::MethodId;
use label_indeterminacy::parallel::Strategy;
use label_indeterminacy::synthetic::{generate_world, SelectionMode, WorldConfig};
use label_indeterminacy::Error;

#[derive(Parser)]
#[command(name = "labelind", version, about = "Label imputation experiments for judgment prediction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus with a counterfactual-outcome sidecar.
    Synth(SynthArgs),
    /// Run the full method × balanced-set grid and write a run directory.
    Run(RunArgs),
    /// Recompute predictions.csv and results.csv from a run's saved models.
    Eval {
        run_dir: PathBuf,
    },
    /// Print per-case mean predictions for each method, with their spread.
    Compare {
        run_dir: PathBuf,
        #[arg(required = true)]
        case_ids: Vec<String>,
        /// Write the table here instead of standard output.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Args)]
struct SynthArgs {
    /// TOML world config; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    counterfactuals: PathBuf,
    #[arg(long)]
    population: Option<usize>,
    #[arg(long)]
    dimension: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// `mar` or `outcome_dependent`.
    #[arg(long)]
    selection_mode: Option<SelectionMode>,
    #[arg(long)]
    selection_rate: Option<f64>,
    #[arg(long)]
    flip_rate: Option<f64>,
    #[arg(long)]
    flip_bias: Option<f64>,
    #[arg(long)]
    panel_size: Option<usize>,
    #[arg(long)]
    vote_noise: Option<f64>,
}

#[derive(Args)]
struct RunArgs {
    /// TOML experiment config; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    cutoff_year: Option<i32>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    dimension: Option<usize>,
    #[arg(long)]
    truncation_limit: Option<usize>,
    #[arg(long)]
    head_fraction: Option<f64>,
    /// Comma-separated subset of methods.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<MethodId>>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    l2_penalty: Option<f64>,
    /// Train the corr-family methods on indeterminate cases only.
    #[arg(long)]
    exclude_determinate: bool,
    #[arg(long)]
    normalize_ip_weights: bool,
    #[arg(long)]
    clip_min: Option<f64>,
    #[arg(long)]
    threshold: Option<f64>,
    /// Disable data parallelism.
    #[arg(long)]
    sequential: bool,
}

enum Failure {
    Usage(String),
    Data(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_config() {
            Failure::Usage(e.to_string())
        } else {
            Failure::Data(e.to_string())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Synth(args) => synth(args),
        Command::Run(args) => run(args),
        Command::Eval { run_dir } => experiment::eval_run(&run_dir)
            .map(|reports| print_reports(&reports))
            .map_err(Failure::from),
        Command::Compare { run_dir, case_ids, output } => compare(run_dir, case_ids, output),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Data(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn load<T>(path: &Option<PathBuf>, parse: impl Fn(&PathBuf) -> label_indeterminacy::Result<T>) -> Result<Option<T>, Failure> {
    path.as_ref()
        .map(|p| parse(p).map_err(|e| Failure::Usage(format!("config {}: {e}", p.display()))))
        .transpose()
}

fn synth(args: SynthArgs) -> Result<(), Failure> {
    let mut cfg = load(&args.config, |p| WorldConfig::from_toml_file(p))?.unwrap_or_default();
    macro_rules! set {
        ($($field:ident),*) => { $(if let Some(v) = args.$field { cfg.$field = v; })* };
    }
    set!(population, dimension, seed, selection_mode, selection_rate, flip_rate, flip_bias, panel_size, vote_noise);
    cfg.validate()?;
    let world = generate_world(&cfg)?;
    world.write(&args.corpus, &args.counterfactuals)?;
    let determinate = world
        .cases
        .iter()
        .filter(|c| c.record.authority == label_indeterminacy::corpus::Authority::Determinate)
        .count();
    println!(
        "wrote {} cases ({} determinate) to {}",
        world.cases.len(),
        determinate,
        args.corpus.display()
    );
    Ok(())
}

fn run(args: RunArgs) -> Result<(), Failure> {
    let mut cfg: ExperimentConfig = load(&args.config, |p| ExperimentConfig::from_toml_file(p))?.unwrap_or_default();
    macro_rules! set {
        ($($field:ident),*) => { $(if let Some(v) = args.$field { cfg.$field = v; })* };
    }
    set!(corpus, output, cutoff_year, k, dimension, truncation_limit, head_fraction, methods, seed, clip_min, threshold);
    if let Some(v) = args.learning_rate {
        cfg.train.learning_rate = v;
    }
    if let Some(v) = args.epochs {
        cfg.train.epochs = v;
    }
    if let Some(v) = args.l2_penalty {
        cfg.train.l2_penalty = v;
    }
    if args.exclude_determinate {
        cfg.include_determinate = false;
    }
    if args.normalize_ip_weights {
        cfg.normalize_ip_weights = true;
    }
    if cfg.corpus.as_os_str().is_empty() || cfg.output.as_os_str().is_empty() {
        return Err(Failure::Usage("both a corpus and an output directory are required".into()));
    }
    cfg.validate()?;
    let strategy = if args.sequential { Strategy::Sequential } else { Strategy::default() };
    let summary = experiment::run_with(&cfg, strategy)?;
    println!("authority      train  viol%   test  viol%");
    for s in &summary.split {
        println!(
            "{:<13} {:>6} {:>6.2} {:>6} {:>6.2}",
            s.authority.as_str(),
            s.train,
            100.0 * s.train_violation_rate,
            s.test,
            100.0 * s.test_violation_rate
        );
    }
    println!(
        "balanced set sizes: determinate {}, indeterminate {}; {} models trained",
        summary.balanced_sizes.0, summary.balanced_sizes.1, summary.models
    );
    print_reports(&summary.reports);
    println!("run written to {}", cfg.output.display());
    Ok(())
}

fn print_reports(reports: &[EvaluationReport]) {
    println!("method    test_set        mcc%     std%");
    for r in reports {
        println!(
            "{:<9} {:<13} {:>8.2} {:>8.2}",
            r.method.as_str(),
            r.test_set.as_str(),
            r.mean_mcc,
            r.std_mcc
        );
    }
}

fn compare(run_dir: PathBuf, case_ids: Vec<String>, output: Option<PathBuf>) -> Result<(), Failure> {
    let table = experiment::compare_run(&run_dir, &case_ids)?;
    match output {
        Some(path) => evaluation::write_comparison_csv(path, &table)?,
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            evaluation::write_comparison(&mut lock, &table)?;
            lock.flush().map_err(|e| Failure::Data(e.to_string()))?;
        }
    }
    Ok(())
}
