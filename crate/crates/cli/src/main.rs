use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use emgshift::checks::{run_checks, CheckOptions};
use emgshift::config::{Config, CONFIG_VERSION};
use emgshift::experiment::report::{RESULTS_FORMAT_VERSION, SUMMARY_VERSION};
use emgshift::experiment::{parse_strategies, run_experiment, write_results, Dataset, GridProfile, Normalization};
use emgshift::nn::model::CHECKPOINT_VERSION;
use emgshift::signal::io::TRIAL_SCHEMA_VERSION;
use emgshift::synth::{generate_dataset, DATASET_VERSION};

#[derive(Parser)]
#[command(name = "emgshift", about = "Electrode-shift robust EMG classification experiments", disable_version_flag = true)]
struct Cli {
    /// TOML config; defaults apply to anything it leaves out.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Root seed, overriding the config.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,
    /// Print the schema versions of every file format and exit.
    #[arg(long)]
    version: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset.
    Synth {
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Run the experiment plan on a dataset and write results.
    Run {
        #[arg(long, value_name = "DIR")]
        dataset: Option<PathBuf>,
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
        /// Comma-separated subset of vanilla,tl,ada,mix,baseline.
        #[arg(long, value_name = "LIST")]
        strategies: Option<String>,
        #[arg(long, value_enum)]
        norm: Option<NormArg>,
        #[arg(long, value_enum, default_value = "desk")]
        grid: GridArg,
    },
    /// Run gradient, filter, kinematics, SWN and labeling self-checks.
    Check {
        /// Corrupt the analytic gradients; the gradient check must then fail.
        #[arg(long)]
        inject_fault: bool,
    },
    /// Print the effective configuration as TOML.
    Config,
}

#[derive(Clone, Copy, ValueEnum)]
enum NormArg {
    Swn,
    None,
    Both,
}

#[derive(Clone, Copy, ValueEnum)]
enum GridArg {
    Desk,
    Full,
}

enum Failure {
    Usage(String),
    Run(String),
    Checks,
}

impl From<emgshift::Error> for Failure {
    fn from(e: emgshift::Error) -> Self {
        match e {
            emgshift::Error::Config(_) => Failure::Usage(e.to_string()),
            other => Failure::Run(other.to_string()),
        }
    }
}

fn load_config(cli: &Cli) -> Result<Config, Failure> {
    let mut cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(s) = cli.seed {
        cfg.set_seed(s);
    }
    if let Some(j) = cli.jobs {
        cfg.jobs = j;
    }
    Ok(cfg)
}

fn print_versions() {
    println!("emgshift {}", env!("CARGO_PKG_VERSION"));
    println!("config          {CONFIG_VERSION}");
    println!("dataset.json    {DATASET_VERSION}");
    println!("trial manifest  {TRIAL_SCHEMA_VERSION}");
    println!("results.csv     {RESULTS_FORMAT_VERSION}");
    println!("summary.json    {SUMMARY_VERSION}");
    println!("checkpoint      {CHECKPOINT_VERSION}");
}

fn execute(cli: Cli) -> Result<(), Failure> {
    if cli.version {
        print_versions();
        return Ok(());
    }
    let cfg = load_config(&cli)?;
    let Some(command) = cli.command else {
        return Err(Failure::Usage("no command given; see --help".into()));
    };
    match command {
        Command::Synth { out } => {
            let out = out.unwrap_or_else(|| cfg.paths.dataset.clone());
            let s = generate_dataset(&cfg.synth_config(), &out)?;
            println!("wrote {} trials for {} subjects to {}", s.trials, s.n_subjects, out.display());
            println!("rest fraction {:.3}", s.rest_fraction);
        }
        Command::Run { dataset, out, strategies, norm, grid } => {
            let dataset = dataset.unwrap_or_else(|| cfg.paths.dataset.clone());
            let profile = match grid {
                GridArg::Desk => GridProfile::Desk,
                GridArg::Full => GridProfile::Full,
            };
            let mut plan = cfg.plan(profile);
            if let Some(list) = strategies {
                plan.strategies = parse_strategies(&list)?;
            }
            match norm {
                Some(NormArg::Swn) => plan.normalizations = vec![Normalization::Swn],
                Some(NormArg::None) => plan.normalizations = vec![Normalization::None],
                Some(NormArg::Both) => plan.normalizations = vec![Normalization::Swn, Normalization::None],
                None => {}
            }
            plan.validate()?;
            let data = Dataset::load(&dataset).map_err(|e| Failure::Usage(format!("cannot load dataset: {e}")))?;
            let result = run_experiment(&data, &plan, cfg.jobs)?;
            let out = out.unwrap_or_else(|| cfg.paths.out.clone());
            write_results(&out, &result.records, &result.summary)?;
            for c in &result.summary.conditions {
                println!(
                    "{:<8} {:<4} acc {:.3} diff {:+.4} (sd {:.4}) best {}/{}",
                    c.strategy.name(),
                    c.norm.name(),
                    c.mean_accuracy,
                    c.mean_differential,
                    c.sd_differential,
                    c.best.norm_win_ms.map_or("-".to_string(), |w| w.to_string()),
                    c.best.feat_win_ms
                );
            }
            println!("{} records written to {}", result.records.len(), out.display());
        }
        Command::Check { inject_fault } => {
            let report = run_checks(&cfg, CheckOptions { inject_fault })?;
            for c in &report.checks {
                println!(
                    "{} {:<20} {:.3e} <= {:.1e}  {}",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.value,
                    c.tolerance,
                    c.detail
                );
            }
            if !report.passed() {
                return Err(Failure::Checks);
            }
        }
        Command::Config => {
            print!("{}", cfg.to_toml()?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Checks) => ExitCode::from(1),
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Run(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
