use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gformula::config::{AnalysisConfig, Severity};
use gformula::report::{render_text, ReportOptions};
use gformula::Plugins;

#[derive(Parser)]
#[command(name = "gformula", version, about = "Parametric g-formula estimation for longitudinal panel data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the models, simulate every intervention and write the result files.
    Run(RunArgs),
    /// Check a config file and report problems without running it.
    Validate {
        config: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    config: PathBuf,

    /// Override the seed from the config file.
    #[arg(long)]
    seed: Option<u64>,

    /// Worker threads for simulation and bootstrap.
    #[arg(long, env = "GFORMULA_WORKERS")]
    workers: Option<usize>,

    /// Directory for results.txt, results.json and the plot data.
    #[arg(long, short = 'o', default_value = "gformula-output")]
    output_dir: PathBuf,

    /// Write the simulated trajectories of every intervention.
    #[arg(long)]
    emit_sim_data: bool,

    /// Append per-model RMSE values to the text table.
    #[arg(long)]
    rmses: bool,
}

fn load(path: &Path) -> Result<AnalysisConfig, ExitCode> {
    AnalysisConfig::load(path).map_err(|e| {
        eprintln!("error: {e}");
        ExitCode::from(2)
    })
}

/// Prints findings to stderr; true when none is an error.
fn report_findings(cfg: &AnalysisConfig, plugins: &Plugins, warnings: bool) -> bool {
    let findings = cfg.validate(&plugins.histories);
    for f in findings.iter().filter(|f| warnings || f.severity == Severity::Error) {
        eprintln!("{f}");
    }
    findings.iter().all(|f| f.severity != Severity::Error)
}

fn validate(path: &Path) -> ExitCode {
    let cfg = match load(path) {
        Ok(c) => c,
        Err(code) => return code,
    };
    if report_findings(&cfg, &Plugins::default(), true) {
        println!("{}: ok", path.display());
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    }
}

fn run(args: RunArgs) -> ExitCode {
    let mut cfg = match load(&args.config) {
        Ok(c) => c,
        Err(code) => return code,
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if args.emit_sim_data {
        cfg.keep_sim_data = true;
    }
    let plugins = Plugins::default();
    if !report_findings(&cfg, &plugins, false) {
        return ExitCode::from(2);
    }
    let workers = args
        .workers
        .or(cfg.workers)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
        .max(1);
    let opts = ReportOptions {
        rmses: args.rmses,
        plot_data: cfg.plot_data,
    };
    match gformula::analysis::run_config(&cfg, &args.output_dir, workers, plugins, &opts) {
        Ok(result) => {
            for w in &result.warnings {
                eprintln!("warning: {w}");
            }
            print!("{}", render_text(&result, &opts));
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run(args) => run(args),
        Command::Validate { config } => validate(&config),
    }
}
