use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use nlcbs_cli::config::{RunConfig, Scenario};
use nlcbs_cli::{execute, Status};

/// Run a named transport scenario and write plot-ready CSV, a JSON summary
/// and a manifest.
#[derive(Parser, Debug)]
#[command(name = "nlcbs", version)]
struct Args {
    /// Flat `key = value` configuration file; defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// fig9a, fig9b, fig10a, fig10b, conservation or linear-cbs (overrides the config).
    #[arg(long)]
    scenario: Option<Scenario>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Exit nonzero when an acceptance threshold is missed.
    #[arg(long)]
    check: bool,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, short)]
    verbose: bool,
}

fn main() -> ExitCode {
    let args = Args::parse();
    env_logger::Builder::new()
        .filter_level(if args.verbose {
            log::LevelFilter::Info
        } else {
            log::LevelFilter::Warn
        })
        .parse_default_env()
        .init();

    let mut cfg = match &args.config {
        Some(path) => match RunConfig::load(path) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("error: {}: {e}", path.display());
                return ExitCode::from(64);
            }
        },
        None => RunConfig::default(),
    };
    if let Some(s) = args.scenario {
        cfg.scenario = s;
    }
    if let Some(d) = args.output_dir {
        cfg.output_dir = d;
    }
    if let Some(t) = args.threads {
        cfg.threads = Some(t);
    }
    if let Err(e) = cfg.validate() {
        eprintln!("error: {e}");
        return ExitCode::from(64);
    }
    if let Some(n) = cfg.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: cannot start {n} worker threads: {e}");
            return ExitCode::from(1);
        }
    }

    log::info!("running {} into {}", cfg.scenario, cfg.output_dir.display());
    let status = match execute(&cfg) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: output directory {}: {e}", cfg.output_dir.display());
            return ExitCode::from(1);
        }
    };
    match &status {
        Status::Success => eprintln!("{}: success", cfg.scenario),
        Status::ChecksFailed(names) => {
            for n in names {
                eprintln!("{}: check failed: {n}", cfg.scenario);
            }
        }
        Status::Failed(reason) => eprintln!("{}: failed: {reason}", cfg.scenario),
    }
    ExitCode::from(status.exit_code(args.check))
}
