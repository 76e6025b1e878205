use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use epsdiag::config::RunConfig;
use epsdiag::faults::Task;
use epsdiag::pipeline::{self, Method, RunOptions};
use epsdiag::{io, Error};

/// Satellite EPS fault diagnosis: simulate telemetry, fit the model bank,
/// train and compare classifiers.
#[derive(Parser)]
#[command(name = "epsdiag", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// TOML configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    /// global seed, overrides the config file
    #[arg(long)]
    seed: Option<u64>,
    /// output directory
    #[arg(long)]
    out: PathBuf,
    /// leave timestamps out of the run manifest
    #[arg(long)]
    no_timestamp: bool,
    /// only machine-readable JSON on stdout
    #[arg(long)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate telemetry for every class of the task
    GenData {
        #[command(flatten)]
        common: Common,
        /// system_5class or pv_3class, overrides the config file
        #[arg(long)]
        task: Option<Task>,
    },
    /// Fit one regression model per class
    FitBank {
        #[command(flatten)]
        common: Common,
        /// gen-data output directory
        #[arg(long)]
        data: PathBuf,
    },
    /// Train and evaluate one classifier
    TrainEval {
        #[command(flatten)]
        common: Common,
        /// gen-data output directory
        #[arg(long)]
        data: PathBuf,
        /// fit-bank output directory
        #[arg(long)]
        bank: PathBuf,
        /// mlp_i1, mlp_i2, knn, dt or pca
        #[arg(long)]
        method: String,
    },
    /// Run all classifiers on one split and write the comparison tables
    Compare {
        #[command(flatten)]
        common: Common,
        /// gen-data output directory
        #[arg(long)]
        data: PathBuf,
        /// fit-bank output directory
        #[arg(long)]
        bank: PathBuf,
    },
}

fn load_config(c: &Common) -> epsdiag::Result<RunConfig> {
    let mut cfg = match &c.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn opts(c: &Common) -> RunOptions {
    RunOptions {
        no_timestamp: c.no_timestamp,
    }
}

fn summary(out: &Path, json: String, quiet: bool, line: String) {
    if quiet {
        print!("{json}");
    } else {
        println!("{line}");
        println!("wrote {}", out.display());
    }
}

fn run(cli: Cli) -> epsdiag::Result<()> {
    match cli.cmd {
        Cmd::GenData { common, task } => {
            let mut cfg = load_config(&common)?;
            if let Some(t) = task {
                cfg.simulate.task = t;
            }
            let m = pipeline::cmd_gen_data(&cfg, &common.out, opts(&common))?;
            summary(&common.out, io::to_json(&m), common.quiet, format!("{} files for task {}", m.outputs.len(), m.task.token()));
        }
        Cmd::FitBank { common, data } => {
            let cfg = load_config(&common)?;
            let (_, rep) = pipeline::cmd_fit_bank(&cfg, &data, &common.out, opts(&common))?;
            let mut line = String::new();
            for m in &rep.models {
                line.push_str(&format!(
                    "{:<16} validation mse {:.3e}  R {:.6}\n",
                    m.class.token(),
                    m.validation.mse,
                    m.validation.correlation_r.unwrap_or(f64::NAN)
                ));
            }
            summary(&common.out, io::to_json(&rep), common.quiet, line.trim_end().to_string());
        }
        Cmd::TrainEval {
            common,
            data,
            bank,
            method,
        } => {
            let method: Method = method.parse()?;
            let cfg = load_config(&common)?;
            let rep = pipeline::cmd_train_eval(&cfg, &bank, &data, method, &common.out, opts(&common))?;
            summary(
                &common.out,
                io::to_json(&rep),
                common.quiet,
                format!("{method}: overall accuracy {:.4}", rep.result.overall_accuracy),
            );
        }
        Cmd::Compare { common, data, bank } => {
            let cfg = load_config(&common)?;
            let rep = pipeline::cmd_compare(&cfg, &bank, &data, &common.out, opts(&common))?;
            let mut line = String::new();
            for r in &rep.methods {
                line.push_str(&format!("{:<8} {:.4}\n", r.method.token(), r.overall_accuracy));
            }
            if let Some(o) = &rep.ordering {
                line.push_str(&format!("ordering holds: {}", o.holds));
            }
            summary(&common.out, io::to_json(&rep), common.quiet, line.trim_end().to_string());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let level = std::env::var("EPSDIAG_LOG").unwrap_or_else(|_| "error".into());
    env_logger::Builder::new().parse_filters(&level).format_timestamp(None).init();

    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(Error::exit_code(&e) as u8)
        }
    }
}
