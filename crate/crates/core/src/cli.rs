//! Command-line front end: `run`, `selftest` and `version`.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::error::Error;
use crate::experiments::{
    run_experiment, with_workers, workers_from_env, write_outputs, ExperimentConfig,
    ExperimentKind, OutputFormat,
};
use crate::selftest::{selftest, SelftestOptions};

pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_RESOURCE: u8 = 3;
pub const EXIT_NUMERICAL: u8 = 4;

#[derive(Debug, Parser)]
#[command(name = "prepbias", version = crate::VERSION, about = "State-preparation error in spin-squeezed interferometry")]
#[command(after_help = "Worker threads: set PREPBIAS_WORKERS (unset or 0 = automatic).")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run an experiment from a JSON config.
    Run {
        /// Experiment name, e.g. MomErrorGrid or mom-error-grid.
        experiment: String,
        #[arg(long)]
        config: PathBuf,
        /// Override a config key, e.g. --set n_atoms=50 or --set lambda.count=11.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        /// Output directory (default: the config's `out`, else the current directory).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_parser = ["csv", "json"])]
        format: Option<String>,
    },
    /// Run the built-in invariant checks.
    Selftest,
    /// Print the version.
    Version,
}

/// Maps an error to its process exit code.
pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::InvalidArgument(_) => EXIT_CONFIG,
        Error::Resource(_) => EXIT_RESOURCE,
        Error::Io(_) => 1,
        _ => EXIT_NUMERICAL,
    }
}

fn error_json(e: &Error) -> String {
    serde_json::json!({ "error": e.to_string(), "exit_code": exit_code(e) }).to_string()
}

/// Parses `args` (including the program name) and runs the command.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match cli.command {
        Command::Version => {
            println!("prepbias {}", crate::VERSION);
            ExitCode::SUCCESS
        }
        Command::Selftest => {
            let report = selftest(SelftestOptions::default());
            for item in &report.items {
                println!(
                    "{} {} ({})",
                    if item.passed { "PASS" } else { "FAIL" },
                    item.name,
                    item.detail
                );
            }
            if report.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Command::Run {
            experiment,
            config,
            set,
            out,
            format,
        } => match run(&experiment, &config, &set, out, format.as_deref()) {
            Ok(paths) => {
                for p in paths {
                    println!("{}", p.display());
                }
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("{}", error_json(&e));
                ExitCode::from(exit_code(&e))
            }
        },
    }
}

fn run(
    experiment: &str,
    config: &std::path::Path,
    set: &[String],
    out: Option<PathBuf>,
    format: Option<&str>,
) -> crate::Result<Vec<PathBuf>> {
    let kind: ExperimentKind = experiment.parse()?;
    let mut overrides = set.to_vec();
    if let Some(f) = format {
        f.parse::<OutputFormat>()?;
        overrides.push(format!("format={f}"));
    }
    let cfg = ExperimentConfig::load(config, &overrides)?;
    if cfg.experiment != kind {
        return Err(Error::Config(format!(
            "command line names {kind} but the config describes {}",
            cfg.experiment
        )));
    }
    let dir = out
        .or_else(|| cfg.out.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    let workers = workers_from_env()?;
    let result = with_workers(workers, || run_experiment(&cfg))??;
    for w in &result.warnings {
        eprintln!("warning: {w}");
    }
    write_outputs(&dir, &cfg, &result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::WORKERS_ENV;

    #[test]
    fn help_names_the_worker_variable() {
        let help = <Cli as clap::CommandFactory>::command()
            .render_long_help()
            .to_string();
        assert!(help.contains(WORKERS_ENV));
    }

    #[test]
    fn exit_codes_by_error_class() {
        assert_eq!(exit_code(&Error::Config("x".into())), EXIT_CONFIG);
        assert_eq!(exit_code(&Error::Resource("x".into())), EXIT_RESOURCE);
        assert_eq!(exit_code(&Error::Numerical("x".into())), EXIT_NUMERICAL);
    }
}
