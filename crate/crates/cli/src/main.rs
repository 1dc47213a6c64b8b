use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use plasticity::activation::ActivationSpec;
use plasticity::props::shape_summary;
use plasticity::runner::{self, ExperimentConfig, ReportKind, RunOptions};
use plasticity::Error;

/// Activation-function plasticity laboratory.
#[derive(Parser, Debug)]
#[command(name = "plasticity", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run every cell of an experiment config.
    Run {
        config: PathBuf,
        /// Worker threads (0 = all cores).
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Replace the results of an earlier run in the output directory.
        #[arg(long)]
        overwrite: bool,
        /// Output directory (defaults to the config's `output_dir`, then `results/<name>`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Aggregate a result directory.
    Report {
        dir: PathBuf,
        /// summary | floor-classes | correlation
        #[arg(long, default_value = "summary")]
        kind: String,
    },
    /// Analytic descriptors of one activation, e.g. `leaky_relu:alpha=0.6`.
    Props { spec: String },
    /// Parse and check a config without running it.
    Validate { config: PathBuf },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version.
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail("usage", &e.to_string(), 2),
    };
    match execute(cli.command) {
        Ok(value) => {
            println!("{}", serde_json::to_string_pretty(&value).expect("json value"));
            ExitCode::SUCCESS
        }
        Err(e) => fail(e.code(), &e.to_string(), 1),
    }
}

fn fail(code: &str, message: &str, status: u8) -> ExitCode {
    eprintln!("{}", json!({ "code": code, "message": message.trim() }));
    ExitCode::from(status)
}

fn execute(command: Command) -> Result<serde_json::Value, Error> {
    match command {
        Command::Run {
            config,
            jobs,
            overwrite,
            out,
        } => {
            let cfg = ExperimentConfig::load(&config)?;
            let dir = runner::output_dir(&cfg, out.as_deref());
            let summary = runner::run(&cfg, &dir, RunOptions { jobs, overwrite })?;
            if summary.failed > 0 {
                log::warn!(
                    "{} of {} cells failed; see manifest.json",
                    summary.failed,
                    summary.cells
                );
            }
            Ok(json!({
                "out_dir": summary.out_dir,
                "cells": summary.cells,
                "failed": summary.failed,
                "rows": summary.rows,
                "warnings": summary.warnings,
            }))
        }
        Command::Report { dir, kind } => {
            let kind: ReportKind = kind.parse()?;
            let out = runner::report(&dir, kind)?;
            Ok(json!({
                "files": out.files,
                "missing": out.missing,
                "correlations": out.correlations,
            }))
        }
        Command::Props { spec } => {
            let spec: ActivationSpec = spec.parse()?;
            let summary = shape_summary(spec.label(), &spec)?;
            serde_json::to_value(summary).map_err(|e| Error::Config(format!("json: {e}")))
        }
        Command::Validate { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            Ok(json!({
                "valid": true,
                "name": cfg.name,
                "kind": cfg.kind.name(),
                "cells": cfg.cells()?.len(),
            }))
        }
    }
}
