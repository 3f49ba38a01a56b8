//! The `voc` command-line tool and study HTTP service.
//!
//! Exit status: 0 success, 1 usage, 2 data error, 3 backend error. Failures are reported on
//! stderr as one JSON line `{"error": {"kind", "code", "message"}}`; successful commands print
//! a JSON summary on stdout. Every artifact-producing command leaves a run manifest under
//! `<project_root>/runs/` that `voc replay` can re-execute.

pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;
pub mod server;

use std::ffi::OsString;

use clap::error::ErrorKind as ClapErrorKind;
use clap::Parser;
use tracing_subscriber::EnvFilter;

use crate::cli::{Cli, Command, StudyCommand};
use crate::commands::{command_name, execute, Context};
use crate::config::LoadedConfig;
use crate::error::{AppError, AppResult};
use crate::manifest::{RunManifest, RunRecorder};

pub const LOG_ENV: &str = "VOC_LOG";

fn init_logging(default: &str) {
    let filter = EnvFilter::try_from_env(LOG_ENV).unwrap_or_else(|_| EnvFilter::new(default));
    let _ = tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).try_init();
}

/// Parses `argv` (including the program name), runs the command and returns the exit status.
pub fn run(argv: Vec<OsString>) -> i32 {
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ClapErrorKind::DisplayHelp | ClapErrorKind::DisplayVersion => 0,
                ClapErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => 1,
                _ => 1,
            };
        }
    };
    let serving = matches!(cli.command, Command::Study(StudyCommand::Serve(_)));
    init_logging(if serving { "info" } else { "warn" });
    match run_cli(&cli, &argv) {
        Ok(summary) => {
            println!("{summary}");
            0
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.kind.exit_code()
        }
    }
}

fn run_cli(cli: &Cli, argv: &[OsString]) -> AppResult<serde_json::Value> {
    let started_at = now();
    let loaded = LoadedConfig::load(cli.config.as_deref())?;
    let config_path = loaded.path.clone();
    let mut ctx = Context::new(loaded, cli);
    let result = execute(&cli.command, &mut ctx);

    let records = !matches!(cli.command, Command::Replay(_) | Command::Study(StudyCommand::Serve(_)));
    if !records || ctx.rec.outputs.is_empty() {
        return result;
    }
    let exit_code = result.as_ref().map(|_| 0).unwrap_or_else(|e| e.kind.exit_code());
    let rec = std::mem::take(&mut ctx.rec);
    let manifest = RunManifest {
        command: command_name(&cli.command).into(),
        argv: argv.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect(),
        cwd: std::env::current_dir().map_err(|e| AppError::usage(format!("cwd: {e}")))?,
        version: env!("CARGO_PKG_VERSION").into(),
        started_at,
        finished_at: now(),
        exit_code,
        seed: rec.seed.or(Some(ctx.seed)),
        config: match &config_path {
            Some(p) => RunRecorder::digests(std::slice::from_ref(p))?.pop(),
            None => None,
        },
        inputs: RunRecorder::digests(&rec.inputs)?,
        outputs: RunRecorder::digests(&rec.outputs)?,
        params: serde_json::Value::Object(rec.params),
    };
    let path = manifest::write_manifest(&ctx.project_root, &manifest)?;
    tracing::debug!(manifest = %path.display(), "run recorded");
    result.map(|mut summary| {
        if let Some(obj) = summary.as_object_mut() {
            obj.insert("manifest".into(), serde_json::json!(path));
        }
        summary
    })
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}
