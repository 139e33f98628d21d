// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

//! The `dynmod` command-line pipeline.
//!
//! Exit codes: 0 success, 1 usage error, 2 input error, 3 some subjects
//! failed.

pub mod config;
pub mod output;
pub mod pipeline;
pub mod synth_cmd;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::config::PipelineConfig;
use crate::pipeline::{Run, Stage};
use crate::synth_cmd::SynthSource;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Input(String),
    #[error("format error in {file}, field `{field}`: {message}")]
    Format { file: String, field: String, message: String },
    #[error("io error: {0}")]
    Io(String),
}

impl CliError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }

    /// A library error raised while processing `path`.
    pub fn input(path: &Path, e: dynmod::Error) -> Self {
        match e {
            dynmod::Error::Format { field, message } => CliError::Format {
                file: path.display().to_string(),
                field,
                message,
            },
            other => CliError::Input(format!("{}: {other}", path.display())),
        }
    }

    pub fn format(file: &str, field: &str, message: impl std::fmt::Display) -> Self {
        CliError::Format {
            file: file.to_string(),
            field: field.to_string(),
            message: message.to_string(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            _ => 2,
        }
    }
}

impl From<dynmod::Error> for CliError {
    fn from(e: dynmod::Error) -> Self {
        match e {
            dynmod::Error::Io(m) => CliError::Io(m),
            dynmod::Error::Format { field, message } => CliError::Format {
                file: String::new(),
                field,
                message,
            },
            other => CliError::Input(other.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "dynmod", version, about = "Dynamic brain-network modularity pipeline")]
pub struct Cli {
    /// Pipeline configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed; overrides the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads.
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic cohort (default) or one planted subject.
    Synth {
        #[arg(long)]
        out: PathBuf,
        /// Cohort specification (JSON).
        #[arg(long, conflicts_with = "subject")]
        cohort: Option<PathBuf>,
        /// Single-subject planted dynamics (JSON).
        #[arg(long)]
        subject: Option<PathBuf>,
    },
    /// Run the full pipeline or one stage.
    Pipeline {
        /// Input directory; defaults to `paths.input`, or to the output
        /// directory when running a single stage after `dfc`.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// One of dfc, static-mod, detect, measures, stats.
        #[arg(long)]
        stage: Option<String>,
    },
    /// Print the effective configuration and its hash.
    Config,
}

/// Parse arguments and run; returns the process exit code.
pub fn run<I, T>(args: I, env: &BTreeMap<String, String>) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli, env) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn effective_config(cli: &Cli, env: &BTreeMap<String, String>) -> Result<PipelineConfig, CliError> {
    let mut cfg = PipelineConfig::load(cli.config.as_deref(), env)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<(), CliError> {
    let mut out = std::io::stdout().lock();
    dynmod::io::write_json(&mut out, value)?;
    out.flush().map_err(|e| CliError::Io(e.to_string()))
}

fn execute(cli: Cli, env: &BTreeMap<String, String>) -> Result<i32, CliError> {
    if cli.jobs == 0 {
        return Err(CliError::Usage("--jobs must be at least 1".into()));
    }
    let cfg = effective_config(&cli, env)?;
    match &cli.command {
        Command::Config => {
            print!("# config_hash={}\n{}", cfg.hash(), cfg.to_toml_string());
            Ok(0)
        }
        Command::Synth { out, cohort, subject } => {
            let source = match (cohort, subject) {
                (Some(c), _) => SynthSource::Cohort(c.clone()),
                (None, Some(s)) => SynthSource::Subject(s.clone()),
                (None, None) => SynthSource::DefaultCohort,
            };
            let manifest = synth_cmd::cmd_synth(&source, out, cfg.seed, &cfg.hash())?;
            print_json(&manifest)?;
            Ok(0)
        }
        Command::Pipeline { input, out, stage } => {
            let stage = match stage {
                Some(s) => Some(Stage::parse(s).ok_or_else(|| {
                    CliError::Usage(format!(
                        "unknown stage `{s}` (expected dfc, static-mod, detect, measures or stats)"
                    ))
                })?),
                None => None,
            };
            let out = out
                .clone()
                .or_else(|| cfg.paths.out.clone())
                .ok_or_else(|| CliError::Usage("--out is required".into()))?;
            let input = input.clone().or_else(|| cfg.paths.input.clone());
            let input = match (input, stage) {
                (Some(i), _) => i,
                (None, Some(s)) if s != Stage::Dfc => out.clone(),
                _ => return Err(CliError::Usage("--input is required".into())),
            };
            if !input.is_dir() {
                return Err(CliError::Input(format!("input directory {} does not exist", input.display())));
            }
            let run = Run::new(cfg, input, out, cli.jobs);
            let records = match stage {
                Some(s) => vec![pipeline::run_stage(&run, s)?],
                None => pipeline::run_pipeline(&run)?,
            };
            let failures: usize = records.iter().map(|r| r.failures.len()).sum();
            for r in &records {
                for f in &r.failures {
                    eprintln!("subject {} failed: {}", f.subject, f.error);
                }
            }
            Ok(if failures > 0 { 3 } else { 0 })
        }
    }
}
