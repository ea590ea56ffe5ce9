//! `spinv`: experiments for sparse invariant representation learning.
//!
//! Exit codes: 0 when the run succeeded and its acceptance check passed, 1
//! when it ran but the check failed, 2 on usage, configuration or input
//! errors.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Arg, ArgAction, ArgMatches, Command};

use config::{keys_help, RunConfig, KEYS};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] spinv_core::error::Error),
    #[error("cannot write {path}: {source}")]
    Output {
        path: PathBuf,
        source: Box<dyn std::error::Error + Send + Sync>,
    },
}

impl CliError {
    fn from_config(e: spinv_core::error::Error) -> Self {
        CliError::Usage(e.to_string())
    }

    pub fn output(path: &std::path::Path, source: impl std::error::Error + Send + Sync + 'static) -> Self {
        CliError::Output {
            path: path.to_path_buf(),
            source: Box::new(source),
        }
    }
}

/// Whether a completed run met its acceptance criterion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Passed,
    Failed,
}

impl Outcome {
    pub fn from_bool(ok: bool) -> Self {
        if ok {
            Outcome::Passed
        } else {
            Outcome::Failed
        }
    }
}

const SUBCOMMANDS: &[(&str, &str)] = &[
    ("toy", "Train on the line world and score orientation purity of the invariant units"),
    ("train", "Train a two-layer model on translating patch sequences and save it"),
    ("responses", "Map unit responses to edge stimuli and compare position tuning widths"),
    ("bench", "Check solver convergence rates, monotone descent and the descent lemma"),
    ("inpaint", "Compare masked reconstruction by one-layer and two-layer models"),
];

fn cli() -> Command {
    let mut cmd = Command::new("spinv")
        .about("Sparse invariant representation learning experiments")
        .subcommand_required(true)
        .arg_required_else_help(true)
        .after_help(keys_help())
        .arg(
            Arg::new("config")
                .long("config")
                .global(true)
                .value_name("FILE")
                .help("key = value config file; flags override it"),
        );
    for key in KEYS {
        let mut arg = Arg::new(key.name)
            .long(key.name.replace('_', "-"))
            .global(true)
            .value_name("VALUE")
            .hide(true);
        if key.name == "paper_scale" {
            arg = arg.num_args(0..=1).default_missing_value("true");
        }
        cmd = cmd.arg(arg.action(ArgAction::Set));
    }
    for (name, about) in SUBCOMMANDS {
        cmd = cmd.subcommand(Command::new(*name).about(*about).after_help(keys_help()));
    }
    cmd
}

fn build_config(matches: &ArgMatches) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::default();
    if let Some(path) = matches.get_one::<String>("config") {
        cfg.apply_file(path.as_ref())?;
    }
    for key in KEYS {
        if let Some(v) = matches.get_one::<String>(key.name) {
            cfg.set(key.name, v)?;
        }
    }
    let threads: usize = cfg.get("threads")?;
    if threads == 0 {
        return Err(CliError::Usage("threads must be at least 1".into()));
    }
    Ok(cfg)
}

fn run(matches: &ArgMatches) -> Result<Outcome, CliError> {
    let (name, sub) = matches.subcommand().expect("subcommand required");
    let cfg = build_config(sub)?;
    match name {
        "toy" => commands::toy(&cfg),
        "train" => commands::train(&cfg),
        "responses" => commands::responses(&cfg),
        "bench" => commands::bench(&cfg),
        "inpaint" => commands::inpaint(&cfg),
        _ => unreachable!("unknown subcommand {name}"),
    }
}

fn main() -> ExitCode {
    let matches = match cli().try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&matches) {
        Ok(Outcome::Passed) => ExitCode::SUCCESS,
        Ok(Outcome::Failed) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
