//! `ecg-jepa` command-line front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical divergence.

mod evaluate;
mod import;
mod prepare;
mod pretrain;
mod resolve;

use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ecg_jepa::par::Exec;

#[derive(Parser)]
#[command(name = "ecg-jepa", version, about = "Self-supervised pre-training and evaluation for 12-lead ECG")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Preprocess raw records (or generate synthetic ones) into a training corpus.
    Prepare(prepare::PrepareArgs),
    /// Run JEPA pre-training.
    Pretrain(pretrain::PretrainArgs),
    /// Train and test classification heads on a pre-trained encoder.
    Eval(evaluate::EvalArgs),
    /// Convert a CSV file (one lead per column, header row) into a record file.
    ImportCsv(import::ImportArgs),
}

/// Bad flags or configuration; reported with exit code 1.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

pub fn exec_mode(sequential: bool) -> Exec {
    if sequential {
        Exec::Sequential
    } else {
        Exec::default_mode()
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return 1;
        }
        if let Some(e) = cause.downcast_ref::<ecg_jepa::Error>() {
            return match e {
                ecg_jepa::Error::Divergence { .. } | ecg_jepa::Error::NonFiniteGradient(_) => 3,
                ecg_jepa::Error::Config(_) => 1,
                _ => 2,
            };
        }
    }
    2
}

/// The cause chain joined by `: `, skipping causes already quoted by their parent.
fn describe(err: &anyhow::Error) -> String {
    let mut msg = String::new();
    for cause in err.chain() {
        let s = cause.to_string();
        if msg.ends_with(&s) {
            continue;
        }
        if !msg.is_empty() {
            msg.push_str(": ");
        }
        msg.push_str(&s);
    }
    msg
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Prepare(a) => prepare::run(a),
        Command::Pretrain(a) => pretrain::run(a),
        Command::Eval(a) => evaluate::run(a),
        Command::ImportCsv(a) => import::run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}
