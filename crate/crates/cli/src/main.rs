//! `trn`: synthesize data, train, stream, evaluate, check gradients and
//! print the reference tables.
//!
//! Exit codes: 0 success, 1 validation failure, 2 I/O error.

mod args;
mod commands;

use std::process::ExitCode;

use clap::{CommandFactory, FromArgMatches};

use args::{Cli, Command};

pub(crate) const EXIT_VALIDATION: u8 = 1;
const EXIT_IO: u8 = 2;

fn init_logging() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("TRN_LOG", "info"))
        .format_timestamp(None)
        .init();
}

/// I/O failures anywhere in the error chain map to exit code 2.
fn exit_code(err: &anyhow::Error) -> u8 {
    let io = err.chain().any(|e| {
        e.is::<std::io::Error>()
            || e.downcast_ref::<trn_core::dataio::DataError>()
                .is_some_and(|d| d.is_io())
            || matches!(
                e.downcast_ref::<trn_core::eval::EvalError>(),
                Some(trn_core::eval::EvalError::Io(_))
            )
            || matches!(
                e.downcast_ref::<trn_core::training::CheckpointError>(),
                Some(trn_core::training::CheckpointError::Io(_))
            )
            || matches!(
                e.downcast_ref::<trn_core::skeleton::SkeletonError>(),
                Some(trn_core::skeleton::SkeletonError::Io { .. })
            )
    });
    if io {
        EXIT_IO
    } else {
        EXIT_VALIDATION
    }
}

fn main() -> ExitCode {
    let matches = match Cli::command().try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_VALIDATION)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(EXIT_VALIDATION);
        }
    };
    init_logging();
    let sub = matches
        .subcommand()
        .map(|(_, m)| m)
        .expect("subcommand is required");
    let result = match cli.command {
        Command::Synth(a) => commands::synth(a, sub),
        Command::Train(a) => commands::train(a, sub),
        Command::Stream(a) => commands::stream(a),
        Command::Eval(a) => commands::eval(a),
        Command::Gradcheck(a) => commands::gradcheck(a, sub),
        Command::Report(a) => commands::report(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
