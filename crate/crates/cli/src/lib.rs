//! Command-line front end: subcommands, run manifests and report writers.

pub mod args;
mod commands;
pub mod manifest;
mod report;

pub use args::{Cli, Command};
pub use commands::{Job, Prepared, CHECKPOINT_FILE};

use spectrakit::{Error, ErrorClass, Result};

/// Process exit status for a failure: 2 validation, 3 numerical, 4 I/O.
pub fn exit_code(e: &Error) -> i32 {
    match e.class() {
        ErrorClass::Validation => 2,
        ErrorClass::Numerical => 3,
        ErrorClass::Io => 4,
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let job = match cli.command {
        Command::Run(r) => return manifest::run(&r.manifest),
        Command::SvdDiff(a) => Job::SvdDiff(a),
        Command::Angles(a) => Job::Angles(a),
        Command::Restore(a) => Job::Restore(a),
        Command::AdvStats(a) => Job::AdvStats(a),
        Command::Penalty(a) => Job::Penalty(a),
    };
    job.prepare()?.execute()
}
