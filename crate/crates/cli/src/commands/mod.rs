pub mod corpus;
pub mod eval;
pub mod optimize;
pub mod report;
pub mod reward;
pub mod trace;

use crate::error::CliResult;
use crate::rundir::RunDir;

/// `POLYPROMPT_HALT_AFTER=<command>:<n>` kills the process once `command` has
/// completed `n` units of work (prompts for eval, steps for optimize), leaving
/// the run directory as an interrupted run would.
pub const HALT_ENV: &str = "POLYPROMPT_HALT_AFTER";
pub const HALT_EXIT: i32 = 137;

pub fn halt_point(command: &str, done: usize) {
    let Ok(spec) = std::env::var(HALT_ENV) else { return };
    if let Some((cmd, n)) = spec.split_once(':') {
        if cmd == command && n.parse() == Ok(done) {
            eprintln!("halting {command} after {done}");
            std::process::exit(HALT_EXIT);
        }
    }
}

/// Runs `body`, then records the run's inventory whether or not it failed.
pub fn in_run<T>(mut run: RunDir, body: impl FnOnce(&mut RunDir) -> CliResult<T>) -> CliResult<T> {
    let out = body(&mut run);
    let finished = run.finish();
    let value = out?;
    finished?;
    Ok(value)
}
