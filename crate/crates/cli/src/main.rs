use std::io::Write;
use std::process::ExitCode;

use synst_cli::{run_args, RunError};

fn main() -> ExitCode {
    let out = match run_args(std::env::args_os()) {
        Ok(out) => out,
        Err(RunError::Usage(e)) if !e.use_stderr() => e.to_string(),
        Err(e) => {
            eprintln!("{}", e.line());
            return ExitCode::from(if matches!(e, RunError::Usage(_)) { 2 } else { 1 });
        }
    };
    // A closed pipe (`synst ... | head`) is not an error.
    let _ = std::io::stdout().write_all(out.as_bytes());
    ExitCode::SUCCESS
}
