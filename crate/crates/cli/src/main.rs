use std::process::ExitCode;

use repel_cli::{execute, parse_args, thread_cap, CliError, THREADS_ENV};

fn run() -> Result<i32, CliError> {
    let cfg = parse_args(std::env::args_os())?;
    let cap = thread_cap(std::env::var(THREADS_ENV).ok().as_deref())?;
    if let Some(n) = cap {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    Ok(execute(&cfg)?.exit_code())
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => ExitCode::from(code as u8),
        Err(CliError::Info(text)) => {
            println!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("repel-sim: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
