use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;

use clap::Parser;
use spoofchain_cli::{run, Cli, EXIT_INTERNAL, EXIT_OK, EXIT_USAGE};
use spoofchain_live::LiveEnv;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { EXIT_OK });
        }
    };
    let outcome = catch_unwind(AssertUnwindSafe(|| run(&cli, &LiveEnv::default(), &mut std::io::stdout().lock())));
    match outcome {
        Ok(Ok(())) => ExitCode::from(EXIT_OK),
        Ok(Err(e)) => {
            eprintln!("spoofchain: {e}");
            ExitCode::from(e.kind.code())
        }
        Err(_) => ExitCode::from(EXIT_INTERNAL),
    }
}
