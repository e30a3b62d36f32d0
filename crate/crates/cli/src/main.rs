use std::io;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use cidx::{run, Cli, Runtime};
use cidx_core::solvers::{RetryPolicy, UreqTransport};
use clap::Parser;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let env = |name: &str| std::env::var(name).ok();
    let mut stdout = io::stdout().lock();
    let mut rt = Runtime {
        env: &env,
        transport: Arc::new(UreqTransport::new(Duration::from_secs(120))),
        retry: RetryPolicy::default(),
        out: &mut stdout,
    };
    match run(&cli, &mut rt) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
