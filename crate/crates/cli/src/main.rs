use std::io::Write;
use std::process::ExitCode;

use pathssl_cli::{dispatch, EXIT_USAGE};

fn main() -> ExitCode {
    if let Ok(value) = std::env::var("PATHSSL_THREADS") {
        let threads = match value.trim().parse::<usize>() {
            Ok(n) if n > 0 => n,
            _ => {
                eprintln!("error: PATHSSL_THREADS must be a positive integer, got {value:?}");
                return ExitCode::from(EXIT_USAGE as u8);
            }
        };
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("error: cannot start {threads} worker threads: {e}");
            return ExitCode::from(EXIT_USAGE as u8);
        }
    }
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    let code = dispatch(std::env::args_os(), &mut stdout.lock(), &mut stderr.lock());
    let _ = std::io::stdout().flush();
    ExitCode::from(code as u8)
}
