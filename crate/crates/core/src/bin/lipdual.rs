use std::io::Write;
use std::process::ExitCode;

fn main() -> ExitCode {
    let result = lipdual::cli::run(std::env::args_os());
    let mut stdout = std::io::stdout().lock();
    let _ = stdout.write_all(result.payload.render().as_bytes());
    let _ = stdout.flush();
    ExitCode::from(result.exit_code as u8)
}
