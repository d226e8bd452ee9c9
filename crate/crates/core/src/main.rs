use std::io;
use std::process::ExitCode;

fn main() -> ExitCode {
    let status = regen::cli::run(std::env::args_os(), &mut io::stdout(), &mut io::stderr());
    ExitCode::from(status.0 as u8)
}
