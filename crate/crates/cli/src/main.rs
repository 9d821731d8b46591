use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(udplab_cli::cli::main_with(std::env::args_os()))
}
