use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(oilsense::cli::main_with_args(std::env::args_os()))
}
