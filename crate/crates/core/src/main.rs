use std::process::ExitCode;

fn main() -> ExitCode {
    stratgrad::cli::main_from_args(std::env::args_os())
}
