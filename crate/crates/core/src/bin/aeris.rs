use std::process::ExitCode;

fn main() -> ExitCode {
    aeris::cli::main_with_args(std::env::args_os())
}
