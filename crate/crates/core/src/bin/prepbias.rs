use std::process::ExitCode;

fn main() -> ExitCode {
    prepbias::cli::main_with_args(std::env::args_os())
}
