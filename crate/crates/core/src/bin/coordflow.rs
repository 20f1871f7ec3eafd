use std::process::ExitCode;

fn main() -> ExitCode {
    coordflow::cli::main_with_args(std::env::args_os())
}
