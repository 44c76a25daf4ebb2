use std::process::ExitCode;

fn main() -> ExitCode {
    bort_cli::main_with(std::env::args_os())
}
