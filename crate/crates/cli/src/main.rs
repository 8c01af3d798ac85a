use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(gwlab_experiment::main_with_args(std::env::args_os()))
}
