use std::process::ExitCode;

fn main() -> ExitCode {
    tslex::run(std::env::args_os())
}
