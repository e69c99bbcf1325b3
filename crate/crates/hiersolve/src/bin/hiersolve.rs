use std::process::ExitCode;

fn main() -> ExitCode {
    hiersolve::cli::main()
}
