use std::process::ExitCode;

fn main() -> ExitCode {
    defhyper_cli::app::main()
}
