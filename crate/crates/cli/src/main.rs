use std::process::ExitCode;

fn main() -> ExitCode {
    fixray_cli::app::main_entry()
}
