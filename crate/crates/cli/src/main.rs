use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(gem_xpm_cli::run_cli(std::env::args_os()))
}
