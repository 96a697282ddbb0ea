use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(mbc_cli::run(std::env::args_os()))
}
