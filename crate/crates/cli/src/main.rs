use std::process::ExitCode;

fn main() -> ExitCode {
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    let code = autocomp_cli::run_cli(std::env::args_os());
    ExitCode::from(code as u8)
}
