use std::process::ExitCode;

fn main() -> ExitCode {
    let config = match sgl_cli::parse_args(std::env::args_os()) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            if code == 0 {
                print!("{}", e.message());
            } else {
                eprint!("{}", e.message());
                if !e.message().ends_with('\n') {
                    eprintln!();
                }
            }
            return ExitCode::from(code as u8);
        }
    };
    env_logger::Builder::new()
        .filter_level(config.log_level.filter())
        .format_timestamp(None)
        .init();
    if let Ok(threads) = std::env::var("SGL_THREADS") {
        match threads.parse::<usize>() {
            Ok(n) if n > 0 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => log::warn!("ignoring SGL_THREADS={threads}"),
        }
    }
    ExitCode::from(sgl_cli::run(&config) as u8)
}
