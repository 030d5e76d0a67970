use clap::Parser;

use hmhomog_cli::{apply_thread_cap, run, Cli};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Err(e) = apply_thread_cap().and_then(|_| run(&cli)) {
        eprintln!("hmhomog: {e}");
        std::process::exit(e.exit_code());
    }
}
