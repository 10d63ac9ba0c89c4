use clap::Parser;
use courtpose_cli::{execute, Cli};

fn main() {
    let cli = Cli::parse();
    if let Err(e) = execute(cli) {
        eprintln!("{}", e.record());
        std::process::exit(e.exit_code());
    }
}
