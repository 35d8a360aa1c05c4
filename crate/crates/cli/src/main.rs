use clap::Parser;
use nvspin_cli::{run, Cli};

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("nvspin: {e}");
        std::process::exit(e.exit_code());
    }
}
