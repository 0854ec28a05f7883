use clap::Parser;
use pointcmt::pipeline::{run_cli, Cli};

fn main() {
    if let Err(e) = run_cli(Cli::parse()) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
