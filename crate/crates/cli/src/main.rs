use clap::Parser;
use ehs_cli::{run, Cli};

fn main() {
    if let Err(f) = run(Cli::parse()) {
        eprintln!("error: {}", f.message);
        std::process::exit(f.code);
    }
}
