use clap::Parser;
use lambda_resonance::cli::{main_with, Cli};

fn main() {
    std::process::exit(main_with(Cli::parse()));
}
