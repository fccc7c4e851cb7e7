use clap::Parser;

use ofdm_gf_amp::harness::cli::{run, Cli};

fn main() {
    std::process::exit(run(Cli::parse()));
}
