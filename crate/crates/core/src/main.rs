use clap::Parser;
use subspace_audit::cli::{run, Cli};

fn main() {
    std::process::exit(run(Cli::parse()));
}
