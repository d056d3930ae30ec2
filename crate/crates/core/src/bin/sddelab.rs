use clap::Parser;

fn main() {
    std::process::exit(sddelab::cli::main_with(sddelab::cli::Args::parse()));
}
