use clap::Parser;
use kernelbounds::cli::{main_with_args, Args};

fn main() {
    std::process::exit(main_with_args(Args::parse()));
}
