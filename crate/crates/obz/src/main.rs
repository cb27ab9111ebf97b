use clap::Parser;

fn main() {
    let cli = obz::cli::Cli::parse();
    std::process::exit(obz::cli::run(cli));
}
