use clap::Parser;

fn main() {
    let cli = frengate::cli::Cli::parse();
    std::process::exit(frengate::cli::main_with(cli));
}
