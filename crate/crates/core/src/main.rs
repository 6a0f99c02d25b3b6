use clap::Parser;

fn main() {
    let cli = axisym_el::cli::Cli::parse();
    std::process::exit(axisym_el::cli::execute(cli));
}
