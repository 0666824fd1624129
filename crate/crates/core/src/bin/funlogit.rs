use clap::Parser;

fn main() {
    let cli = funlogit::cli::Cli::parse();
    std::process::exit(funlogit::cli::run(cli));
}
