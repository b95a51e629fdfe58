use clap::Parser;

fn main() {
    let cli = radarmot::cli::Cli::parse();
    if let Err(e) = radarmot::cli::run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
