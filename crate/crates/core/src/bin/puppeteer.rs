use clap::Parser;

fn main() {
    std::process::exit(puppeteer::cli::run(puppeteer::cli::Cli::parse()));
}
