use clap::Parser;

fn main() {
    let cli = lcdc_sim::cli::Cli::parse();
    if let Err(e) = lcdc_sim::cli::execute(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
