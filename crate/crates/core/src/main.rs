use clap::Parser;

fn main() {
    let cli = calibfield::cli::Cli::parse();
    if let Err(e) = calibfield::cli::run(&cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
