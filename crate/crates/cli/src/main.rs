use clap::Parser;

fn main() {
    let cli = spectrakit_cli::Cli::parse();
    if let Err(e) = spectrakit_cli::run(cli) {
        eprintln!("spectrakit: {e}");
        std::process::exit(spectrakit_cli::exit_code(&e));
    }
}
