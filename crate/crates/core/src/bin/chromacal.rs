use clap::Parser;

fn main() {
    let cli = chromacal::jobs::Cli::parse();
    if let Err(e) = chromacal::jobs::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_kind() as i32);
    }
}
