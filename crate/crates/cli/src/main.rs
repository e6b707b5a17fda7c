use clap::Parser;

use gapdyn_cli::cli::{self, Cli};

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        // clap exits 0 for --help/--version and 2 for parse errors.
        Err(e) => e.exit(),
    };
    if let Err(e) = cli::run(&cli) {
        eprintln!("{}", e.stderr_payload());
        std::process::exit(e.exit_code());
    }
}
