use clap::Parser;
use mmiq_cli::{run, Cli};

fn main() {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
        }
        Err(e) => {
            eprintln!("mmiq: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
