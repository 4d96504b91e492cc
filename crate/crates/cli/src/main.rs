use std::io;
use std::process;

use clap::error::ErrorKind;
use clap::Parser;

use jacobi_split_cli::{run, Cli, EXIT_ERROR, EXIT_OK};

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_ERROR,
            };
            process::exit(code);
        }
    };
    let code = match run(cli, &mut io::stdout().lock()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    };
    process::exit(code);
}
