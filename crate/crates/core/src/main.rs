use clap::Parser;

use renewal_core::cli::{run, Cli};

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let out = run(&cli);
    print!("{}", out.stdout);
    std::process::exit(out.exit);
}
