use clap::Parser;
use proadapt_cli::{execute, Cli};

fn main() {
    let cli = Cli::parse();
    let result = cli.resolve_config().and_then(|cfg| execute(cli.command, &cfg));
    match result {
        Ok(text) => println!("{}", text.trim_end()),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
