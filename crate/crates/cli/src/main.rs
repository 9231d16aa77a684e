use clap::error::ErrorKind;
use clap::Parser;
use gmcvx_cli::{configure_threads, exit, run, Cli};

fn main() {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => exit::MALFORMED,
            };
            std::process::exit(code);
        }
    };
    let code = configure_threads()
        .and_then(|()| run(cli, &mut std::io::stdout().lock()))
        .unwrap_or_else(|e| {
            eprintln!("gmcvx: {e}");
            e.code()
        });
    std::process::exit(code);
}
