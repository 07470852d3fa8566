mod args;
mod commands;
mod config_file;
mod failure;
mod manifest;
mod report;

use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let argv = match config_file::expand(std::env::args().collect()) {
        Ok(a) => a,
        Err(f) => return fail(f),
    };
    let cli = match args::Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(failure::BAD_ARGS)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match commands::run(cli.command, &argv[1..]) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(f) => fail(f),
    }
}

fn fail(f: failure::Failure) -> ExitCode {
    eprintln!("error: {}", f.message);
    ExitCode::from(f.code)
}
