mod args;
mod commands;
mod table;

use std::io::{self, BufWriter, Write};
use std::process::ExitCode;

use clap::Parser;
use gosset::GossetError;

use crate::args::{Cli, Command, Format};

const EXIT_VALIDATION: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let table = match &cli.command {
        Command::Price(a) => commands::price(a),
        Command::Greeks(a) => commands::greeks(a),
        Command::Table1(a) => commands::table1(a),
        Command::Calibrate(a) => commands::calibrate(a),
        Command::Simulate(a) => commands::simulate(a),
    };
    let table = match table {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {e}");
            if let GossetError::NoSolution(_) = e {
                eprintln!("the observed ratio lies at or above the normal-kernel limit, so no finite shape parameter matches it");
            }
            return ExitCode::from(if e.is_validation() { EXIT_VALIDATION } else { EXIT_NUMERICAL });
        }
    };

    let stdout = io::stdout();
    let mut out = BufWriter::new(stdout.lock());
    let written = match cli.format {
        Format::Csv => table.write_csv(&mut out).map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => io,
            other => io::Error::other(format!("{other:?}")),
        }),
        Format::Json => table.write_json(&mut out),
    }
    .and_then(|_| out.flush());
    match written {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.kind() == io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: writing output: {e}");
            ExitCode::from(EXIT_VALIDATION)
        }
    }
}
