use std::io;
use std::process::ExitCode;

use dejmps_sim::report::{parse_cli, run};
use dejmps_sim::Error;

fn main() -> ExitCode {
    let result = parse_cli(std::env::args_os()).and_then(|cfg| {
        let report = run(&cfg, &mut io::stdout().lock())?;
        eprint!("{}", report.summary);
        for path in &report.written {
            eprintln!("wrote {}", path.display());
        }
        Ok(())
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Error::Help(text)) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e @ Error::Usage(_)) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
