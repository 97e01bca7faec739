use std::io::Write;
use std::process::ExitCode;
use std::time::Instant;

use rapidmix_cli::{emit_report, error_report, input_digest, parse_args, run_command, CliError};

fn main() -> ExitCode {
    let start = Instant::now();
    let spec = match parse_args(std::env::args_os().skip(1)) {
        Ok(s) => s,
        Err(CliError::Help(text)) => {
            print!("{text}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(e.exit_code());
        }
    };
    let code = match run_command(&spec) {
        Ok(report) => {
            let text = emit_report(&report, spec.format);
            match &spec.output {
                Some(path) => match std::fs::write(path, &text) {
                    Ok(()) => 0,
                    Err(e) => {
                        let e = CliError::Output(format!("{}: {e}", path.display()));
                        eprintln!("{e}");
                        e.exit_code()
                    }
                },
                None => {
                    let _ = std::io::stdout().write_all(text.as_bytes());
                    0
                }
            }
        }
        Err(CliError::Domain(err)) => {
            let digest = std::fs::read(&spec.input_path).map(|b| input_digest(&b)).unwrap_or_default();
            let v = error_report(&spec, &digest, &err);
            println!("{}", serde_json::to_string_pretty(&v).expect("error report serializes"));
            eprintln!("{err}");
            4
        }
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    };
    eprintln!("wall time: {:.3} s", start.elapsed().as_secs_f64());
    ExitCode::from(code)
}
