use std::process::ExitCode;

use lhess_cli::Invocation;

fn main() -> ExitCode {
    match lhess_cli::run(std::env::args_os()) {
        Ok(Invocation::Display(text)) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Ok(Invocation::Ran(summary)) => {
            println!("{}", serde_json::to_string(&summary).expect("summary serializes"));
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
