use std::process::ExitCode;

use clap::Parser;
use vizstyle_cli::{execute, Cli};
use vizstyle_core::api::ErrorResponse;

#[tokio::main]
async fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // Usage errors share the exit status of invalid input.
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match execute(cli).await {
        Ok(serde_json::Value::Null) => ExitCode::SUCCESS,
        Ok(out) => {
            println!("{}", serde_json::to_string_pretty(&out).expect("json"));
            ExitCode::SUCCESS
        }
        Err(error) => {
            let code = error.exit_code() as u8;
            eprintln!("{}", serde_json::to_string(&ErrorResponse { error }).expect("json"));
            ExitCode::from(code)
        }
    }
}
