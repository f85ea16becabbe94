use std::process::ExitCode;

use clap::Parser;
use enn_cli::{execute, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(report) => {
            let mut line = format!(
                "{}: {} accepted, {} rejected",
                report.experiment, report.accepted, report.rejected
            );
            if let Some(mae) = report.final_train_mae {
                line += &format!(", train MAE {mae:.4}");
            }
            if let Some(mae) = report.final_test_mae {
                line += &format!(", test MAE {mae:.4}");
            }
            if !report.fixture_checks.is_empty() {
                line += &format!(", {} fixture checks passed", report.fixture_checks.len());
            }
            println!("{line}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
