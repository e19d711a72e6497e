use blockcg::harness::{run_experiment, Args, ExperimentError};
use clap::Parser;
use std::process::ExitCode;

fn main() -> ExitCode {
    let args = Args::parse();
    match run_experiment(&args) {
        Ok(outcome) => {
            print!("{}", outcome.summary);
            ExitCode::SUCCESS
        }
        Err(e) => {
            if let ExperimentError::SolverFailed { outcome, .. } = &e {
                print!("{}", outcome.summary);
            }
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
