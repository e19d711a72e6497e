//! End-to-end run of the experiment driver: write a matrix in MatrixMarket
//! format, run several variants and block sizes, read one trace back.
//!
//! The same run from the command line:
//! `bcg-bench --matrix lap.mtx --m 1,4 --variants hs,dr,dp --out traces`

use blockcg::harness::trace::ConvergenceTrace;
use blockcg::harness::{run_experiment, Args};
use blockcg::sparse::write_matrix_market;
use blockcg::testmat;
use clap::Parser;
use std::fs::File;
use std::io::BufReader;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join("blockcg-traces-example");
    std::fs::create_dir_all(&dir)?;
    let mtx = dir.join("lap.mtx");
    write_matrix_market(&testmat::laplacian_2d(30), File::create(&mtx)?)?;

    let args = Args::try_parse_from([
        "bcg-bench",
        "--matrix",
        mtx.to_str().unwrap(),
        "--m",
        "1,4",
        "--variants",
        "hs,dr,dp",
        "--precond",
        "ic",
        "--out",
        dir.join("traces").to_str().unwrap(),
    ])?;
    let outcome = run_experiment(&args)?;
    print!("{}", outcome.summary);

    let path = &outcome.files[0];
    let trace = ConvergenceTrace::read_csv(BufReader::new(File::open(path)?))?;
    println!("\n{}: {} rows, first ω values:", path.display(), trace.rows.len());
    for row in trace.rows.iter().take(5) {
        println!("  k={:<3} ω={:.3e}", row.k, row.omega.unwrap_or(f64::NAN));
    }
    Ok(())
}
