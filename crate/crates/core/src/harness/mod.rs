//! Experiment driver: convergence metrics, trace files and the CLI.
//!
//! [`run_experiment`] loads a MatrixMarket matrix, builds the preconditioner
//! and right-hand side, runs every requested `(variant, m)` pair and writes
//! one CSV trace per pair into the output directory. Every flag can also be
//! given through an environment variable with the `BCG_` prefix.

pub mod trace;

use crate::bcg::{PhiPolicy, Problem, SolverConfig, Variant};
use crate::linalg::Block;
use crate::precond::{PrecondError, Preconditioner};
use crate::recon::{solve_and_reconstruct, Reconstructor};
use crate::sparse::{
    dense_reference_solution, load_matrix_market, make_rhs, MatrixMarketError, RhsError, RhsSource, RhsSpec,
    SparseSym,
};
use clap::{Parser, ValueEnum};
use nalgebra::DMatrix;
use serde::Serialize;
use std::fs;
use std::io::{self, BufWriter};
use std::path::{Path, PathBuf};
use thiserror::Error;
use trace::{compare_traces, format_summary, ConvergenceTrace, Termination};

/// Largest `n` for which `--random-b` computes the exact solution densely.
pub const DENSE_REFERENCE_MAX_N: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PrecondArg {
    None,
    Jacobi,
    Ic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PhiArg {
    Identity,
    Qr,
}

#[derive(Debug, Clone, Parser)]
#[command(name = "bcg-bench", version, about = "Block CG convergence experiments on MatrixMarket matrices")]
pub struct Args {
    /// Symmetric positive definite matrix (`.mtx` or `.mtx.gz`).
    #[arg(long, env = "BCG_MATRIX")]
    pub matrix: PathBuf,

    /// Block sizes, comma separated.
    #[arg(long = "m", env = "BCG_M", value_delimiter = ',', default_value = "1")]
    pub m: Vec<usize>,

    /// Variants to run, comma separated: hs, ol, dr, dp, bf.
    #[arg(long, env = "BCG_VARIANTS", value_delimiter = ',', default_value = "hs,dr,dp")]
    pub variants: Vec<Variant>,

    #[arg(long, env = "BCG_PRECOND", value_enum, default_value_t = PrecondArg::None)]
    pub precond: PrecondArg,

    /// Diagonal shift for incomplete Cholesky, relative to diag(A).
    #[arg(long, env = "BCG_IC_SHIFT", default_value_t = 0.0)]
    pub ic_shift: f64,

    /// Drop tolerance for incomplete Cholesky fill; 0 keeps the pattern of A.
    #[arg(long, env = "BCG_IC_DROPTOL", default_value_t = 0.0)]
    pub ic_droptol: f64,

    /// Per-column relative residual tolerance (0 runs to --maxit).
    #[arg(long, env = "BCG_TOL", default_value_t = 1e-10)]
    pub tol: f64,

    #[arg(long, env = "BCG_MAXIT", default_value_t = 1000)]
    pub maxit: usize,

    #[arg(long, env = "BCG_SEED", default_value_t = 0)]
    pub seed: u64,

    /// Uniform random b instead of b = A·x for a random x.
    #[arg(long, env = "BCG_RANDOM_B")]
    pub random_b: bool,

    /// Singular value cutoff of the breakdown-free variant.
    #[arg(long, env = "BCG_BF_TOL", default_value_t = 1e-10)]
    pub bf_tol: f64,

    /// Direction scaling of the `ol` variant.
    #[arg(long, env = "BCG_OL_PHI", value_enum, default_value_t = PhiArg::Qr)]
    pub ol_phi: PhiArg,

    /// Directory for reconstructed T_k and LDL factors (JSON).
    #[arg(long, env = "BCG_DUMP_JACOBI")]
    pub dump_jacobi: Option<PathBuf>,

    /// Directory for the trace files.
    #[arg(long, env = "BCG_OUT", default_value = "traces")]
    pub out: PathBuf,
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Load(#[from] MatrixMarketError),
    #[error("invalid arguments: {0}")]
    Arguments(String),
    #[error(transparent)]
    Rhs(#[from] RhsError),
    #[error("preconditioner: {0}")]
    Precond(#[from] PrecondError),
    #[error("writing {path}: {source}")]
    Output { path: PathBuf, source: io::Error },
    #[error("{failed} solver run(s) failed; partial traces were written")]
    SolverFailed { failed: usize, outcome: Box<ExperimentOutcome> },
}

impl ExperimentError {
    pub fn exit_code(&self) -> u8 {
        match self {
            ExperimentError::Load(_) | ExperimentError::Arguments(_) | ExperimentError::Rhs(_) => 2,
            ExperimentError::Precond(_) => 3,
            ExperimentError::SolverFailed { .. } => 4,
            ExperimentError::Output { .. } => 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub traces: Vec<ConvergenceTrace>,
    pub files: Vec<PathBuf>,
    pub summary: String,
}

#[derive(Serialize)]
struct JacobiDump {
    m: usize,
    steps: usize,
    failure: Option<String>,
    t: Vec<Vec<f64>>,
    l: Vec<Vec<f64>>,
    d: Vec<Vec<f64>>,
}

fn rows(a: &DMatrix<f64>) -> Vec<Vec<f64>> {
    a.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Name of a matrix file without `.mtx` / `.mtx.gz`.
pub fn matrix_name(path: &Path) -> String {
    let name = path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = name.strip_suffix(".gz").unwrap_or(&name);
    name.strip_suffix(".mtx").unwrap_or(name).to_string()
}

fn build_precond(args: &Args, a: &SparseSym) -> Result<Preconditioner, PrecondError> {
    Ok(match args.precond {
        PrecondArg::None => Preconditioner::identity(a.n()),
        PrecondArg::Jacobi => Preconditioner::jacobi(a),
        PrecondArg::Ic => Preconditioner::incomplete_cholesky(a, args.ic_shift, args.ic_droptol)?,
    })
}

fn rhs_for(args: &Args, a: &SparseSym, m: usize) -> Result<(Block, Option<Block>), RhsError> {
    let source = if args.random_b {
        RhsSource::Random { seed: args.seed }
    } else {
        RhsSource::ConstructedSolution { seed: args.seed }
    };
    let (b, x) = make_rhs(&RhsSpec { source, m }, a)?;
    if x.is_none() && a.n() <= DENSE_REFERENCE_MAX_N {
        return Ok((b.clone(), dense_reference_solution(a, &b)));
    }
    Ok((b, x))
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<fs::File>) -> io::Result<()>) -> Result<(), ExperimentError> {
    let wrap = |source| ExperimentError::Output {
        path: path.to_path_buf(),
        source,
    };
    let file = fs::File::create(path).map_err(wrap)?;
    let mut w = BufWriter::new(file);
    f(&mut w).map_err(wrap)?;
    io::Write::flush(&mut w).map_err(wrap)
}

fn dump_jacobi(path: &Path, recon: &Reconstructor) -> Result<(), ExperimentError> {
    let dump = JacobiDump {
        m: recon.tridiag().m,
        steps: recon.steps(),
        failure: recon.failure().map(|e| e.to_string()),
        t: rows(&recon.tridiag().densify()),
        l: rows(&recon.densify_l()),
        d: rows(&recon.densify_d()),
    };
    write_file(path, |w| serde_json::to_writer_pretty(w, &dump).map_err(io::Error::other))
}

/// Runs every `(variant, m)` combination and writes the traces.
pub fn run_experiment(args: &Args) -> Result<ExperimentOutcome, ExperimentError> {
    if args.m.is_empty() || args.m.contains(&0) {
        return Err(ExperimentError::Arguments("block sizes must be at least 1".into()));
    }
    if args.variants.is_empty() {
        return Err(ExperimentError::Arguments("no variant selected".into()));
    }
    let a = load_matrix_market(&args.matrix)?;
    let name = matrix_name(&args.matrix);
    if let Some(&m) = args.m.iter().find(|&&m| m > a.n()) {
        return Err(ExperimentError::Arguments(format!("block size {m} exceeds n = {}", a.n())));
    }
    let precond = build_precond(args, &a)?;

    for dir in std::iter::once(&args.out).chain(args.dump_jacobi.as_ref()) {
        fs::create_dir_all(dir).map_err(|source| ExperimentError::Output {
            path: dir.clone(),
            source,
        })?;
    }

    let mut traces = Vec::new();
    let mut files = Vec::new();
    for &m in &args.m {
        let (b, x_true) = rhs_for(args, &a, m)?;
        for &variant in &args.variants {
            let config = SolverConfig {
                variant,
                max_iters: args.maxit,
                tol: args.tol,
                phi_policy: match args.ol_phi {
                    PhiArg::Identity => PhiPolicy::Identity,
                    PhiArg::Qr => PhiPolicy::QrNormalize,
                },
                bf_trunc_tol: args.bf_tol,
            };
            config.validate().map_err(ExperimentError::Arguments)?;
            let problem = Problem {
                a: &a,
                b: &b,
                x0: None,
                precond: &precond,
                x_true: x_true.as_ref(),
            };
            let (mut trace, recon) = if variant == Variant::Bf {
                (crate::bcg::run_solver(&config, &problem, &mut |_| {}), None)
            } else {
                solve_and_reconstruct(&config, &problem, |_, _| {})
            };
            trace.info.matrix = name.clone();
            trace.info.seed = Some(args.seed);

            let stem = format!("{name}_{variant}_m{m}");
            let path = args.out.join(format!("{stem}.csv"));
            write_file(&path, |w| trace.write_csv(w))?;
            files.push(path);
            if let (Some(dir), Some(recon)) = (&args.dump_jacobi, &recon) {
                let path = dir.join(format!("{stem}_jacobi.json"));
                dump_jacobi(&path, recon)?;
                files.push(path);
            }
            traces.push(trace);
        }
    }

    let summary = format_summary(&compare_traces(&traces));
    let failed = traces
        .iter()
        .filter(|t| matches!(t.termination, Termination::Failed { .. }))
        .count();
    let outcome = ExperimentOutcome { traces, files, summary };
    if failed > 0 {
        return Err(ExperimentError::SolverFailed {
            failed,
            outcome: Box::new(outcome),
        });
    }
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_strip_extensions() {
        assert_eq!(matrix_name(Path::new("/x/bcsstk03.mtx")), "bcsstk03");
        assert_eq!(matrix_name(Path::new("a.mtx.gz")), "a");
        assert_eq!(matrix_name(Path::new("plain")), "plain");
    }

    #[test]
    fn flags_parse() {
        let args = Args::try_parse_from([
            "bcg-bench",
            "--matrix",
            "a.mtx",
            "--m",
            "1,4",
            "--variants",
            "hs,dr",
            "--precond",
            "ic",
            "--random-b",
        ])
        .unwrap();
        assert_eq!(args.m, vec![1, 4]);
        assert_eq!(args.variants, vec![Variant::Hs, Variant::Dr]);
        assert_eq!(args.precond, PrecondArg::Ic);
        assert!(args.random_b);
        assert!(Args::try_parse_from(["bcg-bench", "--matrix", "a.mtx", "--variants", "cg"]).is_err());
    }

    #[test]
    fn exit_codes() {
        let args = Args::try_parse_from(["bcg-bench", "--matrix", "/nonexistent/file.mtx"]).unwrap();
        assert_eq!(run_experiment(&args).unwrap_err().exit_code(), 2);
    }
}
