//! Convergence traces, the `ω_k` metric and their CSV form.
//!
//! The CSV starts with one `#`-prefixed JSON metadata line, followed by the
//! header `k,omega,max_rel_res,min_rel_res,matvecs,wall_time_s,rel_res,a_norm_err,warnings`.
//! Per-column lists are joined with `;`. Unknown values are empty fields.

use crate::bcg::Variant;
use crate::linalg::Block;
use crate::sparse::LinearOperator;
use serde::{Deserialize, Serialize};
use std::io::{self, BufRead, Write};
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;

pub const CSV_HEADER: &str = "k,omega,max_rel_res,min_rel_res,matvecs,wall_time_s,rel_res,a_norm_err,warnings";

/// Error levels reported by [`compare_traces`].
pub const SUMMARY_LEVELS: [f64; 4] = [1e-4, 1e-6, 1e-8, 1e-10];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Termination {
    Converged { step: usize },
    MaxIters,
    Failed { step: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub k: usize,
    pub omega: Option<f64>,
    pub rel_res: Vec<f64>,
    pub a_err: Option<Vec<f64>>,
    /// Seconds since the solver run started.
    pub wall_secs: f64,
    /// Cumulative operator-column applications.
    pub matvecs: usize,
    pub warnings: Vec<String>,
}

impl TraceRow {
    pub fn max_rel_res(&self) -> f64 {
        self.rel_res.iter().cloned().fold(0.0, f64::max)
    }

    pub fn min_rel_res(&self) -> f64 {
        self.rel_res.iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

/// Run description stored in the metadata line.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunInfo {
    pub matrix: String,
    pub n: usize,
    pub preconditioner: String,
    pub seed: Option<u64>,
    pub tol: f64,
    pub max_iters: usize,
    pub bf_trunc_tol: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTrace {
    pub variant: Variant,
    pub m: usize,
    pub info: RunInfo,
    pub rows: Vec<TraceRow>,
    pub termination: Termination,
}

#[derive(Debug, Serialize, Deserialize)]
struct Meta {
    schema_version: u32,
    variant: String,
    m: usize,
    #[serde(flatten)]
    info: RunInfo,
    termination: Termination,
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("trace line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(";")
}

impl ConvergenceTrace {
    pub fn new(variant: Variant, m: usize) -> Self {
        Self {
            variant,
            m,
            info: RunInfo::default(),
            rows: Vec::new(),
            termination: Termination::MaxIters,
        }
    }

    /// Completed steps.
    pub fn iterations(&self) -> usize {
        self.rows.last().map_or(0, |r| r.k)
    }

    pub fn final_omega(&self) -> Option<f64> {
        self.rows.last().and_then(|r| r.omega)
    }

    pub fn min_omega(&self) -> Option<f64> {
        self.rows.iter().filter_map(|r| r.omega).reduce(f64::min)
    }

    /// First step with `ω_k ≤ level`.
    pub fn first_below(&self, level: f64) -> Option<usize> {
        self.rows.iter().find(|r| r.omega.is_some_and(|w| w <= level)).map(|r| r.k)
    }

    pub fn total_matvecs(&self) -> usize {
        self.rows.last().map_or(0, |r| r.matvecs)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let meta = Meta {
            schema_version: SCHEMA_VERSION,
            variant: self.variant.name().to_string(),
            m: self.m,
            info: self.info.clone(),
            termination: self.termination.clone(),
        };
        writeln!(w, "# {}", serde_json::to_string(&meta).map_err(io::Error::other)?)?;
        writeln!(w, "{CSV_HEADER}")?;
        for r in &self.rows {
            let warnings: Vec<String> = r.warnings.iter().map(|s| s.replace([',', ';', '\n'], " ")).collect();
            writeln!(
                w,
                "{},{},{:e},{:e},{},{:.6},{},{},{}",
                r.k,
                r.omega.map(|v| format!("{v:e}")).unwrap_or_default(),
                r.max_rel_res(),
                r.min_rel_res(),
                r.matvecs,
                r.wall_secs,
                join(&r.rel_res),
                r.a_err.as_deref().map(join).unwrap_or_default(),
                warnings.join(";"),
            )?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self, TraceError> {
        let mut lines = r.lines().enumerate();
        let perr = |line: usize, msg: String| TraceError::Parse { line: line + 1, msg };

        let (i, first) = lines.next().ok_or_else(|| perr(0, "empty trace".into()))?;
        let first = first?;
        let json = first
            .strip_prefix('#')
            .ok_or_else(|| perr(i, "missing metadata line".into()))?;
        let meta: Meta = serde_json::from_str(json.trim()).map_err(|e| perr(i, e.to_string()))?;
        if meta.schema_version != SCHEMA_VERSION {
            return Err(perr(i, format!("unsupported schema version {}", meta.schema_version)));
        }
        let variant: Variant = meta.variant.parse().map_err(|e: String| perr(i, e))?;

        let (i, header) = lines.next().ok_or_else(|| perr(1, "missing header".into()))?;
        if header?.trim() != CSV_HEADER {
            return Err(perr(i, "unexpected header".into()));
        }

        let mut rows = Vec::new();
        for (i, line) in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 9 {
                return Err(perr(i, format!("expected 9 fields, got {}", f.len())));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|e| perr(i, format!("bad number '{s}': {e}")));
            let list = |s: &str| -> Result<Vec<f64>, TraceError> {
                if s.is_empty() {
                    Ok(Vec::new())
                } else {
                    s.split(';').map(num).collect()
                }
            };
            let a_err = list(f[7])?;
            rows.push(TraceRow {
                k: f[0].parse().map_err(|_| perr(i, format!("bad step '{}'", f[0])))?,
                omega: if f[1].is_empty() { None } else { Some(num(f[1])?) },
                matvecs: f[4].parse().map_err(|_| perr(i, format!("bad matvec count '{}'", f[4])))?,
                wall_secs: num(f[5])?,
                rel_res: list(f[6])?,
                a_err: (!a_err.is_empty()).then_some(a_err),
                warnings: if f[8].is_empty() {
                    Vec::new()
                } else {
                    f[8].split(';').map(String::from).collect()
                },
            });
        }
        Ok(Self {
            variant,
            m: meta.m,
            info: meta.info,
            rows,
            termination: meta.termination,
        })
    }
}

/// `‖x_true^{(i)} − x^{(i)}‖_A` for every column.
pub fn a_norm_errors<A: LinearOperator + ?Sized>(a: &A, x_true: &Block, x: &Block) -> Vec<f64> {
    let e = x_true - x;
    let ae = a.apply(&e);
    e.column_iter()
        .zip(ae.column_iter())
        .map(|(c, ac)| c.dot(&ac).max(0.0).sqrt())
        .collect()
}

/// `ω = sqrt(trace(EᵀAE) / trace(x_trueᵀ A x_true))` with `E = x_true − x`;
/// `None` when `x_true = 0`.
pub fn compute_omega<A: LinearOperator + ?Sized>(a: &A, x_true: &Block, x: &Block) -> Option<f64> {
    let denom = a.apply(x_true).dot(x_true);
    if denom <= 0.0 {
        return None;
    }
    let num: f64 = a_norm_errors(a, x_true, x).iter().map(|v| v * v).sum();
    Some((num / denom).sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceSummary {
    pub variant: Variant,
    pub m: usize,
    pub iterations: usize,
    pub termination: Termination,
    pub final_omega: Option<f64>,
    pub min_omega: Option<f64>,
    /// First step reaching each of [`SUMMARY_LEVELS`].
    pub steps_to: Vec<(f64, Option<usize>)>,
    pub matvecs: usize,
}

pub fn compare_traces(traces: &[ConvergenceTrace]) -> Vec<TraceSummary> {
    traces
        .iter()
        .map(|t| TraceSummary {
            variant: t.variant,
            m: t.m,
            iterations: t.iterations(),
            termination: t.termination.clone(),
            final_omega: t.final_omega(),
            min_omega: t.min_omega(),
            steps_to: SUMMARY_LEVELS.iter().map(|&l| (l, t.first_below(l))).collect(),
            matvecs: t.total_matvecs(),
        })
        .collect()
}

/// Plain-text table of [`compare_traces`] output.
pub fn format_summary(rows: &[TraceSummary]) -> String {
    let opt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.3e}"));
    let mut out = format!("{:<4} {:>3} {:>6} {:>10} {:>10} {:>10}", "var", "m", "iters", "matvecs", "final_w", "min_w");
    for l in SUMMARY_LEVELS {
        out.push_str(&format!(" {:>7}", format!("k@{l:.0e}")));
    }
    out.push_str("  status\n");
    for r in rows {
        out.push_str(&format!(
            "{:<4} {:>3} {:>6} {:>10} {:>10} {:>10}",
            r.variant.name(),
            r.m,
            r.iterations,
            r.matvecs,
            opt(r.final_omega),
            opt(r.min_omega)
        ));
        for (_, k) in &r.steps_to {
            out.push_str(&format!(" {:>7}", k.map_or_else(|| "-".to_string(), |k| k.to_string())));
        }
        let status = match &r.termination {
            Termination::Converged { step } => format!("converged at {step}"),
            Termination::MaxIters => "max iterations".to_string(),
            Termination::Failed { step, reason } => format!("failed at {step}: {reason}"),
        };
        out.push_str(&format!("  {status}\n"));
    }
    out
}
