use std::io::Write;

use crate::error::{Error, Result};
use crate::timeint::{fmt_num, TimeSeries};

/// Relative share of a trajectory's range below which a signed difference
/// is treated as zero.
pub const DEFAULT_TOL_REL: f64 = 1e-6;

/// Floor on the crossing tolerance relative to the largest magnitude of the
/// compared trajectories, so that numerically identical signals never
/// report sign flips caused by roundoff.
const MAGNITUDE_FLOOR: f64 = 1e-8;

/// Crossing times of one column pair.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnCrossings {
    pub name: String,
    pub times_hr: Vec<f64>,
}

/// Crossings between two solutions, per shared column.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CrossingReport {
    pub columns: Vec<ColumnCrossings>,
}

impl CrossingReport {
    pub fn any_crossing(&self) -> bool {
        self.columns.iter().any(|c| !c.times_hr.is_empty())
    }

    pub fn crosses(&self, name: &str) -> bool {
        self.columns.iter().any(|c| c.name == name && !c.times_hr.is_empty())
    }

    /// CSV with columns `node,quantity,t_hr`, one row per crossing. Column
    /// names of the form `<node>.<quantity>` are split at the last dot.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "node,quantity,t_hr")?;
        for c in &self.columns {
            let (node, q) = c.name.rsplit_once('.').unwrap_or((c.name.as_str(), ""));
            for t in &c.times_hr {
                writeln!(w, "{node},{q},{}", fmt_num(*t))?;
            }
        }
        Ok(())
    }
}

/// Tolerance used for a pair of trajectories: `tol_rel` times their joint
/// range, floored at a tiny multiple of their magnitude.
pub fn crossing_tolerance(a: &[f64], b: &[f64], tol_rel: f64) -> f64 {
    let (mut lo, mut hi, mut mag) = (f64::INFINITY, f64::NEG_INFINITY, 0.0f64);
    for v in a.iter().chain(b) {
        lo = lo.min(*v);
        hi = hi.max(*v);
        mag = mag.max(v.abs());
    }
    if !lo.is_finite() {
        return 0.0;
    }
    (tol_rel * (hi - lo)).max(MAGNITUDE_FLOOR * mag)
}

/// Times at which `a - b` changes sign, counting only excursions larger than
/// `tol` on both sides. Each crossing is located by linear interpolation at
/// the last raw sign change between the two significant samples.
pub fn crossing_times(t: &[f64], a: &[f64], b: &[f64], tol: f64) -> Result<Vec<f64>> {
    if a.len() != t.len() || b.len() != t.len() {
        return Err(Error::GridMismatch);
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mut out = Vec::new();
    let mut last: Option<(usize, bool)> = None;
    for (n, v) in d.iter().enumerate() {
        if v.abs() <= tol {
            continue;
        }
        let positive = *v > 0.0;
        if let Some((m, prev)) = last {
            if prev != positive {
                out.push(locate(t, &d, m, n));
            }
        }
        last = Some((n, positive));
    }
    Ok(out)
}

fn locate(t: &[f64], d: &[f64], from: usize, to: usize) -> f64 {
    let sign = d[to] > 0.0;
    // Last index in [from, to) whose value is on the opposite (or zero) side.
    let mut k = to - 1;
    while k > from && (d[k] > 0.0) == sign && d[k] != 0.0 {
        k -= 1;
    }
    let (d0, d1) = (d[k], d[k + 1]);
    if d1 == d0 {
        return t[k];
    }
    let s = (-d0 / (d1 - d0)).clamp(0.0, 1.0);
    t[k] + s * (t[k + 1] - t[k])
}

/// Crossings between every column of `a` that also appears in `b`, or only
/// the given columns when `columns` is non-empty.
pub fn detect_crossings(a: &TimeSeries, b: &TimeSeries, tol_rel: f64, columns: &[String]) -> Result<CrossingReport> {
    if a.t_hr.len() != b.t_hr.len() || a.t_hr.iter().zip(&b.t_hr).any(|(x, y)| (x - y).abs() > 1e-9 * x.abs().max(1.0)) {
        return Err(Error::GridMismatch);
    }
    let names: Vec<&String> = if columns.is_empty() { a.names.iter().collect() } else { columns.iter().collect() };
    let mut report = CrossingReport::default();
    for name in names {
        let (Some(x), Some(y)) = (a.column(name), b.column(name)) else {
            if columns.is_empty() {
                continue;
            }
            return Err(Error::Sweep(format!("column `{name}` missing from one of the series")));
        };
        let tol = crossing_tolerance(x, y, tol_rel);
        report.columns.push(ColumnCrossings { name: name.clone(), times_hr: crossing_times(&a.t_hr, x, y, tol)? });
    }
    Ok(report)
}
