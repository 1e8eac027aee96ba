use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Closed sample-index interval given as fractions of the last index `N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FractionInterval(pub f64, pub f64);

impl FractionInterval {
    pub fn indices(self, n: usize) -> (usize, usize) {
        ((self.0 * n as f64).round() as usize, (self.1 * n as f64).round() as usize)
    }
}

/// Early interval used by the chaos measure when none is configured.
pub const DEFAULT_INITIAL_INTERVAL: FractionInterval = FractionInterval(0.08, 0.15);
/// Late interval used by the chaos measure when none is configured.
pub const DEFAULT_FINAL_INTERVAL: FractionInterval = FractionInterval(0.5, 0.8);

/// Log-divergence of two trajectories and the resulting chaos measure.
#[derive(Debug, Clone, PartialEq)]
pub struct DivergenceReport {
    /// `log |(b[n] - a[n]) / (b[0] - a[0])|`; `-inf` where the samples agree.
    pub psi: Vec<f64>,
    pub initial: (usize, usize),
    pub last: (usize, usize),
    pub measure: f64,
    /// Samples inside either interval whose difference is exactly zero. They
    /// are left out of the interval means.
    pub excluded: Vec<usize>,
}

impl DivergenceReport {
    /// Mean exponential rate per unit of the sampling variable: difference of
    /// the interval means of `psi` divided by the difference of the interval
    /// mean times `t`.
    pub fn rate(&self, t: &[f64]) -> f64 {
        let (a, _) = interval_mean(&self.psi, self.last);
        let (b, _) = interval_mean(&self.psi, self.initial);
        let (ta, _) = interval_mean_filtered(t, &self.psi, self.last);
        let (tb, _) = interval_mean_filtered(t, &self.psi, self.initial);
        (a - b) / (ta - tb)
    }
}

fn interval_mean(psi: &[f64], (lo, hi): (usize, usize)) -> (f64, usize) {
    let vals: Vec<f64> = psi[lo..=hi].iter().copied().filter(|v| v.is_finite()).collect();
    (vals.iter().sum::<f64>() / vals.len() as f64, vals.len())
}

fn interval_mean_filtered(t: &[f64], psi: &[f64], (lo, hi): (usize, usize)) -> (f64, usize) {
    let vals: Vec<f64> = (lo..=hi).filter(|&n| psi[n].is_finite()).map(|n| t[n]).collect();
    (vals.iter().sum::<f64>() / vals.len() as f64, vals.len())
}

/// Chaos measure of two trajectories over index intervals
/// `initial = [n0, n1]` and `last = [n2, n3]`: the difference of the mean
/// log-divergence over the two intervals divided by `n2 - n1`.
pub fn chaos_measure(a: &[f64], b: &[f64], initial: (usize, usize), last: (usize, usize)) -> Result<DivergenceReport> {
    if a.len() != b.len() {
        return Err(Error::GridMismatch);
    }
    let (n0, n1) = initial;
    let (n2, n3) = last;
    if !(n0 < n1 && n1 < n2 && n2 < n3 && n3 < a.len()) {
        return Err(Error::Interval(format!(
            "need n0 < n1 < n2 < n3 < {}, got [{n0}, {n1}] and [{n2}, {n3}]",
            a.len()
        )));
    }
    let d0 = b[0] - a[0];
    if d0 == 0.0 {
        return Err(Error::IdenticalStart);
    }
    let psi: Vec<f64> = a.iter().zip(b).map(|(x, y)| ((y - x) / d0).abs().ln()).collect();
    let excluded: Vec<usize> = (n0..=n1).chain(n2..=n3).filter(|&n| !psi[n].is_finite()).collect();
    let (m0, c0) = interval_mean(&psi, initial);
    let (m1, c1) = interval_mean(&psi, last);
    if c0 == 0 || c1 == 0 {
        return Err(Error::Interval("every sample in an interval has zero difference".into()));
    }
    Ok(DivergenceReport { measure: (m1 - m0) / (n2 - n1) as f64, psi, initial, last, excluded })
}
