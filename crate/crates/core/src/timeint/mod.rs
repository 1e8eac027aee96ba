//! Time integration with dense output on a uniform sampling grid.
//!
//! Systems are integrated in seconds. Output grids are usually given in
//! hours by callers and converted once.

mod bdf;
mod jacobian;
mod rk4;

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use bdf::Bdf;
pub use jacobian::{color_columns, FdJacobian};

/// An autonomous-in-structure ODE system `y' = f(t, y)` with `t` in seconds.
pub trait OdeSystem {
    fn dim(&self) -> usize;

    fn rhs(&mut self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<()>;

    /// Rows touched by each state column, if known. Enables grouped
    /// finite-difference Jacobians.
    fn sparsity(&self) -> Option<Vec<Vec<usize>>> {
        None
    }

    /// Called on every accepted step; an error aborts the integration.
    fn check_state(&mut self, _t: f64, _y: &[f64]) -> Result<()> {
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Variable-order, variable-step backward differentiation formulas.
    Bdf,
    /// Classical fixed-step Runge-Kutta, for cross-checks on non-stiff runs.
    Rk4,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub method: Method,
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Largest step, seconds. `None` leaves it unbounded.
    pub max_step_s: Option<f64>,
    /// Step of the fixed-step method, seconds.
    pub fixed_step_s: f64,
    /// Output intervals over the horizon; the grid has `samples + 1` points.
    pub samples: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            method: Method::Bdf,
            rel_tol: 1e-6,
            abs_tol: 1e-8,
            max_step_s: None,
            fixed_step_s: 1.0,
            samples: 10_000,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0) {
            return Err(Error::Config("tolerances must be positive".into()));
        }
        if self.samples < 1 {
            return Err(Error::Config("at least one output interval is required".into()));
        }
        if let Some(h) = self.max_step_s {
            if !(h > 0.0) {
                return Err(Error::Config("max_step_s must be positive".into()));
            }
        }
        if self.method == Method::Rk4 && !(self.fixed_step_s > 0.0) {
            return Err(Error::Config("fixed_step_s must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IntegrationStats {
    pub steps: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
    pub jacobians: usize,
    pub factorizations: usize,
}

/// Uniform grid `t_n = (n / N) T` in hours.
pub fn uniform_grid_hr(horizon_hr: f64, samples: usize) -> Vec<f64> {
    (0..=samples).map(|n| horizon_hr * n as f64 / samples as f64).collect()
}

/// Integrate `system` from `y0` at `t0` through the increasing output times
/// (seconds, all `>= t0`), returning the state at each output time.
pub fn integrate<S: OdeSystem>(
    system: &mut S,
    y0: &[f64],
    t0: f64,
    output_times: &[f64],
    cfg: &IntegratorConfig,
) -> Result<(Vec<Vec<f64>>, IntegrationStats)> {
    cfg.validate()?;
    if y0.len() != system.dim() {
        return Err(Error::Dimension { expected: system.dim(), got: y0.len() });
    }
    if output_times.windows(2).any(|w| w[1] < w[0]) || output_times.first().is_some_and(|&t| t < t0)
    {
        return Err(Error::Config("output times must be increasing and start at t0".into()));
    }
    match cfg.method {
        Method::Bdf => {
            let mut solver = Bdf::new(system, t0, y0, output_times.last().copied().unwrap_or(t0), cfg)?;
            let out = solver.run(system, output_times)?;
            Ok((out, solver.stats().clone()))
        }
        Method::Rk4 => rk4::run(system, t0, y0, output_times, cfg.fixed_step_s),
    }
}

/// Sampled trajectories of named quantities on a uniform grid in hours.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub t_hr: Vec<f64>,
    pub names: Vec<String>,
    /// `values[c][n]` is column `c` at sample `n`.
    pub values: Vec<Vec<f64>>,
}

impl TimeSeries {
    pub fn new(t_hr: Vec<f64>) -> Self {
        TimeSeries { t_hr, names: Vec::new(), values: Vec::new() }
    }

    pub fn push_column(&mut self, name: impl Into<String>, values: Vec<f64>) -> Result<()> {
        if values.len() != self.t_hr.len() {
            return Err(Error::Dimension { expected: self.t_hr.len(), got: values.len() });
        }
        self.names.push(name.into());
        self.values.push(values);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.t_hr.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t_hr.is_empty()
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.names.iter().position(|n| n == name).map(|i| self.values[i].as_slice())
    }

    pub fn horizon_hr(&self) -> f64 {
        self.t_hr.last().copied().unwrap_or(0.0)
    }

    /// CSV with a `t_hr` column followed by every named column.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        write!(w, "t_hr")?;
        for n in &self.names {
            write!(w, ",{n}")?;
        }
        writeln!(w)?;
        for (i, t) in self.t_hr.iter().enumerate() {
            write!(w, "{}", fmt_num(*t))?;
            for col in &self.values {
                write!(w, ",{}", fmt_num(col[i]))?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Shortest round-trip float formatting, stable across runs.
pub fn fmt_num(v: f64) -> String {
    format!("{v:?}")
}

/// Root-mean-square norm used for error control.
pub(crate) fn rms(v: impl Iterator<Item = f64>, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    (v.map(|x| x * x).sum::<f64>() / n as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// y' = -k (y - c), exact solution c + (y0 - c) e^{-k t}.
    struct Relax {
        k: f64,
        c: f64,
    }

    impl OdeSystem for Relax {
        fn dim(&self) -> usize {
            1
        }
        fn rhs(&mut self, _t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
            dy[0] = -self.k * (y[0] - self.c);
            Ok(())
        }
    }

    /// Robertson's chemical kinetics, the usual stiff benchmark.
    struct Robertson;

    impl OdeSystem for Robertson {
        fn dim(&self) -> usize {
            3
        }
        fn rhs(&mut self, _t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
            dy[0] = -0.04 * y[0] + 1e4 * y[1] * y[2];
            dy[2] = 3e7 * y[1] * y[1];
            dy[1] = -dy[0] - dy[2];
            Ok(())
        }
    }

    /// Harmonic oscillator, checks dense output phase accuracy.
    struct Oscillator;

    impl OdeSystem for Oscillator {
        fn dim(&self) -> usize {
            2
        }
        fn rhs(&mut self, _t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
            dy[0] = y[1];
            dy[1] = -y[0];
            Ok(())
        }
    }

    fn cfg(method: Method, rtol: f64, atol: f64) -> IntegratorConfig {
        IntegratorConfig {
            method,
            rel_tol: rtol,
            abs_tol: atol,
            max_step_s: None,
            fixed_step_s: 1e-3,
            samples: 10,
        }
    }

    #[test]
    fn relaxation_matches_exact() {
        let mut sys = Relax { k: 2.0, c: 1.0 };
        let times: Vec<f64> = (0..=20).map(|i| i as f64 * 0.25).collect();
        let (out, stats) = integrate(&mut sys, &[3.0], 0.0, &times, &cfg(Method::Bdf, 1e-8, 1e-10)).unwrap();
        for (t, y) in times.iter().zip(&out) {
            let exact = 1.0 + 2.0 * (-2.0 * t).exp();
            assert!((y[0] - exact).abs() < 1e-6, "t={t} y={} exact={exact}", y[0]);
        }
        assert!(stats.steps > 0);
    }

    #[test]
    fn robertson_conserves_mass() {
        let mut sys = Robertson;
        let times = vec![0.0, 0.4, 4.0, 40.0, 400.0, 4e4];
        let (out, stats) = integrate(&mut sys, &[1.0, 0.0, 0.0], 0.0, &times, &cfg(Method::Bdf, 1e-6, 1e-10)).unwrap();
        for y in &out {
            assert!((y.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
        // reference values at t = 40 from standard tables
        assert!((out[3][0] - 0.7158).abs() < 1e-3);
        // stiff problem: an explicit method would need ~1e7 steps
        assert!(stats.steps < 2000, "steps {}", stats.steps);
    }

    #[test]
    fn dense_output_on_oscillator() {
        let mut sys = Oscillator;
        let times: Vec<f64> = (0..=200).map(|i| i as f64 * 0.1).collect();
        for method in [Method::Bdf, Method::Rk4] {
            let (out, _) = integrate(&mut sys, &[1.0, 0.0], 0.0, &times, &cfg(method, 1e-9, 1e-12)).unwrap();
            for (t, y) in times.iter().zip(&out) {
                assert!((y[0] - t.cos()).abs() < 1e-5, "{method:?} t={t}");
                assert!((y[1] + t.sin()).abs() < 1e-5, "{method:?} t={t}");
            }
        }
    }

    #[test]
    fn deterministic_output() {
        let times: Vec<f64> = (0..=50).map(|i| i as f64 * 10.0).collect();
        let run = || integrate(&mut Robertson, &[1.0, 0.0, 0.0], 0.0, &times, &cfg(Method::Bdf, 1e-6, 1e-10)).unwrap().0;
        assert_eq!(run(), run());
    }

    #[test]
    fn config_validation() {
        let mut c = IntegratorConfig::default();
        c.rel_tol = 0.0;
        assert!(c.validate().is_err());
        let mut c = IntegratorConfig::default();
        c.samples = 0;
        assert!(c.validate().is_err());
        assert!(integrate(&mut Relax { k: 1.0, c: 0.0 }, &[1.0, 2.0], 0.0, &[1.0], &IntegratorConfig::default()).is_err());
    }

    #[test]
    fn csv_layout() {
        let mut ts = TimeSeries::new(vec![0.0, 0.5]);
        ts.push_column("out.p_mpa", vec![7.0, 6.5]).unwrap();
        let mut buf = Vec::new();
        ts.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "t_hr,out.p_mpa\n0.0,7.0\n0.5,6.5\n");
        assert!(ts.push_column("x", vec![1.0]).is_err());
    }
}
