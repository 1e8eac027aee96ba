//! Variable-order (1 to 5) variable-step BDF in the modified-divided-
//! difference form, with NDF-style error constants, a reused LU of the
//! Newton iteration matrix, and polynomial dense output.

use nalgebra::{DMatrix, LU};

use super::{rms, FdJacobian, IntegrationStats, IntegratorConfig, OdeSystem};
use crate::error::{Error, Result};

const MAX_ORDER: usize = 5;
const NEWTON_MAXITER: usize = 4;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 10.0;
const KAPPA: [f64; MAX_ORDER + 1] = [0.0, -0.1850, -1.0 / 9.0, -0.0823, -0.0415, 0.0];

type Lu = LU<f64, nalgebra::Dyn, nalgebra::Dyn>;

pub struct Bdf {
    n: usize,
    t: f64,
    t_bound: f64,
    rtol: f64,
    atol: f64,
    max_step: f64,
    h_abs: f64,
    newton_tol: f64,
    /// Backward differences, `MAX_ORDER + 3` rows of length `n`.
    diffs: Vec<Vec<f64>>,
    order: usize,
    n_equal_steps: usize,
    jac: DMatrix<f64>,
    lu: Option<Lu>,
    fd: FdJacobian,
    gamma: [f64; MAX_ORDER + 1],
    alpha: [f64; MAX_ORDER + 1],
    error_const: [f64; MAX_ORDER + 1],
    stats: IntegrationStats,
}

fn compute_r(order: usize, factor: f64) -> Vec<Vec<f64>> {
    let k = order + 1;
    let mut m = vec![vec![0.0; k]; k];
    m[0].iter_mut().for_each(|v| *v = 1.0);
    for i in 1..k {
        for j in 1..k {
            m[i][j] = (i as f64 - 1.0 - factor * j as f64) / i as f64;
        }
    }
    for i in 1..k {
        for j in 0..k {
            m[i][j] *= m[i - 1][j];
        }
    }
    m
}

fn change_diffs(diffs: &mut [Vec<f64>], order: usize, factor: f64) {
    let r = compute_r(order, factor);
    let u = compute_r(order, 1.0);
    let k = order + 1;
    let mut ru = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in 0..k {
            ru[i][j] = (0..k).map(|l| r[i][l] * u[l][j]).sum();
        }
    }
    let n = diffs[0].len();
    let old: Vec<Vec<f64>> = diffs[..k].to_vec();
    for (i, row) in diffs[..k].iter_mut().enumerate() {
        for c in 0..n {
            row[c] = (0..k).map(|l| ru[l][i] * old[l][c]).sum();
        }
    }
}

impl Bdf {
    pub fn new<S: OdeSystem>(
        system: &mut S,
        t0: f64,
        y0: &[f64],
        t_bound: f64,
        cfg: &IntegratorConfig,
    ) -> Result<Self> {
        let n = y0.len();
        let mut f0 = vec![0.0; n];
        system.rhs(t0, y0, &mut f0)?;
        let mut stats = IntegrationStats { rhs_evals: 1, ..Default::default() };

        let rtol = cfg.rel_tol.max(100.0 * f64::EPSILON);
        let atol = cfg.abs_tol;
        let max_step = cfg.max_step_s.unwrap_or(f64::INFINITY);
        let h_abs = initial_step(system, t0, y0, &f0, t_bound, max_step, rtol, atol, &mut stats)?;

        let mut gamma = [0.0; MAX_ORDER + 1];
        for i in 1..=MAX_ORDER {
            gamma[i] = gamma[i - 1] + 1.0 / i as f64;
        }
        let mut alpha = [0.0; MAX_ORDER + 1];
        let mut error_const = [0.0; MAX_ORDER + 1];
        for i in 0..=MAX_ORDER {
            alpha[i] = (1.0 - KAPPA[i]) * gamma[i];
            error_const[i] = KAPPA[i] * gamma[i] + 1.0 / (i as f64 + 1.0);
        }

        let mut diffs = vec![vec![0.0; n]; MAX_ORDER + 3];
        diffs[0].copy_from_slice(y0);
        for (d, f) in diffs[1].iter_mut().zip(&f0) {
            *d = f * h_abs;
        }

        let fd = FdJacobian::new(n, system.sparsity());
        let scale: Vec<f64> = vec![atol; n];
        let jac = fd.eval(system, t0, y0, &f0, &scale)?;
        stats.rhs_evals += fd.evaluations();
        stats.jacobians += 1;

        Ok(Bdf {
            n,
            t: t0,
            t_bound,
            rtol,
            atol,
            max_step,
            h_abs,
            newton_tol: (10.0 * f64::EPSILON / rtol).max(0.03f64.min(rtol.sqrt())),
            diffs,
            order: 1,
            n_equal_steps: 0,
            jac,
            lu: None,
            fd,
            gamma,
            alpha,
            error_const,
            stats,
        })
    }

    pub fn stats(&self) -> &IntegrationStats {
        &self.stats
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn y(&self) -> &[f64] {
        &self.diffs[0]
    }

    /// Step through all output times, returning the interpolated states.
    pub fn run<S: OdeSystem>(&mut self, system: &mut S, times: &[f64]) -> Result<Vec<Vec<f64>>> {
        let mut out = Vec::with_capacity(times.len());
        let mut next = 0;
        while next < times.len() && times[next] <= self.t {
            out.push(self.diffs[0].clone());
            next += 1;
        }
        while next < times.len() {
            self.step(system)?;
            system.check_state(self.t, &self.diffs[0])?;
            while next < times.len() && times[next] <= self.t {
                out.push(self.dense(times[next]));
                next += 1;
            }
        }
        Ok(out)
    }

    fn dense(&self, t: f64) -> Vec<f64> {
        if t == self.t {
            return self.diffs[0].clone();
        }
        let h = self.h_abs;
        let mut y = self.diffs[0].clone();
        let mut p = 1.0;
        for i in 0..self.order {
            let shift = self.t - h * i as f64;
            let denom = h * (i as f64 + 1.0);
            p *= (t - shift) / denom;
            for (yc, d) in y.iter_mut().zip(&self.diffs[i + 1]) {
                *yc += d * p;
            }
        }
        y
    }

    fn factorize(&mut self, c: f64) -> Lu {
        self.stats.factorizations += 1;
        let mut m = -c * &self.jac;
        for i in 0..self.n {
            m[(i, i)] += 1.0;
        }
        m.lu()
    }

    #[allow(clippy::too_many_arguments)]
    fn newton<S: OdeSystem>(
        &mut self,
        system: &mut S,
        lu: &Lu,
        t_new: f64,
        y_predict: &[f64],
        c: f64,
        psi: &[f64],
        scale: &[f64],
    ) -> (bool, usize, Vec<f64>, Vec<f64>) {
        let n = self.n;
        let mut y = y_predict.to_vec();
        let mut d = vec![0.0; n];
        let mut f = vec![0.0; n];
        let mut dy_norm_old: Option<f64> = None;
        let mut converged = false;
        let mut k = 0;
        while k < NEWTON_MAXITER {
            self.stats.rhs_evals += 1;
            if system.rhs(t_new, &y, &mut f).is_err() || f.iter().any(|v| !v.is_finite()) {
                break;
            }
            let rhs = nalgebra::DVector::from_iterator(n, (0..n).map(|i| c * f[i] - psi[i] - d[i]));
            let dy = match lu.solve(&rhs) {
                Some(v) => v,
                None => break,
            };
            let dy_norm = rms(dy.iter().zip(scale).map(|(a, s)| a / s), n);
            let rate = dy_norm_old.map(|old| dy_norm / old);
            if let Some(rate) = rate {
                if rate >= 1.0
                    || rate.powi((NEWTON_MAXITER - k) as i32) / (1.0 - rate) * dy_norm > self.newton_tol
                {
                    break;
                }
            }
            for i in 0..n {
                y[i] += dy[i];
                d[i] += dy[i];
            }
            if dy_norm == 0.0 || rate.is_some_and(|r| r / (1.0 - r) * dy_norm < self.newton_tol) {
                converged = true;
                break;
            }
            dy_norm_old = Some(dy_norm);
            k += 1;
        }
        (converged, k + 1, y, d)
    }

    fn refresh_jacobian<S: OdeSystem>(&mut self, system: &mut S, t: f64, y: &[f64]) -> Result<()> {
        let mut f = vec![0.0; self.n];
        system.rhs(t, y, &mut f)?;
        let scale: Vec<f64> = y.iter().map(|v| self.atol + self.rtol * v.abs()).collect();
        self.jac = self.fd.eval(system, t, y, &f, &scale)?;
        self.stats.rhs_evals += 1 + self.fd.evaluations();
        self.stats.jacobians += 1;
        Ok(())
    }

    fn step<S: OdeSystem>(&mut self, system: &mut S) -> Result<()> {
        let t = self.t;
        let min_step = 10.0 * (next_up(t) - t).abs();
        let mut h_abs = if self.h_abs > self.max_step {
            change_diffs(&mut self.diffs, self.order, self.max_step / self.h_abs);
            self.n_equal_steps = 0;
            self.lu = None;
            self.max_step
        } else if self.h_abs < min_step {
            change_diffs(&mut self.diffs, self.order, min_step / self.h_abs);
            self.n_equal_steps = 0;
            self.lu = None;
            min_step
        } else {
            self.h_abs
        };

        let order = self.order;
        let n = self.n;
        let mut current_jac = false;
        let mut lu = self.lu.take();

        let (t_new, y_new, d, n_iter, error_norm_accepted, scale_new) = loop {
            if h_abs < min_step {
                return Err(Error::StepCollapse { t_hr: t / 3600.0 });
            }
            let mut t_new = t + h_abs;
            if t_new > self.t_bound {
                t_new = self.t_bound;
                change_diffs(&mut self.diffs, order, (t_new - t).abs() / h_abs);
                self.n_equal_steps = 0;
                lu = None;
            }
            let h = t_new - t;
            h_abs = h.abs();

            let mut y_predict = vec![0.0; n];
            for row in &self.diffs[..=order] {
                for (p, v) in y_predict.iter_mut().zip(row) {
                    *p += v;
                }
            }
            let scale: Vec<f64> = y_predict.iter().map(|v| self.atol + self.rtol * v.abs()).collect();
            let mut psi = vec![0.0; n];
            for i in 1..=order {
                let g = self.gamma[i];
                for (p, v) in psi.iter_mut().zip(&self.diffs[i]) {
                    *p += v * g;
                }
            }
            psi.iter_mut().for_each(|p| *p /= self.alpha[order]);

            let c = h / self.alpha[order];
            let mut result;
            loop {
                let lu_ref = match &lu {
                    Some(l) => l,
                    None => {
                        lu = Some(self.factorize(c));
                        lu.as_ref().unwrap()
                    }
                };
                let lu_owned = lu_ref.clone();
                result = self.newton(system, &lu_owned, t_new, &y_predict, c, &psi, &scale);
                if result.0 || current_jac {
                    break;
                }
                if self.refresh_jacobian(system, t_new, &y_predict).is_err() {
                    break;
                }
                lu = None;
                current_jac = true;
            }
            let (converged, n_iter, y_new, d) = result;

            if !converged {
                let factor = 0.5;
                h_abs *= factor;
                change_diffs(&mut self.diffs, order, factor);
                self.n_equal_steps = 0;
                lu = None;
                self.stats.rejected += 1;
                continue;
            }

            let safety = 0.9 * (2 * NEWTON_MAXITER + 1) as f64 / (2 * NEWTON_MAXITER + n_iter) as f64;
            let scale_new: Vec<f64> = y_new.iter().map(|v| self.atol + self.rtol * v.abs()).collect();
            let ec = self.error_const[order];
            let error_norm = rms(d.iter().zip(&scale_new).map(|(e, s)| ec * e / s), n);
            if error_norm > 1.0 {
                let factor = MIN_FACTOR.max(safety * error_norm.powf(-1.0 / (order as f64 + 1.0)));
                h_abs *= factor;
                change_diffs(&mut self.diffs, order, factor);
                self.n_equal_steps = 0;
                self.stats.rejected += 1;
                continue;
            }
            break (t_new, y_new, d, n_iter, error_norm, scale_new);
        };

        self.stats.steps += 1;
        self.n_equal_steps += 1;
        self.t = t_new;
        self.h_abs = h_abs;
        self.lu = lu;

        // D^{j+1} y_n = D^j y_n - D^j y_{n-1}, with d = D^{k+1} y_n
        let dk1: Vec<f64> = d.iter().zip(&self.diffs[order + 1]).map(|(a, b)| a - b).collect();
        self.diffs[order + 2] = dk1;
        self.diffs[order + 1] = d;
        for i in (0..=order).rev() {
            let (lo, hi) = self.diffs.split_at_mut(i + 1);
            for (a, b) in lo[i].iter_mut().zip(&hi[0]) {
                *a += b;
            }
        }
        debug_assert!(self.diffs[0].iter().zip(&y_new).all(|(a, b)| (a - b).abs() <= 1e-9 * (1.0 + b.abs())));

        if self.n_equal_steps < order + 1 {
            return Ok(());
        }

        let safety = 0.9 * (2 * NEWTON_MAXITER + 1) as f64 / (2 * NEWTON_MAXITER + n_iter) as f64;
        let err_m = if order > 1 {
            let ec = self.error_const[order - 1];
            rms(self.diffs[order].iter().zip(&scale_new).map(|(e, s)| ec * e / s), n)
        } else {
            f64::INFINITY
        };
        let err_p = if order < MAX_ORDER {
            let ec = self.error_const[order + 1];
            rms(self.diffs[order + 2].iter().zip(&scale_new).map(|(e, s)| ec * e / s), n)
        } else {
            f64::INFINITY
        };
        let norms = [err_m, error_norm_accepted, err_p];
        let mut best = 0;
        let mut best_factor = f64::NEG_INFINITY;
        for (i, &e) in norms.iter().enumerate() {
            let f = if e == 0.0 { f64::INFINITY } else { e.powf(-1.0 / (order + i) as f64) };
            if f > best_factor {
                best_factor = f;
                best = i;
            }
        }
        let new_order = order + best - 1;
        self.order = new_order;
        let factor = MAX_FACTOR.min(safety * best_factor);
        self.h_abs *= factor;
        change_diffs(&mut self.diffs, new_order, factor);
        self.n_equal_steps = 0;
        self.lu = None;
        Ok(())
    }
}

fn next_up(t: f64) -> f64 {
    if t.is_nan() || t == f64::INFINITY {
        return t;
    }
    if t == 0.0 {
        return f64::from_bits(1);
    }
    let bits = t.to_bits();
    if t > 0.0 {
        f64::from_bits(bits + 1)
    } else {
        f64::from_bits(bits - 1)
    }
}

#[allow(clippy::too_many_arguments)]
fn initial_step<S: OdeSystem>(
    system: &mut S,
    t0: f64,
    y0: &[f64],
    f0: &[f64],
    t_bound: f64,
    max_step: f64,
    rtol: f64,
    atol: f64,
    stats: &mut IntegrationStats,
) -> Result<f64> {
    let n = y0.len();
    let interval = (t_bound - t0).abs();
    if n == 0 || interval == 0.0 {
        return Ok(interval.max(1e-6));
    }
    let scale: Vec<f64> = y0.iter().map(|y| atol + y.abs() * rtol).collect();
    let d0 = rms(y0.iter().zip(&scale).map(|(y, s)| y / s), n);
    let d1 = rms(f0.iter().zip(&scale).map(|(f, s)| f / s), n);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 }.min(interval);
    let y1: Vec<f64> = y0.iter().zip(f0).map(|(y, f)| y + h0 * f).collect();
    let mut f1 = vec![0.0; n];
    system.rhs(t0 + h0, &y1, &mut f1)?;
    stats.rhs_evals += 1;
    let d2 = rms(f1.iter().zip(f0).zip(&scale).map(|((a, b), s)| (a - b) / s), n) / h0;
    let h1 = if d1 <= 1e-15 && d2 <= 1e-15 {
        1e-6f64.max(h0 * 1e-3)
    } else {
        (0.01 / d1.max(d2)).powf(0.5)
    };
    Ok((100.0 * h0).min(h1).min(interval).min(max_step))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn difference_rescaling_preserves_polynomial() {
        // y(t) = t^2 sampled at t = 0, -1, -2 with step 1; rescale to step 0.5
        let mut diffs = vec![vec![0.0]; MAX_ORDER + 3];
        // backward differences of t^2 at t = 0 with h = 1: 0, 0 - 1 = -1, 0 - 2*1 + 4 = 2
        diffs[0][0] = 0.0;
        diffs[1][0] = -1.0;
        diffs[2][0] = 2.0;
        change_diffs(&mut diffs, 2, 0.5);
        // with h = 0.5: y(0) = 0, y(-0.5) = 0.25, y(-1) = 1
        assert!((diffs[0][0] - 0.0).abs() < 1e-14);
        assert!((diffs[1][0] - (0.0 - 0.25)).abs() < 1e-14);
        assert!((diffs[2][0] - (0.0 - 2.0 * 0.25 + 1.0)).abs() < 1e-14);
    }

    #[test]
    fn next_up_is_adjacent() {
        assert!(next_up(1.0) > 1.0);
        assert_eq!(next_up(1.0) - 1.0, f64::EPSILON);
    }
}
