use super::{IntegrationStats, OdeSystem};
use crate::error::{Error, Result};

/// Classical fourth-order Runge-Kutta with step at most `h`, shortened so
/// that every output time is hit exactly.
pub fn run<S: OdeSystem>(
    system: &mut S,
    t0: f64,
    y0: &[f64],
    output_times: &[f64],
    h: f64,
) -> Result<(Vec<Vec<f64>>, IntegrationStats)> {
    let n = y0.len();
    let mut stats = IntegrationStats::default();
    let mut t = t0;
    let mut y = y0.to_vec();
    let mut out = Vec::with_capacity(output_times.len());
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut tmp = vec![0.0; n];

    for &target in output_times {
        let span = target - t;
        if span > 0.0 {
            let m = (span / h).ceil().max(1.0) as usize;
            let dt = span / m as f64;
            for s in 0..m {
                system.rhs(t, &y, &mut k1)?;
                axpy(&mut tmp, &y, 0.5 * dt, &k1);
                system.rhs(t + 0.5 * dt, &tmp, &mut k2)?;
                axpy(&mut tmp, &y, 0.5 * dt, &k2);
                system.rhs(t + 0.5 * dt, &tmp, &mut k3)?;
                axpy(&mut tmp, &y, dt, &k3);
                system.rhs(t + dt, &tmp, &mut k4)?;
                for i in 0..n {
                    y[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                }
                stats.rhs_evals += 4;
                stats.steps += 1;
                t = if s + 1 == m { target } else { t + dt };
                if y.iter().any(|v| !v.is_finite()) {
                    return Err(Error::StepCollapse { t_hr: t / 3600.0 });
                }
                system.check_state(t, &y)?;
            }
        }
        out.push(y.clone());
    }
    Ok((out, stats))
}

fn axpy(dst: &mut [f64], y: &[f64], a: f64, k: &[f64]) {
    for ((d, yi), ki) in dst.iter_mut().zip(y).zip(k) {
        *d = yi + a * ki;
    }
}
