//! Chebyshev collocation for a single pipe.
//!
//! Partial densities are collocated at `x_i = (l/2)(1 - cos(i pi / N))`.
//! The inlet density is pinned to the slack values and the outlet flux to
//! the withdrawal. Away from the outlet the momentum balance
//! `D p = -lambda phi |phi| / (2 d rho)` is solved pointwise for the flux.

use log::warn;
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::gas::GasPair;
use crate::scenario::{BoundarySchedule, BoundaryValues, Scenario};
use crate::timeint::OdeSystem;

/// Collocation nodes and differentiation matrix on `[0, l]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChebGrid {
    pub order: usize,
    /// Node positions, m.
    pub x: Vec<f64>,
    /// `(N + 1) x (N + 1)` differentiation matrix, 1/m.
    pub d: DMatrix<f64>,
}

/// Differentiation matrix by barycentric interpolation on the shifted
/// Chebyshev–Gauss–Lobatto nodes, with the diagonal set by the
/// negative-sum rule so that constants are annihilated.
pub fn cheb_diff_matrix(order: usize, length_m: f64) -> Result<ChebGrid> {
    if order < 2 {
        return Err(Error::Config(format!("Chebyshev order must be at least 2, got {order}")));
    }
    if !(length_m > 0.0) {
        return Err(Error::Config(format!("pipe length must be positive, got {length_m}")));
    }
    let n = order;
    let h = std::f64::consts::PI / (2.0 * n as f64);
    let x: Vec<f64> = (0..=n).map(|i| length_m * (h * i as f64).sin().powi(2)).collect();
    let weight = |i: usize| {
        let s = if i % 2 == 0 { 1.0 } else { -1.0 };
        if i == 0 || i == n {
            0.5 * s
        } else {
            s
        }
    };
    let mut d = DMatrix::zeros(n + 1, n + 1);
    for i in 0..=n {
        let mut diag = 0.0;
        for j in 0..=n {
            if i == j {
                continue;
            }
            // x_i - x_j written without cancellation
            let dx = length_m * (h * (i + j) as f64).sin() * (h * (i as f64 - j as f64)).sin();
            let v = weight(j) / weight(i) / dx;
            d[(i, j)] = v;
            diag -= v;
        }
        d[(i, i)] = diag;
    }
    Ok(ChebGrid { order, x, d })
}

/// Single-pipe spectral model built from a scenario.
#[derive(Debug, Clone)]
pub struct SpectralModel {
    grid: ChebGrid,
    gas: GasPair,
    schedule: BoundarySchedule,
    diameter: f64,
    friction: f64,
    area: f64,
}

impl SpectralModel {
    pub fn from_scenario(s: &Scenario) -> Result<Self> {
        let g = s.graph();
        if g.n_edges() != 1 || g.n_slack() != 1 || g.n_free() != 1 || g.n_injection() != 0 {
            return Err(Error::SpectralNetwork);
        }
        let e = &g.edges()[0];
        Ok(SpectralModel {
            grid: cheb_diff_matrix(s.simulation().chebyshev_order, e.length_m())?,
            gas: *s.gas(),
            schedule: s.schedule().clone(),
            diameter: e.diameter_m,
            friction: e.friction,
            area: e.area(),
        })
    }

    pub fn grid(&self) -> &ChebGrid {
        &self.grid
    }

    pub fn gas(&self) -> &GasPair {
        &self.gas
    }

    pub fn area(&self) -> f64 {
        self.area
    }

    pub fn order(&self) -> usize {
        self.grid.order
    }

    pub fn boundary(&self, t_hr: f64) -> BoundaryValues {
        self.schedule.at(t_hr)
    }

    /// Partial densities at all `N + 1` nodes with the inlet pinned.
    pub fn full_partials(&self, b: &BoundaryValues, y: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = self.grid.order;
        let alpha = b.slack_h2[0];
        let (s1, s2) = self.gas.partials_from_pressure(b.slack_pressure[0], alpha);
        let mut r1 = Vec::with_capacity(n + 1);
        let mut r2 = Vec::with_capacity(n + 1);
        r1.push(s1);
        r2.push(s2);
        r1.extend_from_slice(&y[..n]);
        r2.extend_from_slice(&y[n..]);
        (r1, r2)
    }

    /// Nodal fluxes for given nodal partial densities.
    pub fn fluxes(&self, b: &BoundaryValues, r1: &[f64], r2: &[f64]) -> Result<Vec<f64>> {
        let n = self.grid.order;
        let p = DVector::from_iterator(n + 1, r1.iter().zip(r2).map(|(a, c)| self.gas.pressure(*a, *c)));
        let dp = &self.grid.d * &p;
        let mut phi = Vec::with_capacity(n + 1);
        for i in 0..n {
            let rho = r1[i] + r2[i];
            if !(rho > 0.0) {
                return Err(Error::NonPositiveDensity { node: i, value: rho });
            }
            let g = dp[i];
            let f = -g.signum() * (2.0 * self.diameter * rho * g.abs() / self.friction).sqrt();
            if !f.is_finite() {
                return Err(Error::FluxSolve(i));
            }
            phi.push(f);
        }
        phi.push(b.outflow[0] / self.area);
        Ok(phi)
    }

    /// Time derivative of the interior partial densities `[rho1_1..N; rho2_1..N]`.
    pub fn rhs(&self, b: &BoundaryValues, y: &[f64], dy: &mut [f64]) -> Result<()> {
        let n = self.grid.order;
        if y.len() != 2 * n {
            return Err(Error::Dimension { expected: 2 * n, got: y.len() });
        }
        let (r1, r2) = self.full_partials(b, y);
        let phi = self.fluxes(b, &r1, &r2)?;
        let rho_n = r1[n] + r2[n];
        if !(rho_n > 0.0) {
            return Err(Error::NonPositiveDensity { node: n, value: rho_n });
        }
        let m1 = DVector::from_iterator(n + 1, (0..=n).map(|i| r1[i] / (r1[i] + r2[i]) * phi[i]));
        let m2 = DVector::from_iterator(n + 1, (0..=n).map(|i| r2[i] / (r1[i] + r2[i]) * phi[i]));
        let d1 = &self.grid.d * m1;
        let d2 = &self.grid.d * m2;
        for i in 0..n {
            dy[i] = -d1[i + 1];
            dy[n + i] = -d2[i + 1];
        }
        Ok(())
    }

    /// Steady state for the given boundary values: uniform composition,
    /// uniform flux, and pressures from Newton on the collocated momentum
    /// balance. Returns the interior state vector.
    pub fn steady_state(&self, b: &BoundaryValues) -> Result<Vec<f64>> {
        let n = self.grid.order;
        let alpha = b.slack_h2[0];
        let c2 = self.gas.wave_speed_sq(alpha);
        let ps = b.slack_pressure[0];
        let phi = b.outflow[0] / self.area;
        let k = self.friction * phi * phi * c2 / (2.0 * self.diameter);
        let d = &self.grid.d;

        // the exact continuous profile is an excellent starting point
        let mut p: Vec<f64> = self
            .grid
            .x
            .iter()
            .map(|&x| {
                let v = ps * ps - 2.0 * k * x;
                if v <= 0.0 {
                    f64::NAN
                } else {
                    v.sqrt()
                }
            })
            .collect();
        if p.iter().any(|v| v.is_nan()) {
            return Err(Error::InfeasibleDemand(format!(
                "outflow flux {phi} kg/m^2/s exhausts the inlet pressure"
            )));
        }

        let residual = |p: &[f64]| -> DVector<f64> {
            DVector::from_iterator(
                n,
                (0..n).map(|i| (0..=n).map(|j| d[(i, j)] * p[j]).sum::<f64>() + k / p[i]),
            )
        };
        let mut r = residual(&p);
        let mut iterations = 0;
        let tol = 1e-11 * ps / self.grid.x[n];
        while r.amax() > tol && iterations < 50 {
            iterations += 1;
            let mut jac = DMatrix::zeros(n, n);
            for i in 0..n {
                for j in 1..=n {
                    jac[(i, j - 1)] = d[(i, j)];
                }
                if i > 0 {
                    jac[(i, i - 1)] -= k / (p[i] * p[i]);
                }
            }
            let step = jac
                .lu()
                .solve(&(-&r))
                .ok_or(Error::SteadyState { iterations, residual: r.amax() })?;
            for j in 1..=n {
                p[j] += step[j - 1];
            }
            if p.iter().any(|v| !(*v > 0.0)) {
                return Err(Error::InfeasibleDemand("spectral steady pressure became nonpositive".into()));
            }
            r = residual(&p);
        }
        let mut y = vec![0.0; 2 * n];
        for i in 1..=n {
            let (a, c) = self.gas.partials_from_pressure(p[i], alpha);
            y[i - 1] = a;
            y[n + i - 1] = c;
        }
        let mut dy = vec![0.0; 2 * n];
        self.rhs(b, &y, &mut dy)?;
        let res = dy.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if res > 1e-9 {
            return Err(Error::SteadyState { iterations, residual: res });
        }
        Ok(y)
    }
}

/// Collocation does not preserve positivity of a constituent when its inlet
/// fraction touches zero. Undershoots beyond this share of the total density
/// are reported once per run; only a nonpositive total density stops it.
pub const UNDERSHOOT_TOLERANCE: f64 = 1e-2;

/// The spectral ODE system with time in seconds.
pub struct SpectralSystem<'a> {
    model: &'a SpectralModel,
    warned: bool,
}

impl<'a> SpectralSystem<'a> {
    pub fn new(model: &'a SpectralModel) -> Self {
        SpectralSystem { model, warned: false }
    }
}

impl OdeSystem for SpectralSystem<'_> {
    fn dim(&self) -> usize {
        2 * self.model.grid.order
    }

    fn rhs(&mut self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        let b = self.model.boundary(t / 3600.0);
        self.model.rhs(&b, y, dy)
    }

    fn check_state(&mut self, t: f64, y: &[f64]) -> Result<()> {
        let n = self.model.grid.order;
        for i in 0..n {
            let (a, c) = (y[i], y[n + i]);
            if !(a + c > 0.0) {
                return Err(Error::Positivity {
                    t_hr: t / 3600.0,
                    detail: format!("collocation node {} has partial densities ({a}, {c})", i + 1),
                });
            }
            let floor = -UNDERSHOOT_TOLERANCE * (a + c);
            if !self.warned && (a < floor || c < floor) {
                self.warned = true;
                warn!("collocation node {} undershoots to ({a}, {c}) at t = {} hr", i + 1, t / 3600.0);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{PipeTemplate, Profile, SimulationSpec, SolverKind};

    /// Differentiation matrix from the explicit product formula for
    /// Lagrange basis derivatives.
    fn lagrange_matrix(x: &[f64]) -> DMatrix<f64> {
        let n = x.len();
        let mut d = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    d[(i, i)] = (0..n).filter(|&m| m != i).map(|m| 1.0 / (x[i] - x[m])).sum();
                } else {
                    let num: f64 = (0..n).filter(|&m| m != i && m != j).map(|m| x[i] - x[m]).product();
                    let den: f64 = (0..n).filter(|&m| m != j).map(|m| x[j] - x[m]).product();
                    d[(i, j)] = num / den;
                }
            }
        }
        d
    }

    #[test]
    fn grid_endpoints_and_order() {
        let g = cheb_diff_matrix(10, 50e3).unwrap();
        assert_eq!(g.x[0], 0.0);
        assert!((g.x[10] - 50e3).abs() < 1e-9);
        assert!(g.x.windows(2).all(|w| w[1] > w[0]));
        assert!(cheb_diff_matrix(1, 1.0).is_err());
    }

    #[test]
    fn differentiates_polynomials() {
        let g = cheb_diff_matrix(8, 1.0).unwrap();
        let ones = DVector::from_element(9, 1.0);
        assert!((&g.d * ones).amax() <= 1e-10 * g.d.amax());
        let x = DVector::from_column_slice(&g.x);
        assert!((&g.d * &x).add_scalar(-1.0).amax() < 1e-10);
        let cube = x.map(|v| v * v * v);
        let want = x.map(|v| 3.0 * v * v);
        assert!((&g.d * cube - want).amax() < 1e-8);
    }

    #[test]
    fn matches_product_formula() {
        let g = cheb_diff_matrix(12, 2.0).unwrap();
        let d = lagrange_matrix(&g.x);
        assert!((&g.d - d).amax() < 1e-8 * g.d.amax());
    }

    fn template(alpha: Profile, phi: f64) -> PipeTemplate {
        let mut sim = SimulationSpec::new(10.0);
        sim.solver = SolverKind::Spectral;
        sim.chebyshev_order = 24;
        PipeTemplate {
            length_km: 50.0,
            diameter_m: 0.5,
            friction: 0.11,
            sigma1: 338.38,
            sigma2: 4.0 * 338.38,
            inlet_pressure_mpa: 7.0,
            inlet_h2: alpha,
            outflow_flux: phi,
            simulation: sim,
        }
    }

    #[test]
    fn steady_state_is_stationary_with_uniform_flux() {
        let m = SpectralModel::from_scenario(&template(Profile::Constant(0.2), 75.0).scenario().unwrap()).unwrap();
        let b = m.boundary(0.0);
        let y = m.steady_state(&b).unwrap();
        let (r1, r2) = m.full_partials(&b, &y);
        let phi = m.fluxes(&b, &r1, &r2).unwrap();
        for f in &phi {
            assert!((f - 75.0).abs() < 1e-6 * 75.0, "{f}");
        }
        // agrees with the closed-form pipe law at the outlet
        let c2 = m.gas().wave_speed_sq(0.2);
        let want = (49e12 - 0.11 * c2 * 75.0f64.powi(2) * 50e3 / 0.5).sqrt();
        let p_out = m.gas().pressure(r1[24], r2[24]);
        assert!((p_out - want).abs() < 1e-8 * want);
    }

    #[test]
    fn rejects_networks() {
        let mut t = template(Profile::Constant(0.2), 75.0);
        t.simulation.solver = SolverKind::Fv;
        let mut spec = t.spec();
        spec.nodes.push(crate::scenario::NodeSpec { id: "x".into(), role: crate::network::NodeRole::Withdrawal });
        spec.pipes.push(crate::network::Pipe::new("q", "out", "x", 5.0, 0.5, 0.1));
        spec.boundaries.insert(
            "x".into(),
            crate::scenario::BoundarySpec { outflow_kg_s: Some(Profile::Constant(1.0)), ..Default::default() },
        );
        let s = Scenario::new(spec).unwrap();
        assert!(matches!(SpectralModel::from_scenario(&s), Err(Error::SpectralNetwork)));
    }
}
