//! Finite-volume discretization on a refined network.
//!
//! The state is the pair of partial-density vectors over the non-slack
//! nodes. Each refined edge `k: i -> j` carries the flux
//! `F_k = f(mu_out rho_j, mu_out p_j - mu_in p_i)` and transports the
//! composition of its inlet node, or of its outlet node while the flux is
//! negative.

use log::warn;
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::gas::GasPair;
use crate::network::{ControlValues, IncidenceSet, NetworkGraph};
use crate::scenario::{BoundarySchedule, BoundaryValues, Scenario};
use crate::timeint::{FdJacobian, OdeSystem};

/// Relative density jump across an edge above which a warning is logged.
pub const DENSITY_JUMP_WARNING: f64 = 0.05;

/// Half-width, in Pa, of the band around zero pressure difference where the
/// flux closure is replaced by a smooth odd cubic.
pub const FLUX_SMOOTHING_PA: f64 = 100.0;

/// Flux closure `-sign(z) lambda sqrt(|y z|)`.
///
/// The square root has an unbounded slope at `z = 0`, which stalls implicit
/// integration whenever an edge's flow reverses. For `|z| < FLUX_SMOOTHING_PA`
/// the closure follows the cubic `(5s - s^3)/4` in `s = z / FLUX_SMOOTHING_PA`,
/// which matches value and slope at the band edge.
#[inline]
pub fn flux(y: f64, z: f64, lambda: f64) -> f64 {
    let d = FLUX_SMOOTHING_PA;
    if z.abs() >= d {
        return -z.signum() * lambda * (y * z).abs().sqrt();
    }
    let s = z / d;
    -lambda * (y.abs() * d).sqrt() * 0.25 * s * (5.0 - s * s)
}

/// Vectorized flux closure with argument checks.
pub fn flux_closure(y: &[f64], z: &[f64], lambda: &[f64]) -> Result<Vec<f64>> {
    if z.len() != y.len() || lambda.len() != y.len() {
        return Err(Error::Dimension { expected: y.len(), got: z.len().min(lambda.len()) });
    }
    y.iter()
        .zip(z)
        .zip(lambda)
        .enumerate()
        .map(|(k, ((&y, &z), &l))| {
            if !(y > 0.0) {
                return Err(Error::NonPositiveFluxArgument { edge: k, value: y });
            }
            let f = flux(y, z, l);
            if f.is_finite() {
                Ok(f)
            } else {
                Err(Error::NonFiniteFlux { edge: k })
            }
        })
        .collect()
}

#[derive(Debug, Clone)]
struct EdgeData {
    from: usize,
    to: usize,
    area: f64,
    length: f64,
    coeff: f64,
    pipe: usize,
    compressor: bool,
    regulator: bool,
}

impl EdgeData {
    #[inline]
    fn mu_in(&self, c: &ControlValues) -> f64 {
        if self.compressor {
            c.compressor[self.pipe]
        } else {
            1.0
        }
    }

    #[inline]
    fn mu_out(&self, c: &ControlValues) -> f64 {
        if self.regulator {
            c.regulator[self.pipe]
        } else {
            1.0
        }
    }
}

/// Inlet conditions seen by an edge: pressure and composition.
#[derive(Clone, Copy)]
struct Inlet {
    p: f64,
    eta2: f64,
    /// `p / rho` at the inlet, equal to the local wave speed squared.
    c2: f64,
}

/// A refined network with its gas and boundary schedule.
#[derive(Debug, Clone)]
pub struct FvModel {
    graph: NetworkGraph,
    gas: GasPair,
    schedule: BoundarySchedule,
    edges: Vec<EdgeData>,
    n_slack: usize,
    n_free: usize,
    /// Incoming edges of each non-slack node.
    incoming: Vec<Vec<usize>>,
}

/// Steady solution on the refined network.
#[derive(Debug, Clone, PartialEq)]
pub struct SteadyState {
    pub rho1: Vec<f64>,
    pub rho2: Vec<f64>,
    /// Edge fluxes, kg/m^2/s.
    pub flux: Vec<f64>,
    /// Infinity norm of the partial density time derivative, kg/m^3/s.
    pub residual: f64,
    pub iterations: usize,
}

impl SteadyState {
    /// State vector `[rho1; rho2]` as used by [`FvSystem`].
    pub fn state(&self) -> Vec<f64> {
        let mut y = self.rho1.clone();
        y.extend_from_slice(&self.rho2);
        y
    }
}

impl FvModel {
    /// Build from an already refined graph.
    pub fn new(graph: NetworkGraph, gas: GasPair, schedule: BoundarySchedule) -> Self {
        let n_slack = graph.n_slack();
        let n_free = graph.n_free();
        let edges: Vec<EdgeData> = graph
            .edges()
            .iter()
            .map(|e| EdgeData {
                from: e.from,
                to: e.to,
                area: e.area(),
                length: e.length_m(),
                coeff: e.flow_coefficient(),
                pipe: e.pipe,
                compressor: e.compressor,
                regulator: e.regulator,
            })
            .collect();
        let mut incoming = vec![Vec::new(); n_free];
        for (k, e) in edges.iter().enumerate() {
            incoming[e.to - n_slack].push(k);
        }
        FvModel { graph, gas, schedule, edges, n_slack, n_free, incoming }
    }

    pub fn from_scenario(s: &Scenario) -> Result<Self> {
        Ok(FvModel::new(s.refined_graph()?, *s.gas(), s.schedule().clone()))
    }

    pub fn graph(&self) -> &NetworkGraph {
        &self.graph
    }

    pub fn gas(&self) -> &GasPair {
        &self.gas
    }

    pub fn schedule(&self) -> &BoundarySchedule {
        &self.schedule
    }

    pub fn n_free(&self) -> usize {
        self.n_free
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    /// Boundary values at `t_hr` (not range checked).
    pub fn boundary(&self, t_hr: f64) -> BoundaryValues {
        self.schedule.at(t_hr)
    }

    /// Nodal capacities `r_j = sum over incoming edges of area * length * mu_out`.
    pub fn capacity(&self, controls: &ControlValues) -> Vec<f64> {
        let mut r = vec![0.0; self.n_free];
        for e in &self.edges {
            r[e.to - self.n_slack] += e.area * e.length * e.mu_out(controls);
        }
        r
    }

    fn check_dims(&self, a: &[f64], b: &[f64]) -> Result<()> {
        for v in [a, b] {
            if v.len() != self.n_free {
                return Err(Error::Dimension { expected: self.n_free, got: v.len() });
            }
        }
        Ok(())
    }

    fn slack_inlet(&self, b: &BoundaryValues, s: usize) -> Inlet {
        let eta2 = b.slack_h2[s];
        Inlet { p: b.slack_pressure[s], eta2, c2: self.gas.wave_speed_sq(eta2) }
    }

    /// Per-edge fluxes for a state in partial densities.
    pub fn edge_fluxes(&self, b: &BoundaryValues, rho1: &[f64], rho2: &[f64]) -> Result<Vec<f64>> {
        self.check_dims(rho1, rho2)?;
        let ns = self.n_slack;
        let g = &self.gas;
        let mut flux_out = Vec::with_capacity(self.edges.len());
        for (k, e) in self.edges.iter().enumerate() {
            let j = e.to - ns;
            let rho_j = rho1[j] + rho2[j];
            let p_j = g.pressure(rho1[j], rho2[j]);
            let p_i = if e.from < ns { b.slack_pressure[e.from] } else {
                let i = e.from - ns;
                g.pressure(rho1[i], rho2[i])
            };
            flux_out.push(self.edge_flux(k, e, &b.controls, rho_j, p_j, p_i)?);
        }
        Ok(flux_out)
    }

    #[inline]
    fn edge_flux(&self, k: usize, e: &EdgeData, c: &ControlValues, rho_j: f64, p_j: f64, p_i: f64) -> Result<f64> {
        let mu_out = e.mu_out(c);
        let y = mu_out * rho_j;
        if !(y > 0.0) {
            return Err(Error::NonPositiveFluxArgument { edge: k, value: y });
        }
        let f = flux(y, mu_out * p_j - e.mu_in(c) * p_i, e.coeff);
        if !f.is_finite() {
            return Err(Error::NonFiniteFlux { edge: k });
        }
        Ok(f)
    }

    /// Time derivative of the partial densities.
    pub fn rhs_partial_density(
        &self,
        b: &BoundaryValues,
        rho1: &[f64],
        rho2: &[f64],
        d1: &mut [f64],
        d2: &mut [f64],
    ) -> Result<()> {
        self.check_dims(rho1, rho2)?;
        let ns = self.n_slack;
        let g = &self.gas;
        for j in 0..self.n_free {
            let rho = rho1[j] + rho2[j];
            if !(rho > 0.0) {
                return Err(Error::NonPositiveDensity { node: j + ns, value: rho });
            }
        }
        d1.iter_mut().for_each(|v| *v = 0.0);
        d2.iter_mut().for_each(|v| *v = 0.0);
        for (k, e) in self.edges.iter().enumerate() {
            let j = e.to - ns;
            let rho_j = rho1[j] + rho2[j];
            let p_j = g.pressure(rho1[j], rho2[j]);
            let inlet = if e.from < ns {
                self.slack_inlet(b, e.from)
            } else {
                let i = e.from - ns;
                let rho_i = rho1[i] + rho2[i];
                Inlet { p: g.pressure(rho1[i], rho2[i]), eta2: rho2[i] / rho_i, c2: 0.0 }
            };
            let f = self.edge_flux(k, e, &b.controls, rho_j, p_j, inlet.p)?;
            let m = e.area * f;
            let eta2 = if f >= 0.0 { inlet.eta2 } else { rho2[j] / rho_j };
            let m2 = m * eta2;
            let m1 = m - m2;
            d1[j] += m1;
            d2[j] += m2;
            if e.from >= ns {
                d1[e.from - ns] -= m1;
                d2[e.from - ns] -= m2;
            }
        }
        let r = self.capacity(&b.controls);
        for j in 0..self.n_free {
            let rho = rho1[j] + rho2[j];
            let eta2 = rho2[j] / rho;
            let q = b.inflow.get(j).copied().unwrap_or(0.0);
            let beta = b.inflow_h2.get(j).copied().unwrap_or(0.0);
            let w = b.outflow.get(j).copied().unwrap_or(0.0);
            d1[j] = (d1[j] + (1.0 - beta) * q - (1.0 - eta2) * w) / r[j];
            d2[j] = (d2[j] + beta * q - eta2 * w) / r[j];
        }
        Ok(())
    }

    /// Time derivative of total density and pressure, computed directly in
    /// those variables.
    pub fn rhs_pressure_density(
        &self,
        b: &BoundaryValues,
        rho: &[f64],
        p: &[f64],
        drho: &mut [f64],
        dp: &mut [f64],
    ) -> Result<()> {
        self.check_dims(rho, p)?;
        let ns = self.n_slack;
        for j in 0..self.n_free {
            if !(rho[j] > 0.0) {
                return Err(Error::NonPositiveDensity { node: j + ns, value: rho[j] });
            }
        }
        drho.iter_mut().for_each(|v| *v = 0.0);
        dp.iter_mut().for_each(|v| *v = 0.0);
        for (k, e) in self.edges.iter().enumerate() {
            let j = e.to - ns;
            let (p_i, c2_i) = if e.from < ns {
                let inlet = self.slack_inlet(b, e.from);
                (inlet.p, inlet.c2)
            } else {
                let i = e.from - ns;
                (p[i], p[i] / rho[i])
            };
            let m = e.area * self.edge_flux(k, e, &b.controls, rho[j], p[j], p_i)?;
            let c2_i = if m >= 0.0 { c2_i } else { p[j] / rho[j] };
            drho[j] += m;
            dp[j] += m * c2_i;
            if e.from >= ns {
                drho[e.from - ns] -= m;
                dp[e.from - ns] -= m * c2_i;
            }
        }
        let r = self.capacity(&b.controls);
        for j in 0..self.n_free {
            let q = b.inflow.get(j).copied().unwrap_or(0.0);
            let b2 = self.gas.wave_speed_sq(b.inflow_h2.get(j).copied().unwrap_or(0.0));
            let w = b.outflow.get(j).copied().unwrap_or(0.0);
            drho[j] = (drho[j] + q - w) / r[j];
            dp[j] = (dp[j] + b2 * q - p[j] / rho[j] * w) / r[j];
        }
        Ok(())
    }

    /// Time derivative of pressure for a fixed nodal wave speed squared
    /// `c2`, valid when the composition is constant in time.
    pub fn rhs_isolated_pressure(&self, b: &BoundaryValues, p: &[f64], c2: &[f64], dp: &mut [f64]) -> Result<()> {
        self.check_dims(p, c2)?;
        let ns = self.n_slack;
        dp.iter_mut().for_each(|v| *v = 0.0);
        for (k, e) in self.edges.iter().enumerate() {
            let j = e.to - ns;
            let (p_i, c2_i) = if e.from < ns {
                let inlet = self.slack_inlet(b, e.from);
                (inlet.p, inlet.c2)
            } else {
                (p[e.from - ns], c2[e.from - ns])
            };
            let rho_j = p[j] / c2[j];
            let m = e.area * self.edge_flux(k, e, &b.controls, rho_j, p[j], p_i)?;
            let c2_i = if m >= 0.0 { c2_i } else { c2[j] };
            dp[j] += m * c2_i;
            if e.from >= ns {
                dp[e.from - ns] -= m * c2_i;
            }
        }
        let r = self.capacity(&b.controls);
        for j in 0..self.n_free {
            let q = b.inflow.get(j).copied().unwrap_or(0.0);
            let b2 = self.gas.wave_speed_sq(b.inflow_h2.get(j).copied().unwrap_or(0.0));
            let w = b.outflow.get(j).copied().unwrap_or(0.0);
            dp[j] = (dp[j] + b2 * q - c2[j] * w) / r[j];
        }
        Ok(())
    }

    /// Largest relative total-density jump across any edge.
    pub fn density_jump(&self, b: &BoundaryValues, rho1: &[f64], rho2: &[f64]) -> f64 {
        let ns = self.n_slack;
        let g = &self.gas;
        self.edges
            .iter()
            .map(|e| {
                let j = e.to - ns;
                let rho_j = rho1[j] + rho2[j];
                let rho_i = if e.from < ns {
                    b.slack_pressure[e.from] / g.wave_speed_sq(b.slack_h2[e.from])
                } else {
                    rho1[e.from - ns] + rho2[e.from - ns]
                };
                (rho_j - rho_i).abs() / rho_i
            })
            .fold(0.0, f64::max)
    }

    /// Rows of the `[rho1; rho2]` state touched by each state column.
    pub fn sparsity(&self) -> Vec<Vec<usize>> {
        let nd = self.n_free;
        let adj = self.graph.free_adjacency();
        let mut pattern = Vec::with_capacity(2 * nd);
        for _ in 0..2 {
            for (j, a) in adj.iter().enumerate() {
                let mut rows: Vec<usize> = std::iter::once(j).chain(a.iter().copied()).collect();
                rows.sort_unstable();
                rows.dedup();
                let both: Vec<usize> = rows.iter().copied().chain(rows.iter().map(|r| r + nd)).collect();
                pattern.push(both);
            }
        }
        pattern
    }

    /// Steady state for the given boundary values.
    pub fn steady_state(&self, b: &BoundaryValues) -> Result<SteadyState> {
        let nd = self.n_free;
        let ne = self.edges.len();
        if nd == 0 {
            return Ok(SteadyState { rho1: vec![], rho2: vec![], flux: vec![0.0; ne], residual: 0.0, iterations: 0 });
        }
        let mut eta = vec![b.slack_h2[0]; nd];
        let (mut p, mut f) = self.initial_guess(b, &eta)?;
        let mut iterations = 0;
        for _outer in 0..200 {
            iterations += self.newton_pressure_flux(b, &eta, &mut p, &mut f)?;
            let change = self.mix(b, &f, &mut eta);
            if change < 1e-15 {
                break;
            }
        }

        let g = &self.gas;
        let mut rho1 = vec![0.0; nd];
        let mut rho2 = vec![0.0; nd];
        for j in 0..nd {
            let (a, c) = g.partials_from_pressure(p[j], eta[j]);
            rho1[j] = a;
            rho2[j] = c;
        }
        let mut residual = self.residual_norm(b, &rho1, &rho2)?;
        if residual > 1e-9 {
            residual = self.polish(b, &mut rho1, &mut rho2, residual)?;
        }
        if residual > 1e-9 {
            return Err(Error::SteadyState { iterations, residual });
        }
        let flux = self.edge_fluxes(b, &rho1, &rho2)?;
        Ok(SteadyState { rho1, rho2, flux, residual, iterations })
    }

    fn residual_norm(&self, b: &BoundaryValues, rho1: &[f64], rho2: &[f64]) -> Result<f64> {
        let nd = self.n_free;
        let mut d1 = vec![0.0; nd];
        let mut d2 = vec![0.0; nd];
        self.rhs_partial_density(b, rho1, rho2, &mut d1, &mut d2)?;
        Ok(d1.iter().chain(&d2).fold(0.0, |m, v| m.max(v.abs())))
    }

    /// Linear flow split followed by a per-edge pressure march.
    fn initial_guess(&self, b: &BoundaryValues, eta: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let nd = self.n_free;
        let ns = self.n_slack;
        let mut lap = DMatrix::<f64>::zeros(nd, nd);
        let mut rhs = DVector::<f64>::zeros(nd);
        for j in 0..nd {
            rhs[j] = b.demand(j);
        }
        // sum_in G (theta_i - theta_j) - sum_out G (theta_j - theta_l) = d_j
        for e in &self.edges {
            let gk = e.area * e.coeff;
            let j = e.to - ns;
            lap[(j, j)] -= gk;
            if e.from >= ns {
                let i = e.from - ns;
                lap[(j, i)] += gk;
                lap[(i, i)] -= gk;
                lap[(i, j)] += gk;
            }
        }
        let theta = lap.lu().solve(&rhs).ok_or(Error::SteadyState { iterations: 0, residual: f64::NAN })?;
        let th = |n: usize| if n < ns { 0.0 } else { theta[n - ns] };
        let f: Vec<f64> = self.edges.iter().map(|e| e.coeff * (th(e.from) - th(e.to))).collect();

        let mut p = vec![f64::NAN; nd];
        let pressure_of = |n: usize, p: &[f64]| if n < ns { b.slack_pressure[n] } else { p[n - ns] };
        let mut remaining = nd;
        while remaining > 0 {
            let mut progressed = false;
            for (k, e) in self.edges.iter().enumerate() {
                let j = e.to - ns;
                let p_i = pressure_of(e.from, &p);
                if !p[j].is_nan() || p_i.is_nan() {
                    continue;
                }
                let mu_in = e.mu_in(&b.controls);
                let mu_out = e.mu_out(&b.controls);
                let c2 = self.gas.wave_speed_sq(eta[j]);
                let k2 = f[k] * f[k].abs() * c2 / (e.coeff * e.coeff);
                let disc = (mu_in * p_i).powi(2) - 4.0 * k2;
                p[j] = if disc > 0.0 { (mu_in * p_i + disc.sqrt()) / (2.0 * mu_out) } else { mu_in * p_i / (2.0 * mu_out) };
                remaining -= 1;
                progressed = true;
            }
            if !progressed {
                return Err(Error::InfeasibleDemand("some nodes cannot be reached along pipe directions".into()));
            }
        }
        Ok((p, f))
    }

    /// Damped Newton on nodal pressures and edge fluxes for fixed
    /// composition. Returns the number of iterations used.
    fn newton_pressure_flux(&self, b: &BoundaryValues, eta: &[f64], p: &mut [f64], f: &mut [f64]) -> Result<usize> {
        let nd = self.n_free;
        let ne = self.edges.len();
        let ns = self.n_slack;
        let n = nd + ne;
        let p_ref = b.slack_pressure.iter().fold(0.0f64, |m, v| m.max(*v));
        let flow_ref = (0..nd).map(|j| b.demand(j).abs()).sum::<f64>().max(1.0);
        let c2: Vec<f64> = eta.iter().map(|&e| self.gas.wave_speed_sq(e)).collect();

        let residual = |p: &[f64], f: &[f64]| -> DVector<f64> {
            let mut r = DVector::zeros(n);
            for (k, e) in self.edges.iter().enumerate() {
                let j = e.to - ns;
                let p_i = if e.from < ns { b.slack_pressure[e.from] } else { p[e.from - ns] };
                let mu_in = e.mu_in(&b.controls);
                let mu_out = e.mu_out(&b.controls);
                let drop = f[k] * f[k].abs() * c2[j] / (e.coeff * e.coeff * mu_out * p[j]);
                r[k] = (mu_out * p[j] - mu_in * p_i + drop) / p_ref;
                let m = e.area * f[k];
                r[ne + j] += m;
                if e.from >= ns {
                    r[ne + e.from - ns] -= m;
                }
            }
            for j in 0..nd {
                r[ne + j] = (r[ne + j] - b.demand(j)) / flow_ref;
            }
            r
        };
        let merit = |r: &DVector<f64>| r.norm();

        let f_scale = f.iter().fold(flow_ref / self.edges.iter().map(|e| e.area).fold(f64::INFINITY, f64::min), |m, v| m.max(v.abs()));
        let mut r = residual(p, f);
        let mut iters = 0;
        while r.amax() > 1e-13 && iters < 100 {
            iters += 1;
            let mut jac = DMatrix::<f64>::zeros(n, n);
            for (k, e) in self.edges.iter().enumerate() {
                let j = e.to - ns;
                let mu_in = e.mu_in(&b.controls);
                let mu_out = e.mu_out(&b.controls);
                let kk = c2[j] / (e.coeff * e.coeff * mu_out);
                let drop = f[k] * f[k].abs() * kk / p[j];
                jac[(k, ne + j)] = (mu_out - drop / p[j]) / p_ref;
                if e.from >= ns {
                    jac[(k, ne + e.from - ns)] = -mu_in / p_ref;
                }
                let d_f = (2.0 * f[k].abs()).max(1e-8 * f_scale) * kk / p[j];
                jac[(k, k)] = d_f / p_ref;
                jac[(ne + j, k)] += e.area / flow_ref;
                if e.from >= ns {
                    jac[(ne + e.from - ns, k)] -= e.area / flow_ref;
                }
            }
            // unknowns are ordered [fluxes; pressures]
            let step = jac.lu().solve(&(-&r)).ok_or(Error::SteadyState { iterations: iters, residual: r.amax() })?;
            let m0 = merit(&r);
            let mut lambda = 1.0;
            let mut accepted = false;
            for _ in 0..40 {
                let f_new: Vec<f64> = (0..ne).map(|k| f[k] + lambda * step[k]).collect();
                let p_new: Vec<f64> = (0..nd).map(|j| p[j] + lambda * step[ne + j]).collect();
                if p_new.iter().all(|v| *v > 0.0) {
                    let r_new = residual(&p_new, &f_new);
                    if merit(&r_new) < (1.0 - 1e-4 * lambda) * m0 || r_new.amax() <= 1e-13 {
                        f.copy_from_slice(&f_new);
                        p.copy_from_slice(&p_new);
                        r = r_new;
                        accepted = true;
                        break;
                    }
                }
                lambda *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        if r.amax() > 1e-8 {
            if p.iter().any(|v| *v <= 1e-3 * p_ref) || r.amax() > 1e-2 {
                return Err(Error::InfeasibleDemand(format!(
                    "no positive-pressure steady state (residual {:e})",
                    r.amax()
                )));
            }
            return Err(Error::SteadyState { iterations: iters, residual: r.amax() });
        }
        Ok(iters)
    }

    /// One pass of the nodal mixing rule; returns the largest change.
    fn mix(&self, b: &BoundaryValues, f: &[f64], eta: &mut [f64]) -> f64 {
        let ns = self.n_slack;
        let mut change = 0.0f64;
        // Gauss-Seidel sweeps until the composition settles along paths
        for _ in 0..=self.n_free {
            let mut sweep = 0.0f64;
            for j in 0..self.n_free {
                let q = b.inflow.get(j).copied().unwrap_or(0.0);
                let beta = b.inflow_h2.get(j).copied().unwrap_or(0.0);
                let mut mass = q;
                let mut h2 = beta * q;
                for &k in &self.incoming[j] {
                    let e = &self.edges[k];
                    let m = e.area * f[k].max(0.0);
                    let inlet = if e.from < ns { b.slack_h2[e.from] } else { eta[e.from - ns] };
                    mass += m;
                    h2 += m * inlet;
                }
                if mass > 0.0 {
                    let new = (h2 / mass).clamp(0.0, 1.0);
                    sweep = sweep.max((new - eta[j]).abs());
                    eta[j] = new;
                }
            }
            change = change.max(sweep);
            if sweep == 0.0 {
                break;
            }
        }
        change
    }

    /// Newton on the partial density residual with a finite-difference
    /// Jacobian.
    fn polish(&self, b: &BoundaryValues, rho1: &mut [f64], rho2: &mut [f64], mut residual: f64) -> Result<f64> {
        let nd = self.n_free;
        let mut sys = FrozenSystem { model: self, b: b.clone() };
        let fd = FdJacobian::new(2 * nd, Some(self.sparsity()));
        let mut y: Vec<f64> = rho1.iter().chain(rho2.iter()).copied().collect();
        for _ in 0..20 {
            if residual <= 1e-11 {
                break;
            }
            let mut f0 = vec![0.0; 2 * nd];
            sys.rhs(0.0, &y, &mut f0)?;
            let scale: Vec<f64> = y.iter().map(|v| 1e-8 * v.abs().max(1e-6)).collect();
            let jac = fd.eval(&mut sys, 0.0, &y, &f0, &scale)?;
            let Some(step) = jac.lu().solve(&DVector::from_column_slice(&f0)) else { break };
            let mut lambda = 1.0;
            let mut improved = false;
            for _ in 0..20 {
                let trial: Vec<f64> = y.iter().zip(step.iter()).map(|(a, s)| a - lambda * s).collect();
                let mut ft = vec![0.0; 2 * nd];
                if sys.rhs(0.0, &trial, &mut ft).is_ok() {
                    let r = ft.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                    if r < residual {
                        y = trial;
                        residual = r;
                        improved = true;
                        break;
                    }
                }
                lambda *= 0.5;
            }
            if !improved {
                break;
            }
        }
        rho1.copy_from_slice(&y[..nd]);
        rho2.copy_from_slice(&y[nd..]);
        Ok(residual)
    }
}

/// Partial density system with boundary values frozen in time.
struct FrozenSystem<'a> {
    model: &'a FvModel,
    b: BoundaryValues,
}

impl OdeSystem for FrozenSystem<'_> {
    fn dim(&self) -> usize {
        2 * self.model.n_free
    }

    fn rhs(&mut self, _t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        let nd = self.model.n_free;
        let (d1, d2) = dy.split_at_mut(nd);
        self.model.rhs_partial_density(&self.b, &y[..nd], &y[nd..], d1, d2)
    }

    fn sparsity(&self) -> Option<Vec<Vec<usize>>> {
        Some(self.model.sparsity())
    }
}

/// Matrix-form evaluation of the partial density right-hand side from an
/// assembled incidence set. Slower than [`FvModel::rhs_partial_density`];
/// used to cross-check it.
pub fn rhs_partial_density_matrix(
    inc: &IncidenceSet,
    gas: &GasPair,
    b: &BoundaryValues,
    rho1: &[f64],
    rho2: &[f64],
) -> Result<(DVector<f64>, DVector<f64>)> {
    let nd = inc.n_free();
    let r1 = DVector::from_column_slice(rho1);
    let r2 = DVector::from_column_slice(rho2);
    let rho = &r1 + &r2;
    let p = gas.sigma1_sq() * &r1 + gas.sigma2_sq() * &r2;
    let ps = DVector::from_column_slice(&b.slack_pressure);
    let alpha2 = DVector::from_column_slice(&b.slack_h2);
    let alpha1 = alpha2.map(|a| 1.0 - a);

    let y = &inc.m_d_plus * &rho;
    let z = &inc.m_s * &ps + &inc.m_d * &p;
    let f = DVector::from_vec(flux_closure(y.as_slice(), z.as_slice(), inc.flow_coeff.as_slice())?);

    let eta2 = r2.component_div(&rho);
    let eta1 = r1.component_div(&rho);
    let qs = inc.q_s_minus.abs();
    let qd = inc.q_d_minus.abs();
    let pad = |v: &[f64]| DVector::from_iterator(nd, (0..nd).map(|j| v.get(j).copied().unwrap_or(0.0)));
    let q = pad(&b.inflow);
    let w = pad(&b.outflow);
    let beta2 = pad(&b.inflow_h2);
    let beta1 = beta2.map(|v| 1.0 - v);

    let x = DMatrix::from_diagonal(&inc.area);
    let side = |alpha: &DVector<f64>, eta: &DVector<f64>, beta: &DVector<f64>| {
        let edge_conc = &qs * alpha + &qd * eta;
        let transport = inc.q_d.transpose() * (&x * edge_conc.component_mul(&f));
        let rhs = transport + beta.component_mul(&q) - eta.component_mul(&w);
        rhs.component_div(&inc.capacity)
    };
    Ok((side(&alpha1, &eta1, &beta1), side(&alpha2, &eta2, &beta2)))
}

/// The partial density ODE system of a scenario, with time in seconds.
pub struct FvSystem<'a> {
    model: &'a FvModel,
    max_jump: f64,
    warned: bool,
    reversed: bool,
}

impl<'a> FvSystem<'a> {
    pub fn new(model: &'a FvModel) -> Self {
        FvSystem { model, max_jump: 0.0, warned: false, reversed: false }
    }

    /// Largest relative density jump across an edge seen on accepted steps.
    pub fn max_density_jump(&self) -> f64 {
        self.max_jump
    }

    /// Whether any edge carried flow against its orientation on an accepted
    /// step.
    pub fn saw_reverse_flow(&self) -> bool {
        self.reversed
    }
}

impl OdeSystem for FvSystem<'_> {
    fn dim(&self) -> usize {
        2 * self.model.n_free
    }

    fn rhs(&mut self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        let nd = self.model.n_free;
        let b = self.model.boundary(t / 3600.0);
        let (d1, d2) = dy.split_at_mut(nd);
        self.model.rhs_partial_density(&b, &y[..nd], &y[nd..], d1, d2)
    }

    fn sparsity(&self) -> Option<Vec<Vec<usize>>> {
        Some(self.model.sparsity())
    }

    fn check_state(&mut self, t: f64, y: &[f64]) -> Result<()> {
        let nd = self.model.n_free;
        let t_hr = t / 3600.0;
        let (rho1, rho2) = y.split_at(nd);
        for j in 0..nd {
            let rho = rho1[j] + rho2[j];
            let floor = -1e-6 * rho.abs();
            if !(rho > 0.0) || rho1[j] < floor || rho2[j] < floor {
                return Err(Error::Positivity {
                    t_hr,
                    detail: format!(
                        "node `{}` has partial densities ({}, {})",
                        self.model.graph.nodes()[j + self.model.n_slack].id,
                        rho1[j],
                        rho2[j]
                    ),
                });
            }
        }
        let b = self.model.boundary(t_hr);
        let f = self.model.edge_fluxes(&b, rho1, rho2)?;
        if !self.reversed {
            let scale = f.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if let Some((k, &fk)) = f.iter().enumerate().find(|(_, &v)| v < -1e-6 * scale - 1e-6) {
                self.reversed = true;
                warn!("flow reverses on refined edge {k} at t = {t_hr:.3} hr (flux {fk:.3} kg/m^2/s); composition is taken from the downstream node");
            }
        }
        let jump = self.model.density_jump(&b, rho1, rho2);
        self.max_jump = self.max_jump.max(jump);
        if jump > DENSITY_JUMP_WARNING && !self.warned {
            self.warned = true;
            warn!("relative density jump {jump:.3} across a refined edge at t = {t_hr:.3} hr; consider a finer refinement");
        }
        Ok(())
    }
}

/// Pressure system for constant composition, with time in seconds.
pub struct IsolatedPressureSystem<'a> {
    model: &'a FvModel,
    c2: Vec<f64>,
}

impl<'a> IsolatedPressureSystem<'a> {
    /// Rejects schedules whose concentration profiles vary in time.
    pub fn new(model: &'a FvModel, c2: Vec<f64>) -> Result<Self> {
        if !model.schedule.constant_concentration() {
            return Err(Error::VaryingConcentration);
        }
        if c2.len() != model.n_free {
            return Err(Error::Dimension { expected: model.n_free, got: c2.len() });
        }
        Ok(IsolatedPressureSystem { model, c2 })
    }

    pub fn wave_speed_sq(&self) -> &[f64] {
        &self.c2
    }
}

impl OdeSystem for IsolatedPressureSystem<'_> {
    fn dim(&self) -> usize {
        self.model.n_free
    }

    fn rhs(&mut self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        let b = self.model.boundary(t / 3600.0);
        self.model.rhs_isolated_pressure(&b, y, &self.c2, dy)
    }

    fn sparsity(&self) -> Option<Vec<Vec<usize>>> {
        let adj = self.model.graph.free_adjacency();
        Some(
            adj.iter()
                .enumerate()
                .map(|(j, a)| {
                    let mut rows: Vec<usize> = std::iter::once(j).chain(a.iter().copied()).collect();
                    rows.sort_unstable();
                    rows
                })
                .collect(),
        )
    }

    fn check_state(&mut self, t: f64, y: &[f64]) -> Result<()> {
        if let Some((j, &p)) = y.iter().enumerate().find(|(_, &p)| !(p > 0.0)) {
            return Err(Error::Positivity { t_hr: t / 3600.0, detail: format!("pressure {p} at free node {j}") });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{PipeTemplate, Profile, SimulationSpec};

    fn pipe_template(phi: f64, alpha: Profile, refinement: f64) -> PipeTemplate {
        let mut sim = SimulationSpec::new(10.0);
        sim.refinement_km = refinement;
        PipeTemplate {
            length_km: 50.0,
            diameter_m: 0.5,
            friction: 0.11,
            sigma1: 377.0,
            sigma2: 2.8 * 377.0,
            inlet_pressure_mpa: 7.0,
            inlet_h2: alpha,
            outflow_flux: phi,
            simulation: sim,
        }
    }

    fn model(t: &PipeTemplate) -> FvModel {
        FvModel::from_scenario(&t.scenario().unwrap()).unwrap()
    }

    #[test]
    fn closure_examples() {
        assert_eq!(flux(1.0, 0.0, 1.0), 0.0);
        assert_eq!(flux(1.0, -1e4, 1.0), 100.0);
        assert_eq!(flux(4.0, 900.0, 2.0), -120.0);
        let f = flux_closure(&[1.0, 4.0], &[-1e4, 900.0], &[1.0, 2.0]).unwrap();
        assert_eq!(f, vec![100.0, -120.0]);
        assert!(matches!(flux_closure(&[0.0], &[1.0], &[1.0]), Err(Error::NonPositiveFluxArgument { .. })));
    }

    #[test]
    fn smoothing_band_is_continuous_and_odd() {
        let d = FLUX_SMOOTHING_PA;
        let (y, l) = (30.0, 2.5);
        for z in [d, -d] {
            let exact = -z.signum() * l * (y * z).abs().sqrt();
            let inside = flux(y, z * (1.0 - 1e-12), l);
            assert!((inside - exact).abs() < 1e-9 * exact.abs());
        }
        let h = 1e-6 * d;
        let outer = (flux(y, d + h, l) - flux(y, d, l)) / h;
        let inner = (flux(y, d, l) - flux(y, d - h, l)) / h;
        let want = -0.5 * l * (y / d).sqrt();
        assert!((outer - want).abs() < 1e-5 * want.abs() && (inner - want).abs() < 1e-5 * want.abs());
        for z in [3.0, 40.0, 99.0] {
            assert_eq!(flux(y, z, l), -flux(y, -z, l));
            assert!(flux(y, z, l) < 0.0);
        }
        let slope0 = (flux(y, h, l) - flux(y, -h, l)) / (2.0 * h);
        assert!((slope0 + 1.25 * l * (y / d).sqrt()).abs() < 1e-6 * slope0.abs());
    }

    /// Two-node system expanded by hand.
    #[test]
    fn single_edge_matches_scalar_expansion() {
        let t = pipe_template(100.0, Profile::Constant(0.1), 100.0);
        let m = model(&t);
        let b = m.boundary(0.0);
        let (rho1, rho2) = (vec![35.0], vec![1.5]);
        let mut d1 = [0.0];
        let mut d2 = [0.0];
        m.rhs_partial_density(&b, &rho1, &rho2, &mut d1, &mut d2).unwrap();

        let (s1, s2) = (377.0f64, 2.8 * 377.0);
        let area = std::f64::consts::PI * 0.0625;
        let len: f64 = 50e3;
        let lam = (2.0 * 0.5 / (0.11 * len) as f64).sqrt();
        let p_out = s1 * s1 * 35.0 + s2 * s2 * 1.5;
        let flux = lam * (36.5 * (7e6 - p_out)).sqrt();
        let w = 100.0 * area;
        let r = area * len;
        let e1 = (area * flux * 0.9 - 35.0 / 36.5 * w) / r;
        let e2 = (area * flux * 0.1 - 1.5 / 36.5 * w) / r;
        assert!((d1[0] - e1).abs() < 1e-12 * e1.abs().max(1e-6), "{} vs {e1}", d1[0]);
        assert!((d2[0] - e2).abs() < 1e-12 * e2.abs().max(1e-6));
    }

    #[test]
    fn withdrawal_term_is_linear() {
        let t = pipe_template(100.0, Profile::Constant(0.1), 10.0);
        let m = model(&t);
        let nd = m.n_free();
        let b = m.boundary(0.0);
        let mut b2 = b.clone();
        b2.outflow[0] *= 2.0;
        let rho1: Vec<f64> = (0..nd).map(|j| 50.0 - j as f64).collect();
        let rho2: Vec<f64> = (0..nd).map(|j| 1.0 + 0.01 * j as f64).collect();
        let (mut a1, mut a2, mut c1, mut c2) = (vec![0.0; nd], vec![0.0; nd], vec![0.0; nd], vec![0.0; nd]);
        m.rhs_partial_density(&b, &rho1, &rho2, &mut a1, &mut a2).unwrap();
        m.rhs_partial_density(&b2, &rho1, &rho2, &mut c1, &mut c2).unwrap();
        let r = m.capacity(&b.controls);
        let w = b.outflow[0];
        let rho = rho1[0] + rho2[0];
        assert!((a1[0] - c1[0] - rho1[0] / rho * w / r[0]).abs() < 1e-12);
        assert!((a2[0] - c2[0] - rho2[0] / rho * w / r[0]).abs() < 1e-12);
        for j in 1..nd {
            assert_eq!(a1[j], c1[j]);
            assert_eq!(a2[j], c2[j]);
        }
    }

    #[test]
    fn zero_withdrawal_gives_uniform_pressure() {
        let t = pipe_template(0.0, Profile::Constant(0.05), 5.0);
        let m = model(&t);
        let b = m.boundary(0.0);
        let s = m.steady_state(&b).unwrap();
        for j in 0..m.n_free() {
            let p = m.gas().pressure(s.rho1[j], s.rho2[j]);
            assert!((p - 7e6).abs() < 1e-6, "{p}");
        }
        assert!(s.flux.iter().all(|f| f.abs() < 1e-9));
    }

    #[test]
    fn steady_state_single_pipe_is_stationary() {
        let t = pipe_template(140.0, Profile::Constant(0.02), 1.0);
        let m = model(&t);
        let b = m.boundary(0.0);
        let s = m.steady_state(&b).unwrap();
        assert!(s.residual <= 1e-9);
        // flux constant along the pipe and equal to the withdrawal flux
        for f in &s.flux {
            assert!((f - 140.0).abs() < 1e-8, "{f}");
        }
        // composition uniform and equal to the inlet value
        for j in 0..m.n_free() {
            assert!((s.rho2[j] / (s.rho1[j] + s.rho2[j]) - 0.02).abs() < 1e-13);
        }
    }

    #[test]
    fn pressure_density_matches_transform() {
        let t = pipe_template(120.0, Profile::sinusoid(0.2, 0.5, 0.3), 5.0);
        let m = model(&t);
        let b = m.boundary(1.3);
        let nd = m.n_free();
        let g = *m.gas();
        let rho1: Vec<f64> = (0..nd).map(|j| 55.0 - 0.7 * j as f64).collect();
        let rho2: Vec<f64> = (0..nd).map(|j| 0.5 + 0.05 * (j as f64).sin().abs()).collect();
        let (mut d1, mut d2) = (vec![0.0; nd], vec![0.0; nd]);
        m.rhs_partial_density(&b, &rho1, &rho2, &mut d1, &mut d2).unwrap();
        let rho: Vec<f64> = (0..nd).map(|j| rho1[j] + rho2[j]).collect();
        let p: Vec<f64> = (0..nd).map(|j| g.pressure(rho1[j], rho2[j])).collect();
        let (mut dr, mut dp) = (vec![0.0; nd], vec![0.0; nd]);
        m.rhs_pressure_density(&b, &rho, &p, &mut dr, &mut dp).unwrap();
        for j in 0..nd {
            let er = d1[j] + d2[j];
            let ep = g.sigma1_sq() * d1[j] + g.sigma2_sq() * d2[j];
            assert!((dr[j] - er).abs() <= 1e-10 * er.abs().max(1e-3), "rho {j}");
            assert!((dp[j] - ep).abs() <= 1e-10 * ep.abs().max(1e2), "p {j}");
        }
    }

    fn loop_network() -> Scenario {
        let text = r#"
[gas]
sigma1_m_s = 377.0
sigma2_m_s = 1055.6

[[nodes]]
id = "s"
role = "slack"
[[nodes]]
id = "a"
role = "withdrawal"
[[nodes]]
id = "b"
role = "injection"
[[nodes]]
id = "c"
role = "withdrawal"

[[pipes]]
id = "sa"
from = "s"
to = "a"
length_km = 12.0
diameter_m = 0.6
friction = 0.01
[[pipes]]
id = "ab"
from = "a"
to = "b"
length_km = 8.0
diameter_m = 0.6
friction = 0.01
[[pipes]]
id = "bc"
from = "b"
to = "c"
length_km = 6.0
diameter_m = 0.5
friction = 0.012
[[pipes]]
id = "ac"
from = "a"
to = "c"
length_km = 15.0
diameter_m = 0.5
friction = 0.012

[boundaries.s]
pressure_mpa = 5.0
h2_mass_fraction = 0.05
[boundaries.a]
outflow_kg_s = 20.0
[boundaries.b]
inflow_kg_s = 4.0
h2_mass_fraction = 0.3
[boundaries.c]
outflow_kg_s = 60.0

[controls.sa]
compressor_ratio = 1.05
[controls.bc]
regulator_ratio = 1.02

[simulation]
horizon_hr = 1.0
refinement_km = 2.0
"#;
        Scenario::parse(text).unwrap()
    }

    #[test]
    fn matrix_form_matches_edge_loop() {
        let s = loop_network();
        let m = FvModel::from_scenario(&s).unwrap();
        let b = m.boundary(0.0);
        let inc = IncidenceSet::assemble(m.graph(), &b.controls).unwrap();
        let nd = m.n_free();
        let ss = m.steady_state(&b).unwrap();
        // Recompose at unchanged pressure so every edge keeps its steady
        // pressure difference and hence its flow direction.
        let (rho1, rho2): (Vec<f64>, Vec<f64>) = (0..nd)
            .map(|j| {
                let g = m.gas();
                let p = g.pressure(ss.rho1[j], ss.rho2[j]);
                let eta2 = ss.rho2[j] / (ss.rho1[j] + ss.rho2[j]) * (1.0 + 0.2 * (j as f64).cos());
                g.partials_from_pressure(p, eta2)
            })
            .unzip();
        assert!(m.edge_fluxes(&b, &rho1, &rho2).unwrap().iter().all(|f| *f > 0.0));
        let (mut d1, mut d2) = (vec![0.0; nd], vec![0.0; nd]);
        m.rhs_partial_density(&b, &rho1, &rho2, &mut d1, &mut d2).unwrap();
        let (e1, e2) = rhs_partial_density_matrix(&inc, m.gas(), &b, &rho1, &rho2).unwrap();
        for j in 0..nd {
            assert!((d1[j] - e1[j]).abs() <= 1e-12 * (1.0 + e1[j].abs()));
            assert!((d2[j] - e2[j]).abs() <= 1e-12 * (1.0 + e2[j].abs()));
        }
        let cap = m.capacity(&b.controls);
        for (a, b) in cap.iter().zip(inc.capacity.iter()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn loop_steady_state_balances_mass() {
        let s = loop_network();
        let m = FvModel::from_scenario(&s).unwrap();
        let b = m.boundary(0.0);
        let st = m.steady_state(&b).unwrap();
        assert!(st.residual <= 1e-9, "{}", st.residual);
        assert!(st.flux.iter().all(|f| *f > 0.0));
        // Kirchhoff balance at every non-slack node
        let g = m.graph();
        let ns = g.n_slack();
        let mut balance = vec![0.0; m.n_free()];
        for (k, e) in g.edges().iter().enumerate() {
            let mf = e.area() * st.flux[k];
            balance[e.to - ns] += mf;
            if e.from >= ns {
                balance[e.from - ns] -= mf;
            }
        }
        for (j, bal) in balance.iter().enumerate() {
            assert!((bal - b.demand(j)).abs() < 1e-6, "node {j}: {bal} vs {}", b.demand(j));
        }
        // injected hydrogen raises the composition downstream of b
        let c = g.node_index("c").unwrap() - ns;
        let a = g.node_index("a").unwrap() - ns;
        let eta = |j: usize| st.rho2[j] / (st.rho1[j] + st.rho2[j]);
        assert!((eta(a) - 0.05).abs() < 1e-12);
        assert!(eta(c) > 0.05);
    }

    #[test]
    fn isolated_system_rejects_varying_composition() {
        let t = pipe_template(120.0, Profile::sinusoid(0.02, 0.5, 0.1), 10.0);
        let m = model(&t);
        let c2 = vec![377.0f64.powi(2); m.n_free()];
        assert!(matches!(IsolatedPressureSystem::new(&m, c2), Err(Error::VaryingConcentration)));
    }

    #[test]
    fn isolated_matches_pressure_density_when_homogeneous() {
        let t = pipe_template(120.0, Profile::Constant(0.0), 5.0);
        let m = model(&t);
        let b = m.boundary(0.0);
        let nd = m.n_free();
        let c2 = vec![377.0f64.powi(2); nd];
        let p: Vec<f64> = (0..nd).map(|j| 6.9e6 - 2e4 * j as f64).collect();
        let rho: Vec<f64> = p.iter().zip(&c2).map(|(p, c)| p / c).collect();
        let (mut dr, mut dp) = (vec![0.0; nd], vec![0.0; nd]);
        m.rhs_pressure_density(&b, &rho, &p, &mut dr, &mut dp).unwrap();
        let mut di = vec![0.0; nd];
        m.rhs_isolated_pressure(&b, &p, &c2, &mut di).unwrap();
        for j in 0..nd {
            assert!((di[j] - dp[j]).abs() <= 1e-10 * dp[j].abs().max(1.0));
            assert!((dp[j] - c2[j] * dr[j]).abs() <= 1e-10 * dp[j].abs().max(1.0));
        }
    }

    #[test]
    fn sparsity_covers_dependencies() {
        let s = loop_network();
        let m = FvModel::from_scenario(&s).unwrap();
        let nd = m.n_free();
        let pattern = m.sparsity();
        let b = m.boundary(0.0);
        let st = m.steady_state(&b).unwrap();
        let y = st.state();
        let mut sys = FrozenSystem { model: &m, b };
        let mut f0 = vec![0.0; 2 * nd];
        sys.rhs(0.0, &y, &mut f0).unwrap();
        let dense = FdJacobian::new(2 * nd, None).eval(&mut sys, 0.0, &y, &f0, &vec![1e-6; 2 * nd]).unwrap();
        for c in 0..2 * nd {
            for r in 0..2 * nd {
                if dense[(r, c)] != 0.0 {
                    assert!(pattern[c].contains(&r), "missing ({r}, {c})");
                }
            }
        }
    }
}
