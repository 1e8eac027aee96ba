//! Running scenarios: steady initial states, time integration, and
//! reduction of solver states to nodal quantities on the original nodes.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fv::{FvModel, FvSystem};
use crate::gas::{partials_to_equivalents, GasPair};
use crate::scenario::{BoundaryValues, Scenario, SolverKind};
use crate::spectral::{SpectralModel, SpectralSystem};
use crate::timeint::{integrate, uniform_grid_hr, IntegrationStats, TimeSeries};

/// A reported nodal quantity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Quantity {
    PressureMpa,
    Density,
    NaturalGasDensity,
    HydrogenDensity,
    HydrogenMassFraction,
    HydrogenVolumeFraction,
    Energy,
}

impl Quantity {
    pub const ALL: [Quantity; 7] = [
        Quantity::PressureMpa,
        Quantity::Density,
        Quantity::NaturalGasDensity,
        Quantity::HydrogenDensity,
        Quantity::HydrogenMassFraction,
        Quantity::HydrogenVolumeFraction,
        Quantity::Energy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Quantity::PressureMpa => "p_mpa",
            Quantity::Density => "rho",
            Quantity::NaturalGasDensity => "rho1",
            Quantity::HydrogenDensity => "rho2",
            Quantity::HydrogenMassFraction => "eta2",
            Quantity::HydrogenVolumeFraction => "nu2",
            Quantity::Energy => "energy_gj_s",
        }
    }
}

impl fmt::Display for Quantity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl From<Quantity> for String {
    fn from(q: Quantity) -> String {
        q.name().to_string()
    }
}

impl TryFrom<String> for Quantity {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl FromStr for Quantity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Quantity::ALL
            .into_iter()
            .find(|q| q.name() == s)
            .ok_or_else(|| Error::UnknownQuantity(s.to_string()))
    }
}

/// Every quantity at one node and instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodalValues {
    pub p_mpa: f64,
    pub rho: f64,
    pub rho1: f64,
    pub rho2: f64,
    pub eta2: f64,
    pub nu2: f64,
    pub energy_gj_s: f64,
}

impl NodalValues {
    fn new(gas: &GasPair, rho1: f64, rho2: f64, mass_flow: f64) -> Result<Self> {
        let m = partials_to_equivalents(rho1.max(0.0), rho2.max(0.0), gas)?;
        Ok(NodalValues {
            p_mpa: m.pressure_mpa(),
            rho: m.rho,
            rho1: m.rho1,
            rho2: m.rho2,
            eta2: m.eta2,
            nu2: m.nu2,
            energy_gj_s: mass_flow * gas.energy_per_mass(m.eta2) * 1e-3,
        })
    }

    pub fn get(&self, q: Quantity) -> f64 {
        match q {
            Quantity::PressureMpa => self.p_mpa,
            Quantity::Density => self.rho,
            Quantity::NaturalGasDensity => self.rho1,
            Quantity::HydrogenDensity => self.rho2,
            Quantity::HydrogenMassFraction => self.eta2,
            Quantity::HydrogenVolumeFraction => self.nu2,
            Quantity::Energy => self.energy_gj_s,
        }
    }
}

/// A discretized scenario ready for integration.
#[derive(Debug, Clone)]
pub enum Model {
    Fv(FvModel),
    Spectral(SpectralModel),
}

/// Result of a simulation run.
#[derive(Debug, Clone)]
pub struct Simulation {
    /// Columns `<node>.<quantity>` for every original node and quantity.
    pub series: TimeSeries,
    pub stats: IntegrationStats,
    /// Largest relative density jump across a refined edge (FV only).
    pub max_density_jump: Option<f64>,
}

impl Model {
    pub fn new(s: &Scenario) -> Result<Self> {
        match s.simulation().solver {
            SolverKind::Fv => Ok(Model::Fv(FvModel::from_scenario(s)?)),
            SolverKind::Spectral => Ok(Model::Spectral(SpectralModel::from_scenario(s)?)),
        }
    }

    fn gas(&self) -> &GasPair {
        match self {
            Model::Fv(m) => m.gas(),
            Model::Spectral(m) => m.gas(),
        }
    }

    fn boundary(&self, t_hr: f64) -> BoundaryValues {
        match self {
            Model::Fv(m) => m.boundary(t_hr),
            Model::Spectral(m) => m.boundary(t_hr),
        }
    }

    /// Steady state at `t = 0` as a solver state vector.
    pub fn steady_state(&self) -> Result<Vec<f64>> {
        let b = self.boundary(0.0);
        match self {
            Model::Fv(m) => Ok(m.steady_state(&b)?.state()),
            Model::Spectral(m) => m.steady_state(&b),
        }
    }

    /// Nodal values at the original nodes, in canonical node order.
    pub fn nodal_values(&self, t_hr: f64, y: &[f64]) -> Result<Vec<NodalValues>> {
        let b = self.boundary(t_hr);
        let gas = self.gas();
        match self {
            Model::Fv(m) => {
                let g = m.graph();
                let ns = g.n_slack();
                let nd = m.n_free();
                let (rho1, rho2) = y.split_at(nd);
                let f = m.edge_fluxes(&b, rho1, rho2)?;
                let n_orig = g.nodes().iter().filter(|n| !n.auxiliary).count();
                let mut inflow = vec![0.0; n_orig];
                let mut slack_out = vec![0.0; ns];
                for (k, e) in g.edges().iter().enumerate() {
                    let mf = e.area() * f[k];
                    if e.to < n_orig {
                        inflow[e.to] += mf;
                    }
                    if e.from < ns {
                        slack_out[e.from] += mf;
                    }
                }
                (0..n_orig)
                    .map(|i| {
                        if i < ns {
                            let (a, c) = gas.partials_from_pressure(b.slack_pressure[i], b.slack_h2[i]);
                            NodalValues::new(gas, a, c, slack_out[i])
                        } else {
                            NodalValues::new(gas, rho1[i - ns], rho2[i - ns], inflow[i])
                        }
                    })
                    .collect()
            }
            Model::Spectral(m) => {
                let n = m.order();
                let (r1, r2) = m.full_partials(&b, y);
                let phi = m.fluxes(&b, &r1, &r2)?;
                let area = m.area();
                Ok(vec![
                    NodalValues::new(gas, r1[0], r2[0], area * phi[0])?,
                    NodalValues::new(gas, r1[n], r2[n], area * phi[n])?,
                ])
            }
        }
    }

    fn integrate_states(&self, s: &Scenario, y0: &[f64]) -> Result<(Vec<f64>, Vec<Vec<f64>>, IntegrationStats, Option<f64>)> {
        let sim = s.simulation();
        let t_hr = uniform_grid_hr(sim.horizon_hr, sim.samples);
        let t_s: Vec<f64> = t_hr.iter().map(|t| t * 3600.0).collect();
        let cfg = sim.integrator_config();
        match self {
            Model::Fv(m) => {
                let mut sys = FvSystem::new(m);
                let (ys, stats) = integrate(&mut sys, y0, 0.0, &t_s, &cfg)?;
                Ok((t_hr, ys, stats, Some(sys.max_density_jump())))
            }
            Model::Spectral(m) => {
                let mut sys = SpectralSystem::new(m);
                let (ys, stats) = integrate(&mut sys, y0, 0.0, &t_s, &cfg)?;
                Ok((t_hr, ys, stats, None))
            }
        }
    }
}

/// Steady nodal values at `t = 0` for every original node, in input order
/// of the canonical node list.
pub fn steady(s: &Scenario) -> Result<Vec<(String, NodalValues)>> {
    let model = Model::new(s)?;
    let y = model.steady_state()?;
    let values = model.nodal_values(0.0, &y)?;
    Ok(s.graph().nodes().iter().map(|n| n.id.clone()).zip(values).collect())
}

/// Simulate from the steady state of the scenario itself.
pub fn simulate(s: &Scenario) -> Result<Simulation> {
    simulate_from(s, s)
}

/// Simulate `s` starting from the steady state of `initial`, which must
/// describe the same network and discretization.
pub fn simulate_from(s: &Scenario, initial: &Scenario) -> Result<Simulation> {
    let model = Model::new(s)?;
    let y0 = Model::new(initial)?.steady_state()?;
    let (t_hr, ys, stats, jump) = model.integrate_states(s, &y0)?;

    let ids: Vec<String> = s.graph().nodes().iter().map(|n| n.id.clone()).collect();
    let mut columns = vec![Vec::with_capacity(t_hr.len()); ids.len() * Quantity::ALL.len()];
    for (t, y) in t_hr.iter().zip(&ys) {
        let values = model.nodal_values(*t, y)?;
        for (i, v) in values.iter().enumerate() {
            for (qi, q) in Quantity::ALL.iter().enumerate() {
                columns[i * Quantity::ALL.len() + qi].push(v.get(*q));
            }
        }
    }
    let mut series = TimeSeries::new(t_hr);
    let mut cols = columns.into_iter();
    for id in &ids {
        for q in Quantity::ALL {
            series.push_column(format!("{id}.{q}"), cols.next().expect("column count"))?;
        }
    }
    Ok(Simulation { series, stats, max_density_jump: jump })
}

/// Keep only the requested node and quantity columns, in the given order.
pub fn select_columns(series: &TimeSeries, nodes: &[String], quantities: &[Quantity]) -> Result<TimeSeries> {
    let mut out = TimeSeries::new(series.t_hr.clone());
    for node in nodes {
        for q in quantities {
            let name = format!("{node}.{q}");
            let col = series.column(&name).ok_or_else(|| Error::UnknownNode(node.clone()))?;
            out.push_column(name, col.to_vec())?;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{PipeTemplate, Profile, SimulationSpec};

    fn template(solver: SolverKind, alpha: Profile) -> PipeTemplate {
        let mut sim = SimulationSpec::new(6.0);
        sim.solver = solver;
        sim.samples = 60;
        sim.refinement_km = 5.0;
        sim.chebyshev_order = 16;
        PipeTemplate {
            length_km: 50.0,
            diameter_m: 0.5,
            friction: 0.11,
            sigma1: 377.0,
            sigma2: 2.8 * 377.0,
            inlet_pressure_mpa: 7.0,
            inlet_h2: alpha,
            outflow_flux: 120.0,
            simulation: sim,
        }
    }

    #[test]
    fn quantity_names_round_trip() {
        for q in Quantity::ALL {
            assert_eq!(q.name().parse::<Quantity>().unwrap(), q);
        }
        assert!("pressure".parse::<Quantity>().is_err());
    }

    #[test]
    fn constant_boundaries_stay_at_equilibrium() {
        for solver in [SolverKind::Fv, SolverKind::Spectral] {
            let s = template(solver, Profile::Constant(0.02)).scenario().unwrap();
            let sim = simulate(&s).unwrap();
            let p = sim.series.column("out.p_mpa").unwrap();
            let rho2 = sim.series.column("out.rho2").unwrap();
            for v in p {
                assert!((v - p[0]).abs() < 1e-7, "{solver:?}: {v} vs {}", p[0]);
            }
            for v in rho2 {
                assert!((v - rho2[0]).abs() < 10.0 * s.simulation().abs_tol);
            }
            assert_eq!(sim.series.len(), 61);
        }
    }

    #[test]
    fn columns_cover_every_node_and_quantity() {
        let s = template(SolverKind::Fv, Profile::sinusoid(0.02, 0.5, 0.5)).scenario().unwrap();
        let sim = simulate(&s).unwrap();
        assert_eq!(sim.series.names.len(), 2 * Quantity::ALL.len());
        assert_eq!(sim.series.names[0], "in.p_mpa");
        let e = sim.series.column("out.energy_gj_s").unwrap();
        assert!(e.iter().all(|v| *v > 0.0));
        let sel = select_columns(&sim.series, &["out".into()], &[Quantity::PressureMpa, Quantity::HydrogenMassFraction])
            .unwrap();
        assert_eq!(sel.names, vec!["out.p_mpa", "out.eta2"]);
        assert!(select_columns(&sim.series, &["nowhere".into()], &[Quantity::Density]).is_err());
    }

    #[test]
    fn steady_report_matches_pipe_law() {
        let s = template(SolverKind::Spectral, Profile::Constant(0.0)).scenario().unwrap();
        let rows = steady(&s).unwrap();
        assert_eq!(rows[0].0, "in");
        let want = (49.0 - 0.11 * 377.0f64.powi(2) * 120.0f64.powi(2) * 50e3 / 0.5 * 1e-12).sqrt();
        assert!((rows[1].1.p_mpa - want).abs() < 1e-8 * want);
    }
}
