//! Declarative simulation scenarios: network, gas constants, boundary and
//! control profiles, and integration settings, stored as TOML.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gas::{GasPair, HYDROGEN_ENERGY_MJ_KG, NATURAL_GAS_ENERGY_MJ_KG};
use crate::network::{ControlValues, NetworkGraph, NodeRole, Pipe};
use crate::timeint::{IntegratorConfig, Method};

/// A scalar function of time in hours.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ProfileDoc", into = "ProfileDoc")]
pub enum Profile {
    Constant(f64),
    /// `mean * (1 + amplitude * sin(2 pi frequency t + phase))`.
    Sinusoid { mean: f64, amplitude: f64, frequency_cyc_hr: f64, phase: f64 },
    /// Linear interpolation between `(t_hr, value)` knots, held constant
    /// outside the knot range.
    PiecewiseLinear { knots: Vec<(f64, f64)> },
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum ProfileDoc {
    Bare(f64),
    Tagged(TaggedProfile),
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum TaggedProfile {
    Constant {
        value: f64,
    },
    Sinusoid {
        mean: f64,
        amplitude: f64,
        frequency_cyc_hr: f64,
        #[serde(default)]
        phase: f64,
    },
    PiecewiseLinear {
        knots: Vec<[f64; 2]>,
    },
}

impl TryFrom<ProfileDoc> for Profile {
    type Error = String;

    fn try_from(doc: ProfileDoc) -> std::result::Result<Self, String> {
        let p = match doc {
            ProfileDoc::Bare(v) | ProfileDoc::Tagged(TaggedProfile::Constant { value: v }) => Profile::Constant(v),
            ProfileDoc::Tagged(TaggedProfile::Sinusoid { mean, amplitude, frequency_cyc_hr, phase }) => {
                Profile::Sinusoid { mean, amplitude, frequency_cyc_hr, phase }
            }
            ProfileDoc::Tagged(TaggedProfile::PiecewiseLinear { knots }) => {
                Profile::PiecewiseLinear { knots: knots.into_iter().map(|[t, v]| (t, v)).collect() }
            }
        };
        p.check_shape().map_err(|e| e.to_string())?;
        Ok(p)
    }
}

impl From<Profile> for ProfileDoc {
    fn from(p: Profile) -> Self {
        match p {
            Profile::Constant(v) => ProfileDoc::Bare(v),
            Profile::Sinusoid { mean, amplitude, frequency_cyc_hr, phase } => {
                ProfileDoc::Tagged(TaggedProfile::Sinusoid { mean, amplitude, frequency_cyc_hr, phase })
            }
            Profile::PiecewiseLinear { knots } => ProfileDoc::Tagged(TaggedProfile::PiecewiseLinear {
                knots: knots.into_iter().map(|(t, v)| [t, v]).collect(),
            }),
        }
    }
}

impl From<f64> for Profile {
    fn from(v: f64) -> Self {
        Profile::Constant(v)
    }
}

impl Profile {
    pub fn sinusoid(mean: f64, amplitude: f64, frequency_cyc_hr: f64) -> Self {
        Profile::Sinusoid { mean, amplitude, frequency_cyc_hr, phase: 0.0 }
    }

    pub fn value(&self, t_hr: f64) -> f64 {
        match self {
            Profile::Constant(v) => *v,
            Profile::Sinusoid { mean, amplitude, frequency_cyc_hr, phase } => {
                mean * (1.0 + amplitude * (2.0 * PI * frequency_cyc_hr * t_hr + phase).sin())
            }
            Profile::PiecewiseLinear { knots } => {
                let first = knots[0];
                let last = knots[knots.len() - 1];
                if t_hr <= first.0 {
                    return first.1;
                }
                if t_hr >= last.0 {
                    return last.1;
                }
                let i = knots.partition_point(|k| k.0 <= t_hr);
                let (t0, v0) = knots[i - 1];
                let (t1, v1) = knots[i];
                v0 + (v1 - v0) * (t_hr - t0) / (t1 - t0)
            }
        }
    }

    pub fn is_constant(&self) -> bool {
        match self {
            Profile::Constant(_) => true,
            Profile::Sinusoid { mean, amplitude, .. } => *amplitude == 0.0 || *mean == 0.0,
            Profile::PiecewiseLinear { knots } => knots.iter().all(|k| k.1 == knots[0].1),
        }
    }

    /// Bounds of the profile over all time.
    pub fn range(&self) -> (f64, f64) {
        match self {
            Profile::Constant(v) => (*v, *v),
            Profile::Sinusoid { mean, amplitude, .. } => {
                let a = (mean * amplitude).abs();
                (mean - a, mean + a)
            }
            Profile::PiecewiseLinear { knots } => knots
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), k| (lo.min(k.1), hi.max(k.1))),
        }
    }

    fn check_shape(&self) -> Result<()> {
        let bad = |reason: &str| Err(Error::InvalidProfile { field: "profile".into(), reason: reason.into() });
        match self {
            Profile::Constant(v) if !v.is_finite() => bad("value must be finite"),
            Profile::Sinusoid { mean, amplitude, frequency_cyc_hr, phase } => {
                if ![mean, amplitude, frequency_cyc_hr, phase].iter().all(|v| v.is_finite()) {
                    bad("parameters must be finite")
                } else if *amplitude < 0.0 {
                    bad("amplitude factor must be nonnegative")
                } else if *frequency_cyc_hr < 0.0 {
                    bad("frequency must be nonnegative")
                } else {
                    Ok(())
                }
            }
            Profile::PiecewiseLinear { knots } => {
                if knots.is_empty() {
                    bad("at least one knot is required")
                } else if knots.iter().any(|k| !k.0.is_finite() || !k.1.is_finite()) {
                    bad("knots must be finite")
                } else if knots.windows(2).any(|w| w[1].0 <= w[0].0) {
                    bad("knot times must be strictly increasing")
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }

    fn check_bounds(&self, field: &str, lo: f64, hi: f64) -> Result<()> {
        if let Profile::Sinusoid { amplitude, mean, .. } = self {
            if *amplitude > 1.0 && *mean != 0.0 && lo >= 0.0 {
                return Err(Error::InvalidProfile {
                    field: field.into(),
                    reason: format!("amplitude factor {amplitude} exceeds 1"),
                });
            }
        }
        let (a, b) = self.range();
        if a < lo || b > hi {
            return Err(Error::InvalidProfile {
                field: field.into(),
                reason: format!("values span [{a}, {b}], allowed [{lo}, {hi}]"),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GasSpec {
    pub sigma1_m_s: f64,
    pub sigma2_m_s: f64,
    #[serde(default = "default_energy1")]
    pub energy1_mj_kg: f64,
    #[serde(default = "default_energy2")]
    pub energy2_mj_kg: f64,
}

fn default_energy1() -> f64 {
    NATURAL_GAS_ENERGY_MJ_KG
}

fn default_energy2() -> f64 {
    HYDROGEN_ENERGY_MJ_KG
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSpec {
    pub id: String,
    pub role: NodeRole,
}

/// Boundary profiles of one node; which fields are required depends on
/// the node role.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundarySpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pressure_mpa: Option<Profile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h2_mass_fraction: Option<Profile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inflow_kg_s: Option<Profile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outflow_kg_s: Option<Profile>,
    /// Outflow per unit area of the node's incoming pipe.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outflow_flux_kg_m2_s: Option<Profile>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compressor_ratio: Option<Profile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regulator_ratio: Option<Profile>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    Fv,
    Spectral,
}

impl std::str::FromStr for SolverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fv" => Ok(SolverKind::Fv),
            "spectral" => Ok(SolverKind::Spectral),
            other => Err(Error::Config(format!("unknown solver `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSpec {
    pub horizon_hr: f64,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_solver")]
    pub solver: SolverKind,
    #[serde(default = "default_refinement")]
    pub refinement_km: f64,
    #[serde(default = "default_order")]
    pub chebyshev_order: usize,
    #[serde(default = "default_method")]
    pub method: Method,
    #[serde(default = "default_rtol")]
    pub rel_tol: f64,
    #[serde(default = "default_atol")]
    pub abs_tol: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_step_s: Option<f64>,
    #[serde(default = "default_fixed_step")]
    pub fixed_step_s: f64,
}

fn default_samples() -> usize {
    10_000
}
fn default_solver() -> SolverKind {
    SolverKind::Fv
}
fn default_refinement() -> f64 {
    1.0
}
fn default_order() -> usize {
    60
}
fn default_method() -> Method {
    Method::Bdf
}
fn default_rtol() -> f64 {
    1e-6
}
fn default_atol() -> f64 {
    1e-8
}
fn default_fixed_step() -> f64 {
    1.0
}

impl SimulationSpec {
    pub fn new(horizon_hr: f64) -> Self {
        SimulationSpec {
            horizon_hr,
            samples: default_samples(),
            solver: default_solver(),
            refinement_km: default_refinement(),
            chebyshev_order: default_order(),
            method: default_method(),
            rel_tol: default_rtol(),
            abs_tol: default_atol(),
            max_step_s: None,
            fixed_step_s: default_fixed_step(),
        }
    }

    pub fn integrator_config(&self) -> IntegratorConfig {
        IntegratorConfig {
            method: self.method,
            rel_tol: self.rel_tol,
            abs_tol: self.abs_tol,
            max_step_s: self.max_step_s,
            fixed_step_s: self.fixed_step_s,
            samples: self.samples,
        }
    }
}

/// The document form of a scenario, as read from and written to TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub gas: GasSpec,
    pub nodes: Vec<NodeSpec>,
    pub pipes: Vec<Pipe>,
    pub boundaries: BTreeMap<String, BoundarySpec>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub controls: BTreeMap<String, ControlSpec>,
    pub simulation: SimulationSpec,
}

/// A profile with a unit conversion factor applied on evaluation.
#[derive(Debug, Clone, PartialEq)]
struct Scaled {
    profile: Profile,
    scale: f64,
}

impl Scaled {
    fn new(profile: Profile, scale: f64) -> Self {
        Scaled { profile, scale }
    }

    fn value(&self, t_hr: f64) -> f64 {
        self.scale * self.profile.value(t_hr)
    }
}

/// Boundary and control values at one instant, in SI units and canonical
/// node order. Vectors over non-slack nodes cover the original nodes only;
/// auxiliary nodes added by refinement have zero demand.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryValues {
    /// Slack pressures, Pa.
    pub slack_pressure: Vec<f64>,
    /// Slack hydrogen mass fractions.
    pub slack_h2: Vec<f64>,
    /// Injected mass flow per non-slack node, kg/s (zero at withdrawals).
    pub inflow: Vec<f64>,
    /// Injected hydrogen mass fraction per non-slack node.
    pub inflow_h2: Vec<f64>,
    /// Withdrawn mass flow per non-slack node, kg/s (zero at injections).
    pub outflow: Vec<f64>,
    pub controls: ControlValues,
}

impl BoundaryValues {
    /// Net demand `d_j`: outflow minus inflow at non-slack node `j`.
    pub fn demand(&self, j: usize) -> f64 {
        self.outflow.get(j).copied().unwrap_or(0.0) - self.inflow.get(j).copied().unwrap_or(0.0)
    }
}

/// Resolved per-node profiles, evaluated repeatedly by the solvers.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundarySchedule {
    slack_pressure: Vec<Scaled>,
    slack_h2: Vec<Scaled>,
    inflow: Vec<Option<Scaled>>,
    inflow_h2: Vec<Option<Scaled>>,
    outflow: Vec<Option<Scaled>>,
    compressor: Vec<Option<Scaled>>,
    regulator: Vec<Option<Scaled>>,
}

impl BoundarySchedule {
    pub fn at(&self, t_hr: f64) -> BoundaryValues {
        let eval = |v: &[Scaled]| v.iter().map(|p| p.value(t_hr)).collect();
        let eval_opt = |v: &[Option<Scaled>], default: f64| {
            v.iter().map(|p| p.as_ref().map_or(default, |p| p.value(t_hr))).collect()
        };
        BoundaryValues {
            slack_pressure: eval(&self.slack_pressure),
            slack_h2: eval(&self.slack_h2),
            inflow: eval_opt(&self.inflow, 0.0),
            inflow_h2: eval_opt(&self.inflow_h2, 0.0),
            outflow: eval_opt(&self.outflow, 0.0),
            controls: ControlValues {
                compressor: eval_opt(&self.compressor, 1.0),
                regulator: eval_opt(&self.regulator, 1.0),
            },
        }
    }

    /// True when every concentration profile is constant in time.
    pub fn constant_concentration(&self) -> bool {
        self.slack_h2.iter().all(|p| p.profile.is_constant())
            && self.inflow_h2.iter().flatten().all(|p| p.profile.is_constant())
    }
}

/// A validated scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    spec: ScenarioSpec,
    gas: GasPair,
    graph: NetworkGraph,
    schedule: BoundarySchedule,
}

impl PartialEq for Scenario {
    fn eq(&self, other: &Self) -> bool {
        self.spec == other.spec
    }
}

pub fn parse_scenario(text: &str) -> Result<Scenario> {
    Scenario::parse(text)
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self> {
        let spec: ScenarioSpec = toml::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        Scenario::new(spec)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(&self.spec).expect("scenario specs always serialize")
    }

    pub fn new(spec: ScenarioSpec) -> Result<Self> {
        let gas = GasPair::with_energy(
            spec.gas.sigma1_m_s,
            spec.gas.sigma2_m_s,
            spec.gas.energy1_mj_kg,
            spec.gas.energy2_mj_kg,
        )?;
        let roles: Vec<(String, NodeRole)> = spec.nodes.iter().map(|n| (n.id.clone(), n.role)).collect();
        let graph = NetworkGraph::new(&spec.pipes, &roles)?;

        let sim = &spec.simulation;
        if !(sim.horizon_hr > 0.0 && sim.horizon_hr.is_finite()) {
            return Err(Error::Schema(format!("horizon_hr must be positive, got {}", sim.horizon_hr)));
        }
        if !(sim.refinement_km > 0.0) {
            return Err(Error::InvalidRefinement(sim.refinement_km));
        }
        if sim.solver == SolverKind::Spectral {
            if graph.n_edges() != 1 {
                return Err(Error::SpectralNetwork);
            }
            if sim.chebyshev_order < 2 {
                return Err(Error::Config("chebyshev_order must be at least 2".into()));
            }
        }
        sim.integrator_config().validate()?;

        for id in spec.boundaries.keys() {
            if graph.node_index(id).is_none() {
                return Err(Error::UnknownNode(id.clone()));
            }
        }
        for id in spec.controls.keys() {
            if graph.pipe_index(id).is_none() {
                return Err(Error::UnknownPipe(id.clone()));
            }
        }

        let schedule = build_schedule(&spec, &graph)?;
        Ok(Scenario { spec, gas, graph, schedule })
    }

    pub fn spec(&self) -> &ScenarioSpec {
        &self.spec
    }

    pub fn gas(&self) -> &GasPair {
        &self.gas
    }

    pub fn graph(&self) -> &NetworkGraph {
        &self.graph
    }

    pub fn schedule(&self) -> &BoundarySchedule {
        &self.schedule
    }

    pub fn simulation(&self) -> &SimulationSpec {
        &self.spec.simulation
    }

    pub fn horizon_hr(&self) -> f64 {
        self.spec.simulation.horizon_hr
    }

    pub fn refined_graph(&self) -> Result<NetworkGraph> {
        self.graph.refine(self.spec.simulation.refinement_km)
    }

    /// Boundary values at `t_hr`, which must lie within the horizon.
    pub fn sample_boundary(&self, t_hr: f64) -> Result<BoundaryValues> {
        let horizon = self.horizon_hr();
        let slack = 1e-9 * horizon;
        if !(t_hr >= -slack && t_hr <= horizon + slack) {
            return Err(Error::OutsideHorizon { t: t_hr, horizon });
        }
        Ok(self.schedule.at(t_hr))
    }

    /// Copy of this scenario with a modified document, revalidated.
    pub fn with_spec(&self, f: impl FnOnce(&mut ScenarioSpec)) -> Result<Self> {
        let mut spec = self.spec.clone();
        f(&mut spec);
        Scenario::new(spec)
    }
}

fn build_schedule(spec: &ScenarioSpec, g: &NetworkGraph) -> Result<BoundarySchedule> {
    let ns = g.n_slack();
    let nd = g.n_free();
    let mut s = BoundarySchedule {
        slack_pressure: Vec::with_capacity(ns),
        slack_h2: Vec::with_capacity(ns),
        inflow: vec![None; nd],
        inflow_h2: vec![None; nd],
        outflow: vec![None; nd],
        compressor: vec![None; g.pipe_ids().len()],
        regulator: vec![None; g.pipe_ids().len()],
    };
    let empty = BoundarySpec::default();

    for (idx, node) in g.nodes().iter().enumerate() {
        let b = spec.boundaries.get(&node.id).unwrap_or(&empty);
        let id = &node.id;
        let need = |p: &Option<Profile>, field: &'static str| -> Result<Profile> {
            p.clone().ok_or(Error::MissingBoundary { node: id.clone(), field })
        };
        let field = |name: &str| format!("{id}.{name}");
        let forbid = |p: &Option<Profile>, name: &str| -> Result<()> {
            if p.is_some() {
                return Err(Error::Schema(format!("node `{id}` ({:?}) does not take `{name}`", node.role)));
            }
            Ok(())
        };
        match node.role {
            NodeRole::Slack => {
                let p = need(&b.pressure_mpa, "pressure_mpa")?;
                p.check_bounds(&field("pressure_mpa"), f64::MIN_POSITIVE, f64::INFINITY)?;
                let a = need(&b.h2_mass_fraction, "h2_mass_fraction")?;
                a.check_bounds(&field("h2_mass_fraction"), 0.0, 1.0)?;
                forbid(&b.inflow_kg_s, "inflow_kg_s")?;
                forbid(&b.outflow_kg_s, "outflow_kg_s")?;
                forbid(&b.outflow_flux_kg_m2_s, "outflow_flux_kg_m2_s")?;
                s.slack_pressure.push(Scaled::new(p, 1e6));
                s.slack_h2.push(Scaled::new(a, 1.0));
            }
            NodeRole::Injection => {
                let j = idx - ns;
                let q = need(&b.inflow_kg_s, "inflow_kg_s")?;
                q.check_bounds(&field("inflow_kg_s"), 0.0, f64::INFINITY)?;
                let beta = need(&b.h2_mass_fraction, "h2_mass_fraction")?;
                beta.check_bounds(&field("h2_mass_fraction"), 0.0, 1.0)?;
                forbid(&b.pressure_mpa, "pressure_mpa")?;
                forbid(&b.outflow_kg_s, "outflow_kg_s")?;
                forbid(&b.outflow_flux_kg_m2_s, "outflow_flux_kg_m2_s")?;
                s.inflow[j] = Some(Scaled::new(q, 1.0));
                s.inflow_h2[j] = Some(Scaled::new(beta, 1.0));
            }
            NodeRole::Withdrawal => {
                let j = idx - ns;
                forbid(&b.pressure_mpa, "pressure_mpa")?;
                forbid(&b.inflow_kg_s, "inflow_kg_s")?;
                forbid(&b.h2_mass_fraction, "h2_mass_fraction")?;
                let w = match (&b.outflow_kg_s, &b.outflow_flux_kg_m2_s) {
                    (Some(w), None) => {
                        w.check_bounds(&field("outflow_kg_s"), 0.0, f64::INFINITY)?;
                        Scaled::new(w.clone(), 1.0)
                    }
                    (None, Some(phi)) => {
                        phi.check_bounds(&field("outflow_flux_kg_m2_s"), 0.0, f64::INFINITY)?;
                        let incoming: Vec<_> = g.edges().iter().filter(|e| e.to == idx).collect();
                        if incoming.len() != 1 {
                            return Err(Error::Schema(format!(
                                "outflow_flux_kg_m2_s at `{id}` needs exactly one incoming pipe, found {}",
                                incoming.len()
                            )));
                        }
                        Scaled::new(phi.clone(), incoming[0].area())
                    }
                    (Some(_), Some(_)) => {
                        return Err(Error::Schema(format!(
                            "node `{id}` sets both outflow_kg_s and outflow_flux_kg_m2_s"
                        )))
                    }
                    (None, None) => return Err(Error::MissingBoundary { node: id.clone(), field: "outflow_kg_s" }),
                };
                s.outflow[j] = Some(w);
            }
        }
    }

    for (pipe, c) in &spec.controls {
        let k = g.pipe_index(pipe).ok_or_else(|| Error::UnknownPipe(pipe.clone()))?;
        if let Some(p) = &c.compressor_ratio {
            p.check_bounds(&format!("{pipe}.compressor_ratio"), 1.0, f64::INFINITY)?;
            s.compressor[k] = Some(Scaled::new(p.clone(), 1.0));
        }
        if let Some(p) = &c.regulator_ratio {
            p.check_bounds(&format!("{pipe}.regulator_ratio"), 1.0, f64::INFINITY)?;
            s.regulator[k] = Some(Scaled::new(p.clone(), 1.0));
        }
    }
    Ok(s)
}

/// Single horizontal pipe from a slack inlet `in` to a withdrawal outlet
/// `out`, with constant boundary values. Used as a template by the
/// interface sweeps and tests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipeTemplate {
    pub length_km: f64,
    pub diameter_m: f64,
    pub friction: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    pub inlet_pressure_mpa: f64,
    pub inlet_h2: Profile,
    /// Outlet withdrawal per unit pipe area, kg/m^2/s.
    pub outflow_flux: f64,
    pub simulation: SimulationSpec,
}

impl PipeTemplate {
    pub fn spec(&self) -> ScenarioSpec {
        let mut boundaries = BTreeMap::new();
        boundaries.insert(
            "in".to_string(),
            BoundarySpec {
                pressure_mpa: Some(Profile::Constant(self.inlet_pressure_mpa)),
                h2_mass_fraction: Some(self.inlet_h2.clone()),
                ..Default::default()
            },
        );
        boundaries.insert(
            "out".to_string(),
            BoundarySpec { outflow_flux_kg_m2_s: Some(Profile::Constant(self.outflow_flux)), ..Default::default() },
        );
        ScenarioSpec {
            gas: GasSpec {
                sigma1_m_s: self.sigma1,
                sigma2_m_s: self.sigma2,
                energy1_mj_kg: NATURAL_GAS_ENERGY_MJ_KG,
                energy2_mj_kg: HYDROGEN_ENERGY_MJ_KG,
            },
            nodes: vec![
                NodeSpec { id: "in".into(), role: NodeRole::Slack },
                NodeSpec { id: "out".into(), role: NodeRole::Withdrawal },
            ],
            pipes: vec![Pipe::new("pipe", "in", "out", self.length_km, self.diameter_m, self.friction)],
            boundaries,
            controls: BTreeMap::new(),
            simulation: self.simulation.clone(),
        }
    }

    pub fn scenario(&self) -> Result<Scenario> {
        Scenario::new(self.spec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SINGLE: &str = r#"
[gas]
sigma1_m_s = 377.0
sigma2_m_s = 1055.6

[[nodes]]
id = "in"
role = "slack"

[[nodes]]
id = "out"
role = "withdrawal"

[[pipes]]
id = "p"
from = "in"
to = "out"
length_km = 50.0
diameter_m = 0.5
friction = 0.11

[boundaries.in]
pressure_mpa = 7.0
h2_mass_fraction = { kind = "sinusoid", mean = 0.02, amplitude = 1.0, frequency_cyc_hr = 0.1 }

[boundaries.out]
outflow_flux_kg_m2_s = 120.0

[simulation]
horizon_hr = 24.0
samples = 240
"#;

    #[test]
    fn parses_single_pipe() {
        let s = parse_scenario(SINGLE).unwrap();
        assert_eq!(s.graph().n_nodes(), 2);
        let b = s.sample_boundary(0.0).unwrap();
        assert_eq!(b.slack_pressure, vec![7e6]);
        assert!((b.slack_h2[0] - 0.02).abs() < 1e-15);
        let area = PI * 0.25 * 0.25;
        assert!((b.outflow[0] - 120.0 * area).abs() < 1e-12);
        assert_eq!(s.simulation().solver, SolverKind::Fv);
        assert_eq!(s.simulation().chebyshev_order, 60);
    }

    #[test]
    fn sinusoid_samples() {
        let p = Profile::sinusoid(0.2, 1.0, 0.25);
        assert!((p.value(1.0) - 0.4).abs() < 1e-15);
        let p = Profile::sinusoid(0.02, 1.0, 0.1);
        assert_eq!(p.value(0.0), 0.02);
        assert_eq!(Profile::Constant(3.5).value(17.0), 3.5);
    }

    #[test]
    fn piecewise_linear_interpolates_and_holds() {
        let p = Profile::PiecewiseLinear { knots: vec![(0.0, 1.0), (10.0, 3.0), (20.0, 3.0)] };
        assert_eq!(p.value(-1.0), 1.0);
        assert!((p.value(5.0) - 2.0).abs() < 1e-15);
        assert_eq!(p.value(10.0), 3.0);
        assert_eq!(p.value(25.0), 3.0);
    }

    #[test]
    fn round_trip_is_stable() {
        let s = parse_scenario(SINGLE).unwrap();
        let text = s.to_toml();
        let again = parse_scenario(&text).unwrap();
        assert_eq!(s, again);
        assert_eq!(text, again.to_toml());
    }

    #[test]
    fn missing_slack_pressure() {
        let text = SINGLE.replace("pressure_mpa = 7.0\n", "");
        match parse_scenario(&text) {
            Err(Error::MissingBoundary { node, field }) => {
                assert_eq!(node, "in");
                assert_eq!(field, "pressure_mpa");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_invalid_documents() {
        let cases = [
            SINGLE.replace("amplitude = 1.0", "amplitude = 1.5"),
            SINGLE.replace("horizon_hr = 24.0", "horizon_hr = 0.0"),
            SINGLE.replace("[boundaries.out]", "[boundaries.nowhere]"),
            SINGLE.replace("to = \"out\"", "to = \"elsewhere\""),
            SINGLE.replace("friction = 0.11", "friction = 0.11\nroughness = 1.0"),
            SINGLE.replace("mean = 0.02", "mean = 0.6"),
        ];
        for text in &cases {
            let err = parse_scenario(text).unwrap_err();
            assert!(err.is_input_error(), "{err}");
        }
    }

    #[test]
    fn horizon_is_enforced() {
        let s = parse_scenario(SINGLE).unwrap();
        assert!(s.sample_boundary(24.0).is_ok());
        assert!(matches!(s.sample_boundary(24.5), Err(Error::OutsideHorizon { .. })));
        assert!(s.sample_boundary(-0.1).is_err());
    }

    #[test]
    fn controls_and_spectral_validation() {
        let with_control = format!("{SINGLE}\n[controls.p]\ncompressor_ratio = 1.2\n");
        let s = parse_scenario(&with_control).unwrap();
        assert_eq!(s.sample_boundary(1.0).unwrap().controls.compressor, vec![1.2]);
        let low = format!("{SINGLE}\n[controls.p]\nregulator_ratio = 0.9\n");
        assert!(parse_scenario(&low).is_err());
        let unknown = format!("{SINGLE}\n[controls.q]\nregulator_ratio = 1.1\n");
        assert!(matches!(parse_scenario(&unknown), Err(Error::UnknownPipe(_))));
    }

    #[test]
    fn template_builds_valid_scenario() {
        let t = PipeTemplate {
            length_km: 50.0,
            diameter_m: 0.5,
            friction: 0.11,
            sigma1: 377.0,
            sigma2: 2.8 * 377.0,
            inlet_pressure_mpa: 7.0,
            inlet_h2: Profile::sinusoid(0.02, 0.5, 0.5),
            outflow_flux: 140.0,
            simulation: SimulationSpec::new(10.0),
        };
        let s = t.scenario().unwrap();
        let again = parse_scenario(&s.to_toml()).unwrap();
        assert_eq!(s, again);
    }
}
