#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;

use gasmix_core::fv::FvModel;
use gasmix_core::gas::{HYDROGEN_ENERGY_MJ_KG, NATURAL_GAS_ENERGY_MJ_KG};
use gasmix_core::scenario::{
    BoundarySpec, BoundaryValues, ControlSpec, GasSpec, NodeSpec, Profile, Scenario, ScenarioSpec, SimulationSpec,
};
use gasmix_core::{NodeRole, Pipe};
use nalgebra::DMatrix;
use rand::Rng;

pub const SIGMA1: f64 = 377.0;
pub const SIGMA2: f64 = 2.8 * 377.0;

pub fn bundled(name: &str) -> Scenario {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name);
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    Scenario::parse(&text).unwrap_or_else(|e| panic!("{name}: {e}"))
}

/// Random connected network on `n` nodes whose pipes all point from a lower
/// to a higher node index, so that node 0 (the slack) feeds everything. About
/// a third of the pipes carry a compressor.
#[derive(Debug, Clone)]
pub struct RandomNetwork {
    pub pipes: Vec<Pipe>,
    pub compressors: BTreeMap<String, f64>,
    pub n_nodes: usize,
    /// Mean withdrawal at each non-slack node, kg/s.
    pub withdrawal: Vec<f64>,
}

pub fn random_network<R: Rng>(rng: &mut R, n_nodes: usize) -> RandomNetwork {
    let mut pipes = Vec::new();
    let push = |pipes: &mut Vec<Pipe>, rng: &mut R, from: usize, to: usize| {
        let id = format!("e{}", pipes.len());
        let length = rng.random_range(8.0..30.0);
        let diameter = rng.random_range(0.6..0.9);
        pipes.push(Pipe::new(id, format!("n{from}"), format!("n{to}"), length, diameter, 0.01));
    };
    for j in 1..n_nodes {
        let i = rng.random_range(0..j);
        push(&mut pipes, rng, i, j);
    }
    for _ in 0..rng.random_range(0..=n_nodes / 3) {
        let j = rng.random_range(2..n_nodes.max(3));
        if j >= n_nodes {
            break;
        }
        let i = rng.random_range(0..j);
        if !pipes.iter().any(|p| p.from == format!("n{i}") && p.to == format!("n{j}")) {
            push(&mut pipes, rng, i, j);
        }
    }
    let mut compressors = BTreeMap::new();
    for p in &pipes {
        if rng.random_bool(0.35) {
            compressors.insert(p.id.clone(), rng.random_range(1.0..1.06));
        }
    }
    let withdrawal = (1..n_nodes).map(|_| rng.random_range(2.0..12.0)).collect();
    RandomNetwork { pipes, compressors, n_nodes, withdrawal }
}

impl RandomNetwork {
    /// Scenario with a constant slack state and sinusoidally modulated
    /// withdrawals scaled by `demand_scale`.
    pub fn spec(&self, slack_mpa: f64, h2: f64, demand_scale: f64, sim: SimulationSpec) -> ScenarioSpec {
        let mut nodes = vec![NodeSpec { id: "n0".into(), role: NodeRole::Slack }];
        let mut boundaries = BTreeMap::new();
        boundaries.insert(
            "n0".to_string(),
            BoundarySpec {
                pressure_mpa: Some(Profile::Constant(slack_mpa)),
                h2_mass_fraction: Some(Profile::Constant(h2)),
                ..Default::default()
            },
        );
        for j in 1..self.n_nodes {
            let id = format!("n{j}");
            nodes.push(NodeSpec { id: id.clone(), role: NodeRole::Withdrawal });
            let w = Profile::Sinusoid {
                mean: demand_scale * self.withdrawal[j - 1],
                amplitude: 0.3,
                frequency_cyc_hr: 0.1 + 0.05 * j as f64,
                phase: j as f64,
            };
            boundaries.insert(id, BoundarySpec { outflow_kg_s: Some(w), ..Default::default() });
        }
        let controls = self
            .compressors
            .iter()
            .map(|(id, r)| (id.clone(), ControlSpec { compressor_ratio: Some(Profile::Constant(*r)), ..Default::default() }))
            .collect();
        ScenarioSpec {
            gas: GasSpec {
                sigma1_m_s: SIGMA1,
                sigma2_m_s: SIGMA2,
                energy1_mj_kg: NATURAL_GAS_ENERGY_MJ_KG,
                energy2_mj_kg: HYDROGEN_ENERGY_MJ_KG,
            },
            nodes,
            pipes: self.pipes.clone(),
            boundaries,
            controls,
            simulation: sim,
        }
    }
}

/// Pressures on the free nodes of `model` such that every edge carries
/// positive flow and the relative drop across each edge lies in
/// `[min_drop, max_drop]`. Compressors only widen the drop. Each node drops
/// below its lowest inlet, so a node fed by unequal inlets can see a larger
/// drop from the others. `None` when some edge loses more than 45% of its
/// inlet pressure, which with compressor ratios up to 1.06 keeps the
/// compressed inlet pressure below twice the outlet pressure.
pub fn admissible_pressures<R: Rng>(
    model: &FvModel,
    b: &BoundaryValues,
    rng: &mut R,
    min_drop: f64,
    max_drop: f64,
) -> Option<Vec<f64>> {
    let g = model.graph();
    let ns = g.n_slack();
    let mut p: Vec<Option<f64>> = vec![None; g.n_nodes()];
    for (s, v) in b.slack_pressure.iter().enumerate() {
        p[s] = Some(*v);
    }
    let drops: Vec<f64> = (0..g.n_nodes()).map(|_| rng.random_range(min_drop..max_drop)).collect();
    loop {
        let mut progressed = false;
        for j in ns..g.n_nodes() {
            if p[j].is_some() {
                continue;
            }
            let inlets: Vec<Option<f64>> = g.edges().iter().filter(|e| e.to == j).map(|e| p[e.from]).collect();
            if inlets.iter().all(Option::is_some) {
                let lowest = inlets.iter().map(|v| v.unwrap()).fold(f64::INFINITY, f64::min);
                p[j] = Some(lowest * (1.0 - drops[j]));
                progressed = true;
            }
        }
        if !progressed {
            break;
        }
    }
    let p: Vec<f64> = p.into_iter().map(|v| v.expect("graph is acyclic and rooted at the slack")).collect();
    if g.edges().iter().any(|e| p[e.to] < 0.55 * p[e.from]) {
        return None;
    }
    Some(p[ns..].to_vec())
}

/// Central finite-difference Jacobian of `f` at `x` with relative step `rel`.
pub fn fd_jacobian(mut f: impl FnMut(&[f64]) -> Vec<f64>, x: &[f64], rel: f64) -> DMatrix<f64> {
    let n = x.len();
    let m = f(x).len();
    let mut jac = DMatrix::zeros(m, n);
    let mut xp = x.to_vec();
    for c in 0..n {
        let h = rel * x[c].abs().max(1.0);
        xp[c] = x[c] + h;
        let fp = f(&xp);
        xp[c] = x[c] - h;
        let fm = f(&xp);
        xp[c] = x[c];
        for r in 0..m {
            jac[(r, c)] = (fp[r] - fm[r]) / (2.0 * h);
        }
    }
    jac
}

/// Smallest off-diagonal entry of a square matrix.
pub fn min_off_diagonal(a: &DMatrix<f64>) -> (f64, usize, usize) {
    let mut best = (f64::INFINITY, 0, 0);
    for r in 0..a.nrows() {
        for c in 0..a.ncols() {
            if r != c && a[(r, c)] < best.0 {
                best = (a[(r, c)], r, c);
            }
        }
    }
    best
}
