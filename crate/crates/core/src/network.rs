//! Directed pipeline graphs, edge refinement, and incidence assembly.
//!
//! Nodes are kept in the canonical order slack, injection, withdrawal. The
//! state vectors of the discretized system index the non-slack nodes only,
//! so `node - n_slack` is the state slot of a non-slack node.

use std::collections::{HashMap, VecDeque};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A physical pipe between two named nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Pipe {
    pub id: String,
    pub from: String,
    pub to: String,
    pub length_km: f64,
    pub diameter_m: f64,
    pub friction: f64,
}

impl Pipe {
    pub fn new(
        id: impl Into<String>,
        from: impl Into<String>,
        to: impl Into<String>,
        length_km: f64,
        diameter_m: f64,
        friction: f64,
    ) -> Self {
        Pipe {
            id: id.into(),
            from: from.into(),
            to: to.into(),
            length_km,
            diameter_m,
            friction,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeRole {
    /// Pressure and concentration specified.
    Slack,
    /// Mass inflow and concentration specified.
    Injection,
    /// Mass outflow specified.
    Withdrawal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: String,
    pub role: NodeRole,
    /// Created by refinement; always a zero-withdrawal node.
    pub auxiliary: bool,
}

/// One edge of a (possibly refined) graph.
#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub id: String,
    pub from: usize,
    pub to: usize,
    pub length_km: f64,
    pub diameter_m: f64,
    pub friction: f64,
    /// Index of the physical pipe this edge belongs to.
    pub pipe: usize,
    /// Carries the pipe's compressor (first sub-edge).
    pub compressor: bool,
    /// Carries the pipe's regulator (last sub-edge).
    pub regulator: bool,
}

impl Edge {
    pub fn length_m(&self) -> f64 {
        self.length_km * 1e3
    }

    /// Cross-sectional area, m^2.
    pub fn area(&self) -> f64 {
        std::f64::consts::PI * self.diameter_m * self.diameter_m / 4.0
    }

    /// Friction coefficient `sqrt(2 D / (lambda l))` of the flux closure.
    pub fn flow_coefficient(&self) -> f64 {
        (2.0 * self.diameter_m / (self.friction * self.length_m())).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkGraph {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    pipe_ids: Vec<String>,
    n_slack: usize,
    n_injection: usize,
    refinement_limit_km: Option<f64>,
    /// `permutation[i]` is the canonical index of the i-th input node.
    permutation: Vec<usize>,
}

pub fn build_graph(pipes: &[Pipe], nodes: &[(String, NodeRole)]) -> Result<NetworkGraph> {
    NetworkGraph::new(pipes, nodes)
}

impl NetworkGraph {
    pub fn new(pipes: &[Pipe], nodes: &[(String, NodeRole)]) -> Result<Self> {
        let mut seen = HashMap::new();
        for (i, (id, _)) in nodes.iter().enumerate() {
            if seen.insert(id.as_str(), i).is_some() {
                return Err(Error::DuplicateId { kind: "node", id: id.clone() });
            }
        }
        if !nodes.iter().any(|(_, r)| *r == NodeRole::Slack) {
            return Err(Error::NoSlackNode);
        }

        // stable sort into slack / injection / withdrawal order
        let mut order: Vec<usize> = (0..nodes.len()).collect();
        order.sort_by_key(|&i| nodes[i].1);
        let mut permutation = vec![0; nodes.len()];
        for (canon, &input) in order.iter().enumerate() {
            permutation[input] = canon;
        }
        let ordered: Vec<Node> = order
            .iter()
            .map(|&i| Node { id: nodes[i].0.clone(), role: nodes[i].1, auxiliary: false })
            .collect();

        let mut pipe_seen = HashMap::new();
        let mut edges = Vec::with_capacity(pipes.len());
        for (k, p) in pipes.iter().enumerate() {
            if pipe_seen.insert(p.id.as_str(), k).is_some() {
                return Err(Error::DuplicateId { kind: "pipe", id: p.id.clone() });
            }
            let from = *seen.get(p.from.as_str()).ok_or_else(|| Error::UnknownNode(p.from.clone()))?;
            let to = *seen.get(p.to.as_str()).ok_or_else(|| Error::UnknownNode(p.to.clone()))?;
            if from == to {
                return Err(Error::SelfLoop(p.id.clone()));
            }
            for (name, v) in [
                ("length", p.length_km),
                ("diameter", p.diameter_m),
                ("friction", p.friction),
            ] {
                if !(v.is_finite() && v > 0.0) {
                    return Err(Error::InvalidGeometry {
                        pipe: p.id.clone(),
                        what: format!("{name} must be positive, got {v}"),
                    });
                }
            }
            edges.push(Edge {
                id: p.id.clone(),
                from: permutation[from],
                to: permutation[to],
                length_km: p.length_km,
                diameter_m: p.diameter_m,
                friction: p.friction,
                pipe: k,
                compressor: true,
                regulator: true,
            });
        }

        let graph = NetworkGraph {
            n_slack: ordered.iter().filter(|n| n.role == NodeRole::Slack).count(),
            n_injection: ordered.iter().filter(|n| n.role == NodeRole::Injection).count(),
            nodes: ordered,
            edges,
            pipe_ids: pipes.iter().map(|p| p.id.clone()).collect(),
            refinement_limit_km: None,
            permutation,
        };
        graph.validate()?;
        Ok(graph)
    }

    fn validate(&self) -> Result<()> {
        let mut incoming = vec![0usize; self.nodes.len()];
        for e in &self.edges {
            if self.nodes[e.to].role == NodeRole::Slack {
                return Err(Error::EdgeIntoSlack(e.id.clone()));
            }
            incoming[e.to] += 1;
        }
        for (j, n) in self.nodes.iter().enumerate() {
            if n.role != NodeRole::Slack && incoming[j] == 0 {
                return Err(Error::NoIncomingPipe(n.id.clone()));
            }
        }

        let mut adj = vec![Vec::new(); self.nodes.len()];
        for e in &self.edges {
            adj[e.from].push(e.to);
            adj[e.to].push(e.from);
        }
        let mut visited = vec![false; self.nodes.len()];
        let mut queue = VecDeque::from([0usize]);
        visited[0] = true;
        while let Some(i) = queue.pop_front() {
            for &j in &adj[i] {
                if !visited[j] {
                    visited[j] = true;
                    queue.push_back(j);
                }
            }
        }
        if let Some(j) = visited.iter().position(|v| !v) {
            return Err(Error::Disconnected(self.nodes[j].id.clone()));
        }
        Ok(())
    }

    /// Subdivide every edge longer than `max_km` into equal sub-edges.
    pub fn refine(&self, max_km: f64) -> Result<NetworkGraph> {
        if !(max_km.is_finite() && max_km > 0.0) {
            return Err(Error::InvalidRefinement(max_km));
        }
        let mut nodes = self.nodes.clone();
        let mut edges = Vec::with_capacity(self.edges.len());
        for e in &self.edges {
            let pieces = segment_count(e.length_km, max_km);
            if pieces == 1 {
                edges.push(e.clone());
                continue;
            }
            let sub_len = e.length_km / pieces as f64;
            let mut prev = e.from;
            for s in 0..pieces {
                let to = if s + 1 == pieces {
                    e.to
                } else {
                    nodes.push(Node {
                        id: format!("{}#{}", e.id, s + 1),
                        role: NodeRole::Withdrawal,
                        auxiliary: true,
                    });
                    nodes.len() - 1
                };
                edges.push(Edge {
                    id: format!("{}@{}", e.id, s),
                    from: prev,
                    to,
                    length_km: sub_len,
                    diameter_m: e.diameter_m,
                    friction: e.friction,
                    pipe: e.pipe,
                    compressor: e.compressor && s == 0,
                    regulator: e.regulator && s + 1 == pieces,
                });
                prev = to;
            }
        }
        let limit = match self.refinement_limit_km {
            Some(l) => l.min(max_km),
            None => max_km,
        };
        Ok(NetworkGraph {
            nodes,
            edges,
            pipe_ids: self.pipe_ids.clone(),
            n_slack: self.n_slack,
            n_injection: self.n_injection,
            refinement_limit_km: Some(limit),
            permutation: self.permutation.clone(),
        })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn pipe_ids(&self) -> &[String] {
        &self.pipe_ids
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn n_slack(&self) -> usize {
        self.n_slack
    }

    pub fn n_injection(&self) -> usize {
        self.n_injection
    }

    /// Number of non-slack nodes.
    pub fn n_free(&self) -> usize {
        self.nodes.len() - self.n_slack
    }

    pub fn refinement_limit_km(&self) -> Option<f64> {
        self.refinement_limit_km
    }

    /// Canonical index of each input node, in input order.
    pub fn permutation(&self) -> &[usize] {
        &self.permutation
    }

    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.id == id)
    }

    pub fn pipe_index(&self, id: &str) -> Option<usize> {
        self.pipe_ids.iter().position(|p| p == id)
    }

    pub fn total_length_km(&self) -> f64 {
        self.edges.iter().map(|e| e.length_km).sum()
    }

    /// Total pipe volume, m^3.
    pub fn total_volume(&self) -> f64 {
        self.edges.iter().map(|e| e.area() * e.length_m()).sum()
    }

    /// Edges of a single-pipe graph ordered from inlet to outlet, if the
    /// graph is a simple path from one slack node.
    pub fn path_order(&self) -> Option<Vec<usize>> {
        if self.n_slack != 1 || self.edges.len() + 1 != self.nodes.len() {
            return None;
        }
        let mut out_edge = vec![None; self.nodes.len()];
        for (k, e) in self.edges.iter().enumerate() {
            if out_edge[e.from].replace(k).is_some() {
                return None;
            }
        }
        let mut order = Vec::with_capacity(self.edges.len());
        let mut node = 0;
        while let Some(k) = out_edge[node] {
            order.push(k);
            node = self.edges[k].to;
        }
        (order.len() == self.edges.len()).then_some(order)
    }

    /// Adjacency of the non-slack nodes through shared edges (state slots).
    pub fn free_adjacency(&self) -> Vec<Vec<usize>> {
        let ns = self.n_slack;
        let mut adj = vec![Vec::new(); self.n_free()];
        for e in &self.edges {
            if e.from >= ns {
                adj[e.from - ns].push(e.to - ns);
                adj[e.to - ns].push(e.from - ns);
            }
        }
        for a in &mut adj {
            a.sort_unstable();
            a.dedup();
        }
        adj
    }
}

fn segment_count(length_km: f64, max_km: f64) -> usize {
    let ratio = length_km / max_km;
    // guard against 50.000000001 style rounding of exact multiples
    let n = (ratio - 1e-9 * ratio.max(1.0)).ceil();
    (n as usize).max(1)
}

/// Compressor and regulator ratios per physical pipe at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlValues {
    pub compressor: Vec<f64>,
    pub regulator: Vec<f64>,
}

impl ControlValues {
    pub fn unit(n_pipes: usize) -> Self {
        ControlValues { compressor: vec![1.0; n_pipes], regulator: vec![1.0; n_pipes] }
    }
}

/// Weighted and signed incidence matrices of a graph at one instant.
///
/// Rows are edges. The `*_plus` blocks are the positive (outlet) parts and
/// the `*_minus` blocks the negative (inlet) parts, so that
/// `m_d = m_d_plus + m_d_minus` and `|m_d| = m_d_plus - m_d_minus`.
#[derive(Debug, Clone)]
pub struct IncidenceSet {
    pub m: DMatrix<f64>,
    pub m_s: DMatrix<f64>,
    pub m_d: DMatrix<f64>,
    pub m_d_plus: DMatrix<f64>,
    pub m_d_minus: DMatrix<f64>,
    pub q_d: DMatrix<f64>,
    pub q_d_plus: DMatrix<f64>,
    pub q_d_minus: DMatrix<f64>,
    pub q_s: DMatrix<f64>,
    pub q_s_minus: DMatrix<f64>,
    /// Edge areas (diagonal of X), m^2.
    pub area: DVector<f64>,
    /// Edge lengths (diagonal of L), m.
    pub length: DVector<f64>,
    /// Nodal capacities (diagonal of R), m^3.
    pub capacity: DVector<f64>,
    /// Flux closure coefficients (diagonal of Lambda).
    pub flow_coeff: DVector<f64>,
    /// Edge endpoints in canonical node indices.
    pub from: Vec<usize>,
    pub to: Vec<usize>,
    /// Compression ratio at each edge inlet.
    pub inlet_ratio: Vec<f64>,
    /// Regulation ratio at each edge outlet.
    pub outlet_ratio: Vec<f64>,
    pub n_slack: usize,
}

pub fn incidence_matrices(g: &NetworkGraph, controls: &ControlValues) -> Result<IncidenceSet> {
    IncidenceSet::assemble(g, controls)
}

impl IncidenceSet {
    pub fn assemble(g: &NetworkGraph, controls: &ControlValues) -> Result<Self> {
        let n_pipes = g.pipe_ids.len();
        if controls.compressor.len() != n_pipes || controls.regulator.len() != n_pipes {
            return Err(Error::Dimension {
                expected: n_pipes,
                got: controls.compressor.len().min(controls.regulator.len()),
            });
        }
        for (k, (&c, &r)) in controls.compressor.iter().zip(&controls.regulator).enumerate() {
            for v in [c, r] {
                if !(v >= 1.0) {
                    return Err(Error::ControlRatio { pipe: g.pipe_ids[k].clone(), value: v });
                }
            }
        }

        let ne = g.n_edges();
        let nv = g.n_nodes();
        let ns = g.n_slack;
        let nd = nv - ns;
        let mut m = DMatrix::zeros(ne, nv);
        let mut inlet_ratio = Vec::with_capacity(ne);
        let mut outlet_ratio = Vec::with_capacity(ne);
        for (k, e) in g.edges.iter().enumerate() {
            let mu_in = if e.compressor { controls.compressor[e.pipe] } else { 1.0 };
            let mu_out = if e.regulator { controls.regulator[e.pipe] } else { 1.0 };
            m[(k, e.to)] = mu_out;
            m[(k, e.from)] = -mu_in;
            inlet_ratio.push(mu_in);
            outlet_ratio.push(mu_out);
        }
        let m_s = m.columns(0, ns).into_owned();
        let m_d = m.columns(ns, nd).into_owned();
        let m_d_plus = m_d.map(|v| v.max(0.0));
        let m_d_minus = m_d.map(|v| v.min(0.0));
        let sign = |a: &DMatrix<f64>| a.map(|v| if v > 0.0 { 1.0 } else if v < 0.0 { -1.0 } else { 0.0 });
        let q_s = sign(&m_s);
        let q_s_minus = q_s.map(|v: f64| v.min(0.0));

        let area = DVector::from_iterator(ne, g.edges.iter().map(Edge::area));
        let length = DVector::from_iterator(ne, g.edges.iter().map(Edge::length_m));
        let flow_coeff = DVector::from_iterator(ne, g.edges.iter().map(Edge::flow_coefficient));
        let mut capacity = DVector::zeros(nd);
        for (k, e) in g.edges.iter().enumerate() {
            capacity[e.to - ns] += area[k] * length[k] * outlet_ratio[k];
        }

        Ok(IncidenceSet {
            q_d: sign(&m_d),
            q_d_plus: sign(&m_d_plus),
            q_d_minus: sign(&m_d_minus),
            q_s,
            q_s_minus,
            m,
            m_s,
            m_d,
            m_d_plus,
            m_d_minus,
            area,
            length,
            capacity,
            flow_coeff,
            from: g.edges.iter().map(|e| e.from).collect(),
            to: g.edges.iter().map(|e| e.to).collect(),
            inlet_ratio,
            outlet_ratio,
            n_slack: ns,
        })
    }

    pub fn n_edges(&self) -> usize {
        self.from.len()
    }

    pub fn n_free(&self) -> usize {
        self.capacity.len()
    }

    /// Mass matrix `R = Qbar_d^T X L Mbar_d`, assembled from the matrices.
    pub fn mass_matrix(&self) -> DMatrix<f64> {
        let xl = DMatrix::from_diagonal(&self.area.component_mul(&self.length));
        self.q_d_plus.transpose() * xl * &self.m_d_plus
    }
}
