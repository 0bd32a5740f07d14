//! Radial network, participants and day-ahead scenario data.
//!
//! Everything here is in per-unit on the scenario's declared MVA base. Squared
//! voltages are in p.u.², energies in p.u.·h and prices in currency per p.u.·h.

mod scenario;

pub use scenario::{load_scenario, parse_scenario, save_scenario, scenario_to_string};

use std::collections::{BTreeSet, VecDeque};
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type NodeId = usize;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("failed to read scenario file: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed scenario file: {0}")]
    Parse(String),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, GridError> {
    Err(GridError::Invalid(msg.into()))
}

/// Electrical parameters of the line feeding a non-root node from its ancestor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub resistance: f64,
    pub reactance: f64,
    /// Apparent-power limit S_n.
    pub s_max: f64,
}

/// Rooted radial tree. Node 0 is the substation.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkGraph {
    ancestor: Vec<Option<NodeId>>,
    children: Vec<Vec<NodeId>>,
    lines: Vec<Option<Line>>,
    /// Fixed squared voltage at the substation.
    pub u0: f64,
    pub u_min: Vec<f64>,
    pub u_max: Vec<f64>,
}

/// One edge as it appears in a scenario file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub child: NodeId,
    pub ancestor: NodeId,
    pub r: f64,
    pub x: f64,
    pub s: f64,
}

impl NetworkGraph {
    /// Builds the tree from a child→ancestor edge list and checks that it is a
    /// connected tree rooted at 0 with positive line parameters.
    pub fn from_edges(
        node_count: usize,
        edges: &[Edge],
        u0: f64,
        u_min: Vec<f64>,
        u_max: Vec<f64>,
    ) -> Result<Self, GridError> {
        if node_count < 2 {
            return invalid("network needs the substation and at least one node");
        }
        if edges.len() != node_count - 1 {
            return invalid(format!(
                "a tree on {node_count} nodes has {} edges, found {}",
                node_count - 1,
                edges.len()
            ));
        }
        if u_min.len() != node_count || u_max.len() != node_count {
            return invalid("voltage limit arrays must have one entry per node");
        }
        let mut ancestor = vec![None; node_count];
        let mut children = vec![Vec::new(); node_count];
        let mut lines = vec![None; node_count];
        for e in edges {
            if e.child >= node_count || e.ancestor >= node_count {
                return invalid(format!("edge ({}, {}) references an unknown node", e.ancestor, e.child));
            }
            if e.child == 0 {
                return invalid("the substation cannot have an ancestor");
            }
            if e.child == e.ancestor {
                return invalid(format!("self-loop at node {}", e.child));
            }
            if ancestor[e.child].is_some() {
                return invalid(format!("node {} has two ancestors", e.child));
            }
            if !(e.r > 0.0 && e.x > 0.0) {
                return invalid(format!("line into node {} needs r > 0 and x > 0", e.child));
            }
            if !(e.s > 0.0) {
                return invalid(format!("line into node {} needs S > 0", e.child));
            }
            ancestor[e.child] = Some(e.ancestor);
            children[e.ancestor].push(e.child);
            lines[e.child] = Some(Line { resistance: e.r, reactance: e.x, s_max: e.s });
        }
        for c in &mut children {
            c.sort_unstable();
        }
        let graph = NetworkGraph { ancestor, children, lines, u0, u_min, u_max };
        if graph.bfs_order().len() != node_count {
            return invalid("graph has a cycle or is disconnected");
        }
        if !(u0 > 0.0) {
            return invalid("u0 must be positive");
        }
        for n in 1..node_count {
            if !(graph.u_min[n] < graph.u_max[n]) {
                return invalid(format!("node {n} needs u_min < u_max"));
            }
        }
        Ok(graph)
    }

    pub fn node_count(&self) -> usize {
        self.ancestor.len()
    }

    /// Non-substation nodes, N⁺.
    pub fn non_root(&self) -> impl Iterator<Item = NodeId> + '_ {
        1..self.node_count()
    }

    pub fn ancestor(&self, n: NodeId) -> Option<NodeId> {
        self.ancestor.get(n).copied().flatten()
    }

    pub fn children(&self, n: NodeId) -> &[NodeId] {
        &self.children[n]
    }

    pub fn line(&self, n: NodeId) -> Option<&Line> {
        self.lines.get(n).and_then(Option::as_ref)
    }

    pub fn edges(&self) -> Vec<Edge> {
        self.non_root()
            .map(|n| {
                let l = self.lines[n].expect("non-root node has a line");
                Edge {
                    child: n,
                    ancestor: self.ancestor[n].expect("non-root node has an ancestor"),
                    r: l.resistance,
                    x: l.reactance,
                    s: l.s_max,
                }
            })
            .collect()
    }

    /// Breadth-first order from the substation.
    pub fn bfs_order(&self) -> Vec<NodeId> {
        let mut seen = vec![false; self.node_count()];
        let mut order = Vec::with_capacity(self.node_count());
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        while let Some(n) = queue.pop_front() {
            order.push(n);
            for &c in &self.children[n] {
                if !seen[c] {
                    seen[c] = true;
                    queue.push_back(c);
                }
            }
        }
        order
    }

    /// `n` together with every descendant of `n`.
    pub fn downstream_set(&self, n: NodeId) -> Result<BTreeSet<NodeId>, GridError> {
        if n == 0 || n >= self.node_count() {
            return Err(GridError::UnknownNode(n));
        }
        let mut out = BTreeSet::new();
        let mut stack = vec![n];
        while let Some(k) = stack.pop() {
            out.insert(k);
            stack.extend_from_slice(&self.children[k]);
        }
        Ok(out)
    }

    /// Nodes on the path from the substation to `n`, excluding the substation,
    /// ordered from the top of the feeder down to `n`.
    pub fn path_from_root(&self, n: NodeId) -> Vec<NodeId> {
        let mut path = Vec::new();
        let mut k = n;
        while let Some(a) = self.ancestor(k) {
            path.push(k);
            k = a;
        }
        path.reverse();
        path
    }

    pub fn is_leaf(&self, n: NodeId) -> bool {
        self.children[n].is_empty()
    }
}

/// Controllable output of a flexible unit (DER and/or battery).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlexLimits {
    pub p_min: f64,
    pub p_max: f64,
    /// c^q, currency per p.u.².
    pub cost_quadratic: f64,
    /// c^l, currency per p.u.
    pub cost_linear: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerProfile {
    /// Forecast production h^f_t.
    pub forecast: Vec<f64>,
    /// Standard deviation of the forecast error σ_t.
    pub sigma: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatteryProfile {
    pub b_min: f64,
    pub b_max: f64,
    pub b0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantProfile {
    pub node: NodeId,
    pub demand_p: Vec<f64>,
    pub demand_q: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub der: Option<DerProfile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub battery: Option<BatteryProfile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flex: Option<FlexLimits>,
}

impl ParticipantProfile {
    pub fn pure_load(node: NodeId, demand_p: Vec<f64>, demand_q: Vec<f64>) -> Self {
        ParticipantProfile { node, demand_p, demand_q, der: None, battery: None, flex: None }
    }

    pub fn is_prosumer(&self) -> bool {
        self.der.is_some()
    }

    pub fn has_battery(&self) -> bool {
        self.battery.is_some()
    }

    pub fn is_flexible(&self) -> bool {
        self.is_prosumer() || self.has_battery()
    }

    pub fn forecast(&self, t: usize) -> f64 {
        self.der.as_ref().map_or(0.0, |d| d.forecast[t])
    }

    pub fn sigma(&self, t: usize) -> f64 {
        self.der.as_ref().map_or(0.0, |d| d.sigma[t])
    }

    fn validate(&self, steps: usize) -> Result<(), GridError> {
        let n = self.node;
        if self.demand_p.len() != steps || self.demand_q.len() != steps {
            return invalid(format!("node {n}: demand series must have {steps} entries"));
        }
        if let Some(der) = &self.der {
            if der.forecast.len() != steps || der.sigma.len() != steps {
                return invalid(format!("node {n}: DER series must have {steps} entries"));
            }
            if der.sigma.iter().any(|&s| !(s >= 0.0)) {
                return invalid(format!("node {n}: forecast-error sigma must be non-negative"));
            }
        }
        if let Some(b) = &self.battery {
            if !(b.b_min <= b.b0 && b.b0 <= b.b_max) {
                return invalid(format!("node {n}: battery needs B_min <= B_0 <= B_max"));
            }
        }
        match (&self.flex, self.is_flexible()) {
            (Some(f), true) => {
                if !(f.p_min <= f.p_max) {
                    return invalid(format!("node {n}: generation needs P_min <= P_max"));
                }
                if !(f.cost_quadratic >= 0.0) {
                    return invalid(format!("node {n}: quadratic cost must be non-negative"));
                }
            }
            (None, true) => return invalid(format!("node {n}: flexible node needs generation limits and costs")),
            (Some(_), false) => {
                return invalid(format!("node {n}: generation limits given for a node without DER or battery"))
            }
            (None, false) => {}
        }
        let all = self
            .demand_p
            .iter()
            .chain(&self.demand_q)
            .chain(self.der.iter().flat_map(|d| d.forecast.iter().chain(&d.sigma)));
        if all.into_iter().any(|v| !v.is_finite()) {
            return invalid(format!("node {n}: non-finite series value"));
        }
        Ok(())
    }
}

/// Chance-constraint violation levels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Epsilons {
    pub voltage: f64,
    pub flow: f64,
    pub generation: f64,
    pub battery: f64,
}

impl Epsilons {
    pub fn uniform(eps: f64) -> Self {
        Epsilons { voltage: eps, flow: eps, generation: eps, battery: eps }
    }
}

/// Market-side data of a day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketData {
    pub steps: usize,
    pub mva_base: f64,
    /// Φ⁺_t: price of inflow through the substation.
    pub tariff_import: Vec<f64>,
    /// Φ⁻_t: price paid for outflow through the substation.
    pub tariff_export: Vec<f64>,
    pub epsilons: Epsilons,
    /// Day-ahead reference price λ0 used by imbalance settlement.
    pub day_ahead_price: Vec<f64>,
    pub regulation_up: Vec<f64>,
    pub regulation_down: Vec<f64>,
}

/// Half-plane `a1·fP + a2·fQ + a3·S <= 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HalfPlane {
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
}

impl HalfPlane {
    pub fn eval(&self, fp: f64, fq: f64, s: f64) -> f64 {
        self.a1 * fp + self.a2 * fq + self.a3 * s
    }
}

/// Regular dodecagon inscribed in the circle of radius S. Edge normals sit at
/// multiples of 30°, the first at angle 0.
pub fn dodecagon_coefficients() -> [HalfPlane; 12] {
    let inradius = (PI / 12.0).cos();
    std::array::from_fn(|k| {
        let phi = k as f64 * PI / 6.0;
        HalfPlane { a1: phi.cos(), a2: phi.sin(), a3: -inradius }
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioDay {
    pub name: String,
    pub network: NetworkGraph,
    /// Indexed by node id; entry 0 (substation) is `None`.
    pub profiles: Vec<Option<ParticipantProfile>>,
    pub market: MarketData,
    pub dodecagon: [HalfPlane; 12],
}

impl ScenarioDay {
    pub fn new(
        name: impl Into<String>,
        network: NetworkGraph,
        profiles: Vec<ParticipantProfile>,
        market: MarketData,
    ) -> Result<Self, GridError> {
        let n = network.node_count();
        let mut slots: Vec<Option<ParticipantProfile>> = vec![None; n];
        for p in profiles {
            if p.node == 0 || p.node >= n {
                return invalid(format!("profile for node {} outside N+", p.node));
            }
            if slots[p.node].is_some() {
                return invalid(format!("duplicate profile for node {}", p.node));
            }
            let node = p.node;
            slots[node] = Some(p);
        }
        if let Some(missing) = (1..n).find(|&k| slots[k].is_none()) {
            return invalid(format!("node {missing} has no participant profile"));
        }
        let sc = ScenarioDay {
            name: name.into(),
            network,
            profiles: slots,
            market,
            dodecagon: dodecagon_coefficients(),
        };
        sc.validate()?;
        Ok(sc)
    }

    fn validate(&self) -> Result<(), GridError> {
        let m = &self.market;
        let steps = m.steps;
        if steps == 0 {
            return invalid("timestep count must be positive");
        }
        if !(m.mva_base > 0.0) {
            return invalid("MVA base must be positive");
        }
        for (name, series) in [
            ("tariff_import", &m.tariff_import),
            ("tariff_export", &m.tariff_export),
            ("day_ahead_price", &m.day_ahead_price),
            ("regulation_up", &m.regulation_up),
            ("regulation_down", &m.regulation_down),
        ] {
            if series.len() != steps {
                return invalid(format!("{name} must have {steps} entries"));
            }
        }
        for t in 0..steps {
            if m.tariff_import[t] < m.tariff_export[t] {
                return invalid(format!("tariff arbitrage at t={t}: import price below export price"));
            }
            if !(m.regulation_up[t] >= m.day_ahead_price[t] && m.day_ahead_price[t] >= m.regulation_down[t]) {
                return invalid(format!("regulation prices out of order at t={t}"));
            }
        }
        let e = m.epsilons;
        for (name, v) in [("voltage", e.voltage), ("flow", e.flow), ("generation", e.generation), ("battery", e.battery)] {
            if !(v > 0.0 && v < 0.5) {
                return invalid(format!("{name} epsilon must lie in (0, 0.5)"));
            }
        }
        for p in self.participants() {
            p.validate(steps)?;
        }
        if self.flexible_nodes().is_empty() {
            return invalid("at least one flexible node is needed to balance forecast errors");
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        self.market.steps
    }

    pub fn node_count(&self) -> usize {
        self.network.node_count()
    }

    pub fn participants(&self) -> impl Iterator<Item = &ParticipantProfile> {
        self.profiles.iter().flatten()
    }

    pub fn profile(&self, n: NodeId) -> Option<&ParticipantProfile> {
        self.profiles.get(n).and_then(Option::as_ref)
    }

    /// V = R ∪ M.
    pub fn flexible_nodes(&self) -> Vec<NodeId> {
        self.participants().filter(|p| p.is_flexible()).map(|p| p.node).collect()
    }

    /// R.
    pub fn prosumers(&self) -> Vec<NodeId> {
        self.participants().filter(|p| p.is_prosumer()).map(|p| p.node).collect()
    }

    /// M.
    pub fn batteries(&self) -> Vec<NodeId> {
        self.participants().filter(|p| p.has_battery()).map(|p| p.node).collect()
    }

    pub fn is_flexible(&self, n: NodeId) -> bool {
        self.profile(n).is_some_and(ParticipantProfile::is_flexible)
    }

    pub fn total_demand(&self) -> f64 {
        self.participants().flat_map(|p| p.demand_p.iter()).sum()
    }

    /// Copy with every forecast-error standard deviation set to zero.
    pub fn without_uncertainty(&self) -> ScenarioDay {
        let mut sc = self.clone();
        for p in sc.profiles.iter_mut().flatten() {
            if let Some(d) = &mut p.der {
                d.sigma.iter_mut().for_each(|s| *s = 0.0);
            }
        }
        sc
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path_graph(n: usize) -> NetworkGraph {
        let edges: Vec<Edge> = (1..n).map(|k| Edge { child: k, ancestor: k - 1, r: 0.01, x: 0.01, s: 1.0 }).collect();
        NetworkGraph::from_edges(n, &edges, 1.0, vec![0.81; n], vec![1.21; n]).unwrap()
    }

    #[test]
    fn path_downstream_sets() {
        let g = path_graph(4);
        assert_eq!(g.downstream_set(1).unwrap(), BTreeSet::from([1, 2, 3]));
        assert_eq!(g.downstream_set(3).unwrap(), BTreeSet::from([3]));
        assert!(matches!(g.downstream_set(0), Err(GridError::UnknownNode(0))));
        assert!(matches!(g.downstream_set(9), Err(GridError::UnknownNode(9))));
        assert_eq!(g.path_from_root(3), vec![1, 2, 3]);
    }

    #[test]
    fn rejects_cycles_and_bad_lines() {
        let edges = [
            Edge { child: 1, ancestor: 2, r: 0.01, x: 0.01, s: 1.0 },
            Edge { child: 2, ancestor: 1, r: 0.01, x: 0.01, s: 1.0 },
        ];
        let err = NetworkGraph::from_edges(3, &edges, 1.0, vec![0.8; 3], vec![1.2; 3]).unwrap_err();
        assert!(err.to_string().contains("cycle"), "{err}");

        let edges = [Edge { child: 1, ancestor: 0, r: 0.0, x: 0.01, s: 1.0 }];
        assert!(NetworkGraph::from_edges(2, &edges, 1.0, vec![0.8; 2], vec![1.2; 2]).is_err());
    }

    #[test]
    fn dodecagon_contains_origin_and_excludes_circle_point() {
        let planes = dodecagon_coefficients();
        let s = 2.5;
        assert!(planes.iter().all(|h| h.eval(0.0, 0.0, s) <= 0.0));
        assert!(planes.iter().any(|h| h.eval(s, 0.0, s) > 0.0));
        let a = 15f64.to_radians();
        let (p, q) = (0.9 * s * a.cos(), 0.9 * s * a.sin());
        assert!(planes.iter().all(|h| h.eval(p, q, s) <= 0.0));
        for h in &planes {
            assert!((h.a1 * h.a1 + h.a2 * h.a2 - 1.0).abs() < 1e-12);
            assert!(h.a3 < 0.0);
        }
    }
}
