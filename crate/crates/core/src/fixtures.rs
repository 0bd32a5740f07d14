//! Synthetic scenario generator behind the bundled fixture files.
//!
//! Profiles are smooth deterministic curves over one day: an evening-peaked
//! load shape, a midday solar bell and a wholesale price with morning and
//! evening peaks. The committed TOML files under `fixtures/` are the output of
//! [`bundled`] and a test keeps the two in sync.

use std::f64::consts::PI;

use crate::grid::{
    BatteryProfile, DerProfile, Edge, Epsilons, FlexLimits, MarketData, NetworkGraph, NodeId, ParticipantProfile,
    ScenarioDay,
};

/// Role of a non-substation node in a generated fixture.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Load,
    Prosumer,
    Storage,
    ProsumerStorage,
}

#[derive(Debug, Clone)]
pub struct FixtureSpec {
    pub name: &'static str,
    pub steps: usize,
    /// (child, ancestor) pairs.
    pub edges: Vec<(NodeId, NodeId)>,
    /// Role per node 1..=N.
    pub roles: Vec<Role>,
    /// Peak active demand per node 1..=N.
    pub peak_demand: Vec<f64>,
    pub epsilon: f64,
}

fn hour(t: usize, steps: usize) -> f64 {
    (t as f64 + 0.5) * 24.0 / steps as f64
}

fn round4(v: f64) -> f64 {
    (v * 1e4).round() / 1e4
}

fn load_shape(h: f64) -> f64 {
    let morning = (-((h - 8.0) / 2.5).powi(2)).exp();
    let evening = (-((h - 19.0) / 3.0).powi(2)).exp();
    0.45 + 0.25 * morning + 0.55 * evening
}

fn solar_shape(h: f64) -> f64 {
    if (6.0..=18.0).contains(&h) {
        (PI * (h - 6.0) / 12.0).sin().powi(2)
    } else {
        0.0
    }
}

fn wholesale(h: f64) -> f64 {
    let morning = (-((h - 8.0) / 2.0).powi(2)).exp();
    let evening = (-((h - 19.0) / 2.5).powi(2)).exp();
    0.8 + 0.3 * morning + 0.6 * evening - 0.2 * solar_shape(h)
}

impl FixtureSpec {
    pub fn build(&self) -> ScenarioDay {
        let n = self.edges.len() + 1;
        assert_eq!(self.roles.len(), n - 1);
        assert_eq!(self.peak_demand.len(), n - 1);
        let steps = self.steps;
        let hours: Vec<f64> = (0..steps).map(|t| hour(t, steps)).collect();

        let mut profiles = Vec::with_capacity(n - 1);
        for k in 1..n {
            let role = self.roles[k - 1];
            let peak = self.peak_demand[k - 1];
            // Slight per-node phase shift so nodes are not exact copies.
            let shift = 0.35 * (k % 4) as f64;
            let demand_p: Vec<f64> = hours.iter().map(|&h| round4(peak * load_shape(h - shift))).collect();
            let demand_q: Vec<f64> = demand_p.iter().map(|&d| round4(0.3 * d)).collect();
            let mut p = ParticipantProfile::pure_load(k, demand_p, demand_q);
            let solar_peak = 0.35 + 0.05 * (k % 3) as f64;
            if matches!(role, Role::Prosumer | Role::ProsumerStorage) {
                let forecast: Vec<f64> = hours.iter().map(|&h| round4(solar_peak * solar_shape(h))).collect();
                let sigma = forecast.iter().map(|&f| round4(0.005 + 0.15 * f)).collect();
                p.der = Some(DerProfile { forecast, sigma });
            }
            if matches!(role, Role::Storage | Role::ProsumerStorage) {
                p.battery = Some(BatteryProfile { b_min: 0.1, b_max: 1.35, b0: 0.6 });
            }
            if role != Role::Load {
                p.flex = Some(FlexLimits { p_min: -0.4, p_max: 0.4, cost_quadratic: 1.0, cost_linear: 0.01 });
            }
            profiles.push(p);
        }

        // Line ratings follow the peak demand carried by each line.
        let mut down_peak = self.peak_demand.clone();
        down_peak.insert(0, 0.0);
        let mut order = vec![0usize];
        let mut i = 0;
        while i < order.len() {
            let a = order[i];
            order.extend(self.edges.iter().filter(|e| e.1 == a).map(|e| e.0));
            i += 1;
        }
        for &k in order.iter().rev() {
            if let Some(&(_, a)) = self.edges.iter().find(|e| e.0 == k) {
                down_peak[a] += down_peak[k];
            }
        }
        let edges: Vec<Edge> = self
            .edges
            .iter()
            .map(|&(c, a)| Edge {
                child: c,
                ancestor: a,
                r: round4(0.006 + 0.003 * (c % 5) as f64),
                x: round4(0.005 + 0.0025 * (c % 4) as f64),
                s: round4(0.4 + 1.6 * 1.25 * down_peak[c]),
            })
            .collect();
        let network = NetworkGraph::from_edges(n, &edges, 1.0, vec![0.81; n], vec![1.21; n])
            .expect("fixture topology is a tree");

        let w: Vec<f64> = hours.iter().map(|&h| round4(wholesale(h))).collect();
        let tariff_import: Vec<f64> = w.iter().map(|&x| round4(x + 0.3)).collect();
        let tariff_export: Vec<f64> = w.iter().map(|&x| round4(x - 0.3)).collect();
        let market = MarketData {
            steps,
            mva_base: 1.0,
            day_ahead_price: w.clone(),
            regulation_up: tariff_import.clone(),
            regulation_down: tariff_export.clone(),
            tariff_import,
            tariff_export,
            epsilons: Epsilons::uniform(self.epsilon),
        };
        ScenarioDay::new(self.name, network, profiles, market).expect("fixture is valid")
    }
}

pub fn two_node_spec() -> FixtureSpec {
    FixtureSpec {
        name: "two-node",
        steps: 2,
        edges: vec![(1, 0)],
        roles: vec![Role::ProsumerStorage],
        peak_demand: vec![0.3],
        epsilon: 0.05,
    }
}

pub fn three_node_spec() -> FixtureSpec {
    FixtureSpec {
        name: "three-node",
        steps: 4,
        edges: vec![(1, 0), (2, 1)],
        roles: vec![Role::Prosumer, Role::ProsumerStorage],
        peak_demand: vec![0.25, 0.3],
        epsilon: 0.05,
    }
}

pub fn five_node_spec() -> FixtureSpec {
    FixtureSpec {
        name: "five-node",
        steps: 6,
        edges: vec![(1, 0), (2, 1), (3, 1), (4, 3)],
        roles: vec![Role::Load, Role::ProsumerStorage, Role::Load, Role::Prosumer],
        peak_demand: vec![0.2, 0.3, 0.25, 0.35],
        epsilon: 0.05,
    }
}

pub fn fifteen_node_spec(steps: usize) -> FixtureSpec {
    use Role::*;
    FixtureSpec {
        name: "fifteen-node",
        steps,
        edges: vec![
            (1, 0),
            (2, 1),
            (3, 2),
            (4, 3),
            (5, 4),
            (6, 5),
            (7, 2),
            (8, 7),
            (9, 8),
            (10, 1),
            (11, 10),
            (12, 11),
            (13, 12),
            (14, 11),
            (15, 14),
        ],
        roles: vec![
            Load,
            Load,
            ProsumerStorage,
            Load,
            Prosumer,
            Load,
            Storage,
            Load,
            Load,
            ProsumerStorage,
            Load,
            Prosumer,
            Load,
            Load,
            Load,
        ],
        peak_demand: vec![
            0.15, 0.2, 0.3, 0.25, 0.35, 0.2, 0.3, 0.15, 0.25, 0.3, 0.2, 0.35, 0.15, 0.25, 0.2,
        ],
        epsilon: 0.05,
    }
}

/// Timesteps of the bundled fifteen-node day.
pub const FIFTEEN_NODE_STEPS: usize = 24;

/// Bundled fixtures as (file name, scenario).
pub fn bundled() -> Vec<(&'static str, ScenarioDay)> {
    vec![
        ("two_node.toml", two_node_spec().build()),
        ("three_node.toml", three_node_spec().build()),
        ("five_node.toml", five_node_spec().build()),
        ("fifteen_node.toml", fifteen_node_spec(FIFTEEN_NODE_STEPS).build()),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_are_valid() {
        for (_, sc) in bundled() {
            assert!(!sc.flexible_nodes().is_empty());
            assert!(sc.total_demand() > 0.0);
        }
    }

    #[test]
    fn fifteen_node_roles() {
        let sc = fifteen_node_spec(FIFTEEN_NODE_STEPS).build();
        assert_eq!(sc.node_count(), 16);
        assert_eq!(sc.flexible_nodes(), vec![3, 5, 7, 10, 12]);
        assert_eq!(sc.prosumers(), vec![3, 5, 10, 12]);
        assert_eq!(sc.batteries(), vec![3, 7, 10]);
    }
}
