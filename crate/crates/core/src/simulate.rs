//! Real-time operation of a cleared schedule under forecast errors.
//!
//! Each prosumer's output deviates by ω ~ N(0, σ²) per timestep; flexible
//! units respond with `g̃ = g − α·Δ` where Δ = Σ ω. Flows follow from the
//! lossless balance and voltages from the linear drop along each path.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::formulation::VarKey;
use crate::grid::{NodeId, ScenarioDay};
use crate::market::MarketSolution;
use crate::recovery::{MeasurementSet, NodeReport};

/// Forecast errors of one simulated day, `[node][t]` (zero without DER).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Realization {
    pub omega: Vec<Vec<f64>>,
}

impl Realization {
    pub fn draw<R: Rng + ?Sized>(sc: &ScenarioDay, rng: &mut R) -> Self {
        let steps = sc.steps();
        let omega = (0..sc.node_count())
            .map(|n| {
                (0..steps)
                    .map(|t| {
                        let s = sc.profile(n).map_or(0.0, |p| p.sigma(t));
                        if s > 0.0 {
                            Normal::new(0.0, s).expect("positive σ").sample(rng)
                        } else {
                            0.0
                        }
                    })
                    .collect()
            })
            .collect();
        Realization { omega }
    }

    pub fn zero(sc: &ScenarioDay) -> Self {
        Realization { omega: vec![vec![0.0; sc.steps()]; sc.node_count()] }
    }

    /// Δ_t = Σ_r ω_{r,t}.
    pub fn delta(&self, t: usize) -> f64 {
        self.omega.iter().map(|o| o[t]).sum()
    }
}

/// Realized physical quantities, `[node][t]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Operation {
    /// Net active injection; row 0 is zero (the substation has no load).
    pub net_p: Vec<Vec<f64>>,
    pub net_q: Vec<Vec<f64>>,
    /// Flow into each node from its ancestor; row 0 is the substation import.
    pub flow_p: Vec<Vec<f64>>,
    pub flow_q: Vec<Vec<f64>>,
    /// Output of flexible units after their reserve response.
    pub generation: Vec<Vec<f64>>,
}

impl Operation {
    /// Metered data of every node.
    pub fn measurements(&self) -> MeasurementSet {
        let steps = self.net_p.first().map_or(0, Vec::len);
        let reports = (0..self.net_p.len())
            .map(|n| {
                Some(NodeReport {
                    net_p: self.net_p[n].clone(),
                    net_q: self.net_q[n].clone(),
                    flow_p: self.flow_p[n].clone(),
                    flow_q: self.flow_q[n].clone(),
                })
            })
            .collect();
        MeasurementSet { steps, reports }
    }

    /// Net active injection per node with row 0 replaced by the substation
    /// import, so the row layout matches scheduled injections.
    pub fn actual_injection(&self) -> Vec<Vec<f64>> {
        let mut rows = self.net_p.clone();
        rows[0] = self.flow_p[0].clone();
        rows
    }
}

/// Applies the reserve policies of `sol` to the forecast errors `real`.
pub fn operate(sc: &ScenarioDay, sol: &MarketSolution, real: &Realization) -> Operation {
    let (nodes, steps) = (sc.node_count(), sc.steps());
    let mut net_p = vec![vec![0.0; steps]; nodes];
    let mut net_q = vec![vec![0.0; steps]; nodes];
    let mut generation = vec![vec![0.0; steps]; nodes];
    for t in 0..steps {
        let delta = real.delta(t);
        for n in 1..nodes {
            let p = sc.profile(n).expect("every non-root node has a profile");
            if p.is_flexible() {
                generation[n][t] = sol.generation(n, t) - sol.alpha(n, t) * delta;
            }
            net_p[n][t] = generation[n][t] + p.forecast(t) + real.omega[n][t] - p.demand_p[t];
            net_q[n][t] = -p.demand_q[t];
        }
    }
    let g = &sc.network;
    let mut flow_p = vec![vec![0.0; steps]; nodes];
    let mut flow_q = vec![vec![0.0; steps]; nodes];
    // Children before ancestors.
    for &n in g.bfs_order().iter().rev() {
        for t in 0..steps {
            let (mut fp, mut fq) = (-net_p[n][t], -net_q[n][t]);
            for &c in g.children(n) {
                fp += flow_p[c][t];
                fq += flow_q[c][t];
            }
            flow_p[n][t] = fp;
            flow_q[n][t] = fq;
        }
    }
    Operation { net_p, net_q, flow_p, flow_q, generation }
}

/// Original chance constraints checked by [`violation_rates`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CcKind {
    VoltageMax,
    VoltageMin,
    Flow,
    GenerationMax,
    GenerationMin,
    BatteryMax,
    BatteryMin,
}

/// Violation frequency of one chance constraint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViolationRate {
    pub kind: CcKind,
    pub node: NodeId,
    pub t: usize,
    /// Dodecagon plane for flow limits, zero otherwise.
    pub plane: usize,
    pub epsilon: f64,
    pub rate: f64,
}

/// Monte-Carlo violation frequency of every chance constraint at `sol`.
/// A draw violates a constraint when it exceeds its limit by more than
/// `slack`, which absorbs the solver's own feasibility tolerance.
pub fn violation_rates<R: Rng + ?Sized>(
    sc: &ScenarioDay,
    sol: &MarketSolution,
    draws: usize,
    slack: f64,
    rng: &mut R,
) -> Vec<ViolationRate> {
    let g = &sc.network;
    let (nodes, steps) = (sc.node_count(), sc.steps());
    let eps = sc.market.epsilons;
    let flex = sc.flexible_nodes();
    let down: Vec<Vec<NodeId>> =
        (0..nodes).map(|n| if n == 0 { Vec::new() } else { g.downstream_set(n).expect("non-root").into_iter().collect() }).collect();
    let alpha_down: Vec<Vec<f64>> = (0..nodes)
        .map(|m| (0..steps).map(|t| down[m].iter().filter(|j| flex.contains(j)).map(|&j| sol.alpha(j, t)).sum()).collect())
        .collect();
    let paths: Vec<Vec<NodeId>> = (0..nodes).map(|n| if n == 0 { Vec::new() } else { g.path_from_root(n) }).collect();

    let mut rates: Vec<ViolationRate> = Vec::new();
    let mut push = |kind, node, t, plane, epsilon| {
        rates.push(ViolationRate { kind, node, t, plane, epsilon, rate: 0.0 });
        rates.len() - 1
    };
    // Index layout mirrors the evaluation loop below.
    for t in 0..steps {
        for n in g.non_root() {
            push(CcKind::VoltageMax, n, t, 0, eps.voltage);
            push(CcKind::VoltageMin, n, t, 0, eps.voltage);
            for k in 0..sc.dodecagon.len() {
                push(CcKind::Flow, n, t, k, eps.flow);
            }
        }
        for &v in &flex {
            push(CcKind::GenerationMax, v, t, 0, eps.generation);
            push(CcKind::GenerationMin, v, t, 0, eps.generation);
            if sc.profile(v).is_some_and(|p| p.has_battery()) {
                push(CcKind::BatteryMax, v, t, 0, eps.battery);
                push(CcKind::BatteryMin, v, t, 0, eps.battery);
            }
        }
    }

    let mut counts = vec![0u64; rates.len()];
    let mut dflow = vec![0.0; nodes];
    let mut battery_shift = vec![0.0; nodes];
    for _ in 0..draws {
        let real = Realization::draw(sc, rng);
        battery_shift.iter_mut().for_each(|b| *b = 0.0);
        let mut idx = 0;
        for t in 0..steps {
            let delta = real.delta(t);
            for m in g.non_root() {
                let own: f64 = down[m].iter().map(|&r| real.omega[r][t]).sum();
                dflow[m] = alpha_down[m][t] * delta - own;
            }
            for n in g.non_root() {
                let du: f64 = -2.0 * paths[n].iter().map(|&m| g.line(m).expect("line").resistance * dflow[m]).sum::<f64>();
                let u = sol.value(VarKey::U(n, t)) + du;
                counts[idx] += (u - g.u_max[n] > slack) as u64;
                counts[idx + 1] += (g.u_min[n] - u > slack) as u64;
                idx += 2;
                let line = g.line(n).expect("line");
                let fp = sol.value(VarKey::Fp(n, t)) + dflow[n];
                let fq = sol.value(VarKey::Fq(n, t));
                for h in &sc.dodecagon {
                    counts[idx] += (h.eval(fp, fq, line.s_max) > slack) as u64;
                    idx += 1;
                }
            }
            for &v in &flex {
                let prof = sc.profile(v).expect("profile");
                let lim = prof.flex.expect("flexible");
                let a = sol.alpha(v, t);
                let gen = sol.generation(v, t) - a * delta;
                counts[idx] += (gen - lim.p_max > slack) as u64;
                counts[idx + 1] += (lim.p_min - gen > slack) as u64;
                idx += 2;
                if let Some(bat) = prof.battery {
                    battery_shift[v] += a * delta;
                    let b = sol.value(VarKey::B(v, t)) + battery_shift[v];
                    counts[idx] += (b - bat.b_max > slack) as u64;
                    counts[idx + 1] += (bat.b_min - b > slack) as u64;
                    idx += 2;
                }
            }
        }
    }
    for (r, c) in rates.iter_mut().zip(counts) {
        r.rate = c as f64 / draws.max(1) as f64;
    }
    rates
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::formulation::Variant;
    use crate::market::solve_central;
    use crate::solver::SolverSettings;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn zero_errors_reproduce_the_schedule() {
        let sc = fixtures::three_node_spec().build();
        let sol = solve_central(&sc, Variant::ChanceConstrained, &SolverSettings::default()).unwrap();
        let op = operate(&sc, &sol, &Realization::zero(&sc));
        for t in 0..sc.steps() {
            assert!((op.flow_p[0][t] - sol.substation_net(t)).abs() < 1e-6);
            for n in sc.network.non_root() {
                assert!((op.flow_p[n][t] - sol.value(VarKey::Fp(n, t))).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn flows_balance_under_errors() {
        let sc = fixtures::three_node_spec().build();
        let sol = solve_central(&sc, Variant::ChanceConstrained, &SolverSettings::default()).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let real = Realization::draw(&sc, &mut rng);
        let op = operate(&sc, &sol, &real);
        for t in 0..sc.steps() {
            let total: f64 = op.net_p.iter().map(|r| r[t]).sum();
            assert!((op.flow_p[0][t] + total).abs() < 1e-9);
            // Reserves cancel the aggregate error.
            let gen_shift: f64 = sc.flexible_nodes().iter().map(|&v| op.generation[v][t] - sol.generation(v, t)).sum();
            assert!((gen_shift + real.delta(t)).abs() < 1e-6);
        }
    }
}
