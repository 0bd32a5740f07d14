//! Cleared market outcome shared by every solver.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::formulation::{build_model, ConicProblem, Model, Tag, VarKey, Variant};
use crate::grid::{NodeId, ScenarioDay};
use crate::solver::{solve, SolverError, SolverResult, SolverSettings, Status};

/// Where prices are read from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum PriceMode {
    /// Local multipliers of the balance and adequacy constraints.
    #[default]
    Duals,
    /// Scaled consensus multipliers of the coupled copies.
    Consensus,
}

/// Energy prices per node and timestep (row 0 is the substation) and the
/// flexibility price per timestep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prices {
    pub energy: Vec<Vec<f64>>,
    pub flexibility: Vec<f64>,
}

impl Prices {
    pub fn zeros(nodes: usize, steps: usize) -> Self {
        Prices { energy: vec![vec![0.0; steps]; nodes], flexibility: vec![0.0; steps] }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarketSolution {
    pub values: BTreeMap<VarKey, f64>,
    /// Expected cost of the cleared schedule.
    pub objective: f64,
    pub duals: Prices,
    pub consensus: Option<Prices>,
}

impl MarketSolution {
    pub fn value(&self, key: VarKey) -> f64 {
        self.values.get(&key).copied().unwrap_or(0.0)
    }

    pub fn prices(&self, mode: PriceMode) -> Option<&Prices> {
        match mode {
            PriceMode::Duals => Some(&self.duals),
            PriceMode::Consensus => self.consensus.as_ref(),
        }
    }

    /// Largest violation of the central constraint set at this solution.
    pub fn max_violation(&self, central: &ConicProblem) -> f64 {
        let x: Vec<f64> = central.columns.iter().map(|&k| self.value(k)).collect();
        central.max_violation(&x)
    }

    pub fn alpha(&self, v: NodeId, t: usize) -> f64 {
        self.value(VarKey::Alpha(v, t))
    }

    pub fn generation(&self, v: NodeId, t: usize) -> f64 {
        self.value(VarKey::G(v, t))
    }

    /// Inflow minus outflow at the substation.
    pub fn substation_net(&self, t: usize) -> f64 {
        self.value(VarKey::Lp(t)) - self.value(VarKey::Sp(t))
    }
}

/// Reads balance and adequacy multipliers out of a solve of `p`, which may be
/// the central problem or any local problem.
pub(crate) fn duals_from(p: &ConicProblem, r: &SolverResult, prices: &mut Prices) {
    for (row, &y) in p.eq.iter().zip(&r.y_eq) {
        match row.tag {
            Tag::ActiveBalance(n, t) => prices.energy[n][t] = -y,
            Tag::SubstationActive(t) => prices.energy[0][t] = -y,
            Tag::Adequacy(t) => prices.flexibility[t] = -y,
            _ => {}
        }
    }
}

pub fn objective_of(model: &Model, values: &BTreeMap<VarKey, f64>) -> f64 {
    model
        .objective
        .iter()
        .map(|o| {
            let x = values.get(&o.key).copied().unwrap_or(0.0);
            o.quad * x * x + o.lin * x
        })
        .sum()
}

#[derive(Debug, thiserror::Error)]
pub enum CentralError {
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("central problem not solved: {0:?}")]
    Status(Status),
}

/// Centralized plaintext clearing.
pub fn solve_central(sc: &ScenarioDay, variant: Variant, settings: &SolverSettings) -> Result<MarketSolution, CentralError> {
    let model = build_model(sc, variant);
    let p = model.central();
    let r = solve(&p, settings)?;
    if !r.is_optimal() {
        return Err(CentralError::Status(r.status));
    }
    let values: BTreeMap<VarKey, f64> = p.columns.iter().copied().zip(r.x.iter().copied()).collect();
    let mut duals = Prices::zeros(sc.node_count(), sc.steps());
    duals_from(&p, &r, &mut duals);
    Ok(MarketSolution { objective: objective_of(&model, &values), values, duals, consensus: None })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{BatteryProfile, Edge, Epsilons, FlexLimits, MarketData, NetworkGraph, ParticipantProfile};

    /// One battery node behind a prohibitively expensive substation.
    fn isolated_generator(d: f64, cq: f64, cl: f64) -> ScenarioDay {
        let net = NetworkGraph::from_edges(
            2,
            &[Edge { child: 1, ancestor: 0, r: 0.01, x: 0.01, s: 5.0 }],
            1.0,
            vec![0.81; 2],
            vec![1.21; 2],
        )
        .unwrap();
        let mut p = ParticipantProfile::pure_load(1, vec![d], vec![0.0]);
        p.battery = Some(BatteryProfile { b_min: -10.0, b_max: 10.0, b0: 0.0 });
        p.flex = Some(FlexLimits { p_min: -5.0, p_max: 5.0, cost_quadratic: cq, cost_linear: cl });
        let market = MarketData {
            steps: 1,
            mva_base: 1.0,
            tariff_import: vec![100.0],
            tariff_export: vec![-100.0],
            epsilons: Epsilons::uniform(0.05),
            day_ahead_price: vec![0.0],
            regulation_up: vec![100.0],
            regulation_down: vec![-100.0],
        };
        ScenarioDay::new("iso", net, vec![p], market).unwrap()
    }

    #[test]
    fn energy_price_is_marginal_cost() {
        let (d, cq, cl) = (0.7, 0.5, 0.1);
        let sol = solve_central(&isolated_generator(d, cq, cl), Variant::ChanceConstrained, &SolverSettings::default()).unwrap();
        assert!((sol.generation(1, 0) - d).abs() < 1e-6);
        assert!((sol.duals.energy[1][0] - (2.0 * cq * d + cl)).abs() < 1e-5);
        assert!((sol.alpha(1, 0) - 1.0).abs() < 1e-6);
    }
}
