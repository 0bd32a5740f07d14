//! Scaled consensus ADMM over the per-node local problems.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::formulation::{build_model, ConicProblem, LocalSubproblem, Model, VarKey, Variant};
use crate::grid::{NodeId, ScenarioDay};
use crate::market::{duals_from, objective_of, MarketSolution, Prices};
use crate::solver::{solve_decomposed, SolverError, SolverResult, SolverSettings, Status};

#[derive(Debug, Error)]
pub enum AdmmError {
    #[error("local solve at node {node} failed: {source}")]
    Solver { node: NodeId, source: SolverError },
    #[error("local problem at node {node} ended with status {status:?}")]
    Local { node: NodeId, status: Status },
    #[error("consensus group {0:?} has no copies")]
    EmptyGroup(VarKey),
    #[error("prices requested from an unconverged run")]
    NotConverged,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    /// Per-component primal residual tolerance (p.u.).
    pub primal: f64,
    /// Per-component dual residual tolerance (p.u.).
    pub dual: f64,
    /// Relative power surplus tolerance.
    pub surplus: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds { primal: 1e-4, dual: 1e-4, surplus: 0.02 }
    }
}

impl Thresholds {
    pub fn infinite() -> Self {
        Thresholds { primal: f64::INFINITY, dual: f64::INFINITY, surplus: f64::INFINITY }
    }
}

/// How residual vectors are compared against the per-component thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum StopRule {
    /// Every component within its threshold; the rule the secure test evaluates.
    #[default]
    Infinity,
    /// ℓ2 norm within the threshold scaled by √dim.
    ScaledL2,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdmmSettings {
    pub rho: f64,
    pub thresholds: Thresholds,
    pub stop_rule: StopRule,
    pub max_iter: usize,
    pub solver: SolverSettings,
}

impl Default for AdmmSettings {
    fn default() -> Self {
        AdmmSettings {
            rho: 1.0,
            thresholds: Thresholds::default(),
            stop_rule: StopRule::default(),
            max_iter: 5000,
            solver: SolverSettings::default(),
        }
    }
}

/// One local copy of a coupled variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CopyRef {
    pub sub: usize,
    pub col: usize,
    pub group: usize,
}

/// Consensus groups and the copies that feed them.
#[derive(Debug, Clone)]
pub struct Layout {
    pub groups: Vec<VarKey>,
    pub copies: Vec<CopyRef>,
    pub group_copies: Vec<Vec<usize>>,
    pub sub_copies: Vec<Vec<usize>>,
    pub group_of: HashMap<VarKey, usize>,
}

impl Layout {
    pub fn new(subs: &[LocalSubproblem]) -> Self {
        let mut keys: Vec<VarKey> = subs.iter().flat_map(|s| s.coupling.iter().map(|c| c.1)).collect();
        keys.sort();
        keys.dedup();
        let group_of: HashMap<VarKey, usize> = keys.iter().enumerate().map(|(i, &k)| (k, i)).collect();
        let mut copies = Vec::new();
        let mut group_copies = vec![Vec::new(); keys.len()];
        let mut sub_copies = vec![Vec::new(); subs.len()];
        for (s, sub) in subs.iter().enumerate() {
            for &(col, key) in &sub.coupling {
                let group = group_of[&key];
                group_copies[group].push(copies.len());
                sub_copies[s].push(copies.len());
                copies.push(CopyRef { sub: s, col, group });
            }
        }
        Layout { groups: keys, copies, group_copies, sub_copies, group_of }
    }

    pub fn holders(&self, group: usize) -> Vec<usize> {
        self.group_copies[group].iter().map(|&c| self.copies[c].sub).collect()
    }
}

/// Scaled-form state: global values per group, local values and multipliers per copy.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusState {
    pub z: Vec<f64>,
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub rho: f64,
    pub iteration: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub primal: f64,
    pub dual: f64,
    pub surplus: f64,
}

pub fn write_trace_csv(trace: &[TraceRow], out: impl Write) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in trace {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Minimizes `f_n(X) + ρ/2 ‖X_C − Z + U‖²` over the local problem.
pub fn local_step(
    sub: &LocalSubproblem,
    target: &[f64],
    rho: f64,
    settings: &SolverSettings,
) -> Result<SolverResult, AdmmError> {
    let mut p: ConicProblem = sub.problem.clone();
    for (&(col, _), &v) in sub.coupling.iter().zip(target) {
        p.hess_diag[col] += rho;
        p.linear[col] -= rho * v;
    }
    let r = solve_decomposed(&p, settings).map_err(|source| AdmmError::Solver { node: sub.owner, source })?;
    match r.status {
        Status::Infeasible | Status::Unbounded => Err(AdmmError::Local { node: sub.owner, status: r.status }),
        _ => Ok(r),
    }
}

/// Arithmetic mean of the copies of one group.
pub fn global_average(copies: &[f64]) -> Option<f64> {
    if copies.is_empty() {
        return None;
    }
    Some(copies.iter().sum::<f64>() / copies.len() as f64)
}

/// `U ← U + X − Z` per copy.
pub fn multiplier_update(u: &mut [f64], x: &[f64], z_of_copy: impl Fn(usize) -> f64) {
    for (i, (ui, xi)) in u.iter_mut().zip(x).enumerate() {
        *ui += xi - z_of_copy(i);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// ‖X − Z‖₂ over all copies.
    pub primal: f64,
    /// ρ‖Z − Z_prev‖₂ over all groups.
    pub dual: f64,
    pub surplus: f64,
    /// Largest per-component primal residual.
    pub primal_inf: f64,
    /// Largest per-component dual residual.
    pub dual_inf: f64,
}

/// Iterates local solves and averaging for a fixed set of local problems.
pub struct Engine<'a> {
    pub sc: &'a ScenarioDay,
    pub model: Model,
    pub subs: Vec<LocalSubproblem>,
    pub layout: Layout,
    pub state: ConsensusState,
    pub settings: AdmmSettings,
    pub locals: Vec<Option<SolverResult>>,
    pub trace: Vec<TraceRow>,
}

impl<'a> Engine<'a> {
    pub fn new(sc: &'a ScenarioDay, variant: Variant, settings: AdmmSettings) -> Self {
        let model = build_model(sc, variant);
        let subs = model.locals(sc.node_count());
        let layout = Layout::new(&subs);
        let n_flex = sc.flexible_nodes().len().max(1) as f64;
        let z = layout
            .groups
            .iter()
            .map(|k| match k {
                VarKey::U(..) => sc.network.u0,
                VarKey::Alpha(..) => 1.0 / n_flex,
                _ => 0.0,
            })
            .collect();
        let ncopies = layout.copies.len();
        let locals = vec![None; subs.len()];
        Engine {
            sc,
            model,
            subs,
            state: ConsensusState { z, x: vec![0.0; ncopies], u: vec![0.0; ncopies], rho: settings.rho, iteration: 0 },
            layout,
            settings,
            locals,
            trace: Vec::new(),
        }
    }

    /// Solves every local problem against the current Z and U and stores the new copies.
    pub fn local_steps(&mut self) -> Result<(), AdmmError> {
        for (s, sub) in self.subs.iter().enumerate() {
            let target: Vec<f64> = self.layout.sub_copies[s]
                .iter()
                .map(|&c| self.state.z[self.layout.copies[c].group] - self.state.u[c])
                .collect();
            let r = local_step(sub, &target, self.state.rho, &self.settings.solver)?;
            for &c in &self.layout.sub_copies[s] {
                self.state.x[c] = r.x[self.layout.copies[c].col];
            }
            self.locals[s] = Some(r);
        }
        Ok(())
    }

    pub fn plain_average(&self) -> Result<Vec<f64>, AdmmError> {
        self.layout
            .group_copies
            .iter()
            .enumerate()
            .map(|(g, cs)| {
                let xs: Vec<f64> = cs.iter().map(|&c| self.state.x[c]).collect();
                global_average(&xs).ok_or(AdmmError::EmptyGroup(self.layout.groups[g]))
            })
            .collect()
    }

    /// Installs a new Z, updates multipliers and records metrics.
    pub fn apply(&mut self, z_new: Vec<f64>) -> Metrics {
        let z_prev = std::mem::replace(&mut self.state.z, z_new);
        let copies = &self.layout.copies;
        let z = &self.state.z;
        multiplier_update(&mut self.state.u, &self.state.x, |i| z[copies[i].group]);
        self.state.iteration += 1;
        let m = self.metrics(&z_prev);
        self.trace.push(TraceRow { iteration: self.state.iteration, primal: m.primal, dual: m.dual, surplus: m.surplus });
        m
    }

    pub fn metrics(&self, z_prev: &[f64]) -> Metrics {
        let rho = self.state.rho;
        let (mut p2, mut pinf) = (0.0f64, 0.0f64);
        for (c, cp) in self.layout.copies.iter().enumerate() {
            let r = self.state.x[c] - self.state.z[cp.group];
            p2 += r * r;
            pinf = pinf.max(r.abs());
        }
        let (mut d2, mut dinf) = (0.0f64, 0.0f64);
        for (z, zp) in self.state.z.iter().zip(z_prev) {
            let r = rho * (z - zp);
            d2 += r * r;
            dinf = dinf.max(r.abs());
        }
        Metrics { primal: p2.sqrt(), dual: d2.sqrt(), surplus: self.surplus(), primal_inf: pinf, dual_inf: dinf }
    }

    /// Owned value of a variable from its owner's latest local solve.
    pub fn owned_value(&self, key: VarKey) -> f64 {
        let owner = self.model.owner[&key];
        let sub = &self.subs[owner];
        let Some(r) = &self.locals[owner] else { return 0.0 };
        let col = sub.problem.columns.binary_search(&key).expect("owner holds its variables");
        r.x[col]
    }

    /// (substation inflow from Z + generation + forecast − demand) / demand, summed over the day.
    pub fn surplus(&self) -> f64 {
        let sc = self.sc;
        let mut inflow = 0.0;
        let mut injections = 0.0;
        for t in 0..sc.steps() {
            for &j in sc.network.children(0) {
                inflow += self.state.z[self.layout.group_of[&VarKey::Fp(j, t)]];
            }
            for v in sc.flexible_nodes() {
                injections += self.owned_value(VarKey::G(v, t));
            }
        }
        let forecast: f64 = sc.participants().map(|p| (0..sc.steps()).map(|t| p.forecast(t)).sum::<f64>()).sum();
        let demand = sc.total_demand();
        (inflow + injections + forecast - demand) / demand
    }

    pub fn converged(&self, m: &Metrics) -> bool {
        let th = &self.settings.thresholds;
        let residuals_ok = match self.settings.stop_rule {
            StopRule::Infinity => m.primal_inf <= th.primal && m.dual_inf <= th.dual,
            StopRule::ScaledL2 => {
                let nc = self.layout.copies.len().max(1) as f64;
                let ng = self.layout.groups.len().max(1) as f64;
                m.primal <= th.primal * nc.sqrt() && m.dual <= th.dual * ng.sqrt()
            }
        };
        residuals_ok && m.surplus.abs() <= th.surplus
    }

    /// Market variables from Z for coupled keys and from owners otherwise.
    pub fn assemble(&self) -> MarketSolution {
        let mut values = BTreeMap::new();
        for &key in self.model.owner.keys() {
            let v = match self.layout.group_of.get(&key) {
                Some(&g) => self.state.z[g],
                None => self.owned_value(key),
            };
            values.insert(key, v);
        }
        let objective = objective_of(&self.model, &values);
        MarketSolution {
            values,
            objective,
            duals: self.dual_prices(),
            consensus: Some(self.consensus_prices()),
        }
    }

    pub fn dual_prices(&self) -> Prices {
        let mut prices = Prices::zeros(self.sc.node_count(), self.sc.steps());
        for (sub, r) in self.subs.iter().zip(&self.locals) {
            if let Some(r) = r {
                duals_from(&sub.problem, r, &mut prices);
            }
        }
        prices
    }

    /// Prices from the scaled multipliers: a node's balance multiplier equals
    /// ρU on its copy of a child's flow; a leaf reads ρU on its own flow; the
    /// flexibility price is ρU on the substation's α copies.
    pub fn consensus_prices(&self) -> Prices {
        let sc = self.sc;
        let rho = self.state.rho;
        let mut prices = Prices::zeros(sc.node_count(), sc.steps());
        let copy_u = |sub: usize, key: VarKey| -> Option<f64> {
            let g = *self.layout.group_of.get(&key)?;
            self.layout.group_copies[g]
                .iter()
                .find(|&&c| self.layout.copies[c].sub == sub)
                .map(|&c| rho * self.state.u[c])
        };
        for t in 0..sc.steps() {
            for n in 0..sc.node_count() {
                let children = sc.network.children(n);
                prices.energy[n][t] = if children.is_empty() {
                    copy_u(n, VarKey::Fp(n, t)).unwrap_or(0.0)
                } else {
                    let vals: Vec<f64> = children.iter().filter_map(|&j| copy_u(n, VarKey::Fp(j, t))).map(|v| -v).collect();
                    vals.iter().sum::<f64>() / vals.len().max(1) as f64
                };
            }
            let flex = sc.flexible_nodes();
            let vals: Vec<f64> = flex.iter().filter_map(|&v| copy_u(0, VarKey::Alpha(v, t))).collect();
            prices.flexibility[t] = vals.iter().sum::<f64>() / vals.len().max(1) as f64;
        }
        prices
    }
}

#[derive(Debug, Clone)]
pub struct AdmmOutcome {
    pub solution: MarketSolution,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<TraceRow>,
    pub final_metrics: Metrics,
}

/// Plaintext consensus ADMM.
pub fn run(sc: &ScenarioDay, variant: Variant, settings: AdmmSettings) -> Result<AdmmOutcome, AdmmError> {
    let mut engine = Engine::new(sc, variant, settings);
    let mut converged = false;
    let mut last = None;
    while engine.state.iteration < settings.max_iter {
        engine.local_steps()?;
        let z = engine.plain_average()?;
        let m = engine.apply(z);
        last = Some(m);
        if engine.converged(&m) {
            converged = true;
            break;
        }
    }
    let final_metrics = last.unwrap_or(Metrics { primal: 0.0, dual: 0.0, surplus: 0.0, primal_inf: 0.0, dual_inf: 0.0 });
    Ok(AdmmOutcome {
        solution: engine.assemble(),
        iterations: engine.state.iteration,
        converged,
        trace: engine.trace,
        final_metrics,
    })
}

/// Prices of a converged run in the requested mode.
pub fn extract_prices(outcome: &AdmmOutcome, mode: crate::market::PriceMode) -> Result<Prices, AdmmError> {
    if !outcome.converged {
        return Err(AdmmError::NotConverged);
    }
    outcome.solution.prices(mode).cloned().ok_or(AdmmError::NotConverged)
}
