//! Chance-constrained market model and its second-order-cone equivalent.
//!
//! A single generator emits every constraint together with the node that owns
//! it. The central problem compiles all of them; the local problem of node `n`
//! compiles only those owned by `n`, so the union of local constraint sets is
//! the central set by construction.

mod problem;
mod quantile;

pub use problem::{AffineRow, ConicProblem, LinearRow, SocRow};
pub use quantile::{normal_quantile, z_score};

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{NodeId, ScenarioDay};

#[derive(Debug, Error, PartialEq)]
pub enum FormulationError {
    #[error("probability {0} outside (0, 1)")]
    Domain(f64),
}

/// Cost added to every inflow/outflow variable so the substation trade is
/// unique even when import and export tariffs coincide.
pub const TRADE_REGULARIZATION: f64 = 1e-6;

/// Decision and auxiliary variables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum VarKey {
    U(NodeId, usize),
    Fp(NodeId, usize),
    Fq(NodeId, usize),
    G(NodeId, usize),
    Alpha(NodeId, usize),
    B(NodeId, usize),
    Lp(usize),
    Sp(usize),
    Lq(usize),
    Sq(usize),
    /// Bound on the standard deviation of the voltage at a node.
    SigV(NodeId, usize),
    /// Bound on the standard deviation of the active flow into a node.
    SigF(NodeId, usize),
    /// Bound on the standard deviation of a battery's state of charge.
    SigB(NodeId, usize),
}

impl VarKey {
    pub fn node(&self) -> NodeId {
        match *self {
            VarKey::U(n, _)
            | VarKey::Fp(n, _)
            | VarKey::Fq(n, _)
            | VarKey::G(n, _)
            | VarKey::Alpha(n, _)
            | VarKey::B(n, _)
            | VarKey::SigV(n, _)
            | VarKey::SigF(n, _)
            | VarKey::SigB(n, _) => n,
            VarKey::Lp(_) | VarKey::Sp(_) | VarKey::Lq(_) | VarKey::Sq(_) => 0,
        }
    }

    pub fn step(&self) -> usize {
        match *self {
            VarKey::U(_, t)
            | VarKey::Fp(_, t)
            | VarKey::Fq(_, t)
            | VarKey::G(_, t)
            | VarKey::Alpha(_, t)
            | VarKey::B(_, t)
            | VarKey::SigV(_, t)
            | VarKey::SigF(_, t)
            | VarKey::SigB(_, t)
            | VarKey::Lp(t)
            | VarKey::Sp(t)
            | VarKey::Lq(t)
            | VarKey::Sq(t) => t,
        }
    }

    /// Members of the market variable set (everything except auxiliaries).
    pub fn is_market_variable(&self) -> bool {
        !matches!(self, VarKey::SigV(..) | VarKey::SigF(..) | VarKey::SigB(..))
    }
}

/// Which model constraint produced a row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Tag {
    SubstationActive(usize),
    SubstationReactive(usize),
    TradeNonneg(usize),
    ActiveBalance(NodeId, usize),
    ReactiveBalance(NodeId, usize),
    VoltageDrop(NodeId, usize),
    StateOfCharge(NodeId, usize),
    VoltageMax(NodeId, usize),
    VoltageMin(NodeId, usize),
    VoltageStd(NodeId, usize),
    FlowLimit(NodeId, usize, usize),
    FlowStd(NodeId, usize),
    GenerationMax(NodeId, usize),
    GenerationMin(NodeId, usize),
    BatteryMax(NodeId, usize),
    BatteryMin(NodeId, usize),
    BatteryStd(NodeId, usize),
    Adequacy(usize),
    AlphaBounds(NodeId, usize),
}

/// Which network constraints carry uncertainty margins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Variant {
    /// Voltage, flow, generation and battery limits all chance-constrained.
    #[default]
    ChanceConstrained,
    /// Voltage and flow limits deterministic; generation and battery limits
    /// stay chance-constrained.
    DeterministicNetwork,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LinExpr {
    pub terms: Vec<(VarKey, f64)>,
    pub constant: f64,
}

impl LinExpr {
    pub fn constant(c: f64) -> Self {
        LinExpr { terms: Vec::new(), constant: c }
    }

    pub fn var(k: VarKey) -> Self {
        LinExpr { terms: vec![(k, 1.0)], constant: 0.0 }
    }

    pub fn with(mut self, k: VarKey, a: f64) -> Self {
        self.terms.push((k, a));
        self
    }

    pub fn plus(mut self, c: f64) -> Self {
        self.constant += c;
        self
    }

    fn keys(&self) -> impl Iterator<Item = VarKey> + '_ {
        self.terms.iter().map(|t| t.0)
    }

    pub fn eval(&self, value: impl Fn(VarKey) -> f64) -> f64 {
        self.terms.iter().map(|&(k, a)| a * value(k)).sum::<f64>() + self.constant
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Body {
    /// expr = 0
    Eq(LinExpr),
    /// expr <= 0
    Le(LinExpr),
    /// ‖x‖ <= t
    Soc { t: LinExpr, x: Vec<LinExpr> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub owner: NodeId,
    pub tag: Tag,
    pub body: Body,
}

impl Constraint {
    fn keys(&self) -> Vec<VarKey> {
        match &self.body {
            Body::Eq(e) | Body::Le(e) => e.keys().collect(),
            Body::Soc { t, x } => t.keys().chain(x.iter().flat_map(LinExpr::keys)).collect(),
        }
    }
}

/// Separable objective term `quad·x² + lin·x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjTerm {
    pub owner: NodeId,
    pub key: VarKey,
    pub quad: f64,
    pub lin: f64,
}

/// Per-prosumer uncertainty and chance-constraint quantiles.
#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyModel {
    /// σ per node and timestep (zero for nodes without DER).
    pub sigma: Vec<Vec<f64>>,
    /// σ_Δ,t = sqrt(Σ_r σ²_{r,t}).
    pub sigma_delta: Vec<f64>,
    pub z_voltage: f64,
    pub z_flow: f64,
    pub z_generation: f64,
    pub z_battery: f64,
}

impl UncertaintyModel {
    pub fn new(sc: &ScenarioDay) -> Self {
        let steps = sc.steps();
        let sigma: Vec<Vec<f64>> = (0..sc.node_count())
            .map(|n| (0..steps).map(|t| sc.profile(n).map_or(0.0, |p| p.sigma(t))).collect())
            .collect();
        let sigma_delta = (0..steps).map(|t| sigma.iter().map(|s| s[t] * s[t]).sum::<f64>().sqrt()).collect();
        let e = sc.market.epsilons;
        UncertaintyModel {
            sigma,
            sigma_delta,
            z_voltage: z_score(e.voltage),
            z_flow: z_score(e.flow),
            z_generation: z_score(e.generation),
            z_battery: z_score(e.battery),
        }
    }
}

/// Complete symbolic model: constraints, objective and variable ownership.
#[derive(Debug, Clone)]
pub struct Model {
    pub constraints: Vec<Constraint>,
    pub objective: Vec<ObjTerm>,
    pub owner: BTreeMap<VarKey, NodeId>,
    pub uncertainty: UncertaintyModel,
    pub variant: Variant,
}

/// Standard deviation of a perturbed quantity as the model sees it.
enum Std {
    Zero,
    Const(f64),
    Var(VarKey),
}

impl Std {
    fn add_to(&self, e: LinExpr, scale: f64) -> LinExpr {
        match *self {
            Std::Zero => e,
            Std::Const(s) => e.plus(scale * s),
            Std::Var(k) => e.with(k, scale),
        }
    }
}

struct Builder<'a> {
    sc: &'a ScenarioDay,
    unc: UncertaintyModel,
    variant: Variant,
    flex: Vec<NodeId>,
    prosumers: Vec<NodeId>,
    down: Vec<BTreeSet<NodeId>>,
    constraints: Vec<Constraint>,
    objective: Vec<ObjTerm>,
    owner: BTreeMap<VarKey, NodeId>,
}

impl<'a> Builder<'a> {
    fn new(sc: &'a ScenarioDay, variant: Variant) -> Self {
        let g = &sc.network;
        let mut down = vec![BTreeSet::new(); sc.node_count()];
        for n in g.non_root() {
            down[n] = g.downstream_set(n).expect("non-root node");
        }
        Builder {
            sc,
            unc: UncertaintyModel::new(sc),
            variant,
            flex: sc.flexible_nodes(),
            prosumers: sc.prosumers(),
            down,
            constraints: Vec::new(),
            objective: Vec::new(),
            owner: BTreeMap::new(),
        }
    }

    fn push(&mut self, owner: NodeId, tag: Tag, body: Body) {
        self.constraints.push(Constraint { owner, tag, body });
    }

    fn own(&mut self, key: VarKey, owner: NodeId) {
        self.owner.insert(key, owner);
    }

    /// Per-prosumer coefficients of the active-flow perturbation on line `m`,
    /// each scaled by σ_r: σ_r·(1{r ∈ D_m} − Σ_{j ∈ D_m ∩ V} α_j). Empty when
    /// the perturbation vanishes identically.
    fn flow_rows(&self, m: NodeId, t: usize) -> Vec<LinExpr> {
        self.flow_rows_full(m, t)
            .into_iter()
            .flatten()
            .filter(|e| !e.terms.is_empty() || e.constant != 0.0)
            .collect()
    }

    /// Turns `‖rows‖` into a model quantity, adding an auxiliary variable and a
    /// cone only when the rows depend on decision variables.
    fn std_of(&mut self, rows: Vec<LinExpr>, aux: VarKey, tag: Tag) -> Std {
        if rows.is_empty() {
            return Std::Zero;
        }
        if rows.iter().all(|r| r.terms.is_empty()) {
            return Std::Const(rows.iter().map(|r| r.constant * r.constant).sum::<f64>().sqrt());
        }
        let owner = aux.node();
        self.own(aux, owner);
        self.push(owner, tag, Body::Soc { t: LinExpr::var(aux), x: rows });
        Std::Var(aux)
    }

    fn build(mut self) -> Model {
        let sc = self.sc;
        let g = &sc.network;
        let steps = sc.steps();
        let tariff_in = &sc.market.tariff_import;
        let tariff_out = &sc.market.tariff_export;

        for t in 0..steps {
            for key in [VarKey::Lp(t), VarKey::Sp(t), VarKey::Lq(t), VarKey::Sq(t)] {
                self.own(key, 0);
            }
            for n in g.non_root() {
                for key in [VarKey::U(n, t), VarKey::Fp(n, t), VarKey::Fq(n, t)] {
                    self.own(key, n);
                }
            }
        }

        // Objective.
        for t in 0..steps {
            let delta = TRADE_REGULARIZATION;
            self.objective.extend([
                ObjTerm { owner: 0, key: VarKey::Lp(t), quad: 0.0, lin: tariff_in[t] + delta },
                ObjTerm { owner: 0, key: VarKey::Sp(t), quad: 0.0, lin: -tariff_out[t] + delta },
                ObjTerm { owner: 0, key: VarKey::Lq(t), quad: 0.0, lin: delta },
                ObjTerm { owner: 0, key: VarKey::Sq(t), quad: 0.0, lin: delta },
            ]);
        }
        for &v in &self.flex.clone() {
            let f = sc.profile(v).and_then(|p| p.flex).expect("flexible node has limits");
            for t in 0..steps {
                let sd = self.unc.sigma_delta[t];
                self.own(VarKey::G(v, t), v);
                self.own(VarKey::Alpha(v, t), v);
                self.objective.push(ObjTerm {
                    owner: v,
                    key: VarKey::G(v, t),
                    quad: f.cost_quadratic,
                    lin: f.cost_linear,
                });
                self.objective.push(ObjTerm {
                    owner: v,
                    key: VarKey::Alpha(v, t),
                    quad: f.cost_quadratic * sd * sd,
                    lin: 0.0,
                });
            }
        }

        // Substation.
        for t in 0..steps {
            let mut p = LinExpr::var(VarKey::Lp(t)).with(VarKey::Sp(t), -1.0);
            let mut q = LinExpr::var(VarKey::Lq(t)).with(VarKey::Sq(t), -1.0);
            for &j in g.children(0) {
                p = p.with(VarKey::Fp(j, t), -1.0);
                q = q.with(VarKey::Fq(j, t), -1.0);
            }
            self.push(0, Tag::SubstationActive(t), Body::Eq(p));
            self.push(0, Tag::SubstationReactive(t), Body::Eq(q));
            for key in [VarKey::Lp(t), VarKey::Sp(t), VarKey::Lq(t), VarKey::Sq(t)] {
                self.push(0, Tag::TradeNonneg(t), Body::Le(LinExpr::default().with(key, -1.0)));
            }
        }

        // Network.
        let planes = sc.dodecagon;
        for n in g.non_root() {
            let prof = sc.profile(n).expect("every non-root node has a profile");
            let line = *g.line(n).expect("non-root node has a line");
            let flexible = prof.is_flexible();
            for t in 0..steps {
                let mut p = LinExpr::var(VarKey::Fp(n, t)).plus(prof.forecast(t) - prof.demand_p[t]);
                if flexible {
                    p = p.with(VarKey::G(n, t), 1.0);
                }
                let mut q = LinExpr::var(VarKey::Fq(n, t)).plus(-prof.demand_q[t]);
                for &j in g.children(n) {
                    p = p.with(VarKey::Fp(j, t), -1.0);
                    q = q.with(VarKey::Fq(j, t), -1.0);
                }
                self.push(n, Tag::ActiveBalance(n, t), Body::Eq(p));
                self.push(n, Tag::ReactiveBalance(n, t), Body::Eq(q));

                let mut v = LinExpr::var(VarKey::U(n, t))
                    .with(VarKey::Fp(n, t), 2.0 * line.resistance)
                    .with(VarKey::Fq(n, t), 2.0 * line.reactance);
                match g.ancestor(n) {
                    Some(0) | None => v = v.plus(-g.u0),
                    Some(a) => v = v.with(VarKey::U(a, t), -1.0),
                }
                self.push(n, Tag::VoltageDrop(n, t), Body::Eq(v));

                let (sv, sf) = match self.variant {
                    Variant::DeterministicNetwork => (Std::Zero, Std::Zero),
                    Variant::ChanceConstrained => {
                        let mut acc: BTreeMap<NodeId, (f64, BTreeMap<VarKey, f64>)> = BTreeMap::new();
                        for m in g.path_from_root(n) {
                            let rm = g.line(m).expect("line").resistance;
                            for (r, row) in self.prosumers.clone().into_iter().zip(self.flow_rows_full(m, t)) {
                                let Some(row) = row else { continue };
                                let slot = acc.entry(r).or_default();
                                slot.0 += rm * row.constant;
                                for (k, a) in row.terms {
                                    *slot.1.entry(k).or_default() += rm * a;
                                }
                            }
                        }
                        let rows: Vec<LinExpr> = acc
                            .into_values()
                            .map(|(c, terms)| LinExpr { terms: terms.into_iter().filter(|t| t.1 != 0.0).collect(), constant: c })
                            .filter(|e| !e.terms.is_empty() || e.constant != 0.0)
                            .collect();
                        let sv = self.std_of(rows, VarKey::SigV(n, t), Tag::VoltageStd(n, t));
                        let rows = self.flow_rows(n, t);
                        let sf = self.std_of(rows, VarKey::SigF(n, t), Tag::FlowStd(n, t));
                        (sv, sf)
                    }
                };
                let zu = self.unc.z_voltage;
                let hi = sv.add_to(LinExpr::var(VarKey::U(n, t)).plus(-g.u_max[n]), 2.0 * zu);
                let lo = sv.add_to(LinExpr::default().with(VarKey::U(n, t), -1.0).plus(g.u_min[n]), 2.0 * zu);
                self.push(n, Tag::VoltageMax(n, t), Body::Le(hi));
                self.push(n, Tag::VoltageMin(n, t), Body::Le(lo));
                let zf = self.unc.z_flow;
                for (k, h) in planes.iter().enumerate() {
                    let e = LinExpr::default()
                        .with(VarKey::Fp(n, t), h.a1)
                        .with(VarKey::Fq(n, t), h.a2)
                        .plus(h.a3 * line.s_max);
                    let e = sf.add_to(e, zf * h.a1.abs());
                    self.push(n, Tag::FlowLimit(n, t, k), Body::Le(e));
                }
            }
        }

        // Flexible units.
        for &v in &self.flex.clone() {
            let prof = sc.profile(v).expect("profile");
            let f = prof.flex.expect("flexible node has limits");
            let zg = self.unc.z_generation;
            for t in 0..steps {
                let m = zg * self.unc.sigma_delta[t];
                let (gk, ak) = (VarKey::G(v, t), VarKey::Alpha(v, t));
                self.push(v, Tag::GenerationMax(v, t), Body::Le(LinExpr::var(gk).with(ak, m).plus(-f.p_max)));
                self.push(v, Tag::GenerationMin(v, t), Body::Le(LinExpr::default().with(gk, -1.0).with(ak, m).plus(f.p_min)));
                self.push(v, Tag::AlphaBounds(v, t), Body::Le(LinExpr::default().with(ak, -1.0)));
                self.push(v, Tag::AlphaBounds(v, t), Body::Le(LinExpr::var(ak).plus(-1.0)));
            }
            if let Some(bat) = prof.battery {
                let zb = self.unc.z_battery;
                let mut prev_std = Std::Zero;
                for t in 0..steps {
                    let bk = VarKey::B(v, t);
                    self.own(bk, v);
                    let mut soc = LinExpr::var(bk).with(VarKey::G(v, t), 1.0);
                    soc = if t == 0 { soc.plus(-bat.b0) } else { soc.with(VarKey::B(v, t - 1), -1.0) };
                    self.push(v, Tag::StateOfCharge(v, t), Body::Eq(soc));

                    let sd = self.unc.sigma_delta[t];
                    let std = if sd == 0.0 && matches!(prev_std, Std::Zero) {
                        Std::Zero
                    } else {
                        let mut x = Vec::new();
                        if let Std::Var(k) = prev_std {
                            x.push(LinExpr::var(k));
                        }
                        x.push(LinExpr::default().with(VarKey::Alpha(v, t), sd));
                        self.std_of(x, VarKey::SigB(v, t), Tag::BatteryStd(v, t))
                    };
                    let hi = std.add_to(LinExpr::var(bk).plus(-bat.b_max), zb);
                    let lo = std.add_to(LinExpr::default().with(bk, -1.0).plus(bat.b_min), zb);
                    self.push(v, Tag::BatteryMax(v, t), Body::Le(hi));
                    self.push(v, Tag::BatteryMin(v, t), Body::Le(lo));
                    prev_std = std;
                }
            }
        }

        for t in 0..steps {
            let mut e = LinExpr::constant(-1.0);
            for &v in &self.flex {
                e = e.with(VarKey::Alpha(v, t), 1.0);
            }
            self.push(0, Tag::Adequacy(t), Body::Eq(e));
        }

        Model {
            constraints: self.constraints,
            objective: self.objective,
            owner: self.owner,
            uncertainty: self.unc,
            variant: self.variant,
        }
    }

    /// `flow_rows` aligned with the prosumer list (None where the entry is zero).
    /// A line whose subtree holds every prosumer and every flexible node
    /// carries σ_r·(1 − Σα) = 0 under the adequacy constraint, so it is zero.
    fn flow_rows_full(&self, m: NodeId, t: usize) -> Vec<Option<LinExpr>> {
        let d = &self.down[m];
        let flex_down: Vec<NodeId> = self.flex.iter().copied().filter(|j| d.contains(j)).collect();
        let covers_all = flex_down.len() == self.flex.len() && self.prosumers.iter().all(|r| d.contains(r));
        self.prosumers
            .iter()
            .map(|&r| {
                let s = self.unc.sigma[r][t];
                if covers_all || s == 0.0 {
                    return None;
                }
                let mut e = LinExpr::constant(if d.contains(&r) { s } else { 0.0 });
                for &j in &flex_down {
                    e = e.with(VarKey::Alpha(j, t), -s);
                }
                Some(e)
            })
            .collect()
    }
}

pub fn build_model(sc: &ScenarioDay, variant: Variant) -> Model {
    Builder::new(sc, variant).build()
}

impl Model {
    fn compile<'c>(
        &self,
        columns: Vec<VarKey>,
        constraints: impl Iterator<Item = &'c Constraint>,
        objective: impl Iterator<Item = &'c ObjTerm>,
    ) -> ConicProblem {
        let index: HashMap<VarKey, usize> = columns.iter().enumerate().map(|(i, &k)| (k, i)).collect();
        let n = columns.len();
        let mut p = ConicProblem {
            columns,
            hess_diag: vec![0.0; n],
            linear: vec![0.0; n],
            ..Default::default()
        };
        for o in objective {
            let j = index[&o.key];
            p.hess_diag[j] += 2.0 * o.quad;
            p.linear[j] += o.lin;
        }
        let affine = |e: &LinExpr| AffineRow {
            coeffs: merge(e.terms.iter().map(|&(k, a)| (index[&k], a))),
            constant: e.constant,
        };
        for c in constraints {
            match &c.body {
                Body::Eq(e) => {
                    let r = affine(e);
                    p.eq.push(LinearRow { coeffs: r.coeffs, rhs: -r.constant, tag: c.tag });
                }
                Body::Le(e) => {
                    let r = affine(e);
                    p.ineq.push(LinearRow { coeffs: r.coeffs, rhs: -r.constant, tag: c.tag });
                }
                Body::Soc { t, x } => p.cones.push(SocRow { t: affine(t), x: x.iter().map(affine).collect(), tag: c.tag }),
            }
        }
        p
    }

    pub fn all_keys(&self) -> BTreeSet<VarKey> {
        let mut keys: BTreeSet<VarKey> = self.owner.keys().copied().collect();
        for c in &self.constraints {
            keys.extend(c.keys());
        }
        keys
    }

    pub fn central(&self) -> ConicProblem {
        let cols = self.all_keys().into_iter().collect();
        self.compile(cols, self.constraints.iter(), self.objective.iter())
    }

    pub fn locals(&self, node_count: usize) -> Vec<LocalSubproblem> {
        let mut cols: Vec<BTreeSet<VarKey>> = vec![BTreeSet::new(); node_count];
        for (&k, &o) in &self.owner {
            cols[o].insert(k);
        }
        for c in &self.constraints {
            cols[c.owner].extend(c.keys());
        }
        let mut holders: BTreeMap<VarKey, usize> = BTreeMap::new();
        for set in &cols {
            for &k in set {
                *holders.entry(k).or_default() += 1;
            }
        }
        cols.into_iter()
            .enumerate()
            .map(|(n, set)| {
                let columns: Vec<VarKey> = set.into_iter().collect();
                let coupling = columns
                    .iter()
                    .enumerate()
                    .filter(|(_, k)| holders[*k] >= 2)
                    .map(|(i, &k)| (i, k))
                    .collect();
                let problem = self.compile(
                    columns,
                    self.constraints.iter().filter(|c| c.owner == n),
                    self.objective.iter().filter(|o| o.owner == n),
                );
                LocalSubproblem { owner: n, problem, coupling }
            })
            .collect()
    }
}

fn merge(it: impl Iterator<Item = (usize, f64)>) -> Vec<(usize, f64)> {
    let mut m: BTreeMap<usize, f64> = BTreeMap::new();
    for (j, a) in it {
        *m.entry(j).or_default() += a;
    }
    m.into_iter().filter(|&(_, a)| a != 0.0).collect()
}

/// One node's share of the market problem.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalSubproblem {
    pub owner: NodeId,
    pub problem: ConicProblem,
    /// (local column, global variable) for every column shared with another node.
    pub coupling: Vec<(usize, VarKey)>,
}

pub fn build_central(sc: &ScenarioDay, variant: Variant) -> ConicProblem {
    build_model(sc, variant).central()
}

pub fn build_locals(sc: &ScenarioDay, variant: Variant) -> Vec<LocalSubproblem> {
    build_model(sc, variant).locals(sc.node_count())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn single_flexible_node_forces_full_participation() {
        let sc = fixtures::two_node_spec().build();
        let p = build_central(&sc, Variant::ChanceConstrained);
        let row = p.eq.iter().find(|r| r.tag == Tag::Adequacy(0)).unwrap();
        assert_eq!(row.coeffs.len(), 1);
        assert_eq!(row.rhs, 1.0);
    }

    #[test]
    fn coupling_of_three_node_path() {
        let sc = fixtures::three_node_spec().build();
        let locals = build_locals(&sc, Variant::DeterministicNetwork);
        assert_eq!(locals.len(), 3);
        let keys = |n: usize| -> BTreeSet<VarKey> { locals[n].coupling.iter().map(|c| c.1).filter(|k| k.step() == 0).collect() };
        assert_eq!(
            keys(1),
            BTreeSet::from([
                VarKey::U(1, 0),
                VarKey::Fp(1, 0),
                VarKey::Fq(1, 0),
                VarKey::Fp(2, 0),
                VarKey::Fq(2, 0),
                VarKey::Alpha(1, 0)
            ])
        );
        assert!(!locals[2].problem.columns.contains(&VarKey::U(0, 0)));
        assert!(locals[2].problem.columns.contains(&VarKey::U(1, 0)));
    }
}
