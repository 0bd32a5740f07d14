//! Net injections of nodes that did not report their measurements.
//!
//! Silent nodes connected by lines form islands. Islands hanging below the
//! same reporting node are recovered together, since only their combined
//! inflow follows from that node's balance. Each recovery group's net
//! injection is the boundary outflow minus the boundary inflow, shared out
//! equally among its members.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{NetworkGraph, NodeId};
use crate::mpc::field::Fp;
use crate::mpc::{Mpc, MpcError};
use crate::union_find::UnionFind;

#[derive(Debug, Error)]
pub enum RecoveryError {
    #[error("the substation must always report")]
    SubstationSilent,
    #[error("measurement set has {got} nodes, network has {expected}")]
    NodeCount { got: usize, expected: usize },
    #[error("report of node {node} has {got} steps, expected {expected}")]
    Steps { node: NodeId, got: usize, expected: usize },
    #[error(transparent)]
    Mpc(#[from] MpcError),
}

/// Metered values of one node over the day, in p.u.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeReport {
    /// Net active injection (generation minus consumption).
    pub net_p: Vec<f64>,
    pub net_q: Vec<f64>,
    /// Active flow on the line from the ancestor; substation import at the root.
    pub flow_p: Vec<f64>,
    pub flow_q: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSet {
    pub steps: usize,
    /// Per node; `None` for a node that did not report.
    pub reports: Vec<Option<NodeReport>>,
}

impl MeasurementSet {
    pub fn reporting(&self) -> Vec<bool> {
        self.reports.iter().map(Option::is_some).collect()
    }

    pub fn silent(&self) -> Vec<NodeId> {
        self.reports.iter().enumerate().filter(|(_, r)| r.is_none()).map(|(n, _)| n).collect()
    }

    /// Drops the reports of `nodes`.
    pub fn withhold(&mut self, nodes: &[NodeId]) {
        for &n in nodes {
            if let Some(r) = self.reports.get_mut(n) {
                *r = None;
            }
        }
    }
}

/// A set of silent nodes with the lines crossing its boundary, each line
/// named by its child node.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Island {
    pub members: Vec<NodeId>,
    /// Lines from a reporting ancestor into a member.
    pub inflow: Vec<NodeId>,
    /// Lines from a member into a reporting child.
    pub outflow: Vec<NodeId>,
}

fn classify(graph: &NetworkGraph, reporting: &[bool], members: Vec<NodeId>) -> Island {
    let mut inflow = Vec::new();
    let mut outflow = Vec::new();
    for &m in &members {
        if let Some(a) = graph.ancestor(m) {
            if reporting[a] {
                inflow.push(m);
            }
        }
        outflow.extend(graph.children(m).iter().copied().filter(|&c| reporting[c]));
    }
    inflow.sort();
    outflow.sort();
    Island { members, inflow, outflow }
}

/// Maximal connected sets of silent nodes.
pub fn find_islands(graph: &NetworkGraph, reporting: &[bool]) -> Result<Vec<Island>, RecoveryError> {
    let n = graph.node_count();
    if reporting.len() != n {
        return Err(RecoveryError::NodeCount { got: reporting.len(), expected: n });
    }
    if !reporting[0] {
        return Err(RecoveryError::SubstationSilent);
    }
    let mut uf = UnionFind::new(n);
    for m in graph.non_root() {
        let a = graph.ancestor(m).expect("non-root node has an ancestor");
        if !reporting[m] && !reporting[a] {
            uf.union(m, a);
        }
    }
    Ok(uf
        .groups()
        .into_iter()
        .filter(|g| !reporting[g[0]])
        .map(|g| classify(graph, reporting, g))
        .collect())
}

/// Merges islands whose inflow lines leave the same reporting node.
pub fn recovery_groups(graph: &NetworkGraph, reporting: &[bool], islands: &[Island]) -> Vec<Island> {
    let mut uf = UnionFind::new(islands.len());
    let mut owner_of_ancestor: std::collections::BTreeMap<NodeId, usize> = Default::default();
    for (i, isl) in islands.iter().enumerate() {
        for &m in &isl.inflow {
            let a = graph.ancestor(m).expect("inflow line has an ancestor");
            match owner_of_ancestor.get(&a) {
                Some(&j) => {
                    uf.union(i, j);
                }
                None => {
                    owner_of_ancestor.insert(a, i);
                }
            }
        }
    }
    uf.groups()
        .into_iter()
        .map(|g| {
            let mut members: Vec<NodeId> = g.iter().flat_map(|&i| islands[i].members.iter().copied()).collect();
            members.sort();
            classify(graph, reporting, members)
        })
        .collect()
}

/// Equal split of `total` (fixed-point integer) over `count` members; the
/// remainder goes to the first (lowest id) member.
pub fn split_equally(total: i128, count: usize) -> Vec<i128> {
    let c = count as i128;
    let q = total.div_euclid(c);
    let r = total - q * c;
    let mut out = vec![q; count];
    out[0] += r;
    out
}

/// Net injection per member for boundary flows `p_in` and `p_out`.
pub fn recover_island(members: usize, p_in: f64, p_out: f64) -> Vec<f64> {
    vec![(p_out - p_in) / members as f64; members]
}

/// Recovered injections for one node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recovered {
    pub node: NodeId,
    pub net_p: Vec<f64>,
    pub net_q: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryOutcome {
    pub islands: Vec<Island>,
    pub groups: Vec<Island>,
    pub recovered: Vec<Recovered>,
    /// Opened group totals (P, Q) per group and step.
    pub totals: Vec<Vec<(f64, f64)>>,
}

/// Signed contributions to one group total at one step: (reporting node, sign, which value).
#[derive(Debug, Clone, Copy)]
enum Term {
    /// Incoming flow of a reporting node.
    Flow(NodeId),
    /// Net injection of a reporting node.
    Net(NodeId),
}

fn group_terms(graph: &NetworkGraph, reporting: &[bool], g: &Island) -> Vec<(Term, f64)> {
    let mut terms = Vec::new();
    for &c in &g.outflow {
        terms.push((Term::Flow(c), 1.0));
    }
    let mut ancestors: Vec<NodeId> = g.inflow.iter().map(|&m| graph.ancestor(m).expect("has ancestor")).collect();
    ancestors.sort();
    ancestors.dedup();
    for a in ancestors {
        // Flow into the silent children of `a` from its balance.
        terms.push((Term::Flow(a), -1.0));
        terms.push((Term::Net(a), -1.0));
        for &j in graph.children(a) {
            if reporting[j] {
                terms.push((Term::Flow(j), 1.0));
            }
        }
    }
    terms
}

/// Recovers every silent node. Boundary measurements are shared by the
/// reporting nodes that own them; only the group totals are opened.
pub fn recover(graph: &NetworkGraph, ms: &MeasurementSet, mpc: &mut Mpc) -> Result<RecoveryOutcome, RecoveryError> {
    let n = graph.node_count();
    if ms.reports.len() != n {
        return Err(RecoveryError::NodeCount { got: ms.reports.len(), expected: n });
    }
    for (node, r) in ms.reports.iter().enumerate() {
        if let Some(r) = r {
            for len in [r.net_p.len(), r.net_q.len(), r.flow_p.len(), r.flow_q.len()] {
                if len != ms.steps {
                    return Err(RecoveryError::Steps { node, got: len, expected: ms.steps });
                }
            }
        }
    }
    let reporting = ms.reporting();
    let islands = find_islands(graph, &reporting)?;
    let groups = recovery_groups(graph, &reporting, &islands);
    let steps = ms.steps;
    let fx = mpc.fx;

    // Slot layout: group-major, then step, then (P, Q).
    let slots = groups.len() * steps * 2;
    let mut inputs = vec![Vec::new(); mpc.parties()];
    let mut placement: Vec<Vec<usize>> = vec![Vec::new(); mpc.parties()];
    for (gi, g) in groups.iter().enumerate() {
        for (term, sign) in group_terms(graph, &reporting, g) {
            let (node, pick): (NodeId, fn(&NodeReport, usize) -> (f64, f64)) = match term {
                Term::Flow(k) => (k, |r, t| (r.flow_p[t], r.flow_q[t])),
                Term::Net(k) => (k, |r, t| (r.net_p[t], r.net_q[t])),
            };
            let r = ms.reports[node].as_ref().expect("boundary nodes report");
            for t in 0..steps {
                let (p, q) = pick(r, t);
                let base = (gi * steps + t) * 2;
                inputs[node].push(fx.encode(sign * p)?);
                placement[node].push(base);
                inputs[node].push(fx.encode(sign * q)?);
                placement[node].push(base + 1);
            }
        }
    }
    let shared = mpc.input_many(&inputs)?;
    let mut total = mpc.constant(&vec![Fp::default(); slots]);
    for (p, sv) in shared.iter().enumerate() {
        for q in 0..mpc.parties() {
            for (i, &slot) in placement[p].iter().enumerate() {
                total.shares[q][slot] += sv.shares[q][i];
            }
        }
    }
    let opened = mpc.open(&total)?;

    let mut recovered: Vec<Recovered> = Vec::new();
    let mut totals = Vec::with_capacity(groups.len());
    for (gi, g) in groups.iter().enumerate() {
        let mut rows: Vec<Recovered> =
            g.members.iter().map(|&m| Recovered { node: m, net_p: vec![0.0; steps], net_q: vec![0.0; steps] }).collect();
        let mut tot = Vec::with_capacity(steps);
        for t in 0..steps {
            let base = (gi * steps + t) * 2;
            let (tp, tq) = (opened[base].to_i128(), opened[base + 1].to_i128());
            tot.push((fx.decode(opened[base]), fx.decode(opened[base + 1])));
            for (row, (sp, sq)) in rows.iter_mut().zip(split_equally(tp, g.members.len()).into_iter().zip(split_equally(tq, g.members.len()))) {
                row.net_p[t] = fx.decode(Fp::from_i128(sp));
                row.net_q[t] = fx.decode(Fp::from_i128(sq));
            }
        }
        totals.push(tot);
        recovered.extend(rows);
    }
    recovered.sort_by_key(|r| r.node);
    Ok(RecoveryOutcome { islands, groups, recovered, totals })
}
