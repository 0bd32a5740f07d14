//! Splits a separable problem into independent blocks and solves each with the
//! cheapest applicable path.

use super::{kkt_residuals, solve, solve_qp_fast, SolverError, SolverResult, SolverSettings, Status};
use crate::formulation::{AffineRow, ConicProblem, LinearRow, SocRow};
use crate::union_find::UnionFind;

fn worse(a: Status, b: Status) -> Status {
    let rank = |s: Status| match s {
        Status::Optimal => 0,
        Status::IterationLimit => 1,
        Status::Stalled => 2,
        Status::Unbounded => 3,
        Status::Infeasible => 4,
    };
    if rank(b) > rank(a) {
        b
    } else {
        a
    }
}

/// Solves `p` block by block. Blocks are the connected components of the
/// column graph induced by rows and cones; cone-free blocks use the dense QP
/// path, the rest the conic path.
pub fn solve_decomposed(p: &ConicProblem, settings: &SolverSettings) -> Result<SolverResult, SolverError> {
    p.check().map_err(SolverError::Malformed)?;
    let n = p.num_vars();
    let mut uf = UnionFind::new(n);
    let link = |uf: &mut UnionFind, coeffs: &mut dyn Iterator<Item = usize>| {
        if let Some(first) = coeffs.next() {
            for j in coeffs {
                uf.union(first, j);
            }
        }
    };
    for r in p.eq.iter().chain(&p.ineq) {
        link(&mut uf, &mut r.coeffs.iter().map(|c| c.0));
    }
    for c in &p.cones {
        link(&mut uf, &mut std::iter::once(&c.t).chain(&c.x).flat_map(|r| r.coeffs.iter().map(|c| c.0)));
    }
    let groups = uf.groups();
    let mut block_of = vec![0usize; n];
    let mut local_of = vec![0usize; n];
    for (g, members) in groups.iter().enumerate() {
        for (i, &j) in members.iter().enumerate() {
            block_of[j] = g;
            local_of[j] = i;
        }
    }

    let mut blocks: Vec<ConicProblem> = groups
        .iter()
        .map(|members| ConicProblem {
            columns: members.iter().map(|&j| p.columns[j]).collect(),
            hess_diag: members.iter().map(|&j| p.hess_diag[j]).collect(),
            linear: members.iter().map(|&j| p.linear[j]).collect(),
            ..Default::default()
        })
        .collect();
    let remap = |coeffs: &[(usize, f64)]| -> Vec<(usize, f64)> { coeffs.iter().map(|&(j, a)| (local_of[j], a)).collect() };
    // (block, index within block) per original row; None for constant rows.
    let mut eq_pos = Vec::with_capacity(p.eq.len());
    let mut ineq_pos = Vec::with_capacity(p.ineq.len());
    let mut cone_pos = Vec::with_capacity(p.cones.len());
    let mut status = Status::Optimal;
    for r in &p.eq {
        match r.coeffs.first() {
            Some(&(j, _)) => {
                let blk = &mut blocks[block_of[j]];
                eq_pos.push(Some((block_of[j], blk.eq.len())));
                blk.eq.push(LinearRow { coeffs: remap(&r.coeffs), rhs: r.rhs, tag: r.tag });
            }
            None => {
                if r.rhs.abs() > settings.tol {
                    status = Status::Infeasible;
                }
                eq_pos.push(None);
            }
        }
    }
    for r in &p.ineq {
        match r.coeffs.first() {
            Some(&(j, _)) => {
                let blk = &mut blocks[block_of[j]];
                ineq_pos.push(Some((block_of[j], blk.ineq.len())));
                blk.ineq.push(LinearRow { coeffs: remap(&r.coeffs), rhs: r.rhs, tag: r.tag });
            }
            None => {
                if r.rhs < -settings.tol {
                    status = Status::Infeasible;
                }
                ineq_pos.push(None);
            }
        }
    }
    for c in &p.cones {
        let first = std::iter::once(&c.t).chain(&c.x).find_map(|r| r.coeffs.first().map(|x| x.0));
        match first {
            Some(j) => {
                let blk = &mut blocks[block_of[j]];
                cone_pos.push(Some((block_of[j], blk.cones.len())));
                let piece = |r: &AffineRow| AffineRow { coeffs: remap(&r.coeffs), constant: r.constant };
                blk.cones.push(SocRow { t: piece(&c.t), x: c.x.iter().map(piece).collect(), tag: c.tag });
            }
            None => {
                if c.violation(&[]) > settings.tol {
                    status = Status::Infeasible;
                }
                cone_pos.push(None);
            }
        }
    }

    let mut x = vec![0.0; n];
    let mut sols: Vec<Option<SolverResult>> = Vec::with_capacity(blocks.len());
    let mut iterations = 0;
    for (g, blk) in blocks.iter().enumerate() {
        let members = &groups[g];
        if blk.eq.is_empty() && blk.ineq.is_empty() && blk.cones.is_empty() {
            // Lone column: minimize ½hx² + cx.
            let (hh, c) = (blk.hess_diag[0], blk.linear[0]);
            x[members[0]] = if hh > 0.0 {
                -c / hh
            } else {
                if c != 0.0 {
                    status = worse(status, Status::Unbounded);
                }
                0.0
            };
            sols.push(None);
            continue;
        }
        let r = if blk.has_cones() { solve(blk, settings)? } else { solve_qp_fast(blk, settings)? };
        status = worse(status, r.status);
        iterations = iterations.max(r.iterations);
        for (i, &j) in members.iter().enumerate() {
            x[j] = r.x[i];
        }
        sols.push(Some(r));
    }
    let pick = |pos: &Option<(usize, usize)>, get: &dyn Fn(&SolverResult, usize) -> f64| -> f64 {
        pos.and_then(|(b, i)| sols[b].as_ref().map(|s| get(s, i))).unwrap_or(0.0)
    };
    let y_eq = eq_pos.iter().map(|pos| pick(pos, &|s, i| s.y_eq[i])).collect();
    let z_ineq = ineq_pos.iter().map(|pos| pick(pos, &|s, i| s.z_ineq[i])).collect();
    let z_cone = cone_pos
        .iter()
        .zip(&p.cones)
        .map(|(pos, c)| match pos {
            Some((b, i)) => sols[*b].as_ref().map(|s| s.z_cone[*i].clone()).unwrap_or_else(|| vec![0.0; c.dim()]),
            None => vec![0.0; c.dim()],
        })
        .collect();
    let mut result = SolverResult {
        objective: p.objective(&x),
        x,
        y_eq,
        z_ineq,
        z_cone,
        status,
        achieved_tol: f64::INFINITY,
        iterations,
    };
    let k = kkt_residuals(p, &result);
    result.achieved_tol = k.primal.max(k.stationarity).max(k.complementarity);
    Ok(result)
}
