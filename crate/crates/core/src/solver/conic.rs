use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, NonnegativeConeT, SecondOrderConeT, SolverStatus, SupportedConeT,
    ZeroConeT,
};

use super::{kkt_residuals, SolverError, SolverResult, SolverSettings, Status};
use crate::formulation::ConicProblem;

/// Interior-point solve of a problem with linear and second-order-cone
/// constraints.
pub fn solve(p: &ConicProblem, settings: &SolverSettings) -> Result<SolverResult, SolverError> {
    p.check().map_err(SolverError::Malformed)?;
    let n = p.num_vars();

    let mut rows = Vec::new();
    let mut cols = Vec::new();
    let mut vals = Vec::new();
    let mut b = Vec::new();
    let mut push_row = |coeffs: &[(usize, f64)], scale: f64, rhs: f64, b: &mut Vec<f64>| {
        let r = b.len();
        for &(j, a) in coeffs {
            rows.push(r);
            cols.push(j);
            vals.push(scale * a);
        }
        b.push(rhs);
    };
    for row in &p.eq {
        push_row(&row.coeffs, 1.0, row.rhs, &mut b);
    }
    for row in &p.ineq {
        push_row(&row.coeffs, 1.0, row.rhs, &mut b);
    }
    for cone in &p.cones {
        for piece in std::iter::once(&cone.t).chain(&cone.x) {
            push_row(&piece.coeffs, -1.0, piece.constant, &mut b);
        }
    }
    let m = b.len();
    let a = CscMatrix::new_from_triplets(m, n, rows, cols, vals);
    let hess = CscMatrix::new_from_triplets(
        n,
        n,
        (0..n).filter(|&j| p.hess_diag[j] != 0.0).collect(),
        (0..n).filter(|&j| p.hess_diag[j] != 0.0).collect(),
        p.hess_diag.iter().copied().filter(|&h| h != 0.0).collect(),
    );

    let mut cones: Vec<SupportedConeT<f64>> = Vec::new();
    if !p.eq.is_empty() {
        cones.push(ZeroConeT(p.eq.len()));
    }
    if !p.ineq.is_empty() {
        cones.push(NonnegativeConeT(p.ineq.len()));
    }
    cones.extend(p.cones.iter().map(|c| SecondOrderConeT(c.dim())));

    let tol = settings.tol;
    let clarabel_settings = DefaultSettingsBuilder::default()
        .verbose(false)
        .max_iter(settings.max_iter as u32)
        .tol_gap_abs(tol)
        .tol_gap_rel(tol)
        .tol_feas(tol)
        .tol_infeas_abs(tol)
        .tol_infeas_rel(tol)
        .tol_ktratio(tol.sqrt().min(1e-6))
        .presolve_enable(false)
        .build()
        .map_err(|e| SolverError::Malformed(e.to_string()))?;
    let mut solver = DefaultSolver::new(&hess, &p.linear, &a, &b, &cones, clarabel_settings)
        .map_err(|e| SolverError::Malformed(format!("{e:?}")))?;
    solver.solve();

    let sol = &solver.solution;
    let status = match sol.status {
        SolverStatus::Solved | SolverStatus::AlmostSolved => Status::Optimal,
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => Status::Infeasible,
        SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => Status::Unbounded,
        SolverStatus::MaxIterations | SolverStatus::MaxTime => Status::IterationLimit,
        _ => Status::Stalled,
    };
    let (neq, nin) = (p.eq.len(), p.ineq.len());
    let z = &sol.z;
    let mut z_cone = Vec::with_capacity(p.cones.len());
    let mut offset = neq + nin;
    for c in &p.cones {
        z_cone.push(z[offset..offset + c.dim()].to_vec());
        offset += c.dim();
    }
    let mut result = SolverResult {
        x: sol.x.clone(),
        y_eq: z[..neq].to_vec(),
        z_ineq: z[neq..neq + nin].iter().map(|v| v.max(0.0)).collect(),
        z_cone,
        status,
        objective: p.objective(&sol.x),
        achieved_tol: f64::INFINITY,
        iterations: solver.info.iterations as usize,
    };
    let k = kkt_residuals(p, &result);
    result.achieved_tol = k.primal.max(k.stationarity).max(k.complementarity);
    Ok(result)
}
