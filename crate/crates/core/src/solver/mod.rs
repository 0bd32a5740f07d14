//! Convex solvers for [`ConicProblem`].
//!
//! Dual convention: `L = f + yᵀ(Ax − b) + zᵀ(Gx − h) − Σ_k w_kᵀ s_k(x)` where
//! `s_k(x) = (t_k(x), x_k(x))` is the affine image constrained to the k-th
//! second-order cone. Inequality duals are non-negative and each cone dual
//! `w_k` lies in the (self-dual) cone.

mod conic;
mod decompose;
mod qp;

pub use conic::solve;
pub use decompose::solve_decomposed;
pub use qp::solve_qp_fast;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::formulation::ConicProblem;

#[derive(Debug, Error, PartialEq)]
pub enum SolverError {
    #[error("malformed problem: {0}")]
    Malformed(String),
    #[error("the fast QP path does not accept cone constraints")]
    ConesNotSupported,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    Optimal,
    /// No feasible point; `x` holds the solver's last iterate.
    Infeasible,
    /// Feasible but unbounded below.
    Unbounded,
    /// Stopped at the iteration limit; `x` is the best iterate.
    IterationLimit,
    /// Stopped without progress before reaching the tolerance.
    Stalled,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings { tol: 1e-7, max_iter: 100 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverResult {
    pub x: Vec<f64>,
    pub y_eq: Vec<f64>,
    pub z_ineq: Vec<f64>,
    pub z_cone: Vec<Vec<f64>>,
    pub status: Status,
    pub objective: f64,
    /// Largest of the primal, stationarity and complementarity residuals.
    pub achieved_tol: f64,
    pub iterations: usize,
}

impl SolverResult {
    pub fn is_optimal(&self) -> bool {
        self.status == Status::Optimal
    }
}

/// Residuals of the KKT conditions at a candidate primal-dual point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktResiduals {
    pub primal: f64,
    pub stationarity: f64,
    pub complementarity: f64,
    pub duality_gap: f64,
}

pub fn kkt_residuals(p: &ConicProblem, r: &SolverResult) -> KktResiduals {
    let x = &r.x;
    let mut grad: Vec<f64> = (0..p.num_vars()).map(|j| p.hess_diag[j] * x[j] + p.linear[j]).collect();
    let mut comp: f64 = 0.0;
    let mut gap = 0.0;
    for (row, &y) in p.eq.iter().zip(&r.y_eq) {
        for &(j, a) in &row.coeffs {
            grad[j] += a * y;
        }
    }
    for (row, &z) in p.ineq.iter().zip(&r.z_ineq) {
        for &(j, a) in &row.coeffs {
            grad[j] += a * z;
        }
        let slack = row.rhs - row.lhs(x);
        comp = comp.max((z * slack).abs());
        gap += z * slack;
    }
    for (cone, w) in p.cones.iter().zip(&r.z_cone) {
        let pieces = std::iter::once(&cone.t).chain(&cone.x);
        let mut inner = 0.0;
        for (piece, &wk) in pieces.zip(w) {
            for &(j, a) in &piece.coeffs {
                grad[j] -= a * wk;
            }
            inner += wk * piece.eval(x);
        }
        comp = comp.max(inner.abs());
        gap += inner;
    }
    KktResiduals {
        primal: p.max_violation(x),
        stationarity: grad.iter().fold(0.0, |m, g| m.max(g.abs())),
        complementarity: comp,
        duality_gap: gap.abs(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formulation::{AffineRow, LinearRow, SocRow, Tag, VarKey};

    pub(crate) fn scalar_problem(h: f64, c: f64) -> ConicProblem {
        ConicProblem {
            columns: vec![VarKey::Lp(0)],
            hess_diag: vec![h],
            linear: vec![c],
            ..Default::default()
        }
    }

    fn tag() -> Tag {
        Tag::Adequacy(0)
    }

    /// min x² s.t. x >= 1.
    pub(crate) fn bounded_square() -> ConicProblem {
        let mut p = scalar_problem(2.0, 0.0);
        p.ineq.push(LinearRow { coeffs: vec![(0, -1.0)], rhs: -1.0, tag: tag() });
        p
    }

    /// min (x − 3)² s.t. x = 1.
    pub(crate) fn pinned_square() -> ConicProblem {
        let mut p = scalar_problem(2.0, -6.0);
        p.constant = 9.0;
        p.eq.push(LinearRow { coeffs: vec![(0, 1.0)], rhs: 1.0, tag: tag() });
        p
    }

    /// min x s.t. ‖(x, 0.6)‖ <= 1.
    pub(crate) fn disk() -> ConicProblem {
        let mut p = scalar_problem(0.0, 1.0);
        p.cones.push(SocRow {
            t: AffineRow { coeffs: vec![], constant: 1.0 },
            x: vec![AffineRow { coeffs: vec![(0, 1.0)], constant: 0.0 }, AffineRow { coeffs: vec![], constant: 0.6 }],
            tag: tag(),
        });
        p
    }

    #[test]
    fn hand_kkt_examples_on_both_paths() {
        let s = SolverSettings::default();
        for solver in [solve, solve_qp_fast] {
            let r = solver(&bounded_square(), &s).unwrap();
            assert!(r.is_optimal());
            assert!((r.x[0] - 1.0).abs() < 1e-6);
            assert!((r.z_ineq[0] - 2.0).abs() < 1e-5);

            let r = solver(&pinned_square(), &s).unwrap();
            assert!((r.x[0] - 1.0).abs() < 1e-6);
            // ∂/∂x [(x−3)² + y(x−1)] = 0 at x = 1 gives y = 4.
            assert!((r.y_eq[0] - 4.0).abs() < 1e-5);
            assert!((r.objective - 4.0).abs() < 1e-5);
        }
        let r = solve(&disk(), &s).unwrap();
        assert!((r.x[0] + 0.8).abs() < 1e-6);
        let w = &r.z_cone[0];
        assert!((w[1] - 1.0).abs() < 1e-5);
        assert!(w[0] >= (w[1] * w[1] + w[2] * w[2]).sqrt() - 1e-6);
        assert_eq!(solve_qp_fast(&disk(), &s).unwrap_err(), SolverError::ConesNotSupported);
    }

    #[test]
    fn residuals_are_small_at_optimum() {
        let s = SolverSettings::default();
        for p in [bounded_square(), pinned_square(), disk()] {
            let r = solve(&p, &s).unwrap();
            let k = kkt_residuals(&p, &r);
            assert!(k.primal < 1e-6 && k.stationarity < 1e-6 && k.complementarity < 1e-6, "{k:?}");
            assert!(k.duality_gap <= 10.0 * 1e-6, "{k:?}");
        }
    }
}
