use serde::{Deserialize, Serialize};

use super::{Tag, VarKey};

/// Sparse affine function `Σ coeffs[i].1 · x[coeffs[i].0] + constant`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AffineRow {
    pub coeffs: Vec<(usize, f64)>,
    pub constant: f64,
}

impl AffineRow {
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(j, a)| a * x[j]).sum::<f64>() + self.constant
    }
}

/// Linear row `a·x (=|<=) rhs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearRow {
    pub coeffs: Vec<(usize, f64)>,
    pub rhs: f64,
    pub tag: Tag,
}

impl LinearRow {
    pub fn lhs(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(j, a)| a * x[j]).sum()
    }
}

/// `‖(x_1(x), …, x_k(x))‖₂ <= t(x)` with affine pieces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SocRow {
    pub t: AffineRow,
    pub x: Vec<AffineRow>,
    pub tag: Tag,
}

impl SocRow {
    pub fn dim(&self) -> usize {
        self.x.len() + 1
    }

    /// `‖x(x)‖ − t(x)`; positive means violated.
    pub fn violation(&self, x: &[f64]) -> f64 {
        let norm = self.x.iter().map(|r| r.eval(x).powi(2)).sum::<f64>().sqrt();
        norm - self.t.eval(x)
    }
}

/// Convex problem
/// `min ½ xᵀ diag(h) x + cᵀx + k  s.t.  A x = b,  G x <= g,  cones`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ConicProblem {
    pub columns: Vec<VarKey>,
    pub hess_diag: Vec<f64>,
    pub linear: Vec<f64>,
    pub constant: f64,
    pub eq: Vec<LinearRow>,
    pub ineq: Vec<LinearRow>,
    pub cones: Vec<SocRow>,
}

impl ConicProblem {
    pub fn num_vars(&self) -> usize {
        self.hess_diag.len()
    }

    pub fn column_of(&self, key: VarKey) -> Option<usize> {
        self.columns.iter().position(|&k| k == key)
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        self.hess_diag
            .iter()
            .zip(&self.linear)
            .zip(x)
            .map(|((h, c), xi)| 0.5 * h * xi * xi + c * xi)
            .sum::<f64>()
            + self.constant
    }

    /// Largest violation over all constraints (0 when feasible).
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let eq = self.eq.iter().map(|r| (r.lhs(x) - r.rhs).abs());
        let ineq = self.ineq.iter().map(|r| (r.lhs(x) - r.rhs).max(0.0));
        let cones = self.cones.iter().map(|c| c.violation(x).max(0.0));
        eq.chain(ineq).chain(cones).fold(0.0, f64::max)
    }

    pub fn has_cones(&self) -> bool {
        !self.cones.is_empty()
    }

    /// Checks dimensions and convexity.
    pub fn check(&self) -> Result<(), String> {
        let n = self.num_vars();
        if self.linear.len() != n || self.columns.len() != n {
            return Err("objective and column dimensions disagree".into());
        }
        if self.hess_diag.iter().any(|&h| !(h >= 0.0)) {
            return Err("Hessian diagonal must be non-negative".into());
        }
        let rows = self.eq.iter().chain(&self.ineq).flat_map(|r| r.coeffs.iter());
        let cone_rows = self
            .cones
            .iter()
            .flat_map(|c| c.x.iter().chain(std::iter::once(&c.t)))
            .flat_map(|r| r.coeffs.iter());
        if rows.chain(cone_rows).any(|&(j, a)| j >= n || !a.is_finite()) {
            return Err("constraint references a column out of range or a non-finite coefficient".into());
        }
        Ok(())
    }
}
