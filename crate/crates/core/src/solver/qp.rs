//! Dense Mehrotra predictor-corrector method for cone-free problems.

use super::{kkt_residuals, SolverError, SolverResult, SolverSettings, Status};
use crate::formulation::ConicProblem;

/// Dense symmetric quasi-definite system solved by LDLᵀ without pivoting.
struct Kkt {
    dim: usize,
    l: Vec<f64>,
    d: Vec<f64>,
}

impl Kkt {
    fn factor(mut m: Vec<f64>, dim: usize) -> Kkt {
        // In-place LDLᵀ on the lower triangle (row-major).
        let mut d = vec![0.0; dim];
        for j in 0..dim {
            let mut djj = m[j * dim + j];
            for k in 0..j {
                djj -= m[j * dim + k] * m[j * dim + k] * d[k];
            }
            if djj.abs() < 1e-300 {
                djj = if djj < 0.0 { -1e-300 } else { 1e-300 };
            }
            d[j] = djj;
            for i in j + 1..dim {
                let mut v = m[i * dim + j];
                for k in 0..j {
                    v -= m[i * dim + k] * m[j * dim + k] * d[k];
                }
                m[i * dim + j] = v / djj;
            }
        }
        Kkt { dim, l: m, d }
    }

    fn solve(&self, rhs: &mut [f64]) {
        let n = self.dim;
        for i in 0..n {
            let mut v = rhs[i];
            for k in 0..i {
                v -= self.l[i * n + k] * rhs[k];
            }
            rhs[i] = v;
        }
        for i in 0..n {
            rhs[i] /= self.d[i];
        }
        for i in (0..n).rev() {
            let mut v = rhs[i];
            for k in i + 1..n {
                v -= self.l[k * n + i] * rhs[k];
            }
            rhs[i] = v;
        }
    }
}

struct Dense<'a> {
    p: &'a ConicProblem,
    n: usize,
    me: usize,
    mi: usize,
}

impl Dense<'_> {
    fn a_mul(&self, x: &[f64]) -> Vec<f64> {
        self.p.eq.iter().map(|r| r.lhs(x)).collect()
    }

    fn g_mul(&self, x: &[f64]) -> Vec<f64> {
        self.p.ineq.iter().map(|r| r.lhs(x)).collect()
    }

    fn at_mul_add(&self, y: &[f64], out: &mut [f64]) {
        for (r, &yi) in self.p.eq.iter().zip(y) {
            for &(j, a) in &r.coeffs {
                out[j] += a * yi;
            }
        }
    }

    fn gt_mul_add(&self, z: &[f64], out: &mut [f64]) {
        for (r, &zi) in self.p.ineq.iter().zip(z) {
            for &(j, a) in &r.coeffs {
                out[j] += a * zi;
            }
        }
    }

    /// Builds `[[H + Gᵀ W G + εI, Aᵀ], [A, −εI]]`; `reg = 0` gives the exact matrix.
    fn matrix(&self, w: &[f64], reg: f64) -> Vec<f64> {
        let dim = self.n + self.me;
        let mut m = vec![0.0; dim * dim];
        for j in 0..self.n {
            m[j * dim + j] = self.p.hess_diag[j] + reg;
        }
        for (r, &wi) in self.p.ineq.iter().zip(w) {
            for &(j, a) in &r.coeffs {
                for &(k, b) in &r.coeffs {
                    m[j * dim + k] += wi * a * b;
                }
            }
        }
        for (i, r) in self.p.eq.iter().enumerate() {
            let row = self.n + i;
            for &(j, a) in &r.coeffs {
                m[row * dim + j] += a;
                m[j * dim + row] += a;
            }
            m[row * dim + row] = -reg;
        }
        m
    }

    fn mat_vec(m: &[f64], v: &[f64]) -> Vec<f64> {
        let dim = v.len();
        (0..dim).map(|i| (0..dim).map(|k| m[i * dim + k] * v[k]).sum()).collect()
    }

    /// Solves the exact system using the regularized factor plus refinement.
    fn solve(&self, exact: &[f64], factor: &Kkt, rhs: &[f64]) -> Vec<f64> {
        let mut sol = rhs.to_vec();
        factor.solve(&mut sol);
        for _ in 0..3 {
            let r = Self::mat_vec(exact, &sol);
            let mut res: Vec<f64> = rhs.iter().zip(&r).map(|(a, b)| a - b).collect();
            let norm = res.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if norm < 1e-14 {
                break;
            }
            factor.solve(&mut res);
            for (s, d) in sol.iter_mut().zip(&res) {
                *s += d;
            }
        }
        sol
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn max_step(v: &[f64], dv: &[f64]) -> f64 {
    v.iter()
        .zip(dv)
        .filter(|(_, &d)| d < 0.0)
        .map(|(&x, &d)| -x / d)
        .fold(1.0f64, f64::min)
}

/// Same contract as [`super::solve`] for problems without cone constraints.
pub fn solve_qp_fast(p: &ConicProblem, settings: &SolverSettings) -> Result<SolverResult, SolverError> {
    p.check().map_err(SolverError::Malformed)?;
    if p.has_cones() {
        return Err(SolverError::ConesNotSupported);
    }
    let d = Dense { p, n: p.num_vars(), me: p.eq.len(), mi: p.ineq.len() };
    let (n, me, mi) = (d.n, d.me, d.mi);
    let b: Vec<f64> = p.eq.iter().map(|r| r.rhs).collect();
    let h: Vec<f64> = p.ineq.iter().map(|r| r.rhs).collect();
    let scale_p = 1.0 + inf_norm(&b).max(inf_norm(&h));
    let scale_d = 1.0 + inf_norm(&p.linear);
    let reg = 1e-10;

    // Initial point from the least-squares system with unit weights.
    let ones = vec![1.0; mi];
    let exact = d.matrix(&ones, 0.0);
    let factor = Kkt::factor(d.matrix(&ones, reg), n + me);
    let mut rhs = vec![0.0; n + me];
    for j in 0..n {
        rhs[j] = -p.linear[j];
    }
    d.gt_mul_add(&h, &mut rhs[..n]);
    rhs[n..].copy_from_slice(&b);
    let sol = d.solve(&exact, &factor, &rhs);
    let mut x = sol[..n].to_vec();
    let mut y = vec![0.0; me];
    let gx = d.g_mul(&x);
    let mut s: Vec<f64> = h.iter().zip(&gx).map(|(hi, g)| (hi - g).max(1.0)).collect();
    let mut z = vec![1.0; mi];

    let mut status = Status::IterationLimit;
    let mut iterations = 0;
    for it in 0..=settings.max_iter {
        iterations = it;
        let mut rd: Vec<f64> = (0..n).map(|j| p.hess_diag[j] * x[j] + p.linear[j]).collect();
        d.at_mul_add(&y, &mut rd);
        d.gt_mul_add(&z, &mut rd);
        let rp: Vec<f64> = d.a_mul(&x).iter().zip(&b).map(|(a, bi)| a - bi).collect();
        let rg: Vec<f64> = d.g_mul(&x).iter().zip(&s).zip(&h).map(|((g, si), hi)| g + si - hi).collect();
        let mu = if mi > 0 { s.iter().zip(&z).map(|(a, b)| a * b).sum::<f64>() / mi as f64 } else { 0.0 };
        let comp = s.iter().zip(&z).fold(0.0f64, |m, (a, b)| m.max(a * b));
        let pres = inf_norm(&rp).max(inf_norm(&rg)) / scale_p;
        let dres = inf_norm(&rd) / scale_d;
        if pres <= settings.tol && dres <= settings.tol && comp <= settings.tol {
            status = Status::Optimal;
            break;
        }
        if inf_norm(&z).max(inf_norm(&y)) > 1e12 {
            status = if pres > settings.tol { Status::Infeasible } else { Status::Stalled };
            break;
        }
        if inf_norm(&x) > 1e12 {
            status = Status::Unbounded;
            break;
        }
        if it == settings.max_iter {
            break;
        }

        let w: Vec<f64> = z.iter().zip(&s).map(|(zi, si)| zi / si).collect();
        let exact = d.matrix(&w, 0.0);
        let factor = Kkt::factor(d.matrix(&w, reg), n + me);
        let direction = |rsz: &[f64]| -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
            // corr_i = (z_i rg_i − rsz_i) / s_i
            let corr: Vec<f64> = (0..mi).map(|i| (z[i] * rg[i] - rsz[i]) / s[i]).collect();
            let mut rhs = vec![0.0; n + me];
            for j in 0..n {
                rhs[j] = -rd[j];
            }
            let mut gtc = vec![0.0; n];
            d.gt_mul_add(&corr, &mut gtc);
            for j in 0..n {
                rhs[j] -= gtc[j];
            }
            for i in 0..me {
                rhs[n + i] = -rp[i];
            }
            let sol = d.solve(&exact, &factor, &rhs);
            let dx = sol[..n].to_vec();
            let dy = sol[n..].to_vec();
            let gdx = d.g_mul(&dx);
            let ds: Vec<f64> = (0..mi).map(|i| -rg[i] - gdx[i]).collect();
            let dz: Vec<f64> = (0..mi).map(|i| corr[i] + w[i] * gdx[i]).collect();
            (dx, dy, ds, dz)
        };

        let rsz: Vec<f64> = s.iter().zip(&z).map(|(a, b)| a * b).collect();
        let (dx, dy, ds, dz) = direction(&rsz);
        let (dx, dy, ds, dz) = if mi > 0 {
            let alpha = max_step(&s, &ds).min(max_step(&z, &dz));
            let mu_aff = (0..mi).map(|i| (s[i] + alpha * ds[i]) * (z[i] + alpha * dz[i])).sum::<f64>() / mi as f64;
            let sigma = (mu_aff / mu).powi(3).clamp(0.0, 1.0);
            let rsz: Vec<f64> = (0..mi).map(|i| s[i] * z[i] + ds[i] * dz[i] - sigma * mu).collect();
            direction(&rsz)
        } else {
            (dx, dy, ds, dz)
        };
        let alpha = if mi > 0 { (0.99 * max_step(&s, &ds).min(max_step(&z, &dz))).min(1.0) } else { 1.0 };
        for j in 0..n {
            x[j] += alpha * dx[j];
        }
        for i in 0..me {
            y[i] += alpha * dy[i];
        }
        for i in 0..mi {
            s[i] += alpha * ds[i];
            z[i] += alpha * dz[i];
        }
    }

    let mut result = SolverResult {
        objective: p.objective(&x),
        x,
        y_eq: y,
        z_ineq: z,
        z_cone: Vec::new(),
        status,
        achieved_tol: f64::INFINITY,
        iterations,
    };
    let k = kkt_residuals(p, &result);
    result.achieved_tol = k.primal.max(k.stationarity).max(k.complementarity);
    Ok(result)
}
