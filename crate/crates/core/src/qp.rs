//! Dense convex quadratic programs with box constraints,
//! `min 1/2 x'Hx + f'x  s.t.  lower <= x <= upper`, solved by a primal-dual
//! interior point method with Mehrotra predictor-corrector steps.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct BoxQp {
    pub h: Matrix,
    pub f: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    MaxIter,
    /// The Newton system could not be factorized even after regularization.
    Degenerate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: Vec<f64>,
    /// Multipliers of the lower and upper bounds.
    pub z_lower: Vec<f64>,
    pub z_upper: Vec<f64>,
    pub kkt_residual: f64,
    pub iterations: usize,
    pub status: QpStatus,
    /// Merit (max of scaled residuals) after each iteration.
    pub merit_trace: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QpOptions {
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for QpOptions {
    fn default() -> Self {
        QpOptions {
            tolerance: 1e-9,
            max_iterations: 100,
        }
    }
}

const SYMMETRY_TOL: f64 = 1e-12;
const RIDGE: f64 = 1e-10;

impl BoxQp {
    pub fn new(h: Matrix, f: Vec<f64>, lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let qp = BoxQp { h, f, lower, upper };
        qp.validate()?;
        Ok(qp)
    }

    pub fn dim(&self) -> usize {
        self.f.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.f.len();
        if n == 0 {
            return Err(Error::Qp("empty problem"));
        }
        if self.h.rows() != n
            || self.h.cols() != n
            || self.lower.len() != n
            || self.upper.len() != n
        {
            return Err(Error::Qp("dimension mismatch"));
        }
        if !self.h.is_finite() || self.f.iter().any(|v| !v.is_finite()) {
            return Err(Error::Qp("non-finite problem data"));
        }
        let scale = self.h.max_abs().max(1.0);
        if self.h.asymmetry() > SYMMETRY_TOL * scale {
            return Err(Error::Qp("Hessian is not symmetric"));
        }
        for i in 0..n {
            if !(self.lower[i].is_finite() && self.upper[i].is_finite()) {
                return Err(Error::Qp("bounds must be finite"));
            }
            if self.lower[i] > self.upper[i] {
                return Err(Error::Qp("lower bound exceeds upper bound"));
            }
        }
        Ok(())
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        let hx = self.h.mul_vec(x);
        (0..x.len())
            .map(|i| 0.5 * x[i] * hx[i] + self.f[i] * x[i])
            .sum()
    }
}

/// Largest of stationarity, bound violation and complementarity.
pub fn kkt_residual(qp: &BoxQp, x: &[f64], z_lower: &[f64], z_upper: &[f64]) -> f64 {
    let hx = qp.h.mul_vec(x);
    let mut r: f64 = 0.0;
    for i in 0..x.len() {
        let stat = hx[i] + qp.f[i] - z_lower[i] + z_upper[i];
        let viol = (qp.lower[i] - x[i]).max(x[i] - qp.upper[i]).max(0.0);
        let comp = ((x[i] - qp.lower[i]) * z_lower[i])
            .abs()
            .max(((qp.upper[i] - x[i]) * z_upper[i]).abs());
        let dual_sign = (-z_lower[i]).max(-z_upper[i]).max(0.0);
        r = r.max(stat.abs()).max(viol).max(comp).max(dual_sign);
    }
    r
}

fn max_step(s: &[f64], ds: &[f64]) -> f64 {
    let mut a: f64 = 1.0;
    for i in 0..s.len() {
        if ds[i] < 0.0 {
            a = a.min(-s[i] / ds[i]);
        }
    }
    a
}

pub fn solve_box_qp(qp: &BoxQp, opts: &QpOptions) -> Result<QpSolution> {
    qp.validate()?;
    let n = qp.dim();
    // Fixed variables (equal bounds) are pinned and dropped from the iteration.
    let free: Vec<usize> = (0..n)
        .filter(|&i| qp.upper[i] - qp.lower[i] > 0.0)
        .collect();
    let mut x: Vec<f64> = (0..n).map(|i| 0.5 * (qp.lower[i] + qp.upper[i])).collect();
    let mut zl = vec![1.0; n];
    let mut zu = vec![1.0; n];
    for i in 0..n {
        if qp.upper[i] - qp.lower[i] <= 0.0 {
            zl[i] = 0.0;
            zu[i] = 0.0;
        }
    }
    let m = free.len();
    let scale = 1.0 + qp.h.max_abs() + qp.f.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let mut trace = Vec::new();
    let mut status = QpStatus::MaxIter;
    let mut iterations = 0;

    if m == 0 {
        status = QpStatus::Optimal;
    }

    while m > 0 && iterations < opts.max_iterations {
        let hx = qp.h.mul_vec(&x);
        let sl: Vec<f64> = free.iter().map(|&i| x[i] - qp.lower[i]).collect();
        let su: Vec<f64> = free.iter().map(|&i| qp.upper[i] - x[i]).collect();
        let zlf: Vec<f64> = free.iter().map(|&i| zl[i]).collect();
        let zuf: Vec<f64> = free.iter().map(|&i| zu[i]).collect();
        let rd: Vec<f64> = free
            .iter()
            .map(|&i| hx[i] + qp.f[i] - zl[i] + zu[i])
            .collect();
        let mu = (0..m).map(|k| sl[k] * zlf[k] + su[k] * zuf[k]).sum::<f64>() / (2 * m) as f64;

        let dual_res = rd.iter().fold(0.0f64, |a, v| a.max(v.abs())) / scale;
        let comp_res = mu / scale;
        let merit = dual_res.max(comp_res);
        trace.push(merit);
        if dual_res < opts.tolerance && comp_res < opts.tolerance {
            status = QpStatus::Optimal;
            break;
        }
        iterations += 1;

        // Reduced Newton matrix H_ff + diag(zl/sl + zu/su).
        let mut k = Matrix::zeros(m, m);
        for (a, &i) in free.iter().enumerate() {
            for (b, &j) in free.iter().enumerate() {
                k[(a, b)] = qp.h[(i, j)];
            }
            k[(a, a)] += zlf[a] / sl[a] + zuf[a] / su[a];
        }
        let chol = match k.cholesky() {
            Ok(l) => l,
            Err(_) => {
                for a in 0..m {
                    k[(a, a)] += RIDGE * scale;
                }
                match k.cholesky() {
                    Ok(l) => l,
                    Err(_) => {
                        status = QpStatus::Degenerate;
                        break;
                    }
                }
            }
        };
        let solve = |rcl: &[f64], rcu: &[f64]| -> Vec<f64> {
            let rhs: Vec<f64> = (0..m)
                .map(|a| -rd[a] - rcl[a] / sl[a] + rcu[a] / su[a])
                .collect();
            cholesky_solve(&chol, &rhs)
        };
        let dual_dirs = |dx: &[f64], rcl: &[f64], rcu: &[f64]| -> (Vec<f64>, Vec<f64>) {
            let dzl = (0..m).map(|a| (-rcl[a] - zlf[a] * dx[a]) / sl[a]).collect();
            let dzu = (0..m).map(|a| (-rcu[a] + zuf[a] * dx[a]) / su[a]).collect();
            (dzl, dzu)
        };
        let step_len = |dx: &[f64], dzl: &[f64], dzu: &[f64]| -> (f64, f64) {
            let neg: Vec<f64> = dx.iter().map(|v| -v).collect();
            let ap = max_step(&sl, dx).min(max_step(&su, &neg));
            let ad = max_step(&zlf, dzl).min(max_step(&zuf, dzu));
            (ap, ad)
        };

        // Predictor.
        let rcl: Vec<f64> = (0..m).map(|a| sl[a] * zlf[a]).collect();
        let rcu: Vec<f64> = (0..m).map(|a| su[a] * zuf[a]).collect();
        let dx_aff = solve(&rcl, &rcu);
        let (dzl_aff, dzu_aff) = dual_dirs(&dx_aff, &rcl, &rcu);
        let (ap, ad) = step_len(&dx_aff, &dzl_aff, &dzu_aff);
        let mu_aff = (0..m)
            .map(|a| {
                (sl[a] + ap * dx_aff[a]) * (zlf[a] + ad * dzl_aff[a])
                    + (su[a] - ap * dx_aff[a]) * (zuf[a] + ad * dzu_aff[a])
            })
            .sum::<f64>()
            / (2 * m) as f64;
        let ratio = (mu_aff / mu).max(0.0);
        let sigma = (ratio * ratio * ratio).min(1.0);

        // Corrector with centering.
        let rcl: Vec<f64> = (0..m)
            .map(|a| sl[a] * zlf[a] + dx_aff[a] * dzl_aff[a] - sigma * mu)
            .collect();
        let rcu: Vec<f64> = (0..m)
            .map(|a| su[a] * zuf[a] - dx_aff[a] * dzu_aff[a] - sigma * mu)
            .collect();
        let dx = solve(&rcl, &rcu);
        let (dzl, dzu) = dual_dirs(&dx, &rcl, &rcu);
        let (ap, ad) = step_len(&dx, &dzl, &dzu);
        let eta = (1.0 - mu).clamp(0.9, 0.995);
        let (ap, ad) = ((eta * ap).min(1.0), (eta * ad).min(1.0));
        for (a, &i) in free.iter().enumerate() {
            x[i] += ap * dx[a];
            zl[i] += ad * dzl[a];
            zu[i] += ad * dzu[a];
        }
        if x.iter().any(|v| !v.is_finite()) {
            status = QpStatus::Degenerate;
            break;
        }
    }

    for i in 0..n {
        if qp.upper[i] - qp.lower[i] <= 0.0 {
            x[i] = qp.lower[i];
            // pinned variables absorb their whole gradient in one multiplier
            let g = qp.h.mul_vec(&x)[i] + qp.f[i];
            if g >= 0.0 {
                zl[i] = g;
            } else {
                zu[i] = -g;
            }
        }
        x[i] = x[i].clamp(qp.lower[i], qp.upper[i]);
    }
    let mut kkt = kkt_residual(qp, &x, &zl, &zu);
    if status != QpStatus::Degenerate {
        if let Some((px, pzl, pzu)) = polish(qp, &x, &zl, &zu) {
            let pk = kkt_residual(qp, &px, &pzl, &pzu);
            if pk <= kkt {
                x = px;
                zl = pzl;
                zu = pzu;
                kkt = pk;
            }
        }
    }
    if status == QpStatus::MaxIter {
        log::debug!("box QP stopped at the iteration cap with KKT residual {kkt:e}");
    }
    Ok(QpSolution {
        x,
        z_lower: zl,
        z_upper: zu,
        kkt_residual: kkt,
        iterations,
        status,
        merit_trace: trace,
    })
}

/// Guesses the active set from the interior iterate and solves the
/// equality-constrained problem on the remaining variables. Interior iterates
/// approach degenerate bounds only like the square root of the barrier
/// parameter, so this recovers the last digits.
fn polish(qp: &BoxQp, x: &[f64], zl: &[f64], zu: &[f64]) -> Option<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let n = x.len();
    let mut px = x.to_vec();
    let mut free = Vec::new();
    for i in 0..n {
        let sl = x[i] - qp.lower[i];
        let su = qp.upper[i] - x[i];
        if qp.upper[i] - qp.lower[i] <= 0.0 || sl < zl[i] && sl <= su {
            px[i] = qp.lower[i];
        } else if su < zu[i] {
            px[i] = qp.upper[i];
        } else {
            free.push(i);
        }
    }
    if !free.is_empty() {
        let m = free.len();
        let mut k = Matrix::zeros(m, m);
        let mut rhs = vec![0.0; m];
        for (a, &i) in free.iter().enumerate() {
            rhs[a] = -qp.f[i];
            for j in 0..n {
                if !free.contains(&j) {
                    rhs[a] -= qp.h[(i, j)] * px[j];
                }
            }
            for (b, &j) in free.iter().enumerate() {
                k[(a, b)] = qp.h[(i, j)];
            }
        }
        let sol = k.solve(&Matrix::column(&rhs)).ok()?;
        for (a, &i) in free.iter().enumerate() {
            let v = sol[(a, 0)];
            if !v.is_finite() || v < qp.lower[i] || v > qp.upper[i] {
                return None;
            }
            px[i] = v;
        }
    }
    let hx = qp.h.mul_vec(&px);
    let mut pzl = vec![0.0; n];
    let mut pzu = vec![0.0; n];
    for i in 0..n {
        if free.contains(&i) {
            continue;
        }
        let g = hx[i] + qp.f[i];
        if px[i] == qp.lower[i] && (g >= 0.0 || qp.upper[i] == qp.lower[i]) {
            pzl[i] = g.max(0.0);
            pzu[i] = (-g).max(0.0);
        } else if px[i] == qp.upper[i] && g <= 0.0 {
            pzu[i] = -g;
        } else {
            return None;
        }
    }
    Some((px, pzl, pzu))
}

/// Solves `L L' y = b` given the lower Cholesky factor.
fn cholesky_solve(l: &Matrix, b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut y = b.to_vec();
    for i in 0..n {
        let mut s = y[i];
        for k in 0..i {
            s -= l[(i, k)] * y[k];
        }
        y[i] = s / l[(i, i)];
    }
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in i + 1..n {
            s -= l[(k, i)] * y[k];
        }
        y[i] = s / l[(i, i)];
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_box(h: Matrix, f: Vec<f64>) -> BoxQp {
        let n = f.len();
        BoxQp::new(h, f, vec![0.0; n], vec![1.0; n]).unwrap()
    }

    #[test]
    fn identity_with_zero_linear_term_goes_to_zero() {
        let qp = unit_box(Matrix::identity(4), vec![0.0; 4]);
        let sol = solve_box_qp(&qp, &QpOptions::default()).unwrap();
        assert_eq!(sol.status, QpStatus::Optimal);
        assert!(sol.x.iter().all(|v| v.abs() < 1e-8));
        assert!(sol.kkt_residual < 1e-8);
    }

    #[test]
    fn separable_clip_at_upper_bound() {
        let qp = unit_box(Matrix::identity(3), vec![-2.0; 3]);
        let sol = solve_box_qp(&qp, &QpOptions::default()).unwrap();
        assert!(sol.x.iter().all(|v| (v - 1.0).abs() < 1e-8));
        assert!(sol.z_upper.iter().all(|z| (z - 1.0).abs() < 1e-6));
    }

    #[test]
    fn interior_solution_matches_linear_solve() {
        let h = Matrix::from_rows(&[[4.0, 1.0], [1.0, 3.0]]);
        let qp = unit_box(h.clone(), vec![-1.0, -1.0]);
        let sol = solve_box_qp(&qp, &QpOptions::default()).unwrap();
        let exact = h.solve(&Matrix::column(&[1.0, 1.0])).unwrap();
        assert!((sol.x[0] - exact[(0, 0)]).abs() < 1e-9);
        assert!((sol.x[1] - exact[(1, 0)]).abs() < 1e-9);
    }

    #[test]
    fn zero_problem_kkt_is_zero() {
        let qp = unit_box(Matrix::zeros(2, 2), vec![0.0; 2]);
        assert_eq!(kkt_residual(&qp, &[0.3, 0.7], &[0.0; 2], &[0.0; 2]), 0.0);
        assert!(kkt_residual(&qp, &[1.5, 0.7], &[0.0; 2], &[0.0; 2]) > 0.0);
        let sol = solve_box_qp(&qp, &QpOptions::default()).unwrap();
        assert_eq!(sol.status, QpStatus::Optimal);
    }

    #[test]
    fn rejects_bad_input() {
        let h = Matrix::from_rows(&[[1.0, 0.5], [0.0, 1.0]]);
        assert!(BoxQp::new(h, vec![0.0; 2], vec![0.0; 2], vec![1.0; 2]).is_err());
        assert!(BoxQp::new(
            Matrix::identity(2),
            vec![0.0; 2],
            vec![1.0, 0.0],
            vec![0.0, 1.0]
        )
        .is_err());
    }

    #[test]
    fn fixed_variables_are_pinned() {
        let h = Matrix::from_rows(&[[2.0, 1.0], [1.0, 2.0]]);
        let qp = BoxQp::new(h, vec![0.0, -3.0], vec![0.5, 0.0], vec![0.5, 1.0]).unwrap();
        let sol = solve_box_qp(&qp, &QpOptions::default()).unwrap();
        assert_eq!(sol.x[0], 0.5);
        assert!((sol.x[1] - 1.0).abs() < 1e-8);
        assert!(sol.kkt_residual < 1e-8);
    }

    #[test]
    fn singular_psd_hessian() {
        // rank one: only x0 + x1 is penalized
        let h = Matrix::from_rows(&[[1.0, 1.0], [1.0, 1.0]]);
        let qp = unit_box(h, vec![-0.5, -0.6]);
        let sol = solve_box_qp(&qp, &QpOptions::default()).unwrap();
        assert_eq!(sol.status, QpStatus::Optimal);
        assert!(sol.kkt_residual < 1e-8);
    }
}
