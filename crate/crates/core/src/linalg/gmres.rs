//! Restarted GMRES(m) with right preconditioning.
//!
//! The Krylov space is built for `A M^{-1}`, so the residual minimised in each
//! cycle is the true residual `b - A x`. Convergence is always confirmed by
//! recomputing that residual explicitly.

use serde::{Deserialize, Serialize};

use super::precond::Preconditioner;
use super::sparse::{dot, norm2, CsrMatrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GmresSettings {
    pub restart: usize,
    pub tol: f64,
    pub max_outer: usize,
}

impl Default for GmresSettings {
    fn default() -> Self {
        Self {
            restart: 60,
            tol: 1e-12,
            max_outer: 200,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    pub iterations: usize,
    pub restarts: usize,
    pub relative_residual: f64,
    pub converged: bool,
}

pub fn gmres(
    a: &CsrMatrix,
    rhs: &[f64],
    x0: Option<&[f64]>,
    settings: &GmresSettings,
    precond: &dyn Preconditioner,
) -> Result<(Vec<f64>, SolveStats)> {
    let n = a.dim();
    if rhs.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: rhs.len(),
        });
    }
    if !(settings.tol > 0.0) || settings.restart == 0 {
        return Err(Error::SolverSettings(format!(
            "need tol > 0 and restart >= 1 (got tol={}, restart={})",
            settings.tol, settings.restart
        )));
    }
    let mut x = match x0 {
        Some(x0) if x0.len() != n => {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: x0.len(),
            })
        }
        Some(x0) => x0.to_vec(),
        None => vec![0.0; n],
    };

    let bnorm = norm2(rhs);
    if bnorm == 0.0 {
        return Ok((
            vec![0.0; n],
            SolveStats {
                iterations: 0,
                restarts: 0,
                relative_residual: 0.0,
                converged: true,
            },
        ));
    }

    let m = settings.restart.min(n.max(1));
    let mut basis: Vec<Vec<f64>> = (0..=m).map(|_| vec![0.0; n]).collect();
    // Hessenberg columns, h[j][i] = H(i, j)
    let mut h = vec![vec![0.0; m + 1]; m];
    let mut cs = vec![0.0; m];
    let mut sn = vec![0.0; m];
    let mut g = vec![0.0; m + 1];
    let mut z = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut r = vec![0.0; n];

    let mut iterations = 0;
    let mut cycles = 0;
    let mut relres;
    loop {
        a.spmv_into(&x, &mut r)?;
        for (ri, bi) in r.iter_mut().zip(rhs) {
            *ri = bi - *ri;
        }
        let beta = norm2(&r);
        relres = beta / bnorm;
        if relres <= settings.tol || cycles == settings.max_outer {
            break;
        }
        cycles += 1;

        for (v, ri) in basis[0].iter_mut().zip(&r) {
            *v = ri / beta;
        }
        g.iter_mut().for_each(|gi| *gi = 0.0);
        g[0] = beta;

        let mut k = 0;
        while k < m {
            precond.apply(&basis[k], &mut z);
            a.spmv_into(&z, &mut w)?;
            let col = &mut h[k];
            for i in 0..=k {
                let hik = dot(&w, &basis[i]);
                col[i] = hik;
                for (wj, vj) in w.iter_mut().zip(&basis[i]) {
                    *wj -= hik * vj;
                }
            }
            let hnext = norm2(&w);
            col[k + 1] = hnext;

            for i in 0..k {
                let (a0, a1) = (col[i], col[i + 1]);
                col[i] = cs[i] * a0 + sn[i] * a1;
                col[i + 1] = -sn[i] * a0 + cs[i] * a1;
            }
            let denom = col[k].hypot(col[k + 1]);
            let (c, s) = if denom == 0.0 { (1.0, 0.0) } else { (col[k] / denom, col[k + 1] / denom) };
            cs[k] = c;
            sn[k] = s;
            col[k] = denom;
            col[k + 1] = 0.0;
            g[k + 1] = -s * g[k];
            g[k] *= c;

            iterations += 1;
            k += 1;
            if hnext == 0.0 || g[k].abs() <= settings.tol * bnorm {
                break;
            }
            let inv = 1.0 / hnext;
            for (v, wi) in basis[k].iter_mut().zip(&w) {
                *v = wi * inv;
            }
        }

        // back substitution for the k x k triangular system
        let mut y = vec![0.0; k];
        for i in (0..k).rev() {
            let mut s = g[i];
            for j in i + 1..k {
                s -= h[j][i] * y[j];
            }
            y[i] = s / h[i][i];
        }
        w.iter_mut().for_each(|wi| *wi = 0.0);
        for (yj, v) in y.iter().zip(&basis) {
            for (wi, vi) in w.iter_mut().zip(v) {
                *wi += yj * vi;
            }
        }
        precond.apply(&w, &mut z);
        for (xi, zi) in x.iter_mut().zip(&z) {
            *xi += zi;
        }
    }

    Ok((
        x,
        SolveStats {
            iterations,
            restarts: cycles.saturating_sub(1),
            relative_residual: relres,
            converged: relres <= settings.tol,
        },
    ))
}

/// `||b - A x|| / ||b||`, recomputed from scratch.
pub fn relative_residual(a: &CsrMatrix, x: &[f64], rhs: &[f64]) -> Result<f64> {
    let ax = a.spmv(x)?;
    let r: f64 = ax.iter().zip(rhs).map(|(p, q)| (q - p) * (q - p)).sum::<f64>().sqrt();
    let b = norm2(rhs);
    Ok(if b == 0.0 { r } else { r / b })
}
