use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::sparse::CsrMatrix;
use crate::error::{Error, Result};

/// Approximate inverse action `z = M^{-1} r`.
pub trait Preconditioner: Sync {
    fn apply(&self, r: &[f64], z: &mut [f64]);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PrecondKind {
    None,
    Jacobi,
    #[default]
    Ilu0,
}

impl fmt::Display for PrecondKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PrecondKind::None => "none",
            PrecondKind::Jacobi => "jacobi",
            PrecondKind::Ilu0 => "ilu0",
        })
    }
}

impl FromStr for PrecondKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(PrecondKind::None),
            "jacobi" => Ok(PrecondKind::Jacobi),
            "ilu0" => Ok(PrecondKind::Ilu0),
            other => Err(Error::SolverSettings(format!("unknown preconditioner '{other}'"))),
        }
    }
}

#[derive(Debug, Clone)]
pub enum Precond {
    Identity,
    Jacobi(Vec<f64>),
    Ilu0(Ilu0),
}

impl Preconditioner for Precond {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        match self {
            Precond::Identity => z.copy_from_slice(r),
            Precond::Jacobi(inv_diag) => {
                for ((zi, ri), d) in z.iter_mut().zip(r).zip(inv_diag) {
                    *zi = ri * d;
                }
            }
            Precond::Ilu0(ilu) => ilu.apply(r, z),
        }
    }
}

pub fn build_preconditioner(a: &CsrMatrix, kind: PrecondKind) -> Result<Precond> {
    match kind {
        PrecondKind::None => Ok(Precond::Identity),
        PrecondKind::Jacobi => {
            let diag = a.diagonal();
            let mut inv = Vec::with_capacity(diag.len());
            for (row, d) in diag.into_iter().enumerate() {
                if d == 0.0 {
                    return Err(Error::ZeroDiagonal { row });
                }
                inv.push(1.0 / d);
            }
            Ok(Precond::Jacobi(inv))
        }
        PrecondKind::Ilu0 => Ilu0::factor(a).map(Precond::Ilu0),
    }
}

/// Incomplete LU factorisation restricted to the pattern of `A`.
///
/// The strictly lower part holds `L` (unit diagonal implied), the rest `U`.
#[derive(Debug, Clone)]
pub struct Ilu0 {
    lu: CsrMatrix,
    diag_pos: Vec<usize>,
}

impl Ilu0 {
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        let n = a.dim();
        let row_ptr = a.row_ptr();
        let cols = a.col_idx();
        let mut vals = a.values().to_vec();
        let mut diag_pos = Vec::with_capacity(n);
        for i in 0..n {
            match a.position(i, i) {
                Some(p) => diag_pos.push(p),
                None => return Err(Error::ZeroPivot { row: i }),
            }
        }

        // column -> position within the current row, usize::MAX when absent
        let mut marker = vec![usize::MAX; n];
        for i in 0..n {
            let (start, end) = (row_ptr[i], row_ptr[i + 1]);
            for p in start..end {
                marker[cols[p]] = p;
            }
            for p in start..diag_pos[i] {
                let k = cols[p];
                let pivot = vals[diag_pos[k]];
                let factor = vals[p] / pivot;
                vals[p] = factor;
                for q in diag_pos[k] + 1..row_ptr[k + 1] {
                    let target = marker[cols[q]];
                    if target != usize::MAX {
                        vals[target] -= factor * vals[q];
                    }
                }
            }
            for p in start..end {
                marker[cols[p]] = usize::MAX;
            }
            let d = vals[diag_pos[i]];
            if d == 0.0 || !d.is_finite() {
                return Err(Error::ZeroPivot { row: i });
            }
        }

        let lu = CsrMatrix::new(n, row_ptr.to_vec(), cols.to_vec(), vals)?;
        Ok(Self { lu, diag_pos })
    }

    pub fn apply(&self, r: &[f64], z: &mut [f64]) {
        let n = self.lu.dim();
        let row_ptr = self.lu.row_ptr();
        let cols = self.lu.col_idx();
        let vals = self.lu.values();
        for i in 0..n {
            let mut s = r[i];
            for p in row_ptr[i]..self.diag_pos[i] {
                s -= vals[p] * z[cols[p]];
            }
            z[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = z[i];
            for p in self.diag_pos[i] + 1..row_ptr[i + 1] {
                s -= vals[p] * z[cols[p]];
            }
            z[i] = s / vals[self.diag_pos[i]];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jacobi_scales_by_diagonal() {
        let a = CsrMatrix::from_dense(&[vec![2.0, 0.0], vec![0.0, 4.0]]).unwrap();
        let p = build_preconditioner(&a, PrecondKind::Jacobi).unwrap();
        let mut z = [0.0; 2];
        p.apply(&[2.0, 4.0], &mut z);
        assert_eq!(z, [1.0, 1.0]);
    }

    #[test]
    fn jacobi_rejects_zero_diagonal() {
        let a = CsrMatrix::from_dense(&[vec![0.0, 1.0], vec![1.0, 4.0]]).unwrap();
        assert!(matches!(
            build_preconditioner(&a, PrecondKind::Jacobi),
            Err(Error::ZeroDiagonal { row: 0 })
        ));
    }

    #[test]
    fn ilu0_exact_on_lower_triangular() {
        let dense = vec![
            vec![2.0, 0.0, 0.0],
            vec![1.0, 3.0, 0.0],
            vec![-1.0, 2.0, 4.0],
        ];
        let a = CsrMatrix::from_dense(&dense).unwrap();
        let p = build_preconditioner(&a, PrecondKind::Ilu0).unwrap();
        let x = [1.0, -2.0, 0.5];
        let b = a.spmv(&x).unwrap();
        let mut z = [0.0; 3];
        p.apply(&b, &mut z);
        for (zi, xi) in z.iter().zip(&x) {
            assert!((zi - xi).abs() < 1e-15);
        }
    }

    #[test]
    fn ilu0_exact_on_tridiagonal() {
        // no fill for tridiagonal matrices, so ILU(0) = LU
        let n = 6;
        let mut dense = vec![vec![0.0; n]; n];
        for i in 0..n {
            dense[i][i] = 4.0;
            if i > 0 {
                dense[i][i - 1] = -1.0;
            }
            if i + 1 < n {
                dense[i][i + 1] = -2.0;
            }
        }
        let a = CsrMatrix::from_dense(&dense).unwrap();
        let ilu = Ilu0::factor(&a).unwrap();
        let x: Vec<f64> = (0..n).map(|i| i as f64 - 2.0).collect();
        let b = a.spmv(&x).unwrap();
        let mut z = vec![0.0; n];
        ilu.apply(&b, &mut z);
        for (zi, xi) in z.iter().zip(&x) {
            assert!((zi - xi).abs() < 1e-14);
        }
    }

    #[test]
    fn ilu0_zero_pivot_names_row() {
        let a = CsrMatrix::from_dense(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        assert!(matches!(Ilu0::factor(&a), Err(Error::ZeroPivot { row: 1 })));
        let a = CsrMatrix::from_dense(&[vec![1.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert!(matches!(Ilu0::factor(&a), Err(Error::ZeroPivot { row: 1 })));
    }

    #[test]
    fn kind_round_trips_through_str() {
        for k in [PrecondKind::None, PrecondKind::Jacobi, PrecondKind::Ilu0] {
            assert_eq!(k.to_string().parse::<PrecondKind>().unwrap(), k);
        }
        assert!("ilu1".parse::<PrecondKind>().is_err());
    }
}
