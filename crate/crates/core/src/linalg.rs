//! Small dense symmetric-matrix helpers.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Eigenvalues below this fraction of the largest one count as zero.
pub const PD_RATIO: f64 = 1e-12;

/// Eigenvalues below this fraction of the largest one are lifted when a
/// quadratic form needs a repaired inverse.
pub const REPAIR_RATIO: f64 = 1e-10;

const JACOBI_OFF_TOL: f64 = 1e-12;
const JACOBI_MAX_SWEEPS: usize = 100;

/// Symmetric eigendecomposition `M = V diag(values) Vᵀ`.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: Vec<f64>,
    /// Eigenvectors stored as columns.
    pub vectors: DMatrix<f64>,
}

impl SymEigen {
    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `V diag(f(values)) Vᵀ`.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let p = self.values.len();
        let mut out = DMatrix::zeros(p, p);
        for (k, &lam) in self.values.iter().enumerate() {
            let w = f(lam);
            let v = self.vectors.column(k);
            for i in 0..p {
                for j in 0..p {
                    out[(i, j)] += w * v[i] * v[j];
                }
            }
        }
        out
    }
}

pub fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..m.nrows() {
        for j in 0..i {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Cyclic Jacobi rotations until the off-diagonal Frobenius norm falls below
/// `1e-12` times the matrix norm.
pub fn jacobi_eigen(m: &DMatrix<f64>) -> SymEigen {
    let p = m.nrows();
    assert_eq!(p, m.ncols(), "jacobi_eigen needs a square matrix");
    let mut a = (m + m.transpose()) * 0.5;
    let mut v = DMatrix::<f64>::identity(p, p);
    let scale = a.norm().max(f64::MIN_POSITIVE);

    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut off = 0.0;
        for i in 0..p {
            for j in 0..p {
                if i != j {
                    off += a[(i, j)] * a[(i, j)];
                }
            }
        }
        if off.sqrt() <= JACOBI_OFF_TOL * scale {
            break;
        }
        for k in 0..p {
            for l in (k + 1)..p {
                let akl = a[(k, l)];
                if akl == 0.0 {
                    continue;
                }
                let theta = (a[(l, l)] - a[(k, k)]) / (2.0 * akl);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for r in 0..p {
                    let ark = a[(r, k)];
                    let arl = a[(r, l)];
                    a[(r, k)] = c * ark - s * arl;
                    a[(r, l)] = s * ark + c * arl;
                }
                for r in 0..p {
                    let akr = a[(k, r)];
                    let alr = a[(l, r)];
                    a[(k, r)] = c * akr - s * alr;
                    a[(l, r)] = s * akr + c * alr;
                }
                for r in 0..p {
                    let vrk = v[(r, k)];
                    let vrl = v[(r, l)];
                    v[(r, k)] = c * vrk - s * vrl;
                    v[(r, l)] = s * vrk + c * vrl;
                }
            }
        }
    }
    SymEigen {
        values: (0..p).map(|i| a[(i, i)]).collect(),
        vectors: v,
    }
}

/// `M^{-1/2}` for a symmetric positive definite `M`.
pub fn sym_inv_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let scale = m.amax().max(f64::MIN_POSITIVE);
    let asym = max_asymmetry(m);
    if asym > 1e-10 * scale {
        return Err(Error::NotSymmetric(asym));
    }
    let eig = jacobi_eigen(m);
    let (lo, hi) = (eig.min_value(), eig.max_value());
    if hi <= 0.0 || lo <= PD_RATIO * hi {
        return Err(Error::NotPositiveDefinite {
            min_eig: lo,
            max_eig: hi,
        });
    }
    let out = eig.reconstruct_with(|lam| lam.powf(-0.5));
    Ok((&out + out.transpose()) * 0.5)
}

/// A symmetric matrix prepared for quadratic forms `vᵀ M⁻¹ v`, with small or
/// negative eigenvalues lifted to `REPAIR_RATIO` times the largest one.
#[derive(Debug, Clone)]
pub struct RepairedInverse {
    eig: SymEigen,
    floor: f64,
    pub clipped: usize,
    /// Condition number of the matrix as given (infinite when indefinite).
    pub condition: f64,
}

impl RepairedInverse {
    pub fn new(m: &DMatrix<f64>) -> Result<Self> {
        let eig = jacobi_eigen(m);
        let hi = eig.max_value();
        let lo = eig.min_value();
        if !(hi > 0.0) || !hi.is_finite() {
            return Err(Error::SingularCovariance {
                condition: f64::INFINITY,
            });
        }
        let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
        let floor = REPAIR_RATIO * hi;
        let clipped = eig.values.iter().filter(|&&l| l < floor).count();
        Ok(Self {
            eig,
            floor,
            clipped,
            condition,
        })
    }

    pub fn quad_form(&self, v: &DVector<f64>) -> f64 {
        self.eig
            .values
            .iter()
            .enumerate()
            .map(|(k, &lam)| {
                let proj = self.eig.vectors.column(k).dot(v);
                proj * proj / lam.max(self.floor)
            })
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jacobi_recovers_a_known_spectrum() {
        let m = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0]);
        let eig = jacobi_eigen(&m);
        let back = eig.reconstruct_with(|l| l);
        assert!(max_abs_diff(&back, &m) < 1e-12);
        let vtv = eig.vectors.transpose() * &eig.vectors;
        assert!(max_abs_diff(&vtv, &DMatrix::identity(3, 3)) < 1e-12);
    }

    #[test]
    fn inv_sqrt_of_identity_and_diagonal() {
        let id = DMatrix::<f64>::identity(3, 3);
        assert!(max_abs_diff(&sym_inv_sqrt(&id).unwrap(), &id) < 1e-14);
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 9.0]));
        let s = sym_inv_sqrt(&d).unwrap();
        assert!((s[(0, 0)] - 0.5).abs() < 1e-14);
        assert!((s[(1, 1)] - 1.0 / 3.0).abs() < 1e-14);
        assert!(s[(0, 1)].abs() < 1e-14);
    }

    #[test]
    fn inv_sqrt_rejects_singular_and_asymmetric() {
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.0]));
        assert!(matches!(sym_inv_sqrt(&d), Err(Error::NotPositiveDefinite { .. })));
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(matches!(sym_inv_sqrt(&a), Err(Error::NotSymmetric(_))));
    }

    #[test]
    fn inv_sqrt_sandwich_is_identity() {
        let m = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.1, 0.3, 1.5, -0.2, 0.1, -0.2, 0.7]);
        let s = sym_inv_sqrt(&m).unwrap();
        assert!(max_asymmetry(&s) < 1e-14);
        assert!(max_abs_diff(&(&s * &m * &s), &DMatrix::identity(3, 3)) < 1e-8);
        assert!(max_abs_diff(&(&s * &s * &m), &DMatrix::identity(3, 3)) < 1e-8);
    }

    #[test]
    fn repaired_inverse_clips_indefinite_directions() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, -1.0]));
        let r = RepairedInverse::new(&m).unwrap();
        assert_eq!(r.clipped, 1);
        assert!(r.condition.is_infinite());
        let v = DVector::from_vec(vec![1.0, 0.0]);
        assert!((r.quad_form(&v) - 0.5).abs() < 1e-14);
        assert!(RepairedInverse::new(&DMatrix::zeros(2, 2)).is_err());
    }
}
