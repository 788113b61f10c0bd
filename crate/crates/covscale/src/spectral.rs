//! Sample covariance and its symmetric eigendecomposition.
//!
//! The eigenbasis plays the role of a frequency basis: projecting a
//! standardized data matrix onto it yields the dual-space signal the
//! band-pass kernels filter. The eigensolver is a cyclic Jacobi sweep, which
//! is exact enough for the dimensions involved (p of a few hundred) and,
//! unlike threaded BLAS backends, bit-reproducible.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 100;
/// Eigenvalues no more negative than this are treated as roundoff and
/// clamped to zero; anything below is an error.
const NEGATIVE_EIGENVALUE_TOL: f64 = -1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovarianceMatrix {
    pub matrix: Array2<f64>,
    pub n_samples: usize,
}

/// Orthonormal eigenvectors (columns of `eigenvectors`) and ascending
/// eigenvalues of a sample covariance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralBasis {
    pub eigenvectors: Array2<f64>,
    pub eigenvalues: Array1<f64>,
}

impl SpectralBasis {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Copy of the basis with eigenvalues divided by the largest one.
    /// No-op when the spectrum is identically zero.
    pub fn with_normalized_eigenvalues(&self) -> SpectralBasis {
        let max = self.eigenvalues[self.eigenvalues.len() - 1];
        if max <= 0.0 {
            return self.clone();
        }
        SpectralBasis {
            eigenvectors: self.eigenvectors.clone(),
            eigenvalues: &self.eigenvalues / max,
        }
    }
}

/// Sample covariance (1/n)XXᵀ of a row-centered matrix, symmetrized to kill
/// roundoff asymmetry.
pub fn covariance(x: &ArrayView2<f64>) -> Result<CovarianceMatrix> {
    let (p, n) = x.dim();
    if n == 0 || p == 0 {
        return Err(Error::EmptyDataset);
    }
    for (row, mean) in x.mean_axis(Axis(1)).unwrap().iter().enumerate() {
        if mean.abs() > 1e-8 {
            return Err(Error::NotCentered { row, mean: *mean });
        }
    }
    let raw = x.dot(&x.t()) / n as f64;
    let sym = (&raw + &raw.t()) / 2.0;
    Ok(CovarianceMatrix {
        matrix: sym,
        n_samples: n,
    })
}

/// Full eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Stops when the off-diagonal Frobenius norm drops below `1e-12 * ||A||_F`,
/// errors after 100 sweeps. Output is deterministic: eigenvalues ascending,
/// and each eigenvector is signed so its largest-magnitude entry (lowest
/// index on ties) is positive.
pub fn eigendecompose(cov: &CovarianceMatrix) -> Result<SpectralBasis> {
    let p = cov.matrix.nrows();
    assert_eq!(p, cov.matrix.ncols(), "covariance must be square");
    let mut a = cov.matrix.clone();
    let mut v = Array2::<f64>::eye(p);

    let norm = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let threshold = 1e-12 * norm;

    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        if off_diagonal_norm(&a) <= threshold {
            converged = true;
            break;
        }
        for piv_p in 0..p - 1 {
            for piv_q in piv_p + 1..p {
                rotate(&mut a, &mut v, piv_p, piv_q);
            }
        }
    }
    if !converged && off_diagonal_norm(&a) > threshold {
        return Err(Error::EigenNoConvergence(MAX_SWEEPS));
    }

    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&i, &j| a[[i, i]].partial_cmp(&a[[j, j]]).unwrap());

    let mut eigenvalues = Array1::<f64>::zeros(p);
    let mut eigenvectors = Array2::<f64>::zeros((p, p));
    for (dst, &src) in order.iter().enumerate() {
        let mut lambda = a[[src, src]];
        if lambda < 0.0 {
            if lambda < NEGATIVE_EIGENVALUE_TOL {
                return Err(Error::NegativeEigenvalue(lambda));
            }
            lambda = 0.0;
        }
        eigenvalues[dst] = lambda;
        eigenvectors.column_mut(dst).assign(&v.column(src));
    }
    fix_signs(&mut eigenvectors);

    Ok(SpectralBasis {
        eigenvectors,
        eigenvalues,
    })
}

/// Dual-space projection UᵀX.
pub fn project(basis: &SpectralBasis, x: &ArrayView2<f64>) -> Array2<f64> {
    assert_eq!(
        basis.dim(),
        x.nrows(),
        "basis dimension {} does not match data rows {}",
        basis.dim(),
        x.nrows()
    );
    basis.eigenvectors.t().dot(x)
}

fn off_diagonal_norm(a: &Array2<f64>) -> f64 {
    let p = a.nrows();
    let mut sum = 0.0;
    for i in 0..p {
        for j in 0..p {
            if i != j {
                sum += a[[i, j]] * a[[i, j]];
            }
        }
    }
    sum.sqrt()
}

/// One Jacobi rotation annihilating a[p,q], accumulating into v.
fn rotate(a: &mut Array2<f64>, v: &mut Array2<f64>, p: usize, q: usize) {
    let apq = a[[p, q]];
    if apq == 0.0 {
        return;
    }
    let tau = (a[[q, q]] - a[[p, p]]) / (2.0 * apq);
    let t = if tau >= 0.0 {
        1.0 / (tau + (1.0 + tau * tau).sqrt())
    } else {
        -1.0 / (-tau + (1.0 + tau * tau).sqrt())
    };
    let c = 1.0 / (1.0 + t * t).sqrt();
    let s = t * c;

    let n = a.nrows();
    for k in 0..n {
        let akp = a[[k, p]];
        let akq = a[[k, q]];
        a[[k, p]] = c * akp - s * akq;
        a[[k, q]] = s * akp + c * akq;
    }
    for k in 0..n {
        let apk = a[[p, k]];
        let aqk = a[[q, k]];
        a[[p, k]] = c * apk - s * aqk;
        a[[q, k]] = s * apk + c * aqk;
    }
    for k in 0..n {
        let vkp = v[[k, p]];
        let vkq = v[[k, q]];
        v[[k, p]] = c * vkp - s * vkq;
        v[[k, q]] = s * vkp + c * vkq;
    }
}

/// Sign convention: the largest-magnitude entry of each column is positive;
/// on equal magnitudes the lowest index decides.
fn fix_signs(u: &mut Array2<f64>) {
    for mut col in u.columns_mut() {
        let mut best = 0;
        for (i, value) in col.iter().enumerate() {
            if value.abs() > col[best].abs() {
                best = i;
            }
        }
        if col[best] < 0.0 {
            col.mapv_inplace(|x| -x);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::Rng;

    fn max_abs(a: &Array2<f64>) -> f64 {
        a.iter().fold(0.0f64, |m, x| m.max(x.abs()))
    }

    fn random_centered(p: usize, n: usize, seed: u64) -> Array2<f64> {
        let mut rng = crate::rng::substream(seed, "spectral-test");
        let mut x = Array2::from_shape_fn((p, n), |_| rng.random_range(-1.0..1.0));
        for mut row in x.rows_mut() {
            let mean = row.mean().unwrap();
            row.mapv_inplace(|v| v - mean);
        }
        x
    }

    #[test]
    fn zero_matrix_gives_zero_covariance() {
        let x = Array2::<f64>::zeros((3, 4));
        let cov = covariance(&x.view()).unwrap();
        assert_eq!(cov.matrix, Array2::<f64>::zeros((3, 3)));
        assert_eq!(cov.n_samples, 4);
    }

    #[test]
    fn hand_computed_two_by_two() {
        // X = [[1,-1],[1,-1]] -> (1/2) X Xᵀ = [[1,1],[1,1]]
        let x = array![[1.0, -1.0], [1.0, -1.0]];
        let cov = covariance(&x.view()).unwrap();
        assert_eq!(cov.matrix, array![[1.0, 1.0], [1.0, 1.0]]);
    }

    #[test]
    fn non_centered_input_rejected() {
        let x = array![[1.0, 2.0], [0.5, -0.5]];
        assert!(matches!(
            covariance(&x.view()),
            Err(Error::NotCentered { row: 0, .. })
        ));
    }

    #[test]
    fn standardized_features_have_near_unit_diagonal() {
        let mut x = random_centered(5, 200, 42);
        for mut row in x.rows_mut() {
            let std = (row.iter().map(|v| v * v).sum::<f64>() / 200.0).sqrt();
            row.mapv_inplace(|v| v / std);
        }
        let cov = covariance(&x.view()).unwrap();
        for i in 0..5 {
            assert!((cov.matrix[[i, i]] - 1.0).abs() < 0.05);
        }
    }

    #[test]
    fn identity_eigendecomposition() {
        let cov = CovarianceMatrix {
            matrix: Array2::eye(3),
            n_samples: 10,
        };
        let basis = eigendecompose(&cov).unwrap();
        assert_eq!(basis.eigenvalues, array![1.0, 1.0, 1.0]);
        let gram = basis.eigenvectors.t().dot(&basis.eigenvectors);
        assert!(max_abs(&(&gram - &Array2::<f64>::eye(3))) <= 1e-10);
    }

    #[test]
    fn two_by_two_closed_form() {
        let cov = CovarianceMatrix {
            matrix: array![[1.0, 1.0], [1.0, 1.0]],
            n_samples: 2,
        };
        let basis = eigendecompose(&cov).unwrap();
        assert!((basis.eigenvalues[0] - 0.0).abs() <= 1e-12);
        assert!((basis.eigenvalues[1] - 2.0).abs() <= 1e-12);
        let inv_sqrt2 = 1.0 / 2.0f64.sqrt();
        // sign convention: largest-magnitude entry positive, lowest index on ties
        let u0 = basis.eigenvectors.column(0);
        let u1 = basis.eigenvectors.column(1);
        assert!((u0[0] - inv_sqrt2).abs() <= 1e-12 && (u0[1] + inv_sqrt2).abs() <= 1e-12);
        assert!((u1[0] - inv_sqrt2).abs() <= 1e-12 && (u1[1] - inv_sqrt2).abs() <= 1e-12);
    }

    #[test]
    fn reconstruction_residual_small() {
        let x = random_centered(8, 20, 7);
        let cov = covariance(&x.view()).unwrap();
        let basis = eigendecompose(&cov).unwrap();
        let lambda = Array2::from_diag(&basis.eigenvalues);
        let rebuilt = basis.eigenvectors.dot(&lambda).dot(&basis.eigenvectors.t());
        let lmax = basis.eigenvalues[basis.eigenvalues.len() - 1];
        assert!(max_abs(&(&rebuilt - &cov.matrix)) <= 1e-8 * lmax.max(1.0));
    }

    #[test]
    fn projection_is_an_isometry_and_invertible() {
        let x = random_centered(6, 9, 3);
        let cov = covariance(&x.view()).unwrap();
        let basis = eigendecompose(&cov).unwrap();
        let xhat = project(&basis, &x.view());
        let norm = |m: &Array2<f64>| m.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm(&xhat) - norm(&x)).abs() <= 1e-9);
        let back = basis.eigenvectors.dot(&xhat);
        assert!(max_abs(&(&back - &x)) <= 1e-9);
    }

    #[test]
    fn identity_basis_projection_is_identity() {
        let basis = SpectralBasis {
            eigenvectors: Array2::eye(4),
            eigenvalues: Array1::ones(4),
        };
        let x = random_centered(4, 5, 9);
        assert_eq!(project(&basis, &x.view()), x);
    }

    #[test]
    fn rank_deficiency_for_few_samples() {
        let x = random_centered(10, 4, 5);
        let cov = covariance(&x.view()).unwrap();
        let basis = eigendecompose(&cov).unwrap();
        let lmax = basis.eigenvalues[9];
        let tiny = basis
            .eigenvalues
            .iter()
            .filter(|&&l| l <= 1e-8 * lmax)
            .count();
        assert!(tiny >= 10 - 4);
    }

    #[test]
    fn deterministic_bytes() {
        let x = random_centered(7, 12, 21);
        let cov = covariance(&x.view()).unwrap();
        let a = eigendecompose(&cov).unwrap();
        let b = eigendecompose(&cov).unwrap();
        assert_eq!(a, b);
        let ja = serde_json::to_vec(&a).unwrap();
        let jb = serde_json::to_vec(&b).unwrap();
        assert_eq!(ja, jb);
    }
}
