use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::fid::FeatureMatrix;
use crate::nn::matmul;

/// Mean and (symmetric) covariance of a feature distribution.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianStats {
    pub mu: DVector<f64>,
    pub sigma: DMatrix<f64>,
    /// Number of samples the statistics were estimated from.
    pub n: usize,
}

impl GaussianStats {
    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    /// Adds `λI` with `λ = 1e-6·trace(Σ)/d` when the fit is rank-deficient
    /// (`n < d + 1`) or numerically singular. Leaves well-conditioned fits alone.
    pub fn regularized(&self) -> Self {
        let d = self.dim();
        if d == 0 {
            return self.clone();
        }
        let trace = self.sigma.trace();
        let lambda = 1e-6 * trace / d as f64;
        if lambda <= 0.0 {
            return self.clone();
        }
        let needs = self.n < d + 1 || {
            let eig = SymmetricEigen::new(self.sigma.clone()).eigenvalues;
            let min = eig.iter().copied().fold(f64::INFINITY, f64::min);
            min <= lambda
        };
        if !needs {
            return self.clone();
        }
        let mut out = self.clone();
        for i in 0..d {
            out.sigma[(i, i)] += lambda;
        }
        out
    }
}

/// Sample mean and unbiased (n − 1) covariance, symmetrized.
pub fn gaussian_stats(f: &FeatureMatrix) -> Result<GaussianStats> {
    let (n, d) = (f.n(), f.d());
    if n < 2 {
        return Err(Error::invalid(format!("need at least 2 samples for covariance, got {n}")));
    }
    let x = f.to_f64();
    let mut mu = vec![0.0; d];
    for row in x.chunks_exact(d) {
        for (m, v) in mu.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in &mut mu {
        *m /= n as f64;
    }
    let mut centered = x;
    for row in centered.chunks_exact_mut(d) {
        for (v, m) in row.iter_mut().zip(&mu) {
            *v -= m;
        }
    }
    let mut cov = vec![0.0; d * d];
    matmul(&centered, true, &centered, false, &mut cov, d, n, d, false);
    let scale = 1.0 / (n - 1) as f64;
    let mut sigma = DMatrix::from_row_slice(d, d, &cov) * scale;
    symmetrize(&mut sigma);
    Ok(GaussianStats {
        mu: DVector::from_vec(mu),
        sigma,
        n,
    })
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let t = m.transpose();
    *m += t;
    *m *= 0.5;
}

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0f64, |a, &b| a.max(b.abs()))
}

/// Principal square root of a symmetric positive semi-definite matrix via
/// eigendecomposition. Eigenvalues within round-off below zero are clamped.
pub fn sqrtm_psd(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !m.is_square() {
        return Err(Error::invalid(format!("sqrtm of non-square {}×{}", m.nrows(), m.ncols())));
    }
    let scale = max_abs(m).max(1.0);
    let asym = max_abs(&(m - m.transpose()));
    if asym > 1e-6 * scale {
        return Err(Error::invalid(format!("matrix is not symmetric (max |m - mᵀ| = {asym:e})")));
    }
    let mut sym = m.clone();
    symmetrize(&mut sym);
    let eig = SymmetricEigen::new(sym);
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if min < -1e-6 * scale {
        return Err(Error::invalid(format!("matrix is not positive semi-definite (eigenvalue {min:e})")));
    }
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    let v = &eig.eigenvectors;
    let mut out = v * DMatrix::from_diagonal(&roots) * v.transpose();
    symmetrize(&mut out);
    Ok(out)
}

/// `Tr((A·B)^{1/2})` through the symmetric sandwich `(√A · B · √A)^{1/2}`.
fn trace_sqrt_product(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    let sa = sqrtm_psd(a)?;
    let mut sandwich = &sa * b * &sa;
    symmetrize(&mut sandwich);
    let eig = sandwich.symmetric_eigenvalues();
    Ok(eig.iter().map(|&l| l.max(0.0).sqrt()).sum())
}

/// `‖μa − μb‖² + Tr(Σa + Σb − 2(ΣaΣb)^{1/2})`, clamped at zero.
///
/// The cross term is averaged over both sandwich orders, which makes the
/// result exactly symmetric in its arguments.
pub fn frechet_distance(a: &GaussianStats, b: &GaussianStats) -> Result<f64> {
    if a.dim() != b.dim() || a.sigma.nrows() != b.sigma.nrows() {
        return Err(Error::shape(&[a.dim()], &[b.dim()]));
    }
    let diff = &a.mu - &b.mu;
    let mean_term = diff.dot(&diff);
    let cross_ab = trace_sqrt_product(&a.sigma, &b.sigma)?;
    let cross_ba = trace_sqrt_product(&b.sigma, &a.sigma)?;
    let cross = 0.5 * (cross_ab + cross_ba);
    let value = mean_term + (a.sigma.trace() + b.sigma.trace()) - 2.0 * cross;
    Ok(value.max(0.0))
}

/// Fréchet distance between two feature matrices (shrinkage applied when the
/// fits are degenerate).
pub fn fid_between(a: &FeatureMatrix, b: &FeatureMatrix) -> Result<f64> {
    let sa = gaussian_stats(a)?.regularized();
    let sb = gaussian_stats(b)?.regularized();
    frechet_distance(&sa, &sb)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stats(mu: &[f64], sigma: DMatrix<f64>) -> GaussianStats {
        GaussianStats {
            mu: DVector::from_row_slice(mu),
            sigma,
            n: 1000,
        }
    }

    #[test]
    fn hand_computed_two_point_stats() {
        let f = FeatureMatrix::new(2, 2, vec![0.0, 0.0, 2.0, 0.0], "t").unwrap();
        let s = gaussian_stats(&f).unwrap();
        assert_eq!(s.mu.as_slice(), &[1.0, 0.0]);
        assert_eq!(s.sigma, DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.0]));
    }

    #[test]
    fn identical_rows_give_zero_covariance() {
        let f = FeatureMatrix::new(4, 3, [1.0, 2.0, 3.0].repeat(4), "t").unwrap();
        let s = gaussian_stats(&f).unwrap();
        assert!(s.sigma.iter().all(|&v| v == 0.0));
        assert!(s.regularized().sigma.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rejects_single_sample() {
        let f = FeatureMatrix::new(1, 2, vec![1.0, 2.0], "t").unwrap();
        assert!(gaussian_stats(&f).is_err());
    }

    #[test]
    fn shrinkage_only_when_degenerate() {
        let s = stats(&[0.0, 0.0], DMatrix::identity(2, 2));
        assert_eq!(s.regularized(), s);
        let mut few = s.clone();
        few.n = 2;
        let r = few.regularized();
        assert!((r.sigma[(0, 0)] - (1.0 + 1e-6)).abs() < 1e-15);
    }

    #[test]
    fn sqrtm_anchors() {
        let i3 = DMatrix::<f64>::identity(3, 3);
        assert!((sqrtm_psd(&i3).unwrap() - &i3).abs().max() < 1e-12);
        let d = DMatrix::from_diagonal(&DVector::from_row_slice(&[4.0, 9.0]));
        let r = sqrtm_psd(&d).unwrap();
        assert!((r - DMatrix::from_diagonal(&DVector::from_row_slice(&[2.0, 3.0]))).abs().max() < 1e-12);
    }

    #[test]
    fn sqrtm_rejects_asymmetric() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(sqrtm_psd(&m).is_err());
    }

    #[test]
    fn frechet_anchors() {
        let i2 = DMatrix::<f64>::identity(2, 2);
        let a = stats(&[0.0, 0.0], i2.clone());
        let b = stats(&[1.0, 0.0], i2.clone());
        assert!(frechet_distance(&a, &a).unwrap().abs() < 1e-9);
        assert!((frechet_distance(&a, &b).unwrap() - 1.0).abs() < 1e-9);
        let c = stats(&[0.0, 0.0], i2 * 4.0);
        assert!((frechet_distance(&a, &c).unwrap() - 2.0).abs() < 1e-9);
        let e = stats(&[0.0], DMatrix::identity(1, 1));
        assert!(frechet_distance(&a, &e).is_err());
    }
}
