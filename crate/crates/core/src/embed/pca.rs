use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::fid::FeatureMatrix;

#[derive(Clone, Debug, PartialEq)]
pub struct Pca {
    /// `n × k` projected coordinates.
    pub scores: DMatrix<f64>,
    /// `k × d` unit principal directions, one per row, by descending variance.
    pub components: DMatrix<f64>,
    /// Variance along each component.
    pub variances: Vec<f64>,
    pub mean: DVector<f64>,
    /// Requested components beyond the data's rank (zero variance, zero scores).
    pub zero_variance: usize,
}

impl Pca {
    pub fn explained(&self) -> f64 {
        self.variances.iter().sum()
    }
}

pub fn feature_matrix_to_dmatrix(f: &FeatureMatrix) -> DMatrix<f64> {
    DMatrix::from_row_iterator(f.n(), f.d(), f.values().iter().map(|&v| v as f64))
}

/// Mean-centred projection onto the top `k` principal components.
///
/// Works on the smaller of the `d × d` covariance and the `n × n` Gram
/// matrix. Each component is oriented so its largest-magnitude coordinate
/// is positive.
pub fn pca_reduce(x: &DMatrix<f64>, k: usize) -> Result<Pca> {
    let (n, d) = x.shape();
    if n < 2 {
        return Err(Error::invalid(format!("PCA needs at least 2 samples, got {n}")));
    }
    if k == 0 || k > n.min(d) {
        return Err(Error::invalid(format!("PCA target {k} outside 1..={}", n.min(d))));
    }
    let mean = DVector::from_iterator(d, x.column_iter().map(|c| c.mean()));
    let mut xc = x.clone();
    for mut row in xc.row_iter_mut() {
        row -= mean.transpose();
    }
    let denom = (n - 1) as f64;

    // (variance, direction) pairs, unsorted.
    let mut pairs: Vec<(f64, DVector<f64>)> = if d <= n {
        let cov = xc.transpose() * &xc / denom;
        let eig = SymmetricEigen::new(cov);
        (0..d)
            .map(|i| (eig.eigenvalues[i], eig.eigenvectors.column(i).into_owned()))
            .collect()
    } else {
        let gram = &xc * xc.transpose();
        let eig = SymmetricEigen::new(gram);
        (0..n)
            .map(|i| {
                let lambda = eig.eigenvalues[i];
                let v = xc.transpose() * eig.eigenvectors.column(i);
                (lambda / denom, v)
            })
            .collect()
    };
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));

    let top = pairs.first().map_or(0.0, |p| p.0.max(0.0));
    let floor = 1e-12 * top.max(f64::MIN_POSITIVE);
    let mut components = DMatrix::zeros(k, d);
    let mut variances = Vec::with_capacity(k);
    let mut zero_variance = 0;
    for (i, (var, mut v)) in pairs.into_iter().take(k).enumerate() {
        let norm = v.norm();
        if var <= floor || norm == 0.0 {
            zero_variance += 1;
            variances.push(0.0);
            continue;
        }
        v /= norm;
        let lead = v.iter().copied().fold(0.0f64, |a, b| if b.abs() > a.abs() { b } else { a });
        if lead < 0.0 {
            v = -v;
        }
        components.set_row(i, &v.transpose());
        variances.push(var);
    }
    let scores = &xc * components.transpose();
    Ok(Pca {
        scores,
        components,
        variances,
        mean,
        zero_variance,
    })
}
