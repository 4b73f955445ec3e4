//! Principal component projection of feature vectors.

use alloc::vec::Vec;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::matrix::FeatureMatrix;

/// Fitted projection `y = C (x − mean)` onto the leading components.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaProjector {
    mean: Vec<f64>,
    /// `output_dim × input_dim`, row-major, orthonormal rows.
    components: Vec<f64>,
    output_dim: usize,
    /// Variance along each component, non-increasing. Empty when the
    /// projector was restored from a store file.
    explained_variance: Vec<f64>,
    total_variance: f64,
}

impl PcaProjector {
    /// Rebuilds a projector from its mean and component rows.
    pub fn from_parts(mean: Vec<f64>, components: Vec<f64>, output_dim: usize) -> Result<Self> {
        let d_in = mean.len();
        if output_dim == 0 || output_dim > d_in {
            return Err(Error::InvalidTargetDim {
                requested: output_dim,
                max: d_in,
            });
        }
        if components.len() != output_dim * d_in {
            return Err(Error::DimensionMismatch {
                expected: output_dim * d_in,
                found: components.len(),
            });
        }
        Ok(Self {
            mean,
            components,
            output_dim,
            explained_variance: Vec::new(),
            total_variance: f64::NAN,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn components(&self) -> &[f64] {
        &self.components
    }

    pub fn explained_variance(&self) -> &[f64] {
        &self.explained_variance
    }

    /// Share of the total variance kept by the components.
    pub fn explained_fraction(&self) -> f64 {
        self.explained_variance.iter().sum::<f64>() / self.total_variance
    }

    pub fn project(&self, x: &[f64], out: &mut [f64]) {
        let d = self.input_dim();
        for (k, o) in out.iter_mut().enumerate().take(self.output_dim) {
            let row = &self.components[k * d..(k + 1) * d];
            *o = row
                .iter()
                .zip(x.iter().zip(&self.mean))
                .map(|(c, (v, m))| c * (v - m))
                .sum();
        }
    }

    /// Maps a projected vector back into input space.
    pub fn inverse(&self, y: &[f64]) -> Vec<f64> {
        let d = self.input_dim();
        let mut x = self.mean.clone();
        for (k, yk) in y.iter().enumerate().take(self.output_dim) {
            let row = &self.components[k * d..(k + 1) * d];
            for (xi, c) in x.iter_mut().zip(row) {
                *xi += yk * c;
            }
        }
        x
    }

    pub fn transform(&self, data: &FeatureMatrix) -> Result<FeatureMatrix> {
        if data.dim() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                found: data.dim(),
            });
        }
        Ok(data.map_rows(self.output_dim, |src, dst| self.project(src, dst)))
    }
}

/// Fits the top `d_out` principal directions of `data`.
///
/// Components are eigenvectors of the sample covariance (normalized by
/// `n − 1`), i.e. the leading right singular vectors of the centered data.
/// Each component's sign is fixed so its largest-magnitude entry is positive.
pub fn pca_fit(data: &FeatureMatrix, d_out: usize) -> Result<PcaProjector> {
    let n = data.rows();
    let d_in = data.dim();
    let max = n.min(d_in);
    if d_out == 0 || d_out > max {
        return Err(Error::InvalidTargetDim {
            requested: d_out,
            max,
        });
    }
    let mean = data.column_means();
    let denom = (n.saturating_sub(1)).max(1) as f64;
    let mut cov = DMatrix::<f64>::zeros(d_in, d_in);
    let mut c = alloc::vec![0.0; d_in];
    for r in data.iter_rows() {
        for (ci, (x, m)) in c.iter_mut().zip(r.iter().zip(&mean)) {
            *ci = x - m;
        }
        for i in 0..d_in {
            for j in 0..=i {
                cov[(i, j)] += c[i] * c[j];
            }
        }
    }
    for i in 0..d_in {
        for j in 0..=i {
            let v = cov[(i, j)] / denom;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    let total_variance: f64 = (0..d_in).map(|i| cov[(i, i)]).sum();
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d_in).collect();
    // Stable sort keeps ties in eigen-solver order, which is deterministic.
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(core::cmp::Ordering::Equal)
    });
    let mut components = Vec::with_capacity(d_out * d_in);
    let mut explained_variance = Vec::with_capacity(d_out);
    for &k in order.iter().take(d_out) {
        let v = eig.eigenvectors.column(k);
        let pivot = (0..d_in)
            .max_by(|&a, &b| v[a].abs().partial_cmp(&v[b].abs()).unwrap_or(core::cmp::Ordering::Equal))
            .unwrap_or(0);
        let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
        components.extend(v.iter().map(|x| sign * x));
        explained_variance.push(eig.eigenvalues[k].max(0.0));
    }
    Ok(PcaProjector {
        mean,
        components,
        output_dim: d_out,
        explained_variance,
        total_variance,
    })
}

/// Projects `data` with `projector`; labels pass through.
pub fn pca_transform(projector: &PcaProjector, data: &FeatureMatrix) -> Result<FeatureMatrix> {
    projector.transform(data)
}
