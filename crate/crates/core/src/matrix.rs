//! Row-major feature storage with optional integer labels.

use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Label value for a row without a class.
pub const UNLABELED: i32 = -1;

/// `rows × dim` feature matrix. Every row carries a label, `-1` when unknown.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    dim: usize,
    data: Vec<f64>,
    labels: Vec<i32>,
}

impl FeatureMatrix {
    /// Builds a matrix after checking shape, finiteness and label range.
    pub fn new(dim: usize, data: Vec<f64>, labels: Vec<i32>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::DimensionMismatch { expected: 1, found: 0 });
        }
        if data.len() % dim != 0 {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: data.len() % dim,
            });
        }
        let rows = data.len() / dim;
        if labels.len() != rows {
            return Err(Error::LengthMismatch {
                left: rows,
                right: labels.len(),
            });
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteFeature {
                row: pos / dim,
                col: pos % dim,
            });
        }
        if let Some(row) = labels.iter().position(|&l| l < UNLABELED) {
            return Err(Error::InvalidLabel {
                row,
                label: labels[row],
            });
        }
        Ok(Self { dim, data, labels })
    }

    /// Matrix whose rows are all unlabeled.
    pub fn unlabeled(dim: usize, data: Vec<f64>) -> Result<Self> {
        let rows = if dim == 0 { 0 } else { data.len() / dim };
        Self::new(dim, data, alloc::vec![UNLABELED; rows])
    }

    pub fn empty(dim: usize) -> Self {
        assert!(dim >= 1, "feature dimension must be positive");
        Self {
            dim,
            data: Vec::new(),
            labels: Vec::new(),
        }
    }

    /// Builds from row slices with a shared label.
    pub fn from_rows<R: AsRef<[f64]>>(dim: usize, rows: &[R], label: i32) -> Result<Self> {
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            let r = r.as_ref();
            if r.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Self::new(dim, data, alloc::vec![label; rows.len()])
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.labels.len()
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter_rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + Clone + '_ {
        self.data.chunks_exact(self.dim)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn labels(&self) -> &[i32] {
        &self.labels
    }

    #[inline]
    pub fn label(&self, i: usize) -> i32 {
        self.labels[i]
    }

    /// True when every row has a class label.
    pub fn fully_labeled(&self) -> bool {
        self.labels.iter().all(|&l| l >= 0)
    }

    /// Copy with every label replaced by `-1`.
    pub fn without_labels(&self) -> Self {
        Self {
            dim: self.dim,
            data: self.data.clone(),
            labels: alloc::vec![UNLABELED; self.rows()],
        }
    }

    /// Copy with the given labels.
    pub fn with_labels(&self, labels: Vec<i32>) -> Result<Self> {
        Self::new(self.dim, self.data.clone(), labels)
    }

    /// Rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            data.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        Self {
            dim: self.dim,
            data,
            labels,
        }
    }

    /// Rows whose label equals `label`.
    pub fn rows_with_label(&self, label: i32) -> Self {
        let idx: Vec<usize> = (0..self.rows()).filter(|&i| self.labels[i] == label).collect();
        self.select(&idx)
    }

    /// Sorted distinct non-negative labels.
    pub fn distinct_labels(&self) -> Vec<i32> {
        let mut v: Vec<i32> = self.labels.iter().copied().filter(|&l| l >= 0).collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// Appends the rows of `other`.
    pub fn extend(&mut self, other: &FeatureMatrix) -> Result<()> {
        if other.dim != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: other.dim,
            });
        }
        self.data.extend_from_slice(&other.data);
        self.labels.extend_from_slice(&other.labels);
        Ok(())
    }

    /// Applies `f` to every row, producing rows of width `out_dim`.
    pub fn map_rows<F>(&self, out_dim: usize, mut f: F) -> Self
    where
        F: FnMut(&[f64], &mut [f64]),
    {
        let mut data = alloc::vec![0.0; self.rows() * out_dim];
        for (src, dst) in self.iter_rows().zip(data.chunks_exact_mut(out_dim.max(1))) {
            f(src, dst);
        }
        Self {
            dim: out_dim,
            data,
            labels: self.labels.clone(),
        }
    }

    /// Column means; zeros for an empty matrix.
    pub fn column_means(&self) -> Vec<f64> {
        let mut mean = alloc::vec![0.0; self.dim];
        for r in self.iter_rows() {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        if !self.is_empty() {
            let n = self.rows() as f64;
            mean.iter_mut().for_each(|m| *m /= n);
        }
        mean
    }
}
