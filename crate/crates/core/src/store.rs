//! Persistent classifier state carried from session to session.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::gaussian::ClassGaussian;
use crate::math::sqrt;
use crate::matrix::FeatureMatrix;
use crate::pca::PcaProjector;

/// Per-dimension z-scoring frozen after the offline session.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    /// Population mean and standard deviation per column. Constant columns
    /// get scale 1.
    pub fn fit(data: &FeatureMatrix) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::EmptyClass);
        }
        let mean = data.column_means();
        let mut var = alloc::vec![0.0; data.dim()];
        for r in data.iter_rows() {
            for ((v, x), m) in var.iter_mut().zip(r).zip(&mean) {
                *v += (x - m) * (x - m);
            }
        }
        let n = data.rows() as f64;
        let scale = var
            .into_iter()
            .map(|v| {
                let s = sqrt(v / n);
                if s > 1e-12 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self { mean, scale })
    }

    /// Centers on the overall mean and scales each column so that its pooled
    /// within-class standard deviation becomes `target`. Columns without
    /// within-class spread keep scale 1.
    pub fn fit_within_class(data: &FeatureMatrix, target: f64) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::EmptyClass);
        }
        if !data.fully_labeled() {
            return Err(Error::MissingLabels("within-class scaling needs labels"));
        }
        let mean = data.column_means();
        let mut var = alloc::vec![0.0; data.dim()];
        for label in data.distinct_labels() {
            let class = data.rows_with_label(label);
            let class_mean = class.column_means();
            for r in class.iter_rows() {
                for ((v, x), m) in var.iter_mut().zip(r).zip(&class_mean) {
                    *v += (x - m) * (x - m);
                }
            }
        }
        let n = data.rows() as f64;
        let scale = var
            .into_iter()
            .map(|v| {
                let s = sqrt(v / n);
                if s > 1e-12 {
                    s / target
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self { mean, scale })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        for (o, ((v, m), s)) in out.iter_mut().zip(x.iter().zip(&self.mean).zip(&self.scale)) {
            *o = (v - m) / s;
        }
    }
}

/// Class distributions plus the frozen feature transforms.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelStore {
    classes: BTreeMap<u32, ClassGaussian>,
    next_class_id: u32,
    session_count: u32,
    feature_dim: usize,
    pca: Option<PcaProjector>,
    standardizer: Option<Standardizer>,
}

impl ModelStore {
    /// Empty store for class distributions of dimension `feature_dim`.
    pub fn new(feature_dim: usize) -> Self {
        Self {
            classes: BTreeMap::new(),
            next_class_id: 0,
            session_count: 0,
            feature_dim,
            pca: None,
            standardizer: None,
        }
    }

    /// Reassembles a store, e.g. after decoding it from disk.
    pub fn from_parts(
        feature_dim: usize,
        session_count: u32,
        standardizer: Option<Standardizer>,
        pca: Option<PcaProjector>,
        classes: Vec<ClassGaussian>,
    ) -> Result<Self> {
        let mut store = Self::new(feature_dim);
        store.session_count = session_count;
        store.set_transforms(standardizer, pca)?;
        for g in classes {
            store.insert(g)?;
        }
        Ok(store)
    }

    pub(crate) fn set_transforms(
        &mut self,
        standardizer: Option<Standardizer>,
        pca: Option<PcaProjector>,
    ) -> Result<()> {
        if let Some(p) = &pca {
            if p.output_dim() != self.feature_dim {
                return Err(Error::DimensionMismatch {
                    expected: self.feature_dim,
                    found: p.output_dim(),
                });
            }
            if let Some(s) = &standardizer {
                if s.dim() != p.input_dim() {
                    return Err(Error::DimensionMismatch {
                        expected: p.input_dim(),
                        found: s.dim(),
                    });
                }
            }
        } else if let Some(s) = &standardizer {
            if s.dim() != self.feature_dim {
                return Err(Error::DimensionMismatch {
                    expected: self.feature_dim,
                    found: s.dim(),
                });
            }
        }
        self.standardizer = standardizer;
        self.pca = pca;
        Ok(())
    }

    /// Adds or replaces a class.
    pub fn insert(&mut self, g: ClassGaussian) -> Result<()> {
        if g.dim() != self.feature_dim {
            return Err(Error::DimensionMismatch {
                expected: self.feature_dim,
                found: g.dim(),
            });
        }
        self.next_class_id = self.next_class_id.max(g.class_id() + 1);
        self.session_count = self.session_count.max(g.learned_in_session());
        self.classes.insert(g.class_id(), g);
        Ok(())
    }

    pub fn get(&self, class_id: u32) -> Option<&ClassGaussian> {
        self.classes.get(&class_id)
    }

    /// Classes in ascending id order.
    pub fn classes(&self) -> impl ExactSizeIterator<Item = &ClassGaussian> + Clone + '_ {
        self.classes.values()
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn next_class_id(&self) -> u32 {
        self.next_class_id
    }

    /// Number of online sessions completed.
    pub fn session_count(&self) -> u32 {
        self.session_count
    }

    pub(crate) fn set_session_count(&mut self, n: u32) {
        self.session_count = n;
    }

    /// Dimension of the stored distributions (after PCA, when configured).
    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    /// Dimension of raw input features.
    pub fn input_dim(&self) -> usize {
        match (&self.pca, &self.standardizer) {
            (Some(p), _) => p.input_dim(),
            (None, Some(s)) => s.dim(),
            (None, None) => self.feature_dim,
        }
    }

    pub fn pca(&self) -> Option<&PcaProjector> {
        self.pca.as_ref()
    }

    pub fn standardizer(&self) -> Option<&Standardizer> {
        self.standardizer.as_ref()
    }

    /// Log-determinants of all stored classes, ascending id order.
    pub fn log_dets(&self) -> Vec<f64> {
        self.classes.values().map(|g| g.log_det_cov()).collect()
    }

    /// Maps a raw input vector into the space of the class distributions.
    pub fn transform(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                found: x.len(),
            });
        }
        let mut buf = x.to_vec();
        if let Some(s) = &self.standardizer {
            s.apply(x, &mut buf);
        }
        match &self.pca {
            Some(p) => {
                let mut out = alloc::vec![0.0; p.output_dim()];
                p.project(&buf, &mut out);
                Ok(out)
            }
            None => Ok(buf),
        }
    }

    /// [`ModelStore::transform`] applied row by row; labels are kept.
    pub fn transform_matrix(&self, data: &FeatureMatrix) -> Result<FeatureMatrix> {
        if data.dim() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                found: data.dim(),
            });
        }
        let mut out = data.clone();
        if let Some(s) = &self.standardizer {
            out = out.map_rows(s.dim(), |src, dst| s.apply(src, dst));
        }
        if let Some(p) = &self.pca {
            out = p.transform(&out)?;
        }
        Ok(out)
    }
}
