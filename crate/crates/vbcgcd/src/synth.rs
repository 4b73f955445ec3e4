//! Seeded Gaussian blob corpora with known generating parameters.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use vbcgcd_core::{make_gaussian, FeatureMatrix};

use crate::error::{IoError, Result};

pub const PLACEMENT_ATTEMPTS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    pub num_classes: usize,
    pub dim: usize,
    pub samples_per_class: usize,
    /// Minimum mean distance in units of the larger within-class standard
    /// deviation of the pair.
    pub separation: f64,
    /// Covariance eigenvalues lie in `[1/cov_spread, cov_spread]`.
    pub cov_spread: f64,
    pub seed: u64,
}

/// Generating parameters of one class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrueClass {
    pub mean: Vec<f64>,
    /// Row-major `dim × dim`.
    pub covariance: Vec<f64>,
    pub eigenvalues: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub params: SynthParams,
    pub data: FeatureMatrix,
    pub classes: Vec<TrueClass>,
}

/// Random orthogonal matrix by Gram-Schmidt on Gaussian columns.
fn random_rotation(d: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut q: Vec<Vec<f64>> = Vec::with_capacity(d);
    while q.len() < d {
        let mut v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        for u in &q {
            let dot: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(u).for_each(|(a, b)| *a -= dot * b);
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-6 {
            q.push(v.into_iter().map(|a| a / norm).collect());
        }
    }
    q.concat()
}

fn random_class(d: usize, spread: f64, rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
    let log_s = spread.ln();
    let eig: Vec<f64> = (0..d)
        .map(|_| if log_s > 0.0 { rng.gen_range(-log_s..=log_s).exp() } else { 1.0 })
        .collect();
    let q = random_rotation(d, rng);
    let mut cov = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..=i {
            let v: f64 = (0..d).map(|k| q[k * d + i] * eig[k] * q[k * d + j]).sum();
            cov[i * d + j] = v;
            cov[j * d + i] = v;
        }
    }
    (eig, cov)
}

/// Draws `num_classes` Gaussian classes with labels `0..num_classes`.
///
/// Means are drawn from an isotropic normal wide enough for the requested
/// separation and rejected until every pair is at least
/// `separation · √λ_max` apart, where `λ_max` is the larger top eigenvalue of
/// the two classes.
pub fn generate_synthetic(p: &SynthParams) -> Result<SyntheticCorpus> {
    if p.num_classes == 0 || p.dim == 0 {
        return Err(IoError::Config("num_classes and dim must be positive".into()));
    }
    if !(p.cov_spread >= 1.0) || !p.cov_spread.is_finite() {
        return Err(IoError::Config("cov_spread must be a finite value ≥ 1".into()));
    }
    if !(p.separation >= 0.0) || !p.separation.is_finite() {
        return Err(IoError::Config("separation must be finite and non-negative".into()));
    }
    let d = p.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let shapes: Vec<(Vec<f64>, Vec<f64>)> = (0..p.num_classes).map(|_| random_class(d, p.cov_spread, &mut rng)).collect();
    let top = |c: usize| shapes[c].0.iter().cloned().fold(0.0, f64::max);

    let radius = p.separation * p.cov_spread.sqrt() * (p.num_classes as f64).powf(1.0 / d as f64) / (d as f64).sqrt();
    let mut means: Vec<Vec<f64>> = Vec::with_capacity(p.num_classes);
    for c in 0..p.num_classes {
        let mut placed = None;
        for _ in 0..PLACEMENT_ATTEMPTS {
            let m: Vec<f64> = (0..d).map(|_| radius * rng.sample::<f64, _>(StandardNormal)).collect();
            let ok = means.iter().enumerate().all(|(o, other)| {
                let dist = m.iter().zip(other).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                dist >= p.separation * top(c).max(top(o)).sqrt()
            });
            if ok {
                placed = Some(m);
                break;
            }
        }
        match placed {
            Some(m) => means.push(m),
            None => {
                return Err(IoError::InfeasiblePlacement {
                    class: c,
                    attempts: PLACEMENT_ATTEMPTS,
                })
            }
        }
    }

    let mut data = FeatureMatrix::empty(d);
    let mut classes = Vec::with_capacity(p.num_classes);
    for (c, ((eig, cov), mean)) in shapes.into_iter().zip(means).enumerate() {
        let g = make_gaussian(&mean, &cov)?;
        let draw = g.sample(p.samples_per_class, rng.gen());
        data.extend(&draw.with_labels(vec![c as i32; p.samples_per_class])?)?;
        classes.push(TrueClass {
            mean,
            covariance: cov,
            eigenvalues: eig,
        });
    }
    Ok(SyntheticCorpus {
        params: p.clone(),
        data,
        classes,
    })
}
