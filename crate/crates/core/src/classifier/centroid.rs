//! Nearest-centroid classification under a shared (pooled within-class)
//! covariance, i.e. Mahalanobis distance.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentroidModel {
    pub means: Vec<Vec<f64>>,
    pub covariance: DMatrix<f64>,
    pub inverse: DMatrix<f64>,
    pub epsilon: f64,
}

impl CentroidModel {
    /// Build from explicit means and covariance (`epsilon` added to the diagonal).
    pub fn from_parts(means: Vec<Vec<f64>>, covariance: DMatrix<f64>, epsilon: f64) -> Result<Self> {
        let dim = covariance.nrows();
        if covariance.ncols() != dim || means.iter().any(|m| m.len() != dim) || means.is_empty() {
            return Err(Error::config("means and covariance disagree in dimension"));
        }
        if !(epsilon >= 0.0) {
            return Err(Error::config("ridge epsilon must be non-negative"));
        }
        let regularized = &covariance + DMatrix::identity(dim, dim) * epsilon;
        let chol = regularized
            .clone()
            .cholesky()
            .ok_or_else(|| Error::numeric("covariance is not positive definite"))?;
        Ok(Self {
            means,
            covariance: regularized,
            inverse: chol.inverse(),
            epsilon,
        })
    }

    pub fn dim(&self) -> usize {
        self.covariance.nrows()
    }

    pub fn n_classes(&self) -> usize {
        self.means.len()
    }

    /// Mahalanobis distance between two points under this model's covariance.
    pub fn distance_between(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        if a.len() != self.dim() || b.len() != self.dim() {
            return Err(Error::config("feature dimension mismatch"));
        }
        let d = DVector::from_iterator(a.len(), a.iter().zip(b).map(|(x, y)| x - y));
        Ok((d.transpose() * &self.inverse * &d)[(0, 0)].max(0.0).sqrt())
    }

    pub fn distance(&self, feature: &[f64], class: usize) -> Result<f64> {
        let mean = self
            .means
            .get(class)
            .ok_or_else(|| Error::config(format!("class {class} not in model")))?;
        self.distance_between(feature, mean)
    }

    pub fn distances(&self, feature: &[f64]) -> Result<Vec<f64>> {
        (0..self.n_classes()).map(|c| self.distance(feature, c)).collect()
    }

    /// Nearest class and its distance; ties go to the lowest index.
    pub fn classify(&self, feature: &[f64]) -> Result<(usize, f64)> {
        let d = self.distances(feature)?;
        let mut best = 0;
        for (i, &v) in d.iter().enumerate() {
            if v < d[best] {
                best = i;
            }
        }
        Ok((best, d[best]))
    }
}

/// Fit class means and the pooled within-class covariance plus `epsilon · I`.
pub fn centroid_fit(
    features: &[Vec<f64>],
    labels: &[usize],
    n_classes: usize,
    epsilon: f64,
) -> Result<CentroidModel> {
    if features.len() != labels.len() || features.is_empty() {
        return Err(Error::config("features and labels differ in length"));
    }
    let dim = features[0].len();
    if features.iter().any(|f| f.len() != dim) {
        return Err(Error::config("ragged feature rows"));
    }
    let mut sums = vec![vec![0.0; dim]; n_classes];
    let mut counts = vec![0usize; n_classes];
    for (f, &y) in features.iter().zip(labels) {
        if y >= n_classes {
            return Err(Error::config(format!("label {y} out of range")));
        }
        counts[y] += 1;
        sums[y].iter_mut().zip(f).for_each(|(s, v)| *s += v);
    }
    if let Some(c) = counts.iter().position(|&c| c < 2) {
        return Err(Error::config(format!("class {c} has fewer than two samples")));
    }
    let means: Vec<Vec<f64>> = sums
        .into_iter()
        .zip(&counts)
        .map(|(s, &n)| s.into_iter().map(|v| v / n as f64).collect())
        .collect();
    let mut cov = DMatrix::zeros(dim, dim);
    for (f, &y) in features.iter().zip(labels) {
        let d = DVector::from_iterator(dim, f.iter().zip(&means[y]).map(|(a, b)| a - b));
        cov += &d * d.transpose();
    }
    cov /= (features.len() - n_classes).max(1) as f64;
    CentroidModel::from_parts(means, cov, epsilon)
}

pub fn mahalanobis(model: &CentroidModel, feature: &[f64], class: usize) -> Result<f64> {
    model.distance(feature, class)
}

pub fn centroid_classify(model: &CentroidModel, feature: &[f64]) -> Result<usize> {
    Ok(model.classify(feature)?.0)
}
