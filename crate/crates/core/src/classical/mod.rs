//! Flattened-window baselines: a linear SVM and a random forest.

mod forest;
mod svm;

pub use forest::{train_random_forest, ForestConfig, ForestModel, Node, Tree};
pub use svm::{train_linear_svm, SvmConfig, SvmModel, SvmTrainOutput};

use serde::{Deserialize, Serialize};

use crate::dataset::{LabeledWindow, CHANNELS};
use crate::error::{Error, Result};

/// A window flattened time-major: feature `t * 6 + c`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatExample {
    pub x: Vec<f64>,
    pub y: u8,
}

pub fn flatten(w: &LabeledWindow) -> FlatExample {
    FlatExample { x: w.x.clone(), y: w.y }
}

/// Inverse of [`flatten`]: the channel rows of a flat vector.
pub fn reshape(x: &[f64]) -> Result<Vec<[f64; CHANNELS]>> {
    if !x.len().is_multiple_of(CHANNELS) {
        return Err(Error::shape(format!("{} features is not a whole number of rows", x.len())));
    }
    Ok(x.chunks_exact(CHANNELS).map(|r| r.try_into().expect("chunk of six")).collect())
}

pub(crate) fn check_both_classes(ys: impl IntoIterator<Item = u8>) -> Result<()> {
    let mut seen = [false; 2];
    let mut n = 0;
    for y in ys {
        seen[usize::from(y == 1)] = true;
        n += 1;
    }
    if n < 2 || !(seen[0] && seen[1]) {
        return Err(Error::Training("training data must contain both classes".into()));
    }
    Ok(())
}

/// Per-feature affine map to zero mean and unit variance on the fit data.
/// Constant features get `std = 0` and map to 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(rows: &[&[f64]]) -> Result<Self> {
        let d = rows.first().map_or(0, |r| r.len());
        if rows.is_empty() || rows.iter().any(|r| r.len() != d) {
            return Err(Error::shape("standardizer needs equal-length, non-empty rows"));
        }
        let n = rows.len() as f64;
        let mut mean = vec![0.0; d];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(*r) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for r in rows {
            for ((s, v), m) in var.iter_mut().zip(*r).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var
            .into_iter()
            .zip(&mean)
            .map(|(s, m)| {
                let sd = (s / n).sqrt();
                // spread below rounding noise counts as constant
                if sd > 1e-12 * m.abs().max(1.0) {
                    sd
                } else {
                    0.0
                }
            })
            .collect();
        Ok(Self { mean, std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::shape(format!(
                "expected {} features, got {}",
                self.dim(),
                x.len()
            )));
        }
        Ok(x.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| if *s > 0.0 { (v - m) / s } else { 0.0 })
            .collect())
    }
}
