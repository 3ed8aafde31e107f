use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_both_classes, FlatExample, Standardizer};
use crate::error::{Error, Result};
use crate::nn::{sigmoid, Prediction};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmConfig {
    pub lambda: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self {
            lambda: 1e-4,
            epochs: 20,
            seed: 0,
        }
    }
}

/// Linear classifier on standardized features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub scaler: Standardizer,
}

#[derive(Debug, Clone)]
pub struct SvmTrainOutput {
    pub model: SvmModel,
    /// Primal objective on the training set after each epoch.
    pub objective: Vec<f64>,
}

/// Pegasos: stochastic subgradient descent on
/// `(lambda/2)(|w|^2 + b^2) + mean(max(0, 1 - y (w.x + b)))` with step
/// `1 / (lambda t)`, one pass per epoch in a seeded random order.
pub fn train_linear_svm(data: &[FlatExample], cfg: &SvmConfig) -> Result<SvmTrainOutput> {
    if !(cfg.lambda > 0.0) || cfg.epochs == 0 {
        return Err(Error::param("svm needs lambda > 0 and at least one epoch"));
    }
    check_both_classes(data.iter().map(|e| e.y))?;
    let rows: Vec<&[f64]> = data.iter().map(|e| e.x.as_slice()).collect();
    let scaler = Standardizer::fit(&rows)?;
    let z: Vec<Vec<f64>> = rows.iter().map(|r| scaler.apply(r)).collect::<Result<_>>()?;
    let ys: Vec<f64> = data.iter().map(|e| if e.y == 1 { 1.0 } else { -1.0 }).collect();

    let d = scaler.dim();
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut objective = Vec::with_capacity(cfg.epochs);
    let mut t = 0u64;
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            t += 1;
            let eta = 1.0 / (cfg.lambda * t as f64);
            let shrink = 1.0 - eta * cfg.lambda;
            let margin = ys[i] * (dot(&w, &z[i]) + b);
            w.iter_mut().for_each(|v| *v *= shrink);
            b *= shrink;
            if margin < 1.0 {
                for (v, x) in w.iter_mut().zip(&z[i]) {
                    *v += eta * ys[i] * x;
                }
                b += eta * ys[i];
            }
        }
        objective.push(primal_objective(&w, b, &z, &ys, cfg.lambda));
    }
    if w.iter().any(|v| !v.is_finite()) || !b.is_finite() {
        return Err(Error::Training("svm weights diverged".into()));
    }
    Ok(SvmTrainOutput {
        model: SvmModel {
            weights: w,
            bias: b,
            scaler,
        },
        objective,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn primal_objective(w: &[f64], b: f64, z: &[Vec<f64>], ys: &[f64], lambda: f64) -> f64 {
    let reg = 0.5 * lambda * (dot(w, w) + b * b);
    let hinge: f64 = z
        .iter()
        .zip(ys)
        .map(|(x, y)| (1.0 - y * (dot(w, x) + b)).max(0.0))
        .sum::<f64>()
        / z.len() as f64;
    reg + hinge
}

impl SvmModel {
    /// Signed distance proxy `w . standardize(x) + b`.
    pub fn score(&self, x: &[f64]) -> Result<f64> {
        Ok(dot(&self.weights, &self.scaler.apply(x)?) + self.bias)
    }

    /// Label 1 iff the score is non-negative; `p` is the logistic of the score.
    pub fn predict(&self, x: &[f64]) -> Result<Prediction> {
        let s = self.score(x)?;
        Ok(Prediction {
            p: sigmoid(s),
            label: u8::from(s >= 0.0),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn identity_scaler(d: usize) -> Standardizer {
        Standardizer {
            mean: vec![0.0; d],
            std: vec![1.0; d],
        }
    }

    /// Two clusters separated by the line x0 + x1 = 0 with margin >= 1.
    fn toy(seed: u64) -> Vec<FlatExample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::new();
        while out.len() < 80 {
            let x = [rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0)];
            let s = (x[0] + x[1]) / 2f64.sqrt();
            if s.abs() >= 1.0 {
                out.push(FlatExample {
                    x: x.to_vec(),
                    y: u8::from(s > 0.0),
                });
            }
        }
        out
    }

    /// Grid search over unit normals and offsets for the widest separating
    /// margin in the original feature space.
    fn best_grid_margin(data: &[FlatExample]) -> f64 {
        let mut best = f64::NEG_INFINITY;
        for k in 0..720 {
            let a = k as f64 * std::f64::consts::PI / 360.0;
            let (u0, u1) = (a.cos(), a.sin());
            for j in -40..=40 {
                let c = j as f64 * 0.05;
                let m = data
                    .iter()
                    .map(|e| (if e.y == 1 { 1.0 } else { -1.0 }) * (u0 * e.x[0] + u1 * e.x[1] + c))
                    .fold(f64::INFINITY, f64::min);
                best = best.max(m);
            }
        }
        best
    }

    #[test]
    fn separable_toy_set_is_fit_exactly() {
        let data = toy(1);
        // the oracle confirms the set is separable with a wide margin
        assert!(best_grid_margin(&data) >= 0.9);
        let out = train_linear_svm(&data, &SvmConfig::default()).unwrap();
        let correct = data.iter().filter(|e| out.model.predict(&e.x).unwrap().label == e.y).count();
        assert_eq!(correct, data.len());
        assert!(out.objective[19] <= out.objective[0]);
    }

    #[test]
    fn same_seed_same_weights() {
        let data = toy(2);
        let cfg = SvmConfig { seed: 9, ..SvmConfig::default() };
        let a = train_linear_svm(&data, &cfg).unwrap().model;
        let b = train_linear_svm(&data, &cfg).unwrap().model;
        assert_eq!(a, b);
    }

    #[test]
    fn single_class_is_a_training_error() {
        let data: Vec<FlatExample> = toy(3).into_iter().filter(|e| e.y == 1).collect();
        assert!(matches!(train_linear_svm(&data, &SvmConfig::default()), Err(Error::Training(_))));
    }

    #[test]
    fn decision_rule_symmetries() {
        let m = SvmModel {
            weights: vec![1.0, -2.0],
            bias: 0.5,
            scaler: identity_scaler(2),
        };
        // score exactly zero -> label 1
        let p = m.predict(&[1.5, 1.0]).unwrap();
        assert_eq!((p.label, p.p), (1, 0.5));
        let neg = SvmModel {
            weights: vec![-1.0, 2.0],
            bias: -0.5,
            ..m.clone()
        };
        let scaled = SvmModel {
            weights: vec![3.0, -6.0],
            bias: 1.5,
            ..m.clone()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..200 {
            let x = [rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)];
            let l = m.predict(&x).unwrap().label;
            assert_eq!(neg.predict(&x).unwrap().label, 1 - l);
            assert_eq!(scaled.predict(&x).unwrap().label, l);
        }
        assert!(matches!(m.predict(&[1.0]), Err(Error::Shape(_))));
    }
}
