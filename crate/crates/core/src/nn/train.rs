use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamState};
use super::check_window_len;
use super::layers::Mode;
use super::loss::bce_batch;
use super::model::Network;
use super::tensor::SeqBatch;
use crate::dataset::{Dataset, LabeledWindow, CHANNELS};
use crate::error::{Error, Result};

/// Optimizer and schedule settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 6,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let betas_ok = self.beta1 > 0.0 && self.beta1 < 1.0 && self.beta2 > 0.0 && self.beta2 < 1.0;
        if self.epochs == 0 || self.batch_size == 0 || !(self.learning_rate >= 0.0) || !(self.epsilon > 0.0) || !betas_ok {
            return Err(Error::param(format!("invalid training configuration {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub model: Network,
    /// Mean training loss of each epoch (dropout active, pre-update weights).
    pub loss_history: Vec<f64>,
}

/// Mini-batch Adam on binary cross-entropy.
pub fn train_model(model: Network, data: &Dataset, cfg: &TrainConfig) -> Result<TrainOutput> {
    if data.window_seconds() != model.window_seconds {
        return Err(Error::shape(format!(
            "dataset windows are {} s, model expects {} s",
            data.window_seconds(),
            model.window_seconds
        )));
    }
    train_on_windows(model, &data.examples, cfg)
}

pub fn train_on_windows(mut model: Network, examples: &[LabeledWindow], cfg: &TrainConfig) -> Result<TrainOutput> {
    cfg.validate()?;
    if examples.is_empty() {
        return Err(Error::param("cannot train on an empty dataset"));
    }
    for e in examples {
        check_window_len(e.x.len(), model.window_seconds)?;
    }
    // independent streams for batch order and dropout
    let mut order_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut drop_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut state = AdamState::new(model.param_sizes());
    let mut grads: Vec<Vec<f64>> = model.param_sizes().into_iter().map(|n| vec![0.0; n]).collect();
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut step = 0u64;
    for _ in 0..cfg.epochs {
        order.shuffle(&mut order_rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let windows: Vec<&[f64]> = batch.iter().map(|&i| examples[i].x.as_slice()).collect();
            let ys: Vec<u8> = batch.iter().map(|&i| examples[i].y).collect();
            let x = SeqBatch::from_windows(&windows, CHANNELS)?;
            let trace = model.forward(&x, &mut Mode::Train(&mut drop_rng))?;
            let (loss, dp) = bce_batch(&trace.probs, &ys);
            if !loss.is_finite() {
                return Err(Error::Training(format!("loss became {loss} at step {}", step + 1)));
            }
            total += loss * batch.len() as f64;
            grads.iter_mut().for_each(|g| g.fill(0.0));
            model.backward_into(&trace, &dp, &mut grads)?;
            step += 1;
            adam_step(&mut model.params_mut(), &grads, &mut state, cfg, step);
        }
        history.push(total / examples.len() as f64);
    }
    Ok(TrainOutput {
        model,
        loss_history: history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::model::{build_model_with, Arch, ModelDims};
    use rand::Rng;

    fn toy(n: usize, seed: u64) -> Vec<LabeledWindow> {
        // class 1 has a positive offset on vertical accel
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let y = (i % 2) as u8;
                let x = (0..120)
                    .map(|k| rng.random_range(-1.0..1.0) + if y == 1 && k % 6 == 2 { 1.0 } else { 0.0 })
                    .collect();
                LabeledWindow::from_flat(x, y).unwrap()
            })
            .collect()
    }

    fn dims() -> ModelDims {
        ModelDims {
            hidden: 6,
            conv_channels: 4,
            dense_hidden: 5,
            ..ModelDims::default()
        }
    }

    #[test]
    fn zero_learning_rate_keeps_weights() {
        let m = build_model_with(Arch::Cnn, 1, 1, dims()).unwrap();
        let cfg = TrainConfig {
            epochs: 2,
            learning_rate: 0.0,
            ..TrainConfig::default()
        };
        let out = train_on_windows(m.clone(), &toy(13, 0), &cfg).unwrap();
        assert_eq!(out.model, m);
        assert_eq!(out.loss_history.len(), 2);
    }

    #[test]
    fn same_seed_same_curve() {
        let cfg = TrainConfig {
            epochs: 3,
            seed: 5,
            ..TrainConfig::default()
        };
        let run = || {
            let m = build_model_with(Arch::LstmCnn, 1, 2, dims()).unwrap();
            train_on_windows(m, &toy(20, 1), &cfg).unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(a.loss_history, b.loss_history);
        assert_eq!(a.model, b.model);
    }

    #[test]
    fn loss_goes_down_on_separable_data() {
        let cfg = TrainConfig {
            epochs: 10,
            seed: 3,
            ..TrainConfig::default()
        };
        let data = toy(60, 2);
        for arch in Arch::ALL {
            let m = build_model_with(arch, 1, 4, dims()).unwrap();
            let h = train_on_windows(m, &data, &cfg).unwrap().loss_history;
            assert!(h[9] < h[0], "{arch}: {h:?}");
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let m = build_model_with(Arch::Lstm, 1, 1, dims()).unwrap();
        assert!(matches!(train_on_windows(m.clone(), &[], &TrainConfig::default()), Err(Error::Param(_))));
        let bad = TrainConfig {
            beta1: 1.0,
            ..TrainConfig::default()
        };
        assert!(matches!(train_on_windows(m.clone(), &toy(4, 0), &bad), Err(Error::Param(_))));
        let long = vec![LabeledWindow::from_flat(vec![0.0; 240], 1).unwrap()];
        assert!(matches!(train_on_windows(m, &long, &TrainConfig::default()), Err(Error::Shape(_))));
    }
}
