use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{Conv1d, Dense, Layer, LayerCache, Lstm, Mode};
use super::tensor::{Act, SeqBatch};
use super::check_window_len;
use crate::dataset::CHANNELS;
use crate::error::{Error, Result};

/// Decision threshold on `p`; `p == THRESHOLD` maps to label 1.
pub const THRESHOLD: f64 = 0.5;

/// Probability of the sidewalk class and the thresholded label.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub p: f64,
    pub label: u8,
}

impl Prediction {
    pub fn from_p(p: f64) -> Self {
        Self {
            p,
            label: u8::from(p >= THRESHOLD),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Arch {
    Cnn,
    Lstm,
    LstmCnn,
}

impl Arch {
    pub const ALL: [Arch; 3] = [Arch::Cnn, Arch::Lstm, Arch::LstmCnn];

    pub fn tag(self) -> &'static str {
        match self {
            Arch::Cnn => "cnn",
            Arch::Lstm => "lstm",
            Arch::LstmCnn => "lstm-cnn",
        }
    }
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Arch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Arch::ALL
            .into_iter()
            .find(|a| a.tag() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::param(format!("unknown network architecture '{s}' (cnn, lstm, lstm-cnn)")))
    }
}

/// Layer widths. The defaults are the published sizes; tests shrink them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelDims {
    pub hidden: usize,
    pub conv_channels: usize,
    pub dense_hidden: usize,
    pub kernel: usize,
    pub dropout: f64,
}

impl Default for ModelDims {
    fn default() -> Self {
        Self {
            hidden: 100,
            conv_channels: 8,
            dense_hidden: 20,
            kernel: 3,
            dropout: 0.2,
        }
    }
}

/// A sequential network and the metadata needed to rebuild its input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub arch: Arch,
    pub window_seconds: usize,
    pub seed: u64,
    pub layers: Vec<Layer>,
}

/// Layer inputs and caches recorded by a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    inputs: Vec<Act>,
    caches: Vec<LayerCache>,
    pub probs: Vec<f64>,
}

pub fn build_model(arch: Arch, window_seconds: usize, seed: u64) -> Result<Network> {
    build_model_with(arch, window_seconds, seed, ModelDims::default())
}

pub fn build_model_with(arch: Arch, window_seconds: usize, seed: u64, dims: ModelDims) -> Result<Network> {
    if window_seconds == 0 {
        return Err(Error::param("window length must be at least 1 s"));
    }
    if !(0.0..1.0).contains(&dims.dropout) || dims.kernel.is_multiple_of(2) {
        return Err(Error::param("dropout must be in [0, 1) and the kernel odd"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let steps = 20 * window_seconds;
    let ModelDims {
        hidden,
        conv_channels: ch,
        dense_hidden,
        kernel,
        dropout,
    } = dims;
    let drop = Layer::Dropout { rate: dropout };
    let conv = |c_in: usize, rng: &mut ChaCha8Rng| Layer::Conv1d(Conv1d::new(c_in, ch, kernel, rng));
    let layers = match arch {
        Arch::Cnn => {
            let flat = (steps / 4 / 2) * ch;
            if flat == 0 {
                return Err(Error::param("window too short for three pooling stages"));
            }
            vec![
                conv(CHANNELS, &mut rng),
                drop.clone(),
                Layer::AvgPool,
                Layer::Relu,
                conv(ch, &mut rng),
                drop.clone(),
                Layer::AvgPool,
                Layer::Relu,
                conv(ch, &mut rng),
                drop,
                Layer::MaxPool,
                Layer::Relu,
                Layer::Flatten,
                Layer::Dense(Dense::new(flat, dense_hidden, &mut rng)),
                Layer::Relu,
                Layer::Dense(Dense::new(dense_hidden, 1, &mut rng)),
                Layer::Sigmoid,
            ]
        }
        Arch::Lstm => vec![
            Layer::Lstm(Lstm::new(CHANNELS, hidden, false, &mut rng)),
            Layer::Dense(Dense::new(hidden, 1, &mut rng)),
            Layer::Sigmoid,
        ],
        Arch::LstmCnn => {
            let lstm = Layer::Lstm(Lstm::new(CHANNELS, hidden, true, &mut rng));
            vec![
                lstm,
                conv(hidden, &mut rng),
                drop.clone(),
                Layer::AvgPool,
                Layer::Relu,
                conv(ch, &mut rng),
                drop,
                Layer::AvgPool,
                Layer::Relu,
                Layer::Flatten,
                Layer::Dense(Dense::new((steps / 4) * ch, 1, &mut rng)),
                Layer::Sigmoid,
            ]
        }
    };
    Ok(Network {
        arch,
        window_seconds,
        seed,
        layers,
    })
}

/// Eval-mode predictions of a borrowed layer list.
pub fn predict_layers(window_seconds: usize, layers: &[Layer], windows: &[&[f64]]) -> Result<Vec<Prediction>> {
    const CHUNK: usize = 64;
    let mut out = Vec::with_capacity(windows.len());
    for chunk in windows.chunks(CHUNK) {
        for w in chunk {
            check_window_len(w.len(), window_seconds)?;
        }
        let x = SeqBatch::from_windows(chunk, CHANNELS)?;
        let probs = forward_layers(layers, &x, &mut Mode::<ChaCha8Rng>::Eval)?.probs;
        out.extend(probs.into_iter().map(Prediction::from_p));
    }
    Ok(out)
}

fn forward_layers<R: Rng>(layers: &[Layer], x: &SeqBatch, mode: &mut Mode<'_, R>) -> Result<ForwardTrace> {
    let mut inputs = Vec::with_capacity(layers.len());
    let mut caches = Vec::with_capacity(layers.len());
    let mut act = Act::Seq(x.clone());
    for layer in layers {
        let (y, cache) = layer.forward(&act, mode)?;
        inputs.push(act);
        caches.push(cache);
        act = y;
    }
    let out = act.into_flat()?;
    if out.cols != 1 {
        return Err(Error::shape(format!("network output has {} columns", out.cols)));
    }
    Ok(ForwardTrace {
        inputs,
        caches,
        probs: out.data,
    })
}

impl Network {
    /// Values per input window, `20 * S * 6`.
    pub fn input_len(&self) -> usize {
        20 * self.window_seconds * CHANNELS
    }

    pub fn param_sizes(&self) -> Vec<usize> {
        self.layers.iter().flat_map(|l| l.params().into_iter().map(<[f64]>::len)).collect()
    }

    pub fn param_count(&self) -> usize {
        self.param_sizes().iter().sum()
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers.iter_mut().flat_map(Layer::params_mut).collect()
    }

    pub fn params(&self) -> Vec<&[f64]> {
        self.layers.iter().flat_map(Layer::params).collect()
    }

    /// Checks that the layer chain maps a `(6, 20*S)` input to one probability.
    pub fn validate(&self) -> Result<()> {
        let x = SeqBatch::zeros(20 * self.window_seconds, 1, CHANNELS);
        let p = self.forward(&x, &mut Mode::<ChaCha8Rng>::Eval)?.probs;
        if p.len() != 1 {
            return Err(Error::shape(format!("network emits {} outputs per window", p.len())));
        }
        Ok(())
    }

    pub fn forward<R: Rng>(&self, x: &SeqBatch, mode: &mut Mode<'_, R>) -> Result<ForwardTrace> {
        forward_layers(&self.layers, x, mode)
    }

    /// Gradients of a loss w.r.t. every parameter tensor, given `dl/dp` per
    /// batch item. Buffers follow [`Network::params`] order.
    pub fn backward(&self, trace: &ForwardTrace, dp: &[f64]) -> Result<Vec<Vec<f64>>> {
        let mut grads: Vec<Vec<f64>> = self.param_sizes().into_iter().map(|n| vec![0.0; n]).collect();
        self.backward_into(trace, dp, &mut grads)?;
        Ok(grads)
    }

    pub(crate) fn backward_into(&self, trace: &ForwardTrace, dp: &[f64], grads: &mut [Vec<f64>]) -> Result<()> {
        if dp.len() != trace.probs.len() {
            return Err(Error::shape("output gradient does not match the batch"));
        }
        let mut dy = Act::Flat(super::tensor::Mat {
            rows: dp.len(),
            cols: 1,
            data: dp.to_vec(),
        });
        let mut end = grads.len();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let n = layer.params().len();
            let g = &mut grads[end - n..end];
            dy = layer.backward(&trace.inputs[i], &trace.caches[i], &dy, g)?;
            end -= n;
        }
        Ok(())
    }

    /// Eval-mode probabilities for a batch of time-major windows.
    pub fn predict_proba(&self, windows: &[&[f64]]) -> Result<Vec<f64>> {
        Ok(self.predict_batch(windows)?.into_iter().map(|p| p.p).collect())
    }

    pub fn predict(&self, window: &[f64]) -> Result<Prediction> {
        Ok(Prediction::from_p(self.predict_proba(&[window])?[0]))
    }

    pub fn predict_batch(&self, windows: &[&[f64]]) -> Result<Vec<Prediction>> {
        predict_layers(self.window_seconds, &self.layers, windows)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::loss::bce_batch;

    fn random_windows(n: usize, s: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| (0..120 * s).map(|_| rng.random_range(-2.0..2.0)).collect()).collect()
    }

    fn small() -> ModelDims {
        ModelDims {
            hidden: 4,
            conv_channels: 2,
            dense_hidden: 3,
            ..ModelDims::default()
        }
    }

    #[test]
    fn every_architecture_maps_each_window_to_one_probability() {
        for arch in Arch::ALL {
            for s in 1..=3 {
                let m = build_model(arch, s, 7).unwrap();
                m.validate().unwrap();
                let xs = random_windows(3, s, s as u64);
                let refs: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
                let p = m.predict_proba(&refs).unwrap();
                assert_eq!(p.len(), 3);
                assert!(p.iter().all(|&v| v > 0.0 && v < 1.0), "{arch} S={s}");
            }
        }
    }

    #[test]
    fn published_layer_sizes() {
        let m = build_model(Arch::Cnn, 3, 0).unwrap();
        let dense: Vec<(usize, usize)> = m
            .layers
            .iter()
            .filter_map(|l| match l {
                Layer::Dense(d) => Some((d.c_in, d.c_out)),
                _ => None,
            })
            .collect();
        // 60 steps -> 30 -> 15 -> 7, 8 channels
        assert_eq!(dense, vec![(56, 20), (20, 1)]);
        let convs = m.layers.iter().filter(|l| matches!(l, Layer::Conv1d(c) if c.c_out == 8 && c.kernel == 3));
        assert_eq!(convs.count(), 3);

        let m = build_model(Arch::LstmCnn, 3, 0).unwrap();
        match (&m.layers[0], &m.layers[1]) {
            (Layer::Lstm(l), Layer::Conv1d(c)) => {
                assert_eq!((l.c_in, l.hidden, l.return_sequences), (6, 100, true));
                assert_eq!((c.c_in, c.c_out), (100, 8));
            }
            other => panic!("unexpected head {other:?}"),
        }
        let m = build_model(Arch::Lstm, 2, 0).unwrap();
        assert!(matches!(&m.layers[0], Layer::Lstm(l) if !l.return_sequences && l.hidden == 100));
    }

    #[test]
    fn same_seed_same_weights() {
        for arch in Arch::ALL {
            let a = build_model(arch, 2, 11).unwrap();
            let b = build_model(arch, 2, 11).unwrap();
            assert_eq!(a, b);
            assert_ne!(a, build_model(arch, 2, 12).unwrap());
        }
    }

    #[test]
    fn unknown_tag_is_a_parameter_error() {
        assert!(matches!("rnn".parse::<Arch>(), Err(Error::Param(_))));
        assert_eq!("LSTM-CNN".parse::<Arch>().unwrap(), Arch::LstmCnn);
    }

    #[test]
    fn wrong_window_shape_is_rejected() {
        let m = build_model(Arch::Lstm, 3, 0).unwrap();
        assert!(matches!(m.predict(&[0.0; 120]), Err(Error::Shape(_))));
    }

    #[test]
    fn threshold_is_inclusive() {
        assert_eq!(Prediction::from_p(0.5).label, 1);
        assert_eq!(Prediction::from_p(0.4999999).label, 0);
    }

    #[test]
    fn eval_prediction_ignores_dropout_rng() {
        let m = build_model_with(Arch::Cnn, 1, 3, small()).unwrap();
        let xs = random_windows(4, 1, 9);
        let refs: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
        let x = SeqBatch::from_windows(&refs, CHANNELS).unwrap();
        let eval = m.forward(&x, &mut Mode::<ChaCha8Rng>::Eval).unwrap().probs;
        assert_eq!(eval, m.predict_proba(&refs).unwrap());
        let mut r1 = ChaCha8Rng::seed_from_u64(1);
        let mut r2 = ChaCha8Rng::seed_from_u64(2);
        let t1 = m.forward(&x, &mut Mode::Train(&mut r1)).unwrap().probs;
        let t2 = m.forward(&x, &mut Mode::Train(&mut r2)).unwrap().probs;
        assert_ne!(t1, t2);
    }

    /// Whole-network finite-difference check, dropout disabled.
    #[test]
    fn network_gradients_match_finite_differences() {
        let dims = ModelDims { dropout: 0.0, ..small() };
        for arch in Arch::ALL {
            let mut m = build_model_with(arch, 1, 21, dims).unwrap();
            // nonzero biases keep ReLU inputs off the kink when a channel is dead
            let mut jitter = ChaCha8Rng::seed_from_u64(8);
            for p in m.params_mut() {
                p.iter_mut().for_each(|v| *v += jitter.random_range(-0.1..0.1));
            }
            let xs = random_windows(3, 1, 5);
            let ys = [1u8, 0, 1];
            let refs: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
            let x = SeqBatch::from_windows(&refs, CHANNELS).unwrap();
            let loss = |m: &Network| {
                let p = m.forward(&x, &mut Mode::<ChaCha8Rng>::Eval).unwrap().probs;
                bce_batch(&p, &ys)
            };
            let trace = m.forward(&x, &mut Mode::<ChaCha8Rng>::Eval).unwrap();
            let (_, dp) = bce_batch(&trace.probs, &ys);
            let grads = m.backward(&trace, &dp).unwrap();
            let h = 1e-5;
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            for (pi, g) in grads.iter().enumerate() {
                let mut an = Vec::new();
                let mut fd = Vec::new();
                for _ in 0..6 {
                    let i = rng.random_range(0..g.len());
                    let orig = m.params()[pi][i];
                    m.params_mut()[pi][i] = orig + h;
                    let lp = loss(&m).0;
                    m.params_mut()[pi][i] = orig - h;
                    let lm = loss(&m).0;
                    m.params_mut()[pi][i] = orig;
                    an.push(g[i]);
                    fd.push((lp - lm) / (2.0 * h));
                }
                let num: f64 = an.iter().zip(&fd).map(|(a, f)| (a - f).powi(2)).sum::<f64>().sqrt();
                let den: f64 = an.iter().map(|a| a * a).sum::<f64>().sqrt() + fd.iter().map(|f| f * f).sum::<f64>().sqrt();
                assert!(den == 0.0 || num / den <= 1e-4, "{arch} param {pi}: {}", num / den);
            }
        }
    }
}
