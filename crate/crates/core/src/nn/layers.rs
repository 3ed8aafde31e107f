//! Layer definitions with exact reverse-mode gradients.
//!
//! Every trainable layer exposes its parameter tensors in a fixed order via
//! [`Layer::params`]; gradients are returned in the same order.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::gemm;
use super::kernels::{sigmoid_inplace, small_gemm_acc, tanh_inplace};
use super::tensor::{Act, Mat, SeqBatch};
use crate::error::{Error, Result};

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn glorot(rng: &mut impl Rng, fan_in: usize, fan_out: usize, n: usize) -> Vec<f64> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    (0..n).map(|_| rng.random_range(-limit..limit)).collect()
}

/// 1-D convolution over time with "same" zero padding.
///
/// `weight` holds one `c_in x c_out` matrix per kernel tap, tap-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conv1d {
    pub c_in: usize,
    pub c_out: usize,
    pub kernel: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Conv1d {
    pub fn new(c_in: usize, c_out: usize, kernel: usize, rng: &mut impl Rng) -> Self {
        Self {
            c_in,
            c_out,
            kernel,
            weight: glorot(rng, c_in * kernel, c_out * kernel, kernel * c_in * c_out),
            bias: vec![0.0; c_out],
        }
    }

    /// Weight connecting input channel `ci` at tap `k` to output channel `co`.
    /// Tap `k` reads time `t + k - kernel / 2`.
    pub fn w(&self, k: usize, ci: usize, co: usize) -> f64 {
        self.weight[(k * self.c_in + ci) * self.c_out + co]
    }

    pub fn set_w(&mut self, k: usize, ci: usize, co: usize, v: f64) {
        self.weight[(k * self.c_in + ci) * self.c_out + co] = v;
    }

    fn check(&self) -> Result<()> {
        if self.kernel.is_multiple_of(2)
            || self.weight.len() != self.kernel * self.c_in * self.c_out
            || self.bias.len() != self.c_out
        {
            return Err(Error::shape("inconsistent conv1d parameters"));
        }
        Ok(())
    }

    /// Time ranges `[lo, hi)` of output steps that tap `k` touches, and its offset.
    fn tap_range(&self, k: usize, steps: usize) -> Option<(usize, usize, isize)> {
        let d = k as isize - (self.kernel / 2) as isize;
        let lo = (-d).max(0) as usize;
        let hi = (steps as isize - d).min(steps as isize);
        if hi <= lo as isize {
            None
        } else {
            Some((lo, hi as usize, d))
        }
    }

    pub fn forward(&self, x: &SeqBatch) -> Result<SeqBatch> {
        self.check()?;
        if x.channels != self.c_in {
            return Err(Error::shape(format!(
                "conv1d expects {} input channels, got {}",
                self.c_in, x.channels
            )));
        }
        let (ci, co, b) = (self.c_in, self.c_out, x.batch);
        let mut y = SeqBatch::zeros(x.steps, b, co);
        for row in y.data.chunks_exact_mut(co) {
            row.copy_from_slice(&self.bias);
        }
        for k in 0..self.kernel {
            let Some((lo, hi, d)) = self.tap_range(k, x.steps) else {
                continue;
            };
            let m = (hi - lo) * b;
            let src = (lo as isize + d) as usize * b * ci;
            gemm(
                m,
                ci,
                co,
                &x.data[src..src + m * ci],
                false,
                &self.weight[k * ci * co..(k + 1) * ci * co],
                false,
                &mut y.data[lo * b * co..(lo * b + m) * co],
                1.0,
            );
        }
        Ok(y)
    }

    /// Accumulates parameter gradients into `grads` (`[weight, bias]`) and
    /// returns the input gradient.
    pub fn backward(&self, x: &SeqBatch, dy: &SeqBatch, grads: &mut [Vec<f64>]) -> SeqBatch {
        let (ci, co, b) = (self.c_in, self.c_out, x.batch);
        let mut dx = SeqBatch::zeros(x.steps, b, ci);
        let (gw, gb) = grads.split_at_mut(1);
        for k in 0..self.kernel {
            let Some((lo, hi, d)) = self.tap_range(k, x.steps) else {
                continue;
            };
            let m = (hi - lo) * b;
            let src = (lo as isize + d) as usize * b * ci;
            let dy_blk = &dy.data[lo * b * co..(lo * b + m) * co];
            let wk = &self.weight[k * ci * co..(k + 1) * ci * co];
            gemm(
                ci,
                m,
                co,
                &x.data[src..src + m * ci],
                true,
                dy_blk,
                false,
                &mut gw[0][k * ci * co..(k + 1) * ci * co],
                1.0,
            );
            gemm(m, co, ci, dy_blk, false, wk, true, &mut dx.data[src..src + m * ci], 1.0);
        }
        for row in dy.data.chunks_exact(co) {
            for (g, v) in gb[0].iter_mut().zip(row) {
                *g += v;
            }
        }
        dx
    }
}

/// Fully connected layer; `weight` is `c_in x c_out` row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub c_in: usize,
    pub c_out: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn new(c_in: usize, c_out: usize, rng: &mut impl Rng) -> Self {
        Self {
            c_in,
            c_out,
            weight: glorot(rng, c_in, c_out, c_in * c_out),
            bias: vec![0.0; c_out],
        }
    }

    pub fn forward(&self, x: &Mat) -> Result<Mat> {
        if x.cols != self.c_in || self.weight.len() != self.c_in * self.c_out || self.bias.len() != self.c_out {
            return Err(Error::shape(format!(
                "dense expects {} features, got {}",
                self.c_in, x.cols
            )));
        }
        let mut y = Mat::zeros(x.rows, self.c_out);
        for row in y.data.chunks_exact_mut(self.c_out) {
            row.copy_from_slice(&self.bias);
        }
        gemm(x.rows, self.c_in, self.c_out, &x.data, false, &self.weight, false, &mut y.data, 1.0);
        Ok(y)
    }

    pub fn backward(&self, x: &Mat, dy: &Mat, grads: &mut [Vec<f64>]) -> Mat {
        let (gw, gb) = grads.split_at_mut(1);
        gemm(self.c_in, x.rows, self.c_out, &x.data, true, &dy.data, false, &mut gw[0], 1.0);
        for row in dy.data.chunks_exact(self.c_out) {
            for (g, v) in gb[0].iter_mut().zip(row) {
                *g += v;
            }
        }
        let mut dx = Mat::zeros(x.rows, self.c_in);
        gemm(x.rows, self.c_out, self.c_in, &dy.data, false, &self.weight, true, &mut dx.data, 0.0);
        dx
    }
}

/// Single-layer LSTM with zero initial hidden and cell state.
///
/// Gate blocks are ordered input, forget, candidate, output. `w_x` is
/// `c_in x 4H`, `w_h` is `H x 4H`, both row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lstm {
    pub c_in: usize,
    pub hidden: usize,
    pub return_sequences: bool,
    pub w_x: Vec<f64>,
    pub w_h: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Values saved by [`Lstm::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct LstmCache {
    /// Post-nonlinearity gates, `steps*batch x 4H`.
    gates: Vec<f64>,
    cells: Vec<f64>,
    tanh_cells: Vec<f64>,
    hidden: Vec<f64>,
}

impl Lstm {
    pub fn new(c_in: usize, hidden: usize, return_sequences: bool, rng: &mut impl Rng) -> Self {
        Self {
            c_in,
            hidden,
            return_sequences,
            w_x: glorot(rng, c_in, 4 * hidden, c_in * 4 * hidden),
            w_h: glorot(rng, hidden, 4 * hidden, hidden * 4 * hidden),
            bias: vec![0.0; 4 * hidden],
        }
    }

    fn check(&self, x: &SeqBatch) -> Result<()> {
        let h4 = 4 * self.hidden;
        if self.w_x.len() != self.c_in * h4 || self.w_h.len() != self.hidden * h4 || self.bias.len() != h4 {
            return Err(Error::shape("inconsistent lstm parameters"));
        }
        if x.channels != self.c_in {
            return Err(Error::shape(format!(
                "lstm expects {} input channels, got {}",
                self.c_in, x.channels
            )));
        }
        if x.steps == 0 {
            return Err(Error::shape("lstm input has no time steps"));
        }
        Ok(())
    }

    /// Returns the full hidden sequence (`steps x batch x H`) and the cache.
    pub fn forward_full(&self, x: &SeqBatch) -> Result<(SeqBatch, LstmCache)> {
        self.check(x)?;
        let (h, b, steps) = (self.hidden, x.batch, x.steps);
        let h4 = 4 * h;
        let rows = steps * b;
        let mut gates = vec![0.0; rows * h4];
        for row in gates.chunks_exact_mut(h4) {
            row.copy_from_slice(&self.bias);
        }
        gemm(rows, self.c_in, h4, &x.data, false, &self.w_x, false, &mut gates, 1.0);
        let mut cells = vec![0.0; rows * h];
        let mut tanh_cells = vec![0.0; rows * h];
        let mut hs = vec![0.0; rows * h];
        for t in 0..steps {
            let (done, rest) = hs.split_at_mut(t * b * h);
            if t > 0 {
                recur_forward(b, h, &done[(t - 1) * b * h..], &self.w_h, &mut gates[t * b * h4..(t + 1) * b * h4]);
            }
            let h_t = &mut rest[..b * h];
            let base = t * b * h;
            let (prev_cells, cells_t) = cells.split_at_mut(base);
            let cells_t = &mut cells_t[..b * h];
            for bi in 0..b {
                let g = &mut gates[(t * b + bi) * h4..(t * b + bi + 1) * h4];
                sigmoid_inplace(&mut g[..2 * h]);
                tanh_inplace(&mut g[2 * h..3 * h]);
                sigmoid_inplace(&mut g[3 * h..]);
                let c = &mut cells_t[bi * h..(bi + 1) * h];
                let (ig, rest) = g.split_at(h);
                let (fg, rest) = rest.split_at(h);
                let cg = &rest[..h];
                if t > 0 {
                    let c_prev = &prev_cells[base - b * h + bi * h..][..h];
                    for j in 0..h {
                        c[j] = fg[j] * c_prev[j] + ig[j] * cg[j];
                    }
                } else {
                    for j in 0..h {
                        c[j] = ig[j] * cg[j];
                    }
                }
            }
            let tc = &mut tanh_cells[base..base + b * h];
            tc.copy_from_slice(cells_t);
            tanh_inplace(tc);
            for bi in 0..b {
                let og = &gates[(t * b + bi) * h4 + 3 * h..(t * b + bi + 1) * h4];
                for j in 0..h {
                    h_t[bi * h + j] = og[j] * tc[bi * h + j];
                }
            }
        }
        let out = SeqBatch {
            steps,
            batch: b,
            channels: h,
            data: hs.clone(),
        };
        Ok((
            out,
            LstmCache {
                gates,
                cells,
                tanh_cells,
                hidden: hs,
            },
        ))
    }

    pub fn forward(&self, x: &SeqBatch) -> Result<(Act, LstmCache)> {
        let (seq, cache) = self.forward_full(x)?;
        if self.return_sequences {
            Ok((Act::Seq(seq), cache))
        } else {
            Ok((Act::Flat(last_step(&seq)), cache))
        }
    }

    /// `dout` is the gradient of the layer output: a full sequence when
    /// `return_sequences`, otherwise the last hidden state only.
    pub fn backward(&self, x: &SeqBatch, cache: &LstmCache, dout: &Act, grads: &mut [Vec<f64>]) -> Result<SeqBatch> {
        let (h, b, steps) = (self.hidden, x.batch, x.steps);
        let h4 = 4 * h;
        let rows = steps * b;
        let mut dh_seq = vec![0.0; rows * h];
        match dout {
            Act::Seq(s) if self.return_sequences => dh_seq.copy_from_slice(&s.data),
            Act::Flat(m) if !self.return_sequences => {
                dh_seq[(steps - 1) * b * h..].copy_from_slice(&m.data);
            }
            other => return Err(Error::shape(format!("bad lstm output gradient {}", other.describe()))),
        }
        let w_h_t = if b <= SMALL_BATCH { transpose(h, h4, &self.w_h) } else { Vec::new() };
        let mut delta = vec![0.0; rows * h4];
        let mut dh_next = vec![0.0; b * h];
        let mut dc_next = vec![0.0; b * h];
        for t in (0..steps).rev() {
            let zeros = vec![0.0; h];
            for bi in 0..b {
                let r = t * b + bi;
                let g = &cache.gates[r * h4..(r + 1) * h4];
                let (ig, rest) = g.split_at(h);
                let (fg, rest) = rest.split_at(h);
                let (cg, og) = rest.split_at(h);
                let d = &mut delta[r * h4..(r + 1) * h4];
                let (di, rest) = d.split_at_mut(h);
                let (df, rest) = rest.split_at_mut(h);
                let (dg, d_o) = rest.split_at_mut(h);
                let tc = &cache.tanh_cells[r * h..(r + 1) * h];
                let c_prev = if t > 0 { &cache.cells[(r - b) * h..(r - b + 1) * h] } else { &zeros[..] };
                let dh_in = &dh_seq[r * h..(r + 1) * h];
                let dh_n = &dh_next[bi * h..(bi + 1) * h];
                let dc_n = &mut dc_next[bi * h..(bi + 1) * h];
                for j in 0..h {
                    let dh = dh_in[j] + dh_n[j];
                    let dc = dc_n[j] + dh * og[j] * (1.0 - tc[j] * tc[j]);
                    dc_n[j] = dc * fg[j];
                    di[j] = dc * cg[j] * ig[j] * (1.0 - ig[j]);
                    df[j] = dc * c_prev[j] * fg[j] * (1.0 - fg[j]);
                    dg[j] = dc * ig[j] * (1.0 - cg[j] * cg[j]);
                    d_o[j] = dh * tc[j] * og[j] * (1.0 - og[j]);
                }
            }
            if t > 0 {
                recur_backward(b, h, &delta[t * b * h4..(t + 1) * b * h4], &self.w_h, &w_h_t, &mut dh_next);
            }
        }
        let (gx, rest) = grads.split_at_mut(1);
        let (gh, gb) = rest.split_at_mut(1);
        gemm(self.c_in, rows, h4, &x.data, true, &delta, false, &mut gx[0], 1.0);
        if steps > 1 {
            gemm(
                h,
                (steps - 1) * b,
                h4,
                &cache.hidden[..(steps - 1) * b * h],
                true,
                &delta[b * h4..],
                false,
                &mut gh[0],
                1.0,
            );
        }
        for row in delta.chunks_exact(h4) {
            for (g, v) in gb[0].iter_mut().zip(row) {
                *g += v;
            }
        }
        let mut dx = SeqBatch::zeros(steps, b, self.c_in);
        gemm(rows, h4, self.c_in, &delta, false, &self.w_x, true, &mut dx.data, 0.0);
        Ok(dx)
    }
}

/// Batches below this size skip the packed gemm in the recurrence.
const SMALL_BATCH: usize = 16;

fn recur_forward(b: usize, h: usize, h_prev: &[f64], w_h: &[f64], gates: &mut [f64]) {
    if b <= SMALL_BATCH {
        small_gemm_acc(b, h, 4 * h, h_prev, w_h, gates);
    } else {
        gemm(b, h, 4 * h, h_prev, false, w_h, false, gates, 1.0);
    }
}

/// `dh = delta * w_h^T`; `w_h_t` is the `4H x H` transpose of `w_h`.
fn recur_backward(b: usize, h: usize, delta: &[f64], w_h: &[f64], w_h_t: &[f64], dh: &mut [f64]) {
    if b <= SMALL_BATCH {
        dh.fill(0.0);
        small_gemm_acc(b, 4 * h, h, delta, w_h_t, dh);
    } else {
        gemm(b, 4 * h, h, delta, false, w_h, true, dh, 0.0);
    }
}

fn transpose(rows: usize, cols: usize, m: &[f64]) -> Vec<f64> {
    let mut t = vec![0.0; rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            t[j * rows + i] = m[i * cols + j];
        }
    }
    t
}

fn last_step(seq: &SeqBatch) -> Mat {
    let n = seq.batch * seq.channels;
    Mat {
        rows: seq.batch,
        cols: seq.channels,
        data: seq.data[seq.data.len() - n..].to_vec(),
    }
}

fn check_poolable(x: &SeqBatch) -> Result<()> {
    if x.steps < 2 {
        return Err(Error::shape(format!("cannot pool a sequence of length {}", x.steps)));
    }
    Ok(())
}

/// Mean over non-overlapping pairs of time steps; a trailing odd step is dropped.
pub fn avgpool(x: &SeqBatch) -> Result<SeqBatch> {
    check_poolable(x)?;
    let n = x.batch * x.channels;
    let mut y = SeqBatch::zeros(x.steps / 2, x.batch, x.channels);
    for t in 0..y.steps {
        for i in 0..n {
            y.data[t * n + i] = 0.5 * (x.data[2 * t * n + i] + x.data[(2 * t + 1) * n + i]);
        }
    }
    Ok(y)
}

/// Max over non-overlapping pairs of time steps. Also returns which element
/// of each pair won (1 = the later step; ties go to the earlier one).
pub fn maxpool(x: &SeqBatch) -> Result<(SeqBatch, Vec<u8>)> {
    check_poolable(x)?;
    let n = x.batch * x.channels;
    let mut y = SeqBatch::zeros(x.steps / 2, x.batch, x.channels);
    let mut arg = vec![0u8; y.data.len()];
    for t in 0..y.steps {
        for i in 0..n {
            let (a, b) = (x.data[2 * t * n + i], x.data[(2 * t + 1) * n + i]);
            if b > a {
                y.data[t * n + i] = b;
                arg[t * n + i] = 1;
            } else {
                y.data[t * n + i] = a;
            }
        }
    }
    Ok((y, arg))
}

pub fn avgpool_backward(x_steps: usize, dy: &SeqBatch) -> SeqBatch {
    let n = dy.batch * dy.channels;
    let mut dx = SeqBatch::zeros(x_steps, dy.batch, dy.channels);
    for t in 0..dy.steps {
        for i in 0..n {
            let g = 0.5 * dy.data[t * n + i];
            dx.data[2 * t * n + i] = g;
            dx.data[(2 * t + 1) * n + i] = g;
        }
    }
    dx
}

pub fn maxpool_backward(x_steps: usize, dy: &SeqBatch, arg: &[u8]) -> SeqBatch {
    let n = dy.batch * dy.channels;
    let mut dx = SeqBatch::zeros(x_steps, dy.batch, dy.channels);
    for t in 0..dy.steps {
        for i in 0..n {
            let src = (2 * t + arg[t * n + i] as usize) * n + i;
            dx.data[src] = dy.data[t * n + i];
        }
    }
    dx
}

pub fn relu(x: &[f64]) -> Vec<f64> {
    x.iter().map(|v| v.max(0.0)).collect()
}

/// Inverted dropout mask: each entry is 0 with probability `rate`, else
/// `1 / (1 - rate)`.
pub fn dropout_mask(n: usize, rate: f64, rng: &mut impl Rng) -> Vec<f64> {
    let keep = 1.0 - rate;
    (0..n)
        .map(|_| if rng.random::<f64>() < rate { 0.0 } else { 1.0 / keep })
        .collect()
}

/// Time-major flattening per batch item: feature `t * channels + c`.
pub fn flatten(x: &SeqBatch) -> Mat {
    let cols = x.steps * x.channels;
    let mut m = Mat::zeros(x.batch, cols);
    for t in 0..x.steps {
        for b in 0..x.batch {
            let src = (t * x.batch + b) * x.channels;
            let dst = b * cols + t * x.channels;
            m.data[dst..dst + x.channels].copy_from_slice(&x.data[src..src + x.channels]);
        }
    }
    m
}

pub fn unflatten(dm: &Mat, steps: usize, channels: usize) -> SeqBatch {
    let mut s = SeqBatch::zeros(steps, dm.rows, channels);
    for t in 0..steps {
        for b in 0..dm.rows {
            let dst = (t * dm.rows + b) * channels;
            let src = b * dm.cols + t * channels;
            s.data[dst..dst + channels].copy_from_slice(&dm.data[src..src + channels]);
        }
    }
    s
}

/// One stage of a sequential network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Layer {
    Conv1d(Conv1d),
    Lstm(Lstm),
    Dense(Dense),
    Dropout { rate: f64 },
    AvgPool,
    MaxPool,
    Relu,
    Flatten,
    Sigmoid,
}

/// Per-layer forward state needed by the backward pass.
#[derive(Debug, Clone)]
pub enum LayerCache {
    None,
    Lstm(LstmCache),
    Mask(Option<Vec<f64>>),
    Argmax(Vec<u8>),
    Output(Act),
}

/// Train mode draws dropout masks from the supplied generator.
pub enum Mode<'a, R: Rng> {
    Train(&'a mut R),
    Eval,
}

impl Layer {
    pub fn params(&self) -> Vec<&[f64]> {
        match self {
            Layer::Conv1d(c) => vec![&c.weight, &c.bias],
            Layer::Dense(d) => vec![&d.weight, &d.bias],
            Layer::Lstm(l) => vec![&l.w_x, &l.w_h, &l.bias],
            _ => vec![],
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        match self {
            Layer::Conv1d(c) => vec![&mut c.weight, &mut c.bias],
            Layer::Dense(d) => vec![&mut d.weight, &mut d.bias],
            Layer::Lstm(l) => vec![&mut l.w_x, &mut l.w_h, &mut l.bias],
            _ => vec![],
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Layer::Conv1d(_) => "conv1d",
            Layer::Lstm(_) => "lstm",
            Layer::Dense(_) => "dense",
            Layer::Dropout { .. } => "dropout",
            Layer::AvgPool => "avgpool",
            Layer::MaxPool => "maxpool",
            Layer::Relu => "relu",
            Layer::Flatten => "flatten",
            Layer::Sigmoid => "sigmoid",
        }
    }

    pub fn forward<R: Rng>(&self, x: &Act, mode: &mut Mode<'_, R>) -> Result<(Act, LayerCache)> {
        Ok(match self {
            Layer::Conv1d(c) => (Act::Seq(c.forward(x.as_seq()?)?), LayerCache::None),
            Layer::Dense(d) => (Act::Flat(d.forward(x.as_flat()?)?), LayerCache::None),
            Layer::Lstm(l) => {
                let (y, cache) = l.forward(x.as_seq()?)?;
                (y, LayerCache::Lstm(cache))
            }
            Layer::Dropout { rate } => match mode {
                Mode::Train(rng) if *rate > 0.0 => {
                    let mask = dropout_mask(x.data().len(), *rate, *rng);
                    let mut y = x.clone();
                    for (v, m) in y.data_mut().iter_mut().zip(&mask) {
                        *v *= m;
                    }
                    (y, LayerCache::Mask(Some(mask)))
                }
                _ => (x.clone(), LayerCache::Mask(None)),
            },
            Layer::AvgPool => (Act::Seq(avgpool(x.as_seq()?)?), LayerCache::None),
            Layer::MaxPool => {
                let (y, arg) = maxpool(x.as_seq()?)?;
                (Act::Seq(y), LayerCache::Argmax(arg))
            }
            Layer::Relu => {
                let mut y = x.clone();
                for v in y.data_mut() {
                    *v = v.max(0.0);
                }
                (y, LayerCache::None)
            }
            Layer::Flatten => (Act::Flat(flatten(x.as_seq()?)), LayerCache::None),
            Layer::Sigmoid => {
                let mut y = x.clone();
                for v in y.data_mut() {
                    *v = sigmoid(*v);
                }
                (y.clone(), LayerCache::Output(y))
            }
        })
    }

    /// Gradient w.r.t. the layer input; parameter gradients are accumulated
    /// into `grads`, which has one buffer per entry of [`Layer::params`].
    pub fn backward(&self, x: &Act, cache: &LayerCache, dy: &Act, grads: &mut [Vec<f64>]) -> Result<Act> {
        Ok(match (self, cache) {
            (Layer::Conv1d(c), _) => Act::Seq(c.backward(x.as_seq()?, dy.as_seq()?, grads)),
            (Layer::Dense(d), _) => Act::Flat(d.backward(x.as_flat()?, dy.as_flat()?, grads)),
            (Layer::Lstm(l), LayerCache::Lstm(c)) => Act::Seq(l.backward(x.as_seq()?, c, dy, grads)?),
            (Layer::Dropout { .. }, LayerCache::Mask(mask)) => {
                let mut dx = dy.clone();
                if let Some(mask) = mask {
                    for (v, m) in dx.data_mut().iter_mut().zip(mask) {
                        *v *= m;
                    }
                }
                dx
            }
            (Layer::AvgPool, _) => Act::Seq(avgpool_backward(x.as_seq()?.steps, dy.as_seq()?)),
            (Layer::MaxPool, LayerCache::Argmax(arg)) => {
                Act::Seq(maxpool_backward(x.as_seq()?.steps, dy.as_seq()?, arg))
            }
            (Layer::Relu, _) => {
                let mut dx = dy.clone();
                for (g, v) in dx.data_mut().iter_mut().zip(x.data()) {
                    if *v <= 0.0 {
                        *g = 0.0;
                    }
                }
                dx
            }
            (Layer::Flatten, _) => {
                let s = x.as_seq()?;
                Act::Seq(unflatten(dy.as_flat()?, s.steps, s.channels))
            }
            (Layer::Sigmoid, LayerCache::Output(y)) => {
                let mut dx = dy.clone();
                for (g, p) in dx.data_mut().iter_mut().zip(y.data()) {
                    *g *= p * (1.0 - p);
                }
                dx
            }
            (layer, _) => {
                return Err(Error::shape(format!("missing forward cache for {}", layer.name())));
            }
        })
    }
}
