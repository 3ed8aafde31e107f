use crate::error::{Error, Result};

/// A single sequence, `channels x len`, stored channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    channels: usize,
    len: usize,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(channels: usize, len: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != channels * len {
            return Err(Error::shape(format!(
                "{} values cannot form a {channels}x{len} tensor",
                data.len()
            )));
        }
        debug_assert!(data.iter().all(|v| v.is_finite()), "non-finite tensor value");
        Ok(Self { channels, len, data })
    }

    pub fn zeros(channels: usize, len: usize) -> Self {
        Self {
            channels,
            len,
            data: vec![0.0; channels * len],
        }
    }

    /// From time-major rows: `rows[t][c]`.
    pub fn from_time_major(rows: &[Vec<f64>]) -> Result<Self> {
        let len = rows.len();
        let channels = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != channels) {
            return Err(Error::shape("ragged rows"));
        }
        let mut t = Self::zeros(channels, len);
        for (i, r) in rows.iter().enumerate() {
            for (c, v) in r.iter().enumerate() {
                t.data[c * len + i] = *v;
            }
        }
        Ok(t)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.channels, self.len)
    }

    pub fn get(&self, c: usize, t: usize) -> f64 {
        self.data[c * self.len + t]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn to_batch(&self) -> SeqBatch {
        let mut s = SeqBatch::zeros(self.len, 1, self.channels);
        for c in 0..self.channels {
            for t in 0..self.len {
                s.data[t * self.channels + c] = self.data[c * self.len + t];
            }
        }
        s
    }

    pub(crate) fn from_batch(s: &SeqBatch, b: usize) -> Self {
        let mut out = Self::zeros(s.channels, s.steps);
        for t in 0..s.steps {
            for c in 0..s.channels {
                out.data[c * s.steps + t] = s.get(t, b, c);
            }
        }
        out
    }
}

/// A mini-batch of sequences, stored `[time][batch][channel]` so every time
/// step is one contiguous `batch x channels` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SeqBatch {
    pub steps: usize,
    pub batch: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl SeqBatch {
    pub fn zeros(steps: usize, batch: usize, channels: usize) -> Self {
        Self {
            steps,
            batch,
            channels,
            data: vec![0.0; steps * batch * channels],
        }
    }

    /// Stacks time-major windows (`window[t * channels + c]`) into a batch.
    pub fn from_windows(windows: &[&[f64]], channels: usize) -> Result<Self> {
        let batch = windows.len();
        let n = windows.first().map_or(0, |w| w.len());
        if !n.is_multiple_of(channels) || windows.iter().any(|w| w.len() != n) {
            return Err(Error::shape("windows must share one time-major shape"));
        }
        let steps = n / channels;
        let mut s = Self::zeros(steps, batch, channels);
        for (b, w) in windows.iter().enumerate() {
            for t in 0..steps {
                let dst = (t * batch + b) * channels;
                s.data[dst..dst + channels].copy_from_slice(&w[t * channels..(t + 1) * channels]);
            }
        }
        Ok(s)
    }

    #[inline]
    pub fn get(&self, t: usize, b: usize, c: usize) -> f64 {
        self.data[(t * self.batch + b) * self.channels + c]
    }

    /// Rows of the `steps*batch x channels` matrix.
    pub fn rows(&self) -> usize {
        self.steps * self.batch
    }
}

/// Row-major `rows x cols` matrix; one row per batch item.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }
}

/// Activation flowing between layers.
#[derive(Debug, Clone, PartialEq)]
pub enum Act {
    Seq(SeqBatch),
    Flat(Mat),
}

impl Act {
    pub fn data(&self) -> &[f64] {
        match self {
            Act::Seq(s) => &s.data,
            Act::Flat(m) => &m.data,
        }
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        match self {
            Act::Seq(s) => &mut s.data,
            Act::Flat(m) => &mut m.data,
        }
    }

    pub fn batch(&self) -> usize {
        match self {
            Act::Seq(s) => s.batch,
            Act::Flat(m) => m.rows,
        }
    }

    /// Same shape, all zeros.
    pub fn zeros_like(&self) -> Act {
        match self {
            Act::Seq(s) => Act::Seq(SeqBatch::zeros(s.steps, s.batch, s.channels)),
            Act::Flat(m) => Act::Flat(Mat::zeros(m.rows, m.cols)),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            Act::Seq(s) => format!("sequence(steps={}, batch={}, channels={})", s.steps, s.batch, s.channels),
            Act::Flat(m) => format!("flat(batch={}, features={})", m.rows, m.cols),
        }
    }

    pub(crate) fn into_flat(self) -> Result<Mat> {
        match self {
            Act::Flat(m) => Ok(m),
            other => Err(Error::shape(format!("expected flat features, got {}", other.describe()))),
        }
    }

    pub(crate) fn as_seq(&self) -> Result<&SeqBatch> {
        match self {
            Act::Seq(s) => Ok(s),
            other => Err(Error::shape(format!("expected a sequence, got {}", other.describe()))),
        }
    }

    pub(crate) fn as_flat(&self) -> Result<&Mat> {
        match self {
            Act::Flat(m) => Ok(m),
            other => Err(Error::shape(format!("expected flat features, got {}", other.describe()))),
        }
    }
}
