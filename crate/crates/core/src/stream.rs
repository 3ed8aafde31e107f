//! Online classification of a live IMU stream.
//!
//! Raw samples pass through the same causal filter and decimator as the
//! offline pipeline into a ring buffer of the last `20*S` output samples.
//! Every `T` seconds of stream time the buffered window is leveled with its
//! own mean specific force and classified.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imu::{ImuSample, ImuSeries};
use crate::model::Classifier;
use crate::nn::Prediction;
use crate::preprocess::{butterworth_coeffs, ChannelFilter, Pipeline};

/// Slack on activation boundaries, seconds.
const BOUNDARY_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StreamConfig {
    pub window_seconds: usize,
    pub activation_seconds: f64,
    pub pipeline: Pipeline,
}

impl Default for StreamConfig {
    fn default() -> Self {
        Self {
            window_seconds: 3,
            activation_seconds: 5.0,
            pipeline: Pipeline::default(),
        }
    }
}

impl StreamConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window_seconds == 0 {
            return Err(Error::param("stream window must be at least 1 s"));
        }
        if !(self.activation_seconds > 0.0 && self.activation_seconds.is_finite()) {
            return Err(Error::param("activation interval must be positive"));
        }
        self.pipeline.decimation_factor()?;
        Ok(())
    }

    /// Output-rate samples per classified window.
    pub fn window_len(&self) -> usize {
        (self.pipeline.output_rate_hz * self.window_seconds as f64).round() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StreamDecision {
    /// Activation boundary `k*T`, seconds from the first sample.
    pub t: f64,
    /// Index of the raw sample that crossed the boundary.
    pub sample_index: usize,
    pub prediction: Prediction,
}

/// Single-owner streaming state. Memory is the filter delay line plus a
/// buffer of `20*S` samples, independent of stream length.
pub struct StreamState<'m> {
    model: &'m Classifier,
    cfg: StreamConfig,
    filter: ChannelFilter,
    factor: usize,
    window_len: usize,
    buffer: VecDeque<ImuSample>,
    t0: Option<f64>,
    last_t: f64,
    count: usize,
    next_boundary: u64,
}

impl<'m> StreamState<'m> {
    pub fn new(model: &'m Classifier, cfg: StreamConfig) -> Result<Self> {
        cfg.validate()?;
        if model.window_seconds != cfg.window_seconds {
            return Err(Error::shape(format!(
                "model expects {} s windows, stream is configured for {} s",
                model.window_seconds, cfg.window_seconds
            )));
        }
        let cascade = butterworth_coeffs(&cfg.pipeline.filter)?;
        let window_len = cfg.window_len();
        Ok(Self {
            model,
            filter: ChannelFilter::new(cascade, cfg.pipeline.filter_init),
            factor: cfg.pipeline.decimation_factor()?,
            window_len,
            buffer: VecDeque::with_capacity(window_len),
            t0: None,
            last_t: f64::NEG_INFINITY,
            count: 0,
            next_boundary: 1,
            cfg,
        })
    }

    pub fn config(&self) -> &StreamConfig {
        &self.cfg
    }

    pub fn buffered(&self) -> usize {
        self.buffer.len()
    }

    pub fn buffer_capacity(&self) -> usize {
        self.buffer.capacity()
    }

    pub fn samples_seen(&self) -> usize {
        self.count
    }

    pub fn push_sample(&mut self, s: ImuSample) -> Result<Option<StreamDecision>> {
        if !s.is_finite() {
            return Err(Error::Stream(format!("non-finite sample at t={}", s.t)));
        }
        if s.t <= self.last_t {
            return Err(Error::Stream(format!(
                "sample at t={} does not follow t={}",
                s.t, self.last_t
            )));
        }
        self.last_t = s.t;
        let t0 = *self.t0.get_or_insert(s.t);
        let index = self.count;
        self.count += 1;

        let y = self.filter.process(s.channels());
        if index.is_multiple_of(self.factor) {
            if self.buffer.len() == self.window_len {
                self.buffer.pop_front();
            }
            self.buffer.push_back(ImuSample::from_channels(s.t, y));
        }

        let period = self.cfg.activation_seconds;
        let covered = s.t - t0 + 1.0 / self.cfg.pipeline.filter.input_rate_hz;
        let mut crossed = None;
        while covered + BOUNDARY_EPS >= self.next_boundary as f64 * period {
            crossed = Some(self.next_boundary);
            self.next_boundary += 1;
        }
        let Some(k) = crossed else { return Ok(None) };
        if self.buffer.len() < self.window_len {
            return Ok(None);
        }
        let window: Vec<ImuSample> = self.buffer.iter().copied().collect();
        let prediction = classify(self.model, &self.cfg.pipeline, &window)?;
        Ok(Some(StreamDecision {
            t: k as f64 * period,
            sample_index: index,
            prediction,
        }))
    }
}

fn classify(model: &Classifier, pipeline: &Pipeline, window: &[ImuSample]) -> Result<Prediction> {
    let rows = pipeline.level_window(window)?;
    let x: Vec<f64> = rows.iter().flatten().copied().collect();
    model.predict(&x)
}

/// Replays a whole recording through a fresh stream.
pub fn run_stream(model: &Classifier, series: &ImuSeries, cfg: StreamConfig) -> Result<Vec<StreamDecision>> {
    let mut state = StreamState::new(model, cfg)?;
    let mut out = Vec::new();
    for s in series.samples() {
        if let Some(d) = state.push_sample(*s)? {
            out.push(d);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecisionPair {
    pub t: f64,
    pub p_stream: f64,
    pub p_batch: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub pairs: Vec<DecisionPair>,
    pub max_abs_diff: f64,
}

/// Streams `series` and, independently, filters and decimates the whole
/// recording offline, slicing the same windows the stream classified.
pub fn stream_vs_batch_equivalence(
    model: &Classifier,
    series: &ImuSeries,
    cfg: StreamConfig,
) -> Result<EquivalenceReport> {
    if series.is_empty() {
        return Ok(EquivalenceReport::default());
    }
    let decisions = run_stream(model, series, cfg)?;
    let low = cfg.pipeline.filter_and_decimate(series)?;
    let factor = cfg.pipeline.decimation_factor()?;
    let n = cfg.window_len();
    let mut report = EquivalenceReport::default();
    for d in decisions {
        let end = d.sample_index / factor;
        let window = &low.samples()[end + 1 - n..=end];
        let p_batch = classify(model, &cfg.pipeline, window)?.p;
        let diff = (d.prediction.p - p_batch).abs();
        report.max_abs_diff = report.max_abs_diff.max(diff);
        report.pairs.push(DecisionPair {
            t: d.t,
            p_stream: d.prediction.p,
            p_batch,
        });
    }
    Ok(report)
}

pub const DECISIONS_CSV_HEADER: &str = "t,p,label";

pub fn write_decisions_csv<W: std::io::Write>(decisions: &[StreamDecision], mut out: W) -> Result<()> {
    writeln!(out, "{DECISIONS_CSV_HEADER}")?;
    for d in decisions {
        writeln!(out, "{},{},{}", d.t, d.prediction.p, d.prediction.label)?;
    }
    Ok(())
}
