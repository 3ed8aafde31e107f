//! Butterworth low-pass design as a cascade of biquads, and the causal
//! six-channel filter bank built on it.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imu::{ImuSample, ImuSeries};

/// Relative tolerance when matching a series rate against a filter design rate.
const RATE_MATCH_TOL: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    pub order: usize,
    pub cutoff_hz: f64,
    pub input_rate_hz: f64,
}

impl Default for FilterSpec {
    /// 4th order, 10 Hz cutoff, designed for 100 Hz input.
    fn default() -> Self {
        Self {
            order: 4,
            cutoff_hz: 10.0,
            input_rate_hz: 100.0,
        }
    }
}

impl FilterSpec {
    pub fn new(order: usize, cutoff_hz: f64, input_rate_hz: f64) -> Result<Self> {
        let spec = Self {
            order,
            cutoff_hz,
            input_rate_hz,
        };
        spec.check()?;
        Ok(spec)
    }

    fn check(&self) -> Result<()> {
        if self.order < 2 || !self.order.is_multiple_of(2) {
            return Err(Error::param(format!("filter order must be even and >= 2, got {}", self.order)));
        }
        if !(self.input_rate_hz.is_finite() && self.input_rate_hz > 0.0) {
            return Err(Error::param(format!("invalid design rate {}", self.input_rate_hz)));
        }
        let nyquist = self.input_rate_hz / 2.0;
        if !(self.cutoff_hz > 0.0 && self.cutoff_hz < nyquist) {
            return Err(Error::param(format!(
                "cutoff {} Hz must lie in (0, {nyquist}) Hz",
                self.cutoff_hz
            )));
        }
        Ok(())
    }
}

/// Normalized second-order section, `a0 = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Biquad {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub a1: f64,
    pub a2: f64,
}

impl Biquad {
    /// Complex frequency response at normalized angular frequency `w` (rad/sample).
    fn response(&self, w: f64) -> (f64, f64) {
        // H = (b0 + b1 z^-1 + b2 z^-2) / (1 + a1 z^-1 + a2 z^-2), z^-1 = e^{-jw}
        let (s1, c1) = w.sin_cos();
        let (s2, c2) = (2.0 * w).sin_cos();
        let nr = self.b0 + self.b1 * c1 + self.b2 * c2;
        let ni = -(self.b1 * s1 + self.b2 * s2);
        let dr = 1.0 + self.a1 * c1 + self.a2 * c2;
        let di = -(self.a1 * s1 + self.a2 * s2);
        let den = dr * dr + di * di;
        ((nr * dr + ni * di) / den, (ni * dr - nr * di) / den)
    }

    fn dc_gain(&self) -> f64 {
        (self.b0 + self.b1 + self.b2) / (1.0 + self.a1 + self.a2)
    }
}

/// Transposed direct form II state of one section.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct SectionState {
    z1: f64,
    z2: f64,
}

impl SectionState {
    #[inline]
    fn step(&mut self, q: &Biquad, x: f64) -> f64 {
        let y = q.b0 * x + self.z1;
        self.z1 = q.b1 * x - q.a1 * y + self.z2;
        self.z2 = q.b2 * x - q.a2 * y;
        y
    }

    /// State reached after an infinitely long constant input `u`.
    fn steady(q: &Biquad, u: f64) -> Self {
        let y = q.dc_gain() * u;
        Self {
            z1: y - q.b0 * u,
            z2: q.b2 * u - q.a2 * y,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cascade {
    pub sections: Vec<Biquad>,
}

impl Cascade {
    /// |H| at `freq_hz` for a sample rate of `rate_hz`.
    pub fn magnitude(&self, freq_hz: f64, rate_hz: f64) -> f64 {
        let w = 2.0 * PI * freq_hz / rate_hz;
        self.sections
            .iter()
            .map(|q| {
                let (re, im) = q.response(w);
                re.hypot(im)
            })
            .product()
    }

    pub fn dc_gain(&self) -> f64 {
        self.sections.iter().map(Biquad::dc_gain).product()
    }
}

/// Butterworth low-pass as `order / 2` biquads, via the bilinear transform
/// with the cutoff pre-warped so the -3 dB point lands exactly on
/// `cutoff_hz`.
pub fn butterworth_coeffs(spec: &FilterSpec) -> Result<Cascade> {
    spec.check()?;
    let k = (PI * spec.cutoff_hz / spec.input_rate_hz).tan();
    let k2 = k * k;
    let n = spec.order;
    let sections = (1..=n / 2)
        .map(|i| {
            // analog pole pair at angle (2i - 1) pi / 2n from the imaginary axis
            let q = 1.0 / (2.0 * ((2 * i - 1) as f64 * PI / (2 * n) as f64).sin());
            let norm = 1.0 / (1.0 + k / q + k2);
            let b0 = k2 * norm;
            Biquad {
                b0,
                b1: 2.0 * b0,
                b2: b0,
                a1: 2.0 * (k2 - 1.0) * norm,
                a2: (1.0 - k / q + k2) * norm,
            }
        })
        .collect();
    Ok(Cascade { sections })
}

/// How a filter bank's delay line is seeded before the first sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum FilterInit {
    /// All state zero: the output starts from rest.
    #[default]
    Zero,
    /// State set to the steady state of a constant input equal to the first
    /// sample, so a constant signal passes through without a transient.
    SteadyState,
}

/// Causal filter applied independently to the six IMU channels.
#[derive(Debug, Clone)]
pub struct ChannelFilter {
    cascade: Cascade,
    init: FilterInit,
    state: Vec<[SectionState; 6]>,
    primed: bool,
}

impl ChannelFilter {
    pub fn new(cascade: Cascade, init: FilterInit) -> Self {
        let state = vec![[SectionState::default(); 6]; cascade.sections.len()];
        Self {
            cascade,
            init,
            state,
            primed: false,
        }
    }

    pub fn reset(&mut self) {
        for s in &mut self.state {
            *s = [SectionState::default(); 6];
        }
        self.primed = false;
    }

    pub fn process(&mut self, x: [f64; 6]) -> [f64; 6] {
        if !self.primed {
            if self.init == FilterInit::SteadyState {
                let mut u = x;
                for (q, st) in self.cascade.sections.iter().zip(self.state.iter_mut()) {
                    for c in 0..6 {
                        st[c] = SectionState::steady(q, u[c]);
                        u[c] *= q.dc_gain();
                    }
                }
            }
            self.primed = true;
        }
        let mut y = x;
        for (q, st) in self.cascade.sections.iter().zip(self.state.iter_mut()) {
            for c in 0..6 {
                y[c] = st[c].step(q, y[c]);
            }
        }
        y
    }
}

/// Filters every channel of `x` with a zero-state causal pass.
pub fn lowpass_filter(x: &ImuSeries, spec: &FilterSpec) -> Result<ImuSeries> {
    lowpass_filter_with(x, spec, FilterInit::Zero)
}

pub fn lowpass_filter_with(x: &ImuSeries, spec: &FilterSpec, init: FilterInit) -> Result<ImuSeries> {
    let cascade = butterworth_coeffs(spec)?;
    if (x.rate_hz() - spec.input_rate_hz).abs() > RATE_MATCH_TOL * spec.input_rate_hz {
        return Err(Error::param(format!(
            "series rate {} Hz does not match filter design rate {} Hz",
            x.rate_hz(),
            spec.input_rate_hz
        )));
    }
    let mut bank = ChannelFilter::new(cascade, init);
    Ok(x.map_samples(|s| ImuSample::from_channels(s.t, bank.process(s.channels()))))
}
