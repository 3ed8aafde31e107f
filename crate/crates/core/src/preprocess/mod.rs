//! Raw 100 Hz IMU to leveled, gravity-free 20 Hz samples.
//!
//! Stages, in order: causal 4th-order Butterworth low-pass at 10 Hz,
//! decimation to 20 Hz, roll/pitch leveling, gravity subtraction.

mod attitude;
mod filter;

pub use attitude::{
    determinant, estimate_roll_pitch, matmul, rotate, rotation_from_roll_pitch, transpose, Attitude, Mat3,
    MIN_GRAVITY_NORM,
};
pub use filter::{
    butterworth_coeffs, lowpass_filter, lowpass_filter_with, Biquad, Cascade, ChannelFilter, FilterInit,
    FilterSpec,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imu::{mean_accel, ImuSample, ImuSeries, G0};

/// Output rate of the pipeline, Hz.
pub const OUTPUT_RATE_HZ: f64 = 20.0;

/// Keeps every `rate / target_hz`-th sample, starting with the first.
pub fn decimate(x: &ImuSeries, target_hz: f64) -> Result<ImuSeries> {
    let factor = decimation_factor(x.rate_hz(), target_hz)?;
    let samples = x.samples().iter().step_by(factor).copied().collect();
    Ok(ImuSeries::with_parts(target_hz, samples))
}

pub(crate) fn decimation_factor(rate_hz: f64, target_hz: f64) -> Result<usize> {
    if !(target_hz > 0.0 && target_hz <= rate_hz) {
        return Err(Error::param(format!("cannot decimate {rate_hz} Hz to {target_hz} Hz")));
    }
    let ratio = rate_hz / target_hz;
    let factor = ratio.round();
    if (ratio - factor).abs() > 1e-3 {
        return Err(Error::param(format!(
            "{rate_hz} Hz is not an integer multiple of {target_hz} Hz"
        )));
    }
    Ok(factor as usize)
}

/// Rotates every accelerometer and gyroscope vector by `R(a)`.
pub fn apply_leveling(x: &ImuSeries, a: &Attitude) -> ImuSeries {
    let r = rotation_from_roll_pitch(a);
    x.map_samples(|s| level_sample(&r, s))
}

#[inline]
fn level_sample(r: &Mat3, s: &ImuSample) -> ImuSample {
    ImuSample {
        t: s.t,
        accel: rotate(r, s.accel),
        gyro: rotate(r, s.gyro),
    }
}

/// Removes standard gravity from the vertical accelerometer component.
pub fn subtract_gravity(x: &ImuSeries) -> ImuSeries {
    x.map_samples(|s| {
        let mut out = *s;
        out.accel[2] -= G0;
        out
    })
}

/// Leveled, gravity-free samples at the pipeline output rate.
#[derive(Debug, Clone, PartialEq)]
pub struct LeveledSeries {
    pub rate_hz: f64,
    pub samples: Vec<ImuSample>,
}

impl LeveledSeries {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Channel rows (accel xyz, gyro xyz) in time order.
    pub fn rows(&self) -> Vec<[f64; 6]> {
        self.samples.iter().map(ImuSample::channels).collect()
    }

    pub fn into_series(self) -> ImuSeries {
        ImuSeries::with_parts(self.rate_hz, self.samples)
    }
}

/// Which samples the leveling attitude is estimated from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum AttitudeScope {
    /// One attitude from the mean filtered accel of the whole recording.
    #[default]
    WholeSeries,
    /// The caller levels each window separately with [`Pipeline::level_window`].
    PerWindow,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pipeline {
    pub filter: FilterSpec,
    pub filter_init: FilterInit,
    pub output_rate_hz: f64,
}

impl Default for Pipeline {
    fn default() -> Self {
        Self {
            filter: FilterSpec::default(),
            filter_init: FilterInit::SteadyState,
            output_rate_hz: OUTPUT_RATE_HZ,
        }
    }
}

impl Pipeline {
    pub fn decimation_factor(&self) -> Result<usize> {
        decimation_factor(self.filter.input_rate_hz, self.output_rate_hz)
    }

    /// Low-pass and decimate; the result is still in the device frame.
    pub fn filter_and_decimate(&self, x: &ImuSeries) -> Result<ImuSeries> {
        let filtered = lowpass_filter_with(x, &self.filter, self.filter_init)?;
        let factor = self.decimation_factor()?;
        let samples = filtered.into_samples().into_iter().step_by(factor).collect();
        Ok(ImuSeries::with_parts(self.output_rate_hz, samples))
    }

    /// Full pipeline with a single attitude for the whole recording.
    pub fn run(&self, x: &ImuSeries) -> Result<LeveledSeries> {
        let low = self.filter_and_decimate(x)?;
        if low.is_empty() {
            return Err(Error::data("empty series"));
        }
        let attitude = estimate_roll_pitch(low.mean_accel())?;
        let leveled = subtract_gravity(&apply_leveling(&low, &attitude));
        Ok(LeveledSeries {
            rate_hz: self.output_rate_hz,
            samples: leveled.into_samples(),
        })
    }

    /// Levels one window of filtered, decimated device-frame samples using
    /// the window's own mean specific force, then removes gravity. Returns
    /// channel rows.
    pub fn level_window(&self, window: &[ImuSample]) -> Result<Vec<[f64; 6]>> {
        let attitude = estimate_roll_pitch(mean_accel(window))?;
        let r = rotation_from_roll_pitch(&attitude);
        Ok(window
            .iter()
            .map(|s| {
                let mut l = level_sample(&r, s);
                l.accel[2] -= G0;
                l.channels()
            })
            .collect())
    }
}

/// Runs the default pipeline (10 Hz low-pass, 20 Hz output, one attitude per
/// recording).
pub fn preprocess_pipeline(x: &ImuSeries) -> Result<LeveledSeries> {
    Pipeline::default().run(x)
}
