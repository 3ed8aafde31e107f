//! IMU sample types, frame conventions and the raw CSV log format.
//!
//! The internal device frame is x-forward, y-left, z-up. Accelerations are
//! specific force in m/s², angular rates in rad/s.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Standard gravity, m/s².
pub const G0: f64 = 9.80665;

/// Header line of the raw log CSV format.
pub const CSV_HEADER: &str = "t,ax,ay,az,gx,gy,gz";

/// Allowed deviation of a sample interval from the nominal period, as a
/// fraction of the period.
pub const RATE_JITTER: f64 = 0.2;

pub type Vec3 = [f64; 3];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImuSample {
    /// Seconds since stream start.
    pub t: f64,
    /// Specific force, m/s².
    pub accel: Vec3,
    /// Angular rate, rad/s.
    pub gyro: Vec3,
}

impl ImuSample {
    pub fn new(t: f64, accel: Vec3, gyro: Vec3) -> Self {
        Self { t, accel, gyro }
    }

    pub fn is_finite(&self) -> bool {
        self.t.is_finite()
            && self.accel.iter().all(|v| v.is_finite())
            && self.gyro.iter().all(|v| v.is_finite())
    }

    /// The six channels in storage order: accel xyz, then gyro xyz.
    pub fn channels(&self) -> [f64; 6] {
        let [ax, ay, az] = self.accel;
        let [gx, gy, gz] = self.gyro;
        [ax, ay, az, gx, gy, gz]
    }

    pub fn from_channels(t: f64, ch: [f64; 6]) -> Self {
        Self {
            t,
            accel: [ch[0], ch[1], ch[2]],
            gyro: [ch[3], ch[4], ch[5]],
        }
    }
}

/// A uniformly sampled six-channel IMU stream.
///
/// Construction through [`ImuSeries::new`] guarantees finite values, a
/// positive rate and strictly increasing, non-negative timestamps. Sampling
/// uniformity is not enforced on construction because real logs contain
/// gaps; use [`validate_series`] to check it.
#[derive(Debug, Clone, PartialEq)]
pub struct ImuSeries {
    rate_hz: f64,
    samples: Vec<ImuSample>,
}

impl ImuSeries {
    pub fn new(rate_hz: f64, samples: Vec<ImuSample>) -> Result<Self> {
        if !(rate_hz.is_finite() && rate_hz > 0.0) {
            return Err(Error::param(format!("sample rate must be positive, got {rate_hz}")));
        }
        for (i, s) in samples.iter().enumerate() {
            if !s.is_finite() {
                return Err(Error::data(format!("sample {i} has a non-finite value")));
            }
            if s.t < 0.0 {
                return Err(Error::data(format!("sample {i} has negative time {}", s.t)));
            }
            if i > 0 && s.t <= samples[i - 1].t {
                return Err(Error::data(format!(
                    "timestamps not strictly increasing at sample {i} ({} after {})",
                    s.t,
                    samples[i - 1].t
                )));
            }
        }
        Ok(Self { rate_hz, samples })
    }

    /// Builds a series without checking any invariant. Intended for feeding
    /// deliberately broken data to [`validate_series`].
    pub fn new_unchecked(rate_hz: f64, samples: Vec<ImuSample>) -> Self {
        Self { rate_hz, samples }
    }

    /// Builds a series at `rate_hz` with timestamps `t0 + i / rate_hz`.
    pub fn from_channels(rate_hz: f64, t0: f64, rows: &[[f64; 6]]) -> Result<Self> {
        let samples = rows
            .iter()
            .enumerate()
            .map(|(i, ch)| ImuSample::from_channels(t0 + i as f64 / rate_hz, *ch))
            .collect();
        Self::new(rate_hz, samples)
    }

    pub fn rate_hz(&self) -> f64 {
        self.rate_hz
    }

    pub fn samples(&self) -> &[ImuSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        match (self.samples.first(), self.samples.last()) {
            (Some(a), Some(b)) => b.t - a.t,
            _ => 0.0,
        }
    }

    pub fn into_samples(self) -> Vec<ImuSample> {
        self.samples
    }

    /// Returns a series with the same timestamps and rate but transformed
    /// samples. Used by the preprocessing stages, which never touch time.
    pub(crate) fn map_samples(&self, f: impl FnMut(&ImuSample) -> ImuSample) -> ImuSeries {
        ImuSeries {
            rate_hz: self.rate_hz,
            samples: self.samples.iter().map(f).collect(),
        }
    }

    pub(crate) fn with_parts(rate_hz: f64, samples: Vec<ImuSample>) -> ImuSeries {
        ImuSeries { rate_hz, samples }
    }

    /// Mean accelerometer vector over all samples.
    pub fn mean_accel(&self) -> Vec3 {
        mean_accel(&self.samples)
    }
}

pub(crate) fn mean_accel(samples: &[ImuSample]) -> Vec3 {
    let mut m = [0.0; 3];
    if samples.is_empty() {
        return m;
    }
    for s in samples {
        for (acc, v) in m.iter_mut().zip(s.accel) {
            *acc += v;
        }
    }
    let n = samples.len() as f64;
    m.map(|v| v / n)
}

/// Maps logger columns onto the internal x-forward/y-left/z-up frame.
///
/// Internal axis `i` takes the logger axis `source[i]` multiplied by
/// `sign[i]`. The same mapping is applied to accelerometer and gyroscope.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameConvention {
    source: [usize; 3],
    sign: [f64; 3],
}

impl Default for FrameConvention {
    fn default() -> Self {
        Self::identity()
    }
}

impl FrameConvention {
    pub fn identity() -> Self {
        Self {
            source: [0, 1, 2],
            sign: [1.0, 1.0, 1.0],
        }
    }

    /// Fails unless `source` is a permutation of 0..3 and every sign is ±1.
    pub fn new(source: [usize; 3], sign: [f64; 3]) -> Result<Self> {
        let mut seen = [false; 3];
        for &s in &source {
            if s > 2 || seen[s] {
                return Err(Error::param(format!("axis map {source:?} is not a permutation")));
            }
            seen[s] = true;
        }
        if sign.iter().any(|&s| s != 1.0 && s != -1.0) {
            return Err(Error::param(format!("axis signs {sign:?} must be +1 or -1")));
        }
        Ok(Self { source, sign })
    }

    /// Parses a mapping such as `x,-y,-z` or `-y,x,z`: one logger axis per
    /// internal axis, in internal x, y, z order.
    pub fn parse(spec: &str) -> Result<Self> {
        let parts: Vec<&str> = spec.split(',').map(str::trim).collect();
        if parts.len() != 3 {
            return Err(Error::param(format!("frame convention '{spec}' needs three axes")));
        }
        let mut source = [0; 3];
        let mut sign = [1.0; 3];
        for (i, p) in parts.iter().enumerate() {
            let (neg, axis) = match p.strip_prefix('-') {
                Some(rest) => (true, rest),
                None => (false, p.strip_prefix('+').unwrap_or(p)),
            };
            source[i] = match axis {
                "x" => 0,
                "y" => 1,
                "z" => 2,
                _ => return Err(Error::param(format!("unknown axis '{p}' in '{spec}'"))),
            };
            sign[i] = if neg { -1.0 } else { 1.0 };
        }
        Self::new(source, sign)
    }

    /// Determinant of the signed permutation matrix; always ±1.
    pub fn determinant(&self) -> f64 {
        let parity = {
            let s = self.source;
            let inversions = (s[0] > s[1]) as u8 + (s[0] > s[2]) as u8 + (s[1] > s[2]) as u8;
            if inversions.is_multiple_of(2) {
                1.0
            } else {
                -1.0
            }
        };
        parity * self.sign.iter().product::<f64>()
    }

    pub fn apply(&self, v: Vec3) -> Vec3 {
        [
            self.sign[0] * v[self.source[0]],
            self.sign[1] * v[self.source[1]],
            self.sign[2] * v[self.source[2]],
        ]
    }

    pub fn apply_sample(&self, s: &ImuSample) -> ImuSample {
        ImuSample {
            t: s.t,
            accel: self.apply(s.accel),
            gyro: self.apply(s.gyro),
        }
    }
}

/// Reads a raw log CSV from disk.
pub fn parse_imu_csv(path: impl AsRef<Path>, convention: &FrameConvention) -> Result<ImuSeries> {
    let file = fs::File::open(path.as_ref())?;
    read_imu_csv(BufReader::new(file), convention)
}

/// Reads the raw log CSV format from any reader.
///
/// Lines starting with `#` and blank lines are ignored. The sample rate is
/// inferred from the first and last timestamps.
pub fn read_imu_csv<R: Read>(reader: R, convention: &FrameConvention) -> Result<ImuSeries> {
    let reader = BufReader::new(reader);
    let mut samples: Vec<ImuSample> = Vec::new();
    let mut seen_header = false;
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !seen_header {
            let header: String = line.split(',').map(str::trim).collect::<Vec<_>>().join(",");
            if header != CSV_HEADER {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("expected header '{CSV_HEADER}', found '{line}'"),
                });
            }
            seen_header = true;
            continue;
        }
        let values = parse_row::<7>(line, lineno)?;
        let sample = ImuSample {
            t: values[0],
            accel: [values[1], values[2], values[3]],
            gyro: [values[4], values[5], values[6]],
        };
        if sample.t < 0.0 {
            return Err(Error::data(format!("line {lineno}: negative timestamp {}", sample.t)));
        }
        if let Some(prev) = samples.last() {
            if sample.t <= prev.t {
                return Err(Error::data(format!(
                    "line {lineno}: timestamp {} does not increase (previous {})",
                    sample.t, prev.t
                )));
            }
        }
        samples.push(convention.apply_sample(&sample));
    }
    if !seen_header {
        return Err(Error::Parse {
            line: 1,
            msg: format!("missing header '{CSV_HEADER}'"),
        });
    }
    if samples.len() < 2 {
        return Err(Error::data(format!(
            "need at least 2 samples to infer the rate, found {}",
            samples.len()
        )));
    }
    let span = samples[samples.len() - 1].t - samples[0].t;
    let rate = (samples.len() - 1) as f64 / span;
    ImuSeries::new(rate, samples)
}

fn parse_row<const N: usize>(line: &str, lineno: usize) -> Result<[f64; N]> {
    let mut out = [0.0; N];
    let mut fields = line.split(',');
    for (i, slot) in out.iter_mut().enumerate() {
        let field = fields.next().ok_or_else(|| Error::Parse {
            line: lineno,
            msg: format!("expected {N} fields, found {i}"),
        })?;
        let v: f64 = field.trim().parse().map_err(|_| Error::Parse {
            line: lineno,
            msg: format!("field {} ('{}') is not a number", i + 1, field.trim()),
        })?;
        if !v.is_finite() {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("field {} is not finite ({})", i + 1, field.trim()),
            });
        }
        *slot = v;
    }
    if fields.next().is_some() {
        return Err(Error::Parse {
            line: lineno,
            msg: format!("more than {N} fields"),
        });
    }
    Ok(out)
}

/// Writes `series` in the raw log format. Values use shortest round-trip
/// formatting, so re-parsing reproduces them exactly. A `# rate=` comment
/// line records the nominal rate.
pub fn write_imu_csv<W: Write>(series: &ImuSeries, mut out: W) -> Result<()> {
    let mut buf = String::with_capacity(64 * (series.len() + 2));
    writeln!(buf, "# rate={}", series.rate_hz()).unwrap();
    writeln!(buf, "{CSV_HEADER}").unwrap();
    for s in series.samples() {
        let [ax, ay, az] = s.accel;
        let [gx, gy, gz] = s.gyro;
        writeln!(buf, "{},{ax},{ay},{az},{gx},{gy},{gz}", s.t).unwrap();
    }
    out.write_all(buf.as_bytes())?;
    Ok(())
}

pub fn save_imu_csv(series: &ImuSeries, path: impl AsRef<Path>) -> Result<()> {
    let file = fs::File::create(path.as_ref())?;
    let mut w = std::io::BufWriter::new(file);
    write_imu_csv(series, &mut w)?;
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NonFinite { index: usize },
    NegativeTime { index: usize },
    /// `t[index] <= t[index - 1]`.
    NonMonotone { index: usize },
    /// Interval ending at `index` deviates from the nominal period.
    Gap { index: usize, dt: f64 },
    BadRate { rate_hz: f64 },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn gaps(&self) -> impl Iterator<Item = &Violation> {
        self.violations.iter().filter(|v| matches!(v, Violation::Gap { .. }))
    }
}

/// Lists every invariant violation in `s`. An empty report means the series
/// is finite, strictly increasing in time and uniform to within
/// [`RATE_JITTER`] of its period.
pub fn validate_series(s: &ImuSeries) -> ValidationReport {
    let mut violations = Vec::new();
    let rate = s.rate_hz();
    let rate_ok = rate.is_finite() && rate > 0.0;
    if !rate_ok {
        violations.push(Violation::BadRate { rate_hz: rate });
    }
    let samples = s.samples();
    for (i, smp) in samples.iter().enumerate() {
        if !smp.is_finite() {
            violations.push(Violation::NonFinite { index: i });
        }
        if smp.t < 0.0 {
            violations.push(Violation::NegativeTime { index: i });
        }
        if i == 0 {
            continue;
        }
        let dt = smp.t - samples[i - 1].t;
        if !(dt > 0.0) {
            violations.push(Violation::NonMonotone { index: i });
        } else if rate_ok && (dt - 1.0 / rate).abs() > RATE_JITTER / rate {
            violations.push(Violation::Gap { index: i, dt });
        }
    }
    ValidationReport { violations }
}
