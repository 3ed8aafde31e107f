//! Synthetic e-scooter rides with known surface labels.
//!
//! Vertical specific force is gravity plus broadband vibration; sidewalks
//! add a train of upward half-sine jolts from slab joints, each paired with
//! a short pitch-rate wobble. A slow forward acceleration cycle and the
//! sensor mounting tilt are applied to both surfaces.

use std::f64::consts::PI;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::{Drive, ROAD, SIDEWALK};
use crate::error::{Error, Result};
use crate::imu::{ImuSample, ImuSeries, G0};
use crate::preprocess::{rotate, rotation_from_roll_pitch, transpose, Attitude, Pipeline};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfaceProfile {
    pub label: u8,
    /// Broadband accelerometer noise std on each axis, m/s².
    pub vibration_std: f64,
    /// Slab-joint jolts per second.
    pub impact_rate_hz: f64,
    /// Peak of each upward jolt, m/s².
    pub impact_amplitude: f64,
    pub impact_width_s: f64,
    /// Gyroscope noise std on each axis, rad/s.
    pub gyro_jitter_std: f64,
    /// Forward acceleration `a sin(2 pi t / period)`.
    pub forward_accel_amplitude: f64,
    pub forward_accel_period_s: f64,
}

impl SurfaceProfile {
    pub fn road() -> Self {
        Self {
            label: ROAD,
            vibration_std: 0.3,
            impact_rate_hz: 0.0,
            impact_amplitude: 0.0,
            impact_width_s: 0.06,
            gyro_jitter_std: 0.02,
            forward_accel_amplitude: 0.2,
            forward_accel_period_s: 20.0,
        }
    }

    pub fn sidewalk() -> Self {
        Self {
            label: SIDEWALK,
            vibration_std: 0.8,
            impact_rate_hz: 2.0,
            impact_amplitude: 3.0,
            gyro_jitter_std: 0.05,
            ..Self::road()
        }
    }

    /// No motion at all: a parked, level scooter.
    pub fn still() -> Self {
        Self {
            label: ROAD,
            vibration_std: 0.0,
            impact_rate_hz: 0.0,
            impact_amplitude: 0.0,
            impact_width_s: 0.06,
            gyro_jitter_std: 0.0,
            forward_accel_amplitude: 0.0,
            forward_accel_period_s: 20.0,
        }
    }

    pub fn for_label(label: u8) -> Self {
        if label == SIDEWALK {
            Self::sidewalk()
        } else {
            Self::road()
        }
    }

    /// Every magnitude scaled by an independent factor in `[1 - spread, 1 + spread]`.
    pub fn perturbed(&self, spread: f64, rng: &mut impl Rng) -> Self {
        let mut f = || 1.0 + rng.random_range(-spread..=spread);
        Self {
            vibration_std: self.vibration_std * f(),
            impact_rate_hz: self.impact_rate_hz * f(),
            impact_amplitude: self.impact_amplitude * f(),
            gyro_jitter_std: self.gyro_jitter_std * f(),
            forward_accel_amplitude: self.forward_accel_amplitude * f(),
            forward_accel_period_s: self.forward_accel_period_s * f(),
            ..*self
        }
    }

    pub fn validate(&self) -> Result<()> {
        let v = [
            self.vibration_std,
            self.impact_rate_hz,
            self.impact_amplitude,
            self.impact_width_s,
            self.gyro_jitter_std,
            self.forward_accel_amplitude,
        ];
        if v.iter().any(|x| !(x.is_finite() && *x >= 0.0)) || !(self.forward_accel_period_s > 0.0) {
            return Err(Error::param("surface profile values must be finite and non-negative"));
        }
        if self.label > 1 {
            return Err(Error::param("surface label must be 0 or 1"));
        }
        if self.label == ROAD && self.impact_amplitude != 0.0 {
            return Err(Error::param("road profiles have no slab impacts"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub duration_s: f64,
    pub profile: SurfaceProfile,
    /// Sensor tilt relative to the scooter deck.
    pub mount: Attitude,
    /// Multiplier on all broadband noise.
    pub wind: f64,
}

impl Segment {
    pub fn new(duration_s: f64, profile: SurfaceProfile) -> Self {
        Self {
            duration_s,
            profile,
            mount: Attitude::default(),
            wind: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RideScript {
    pub segments: Vec<Segment>,
    pub seed: u64,
    pub rate_hz: f64,
}

impl RideScript {
    pub fn new(segments: Vec<Segment>, seed: u64) -> Self {
        Self {
            segments,
            seed,
            rate_hz: 100.0,
        }
    }

    /// A single-surface ride.
    pub fn uniform(duration_s: f64, profile: SurfaceProfile, seed: u64) -> Self {
        Self::new(vec![Segment::new(duration_s, profile)], seed)
    }

    /// Road for the first half, sidewalk for the second.
    pub fn mixed(duration_s: f64, seed: u64) -> Self {
        Self::new(
            vec![
                Segment::new(duration_s / 2.0, SurfaceProfile::road()),
                Segment::new(duration_s / 2.0, SurfaceProfile::sidewalk()),
            ],
            seed,
        )
    }

    /// Same mounting tilt and wind on every segment.
    pub fn with_conditions(mut self, mount: Attitude, wind: f64) -> Self {
        for s in &mut self.segments {
            s.mount = mount;
            s.wind = wind;
        }
        self
    }

    pub fn duration(&self) -> f64 {
        self.segments.iter().map(|s| s.duration_s).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.segments.is_empty() || !(self.rate_hz > 0.0) {
            return Err(Error::param("a ride needs at least one segment and a positive rate"));
        }
        for s in &self.segments {
            s.profile.validate()?;
            if !(s.duration_s > 0.0) || !(s.wind >= 0.0) || !s.mount.is_valid() {
                return Err(Error::param(format!("invalid segment {s:?}")));
            }
        }
        Ok(())
    }
}

/// A generated ride: raw samples and the surface label of each one.
#[derive(Debug, Clone, PartialEq)]
pub struct Ride {
    pub series: ImuSeries,
    pub labels: Vec<u8>,
}

pub fn generate_ride(script: &RideScript) -> Result<Ride> {
    script.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(script.seed);
    let dt = 1.0 / script.rate_hz;
    let mut samples = Vec::new();
    let mut labels = Vec::new();
    let mut next_impact: Option<f64> = None;
    let mut impact: Option<(f64, f64)> = None; // start time, amplitude
    let mut i = 0usize;
    for seg in &script.segments {
        let p = &seg.profile;
        let r_t = transpose(&rotation_from_roll_pitch(&seg.mount));
        let n = (seg.duration_s * script.rate_hz).round() as usize;
        let noise = p.vibration_std * seg.wind;
        let gyro_noise = p.gyro_jitter_std * seg.wind;
        if p.impact_rate_hz <= 0.0 {
            next_impact = None;
        }
        for _ in 0..n {
            let t = i as f64 * dt;
            if p.impact_rate_hz > 0.0 {
                let period = 1.0 / p.impact_rate_hz;
                let due = *next_impact.get_or_insert(t + rng.random_range(0.0..period));
                if t >= due {
                    impact = Some((due, p.impact_amplitude * rng.random_range(0.8..1.2)));
                    next_impact = Some(due + period * rng.random_range(0.9..1.1));
                }
            }
            let (mut jolt, mut wobble) = (0.0, 0.0);
            if let Some((t0, amp)) = impact {
                let phase = (t - t0) / p.impact_width_s;
                if (0.0..1.0).contains(&phase) {
                    jolt = amp * (PI * phase).sin();
                    wobble = 0.1 * amp * (2.0 * PI * phase).sin();
                } else {
                    impact = None;
                }
            }
            let mut gauss = || rng.sample::<f64, _>(StandardNormal);
            let forward = p.forward_accel_amplitude * (2.0 * PI * t / p.forward_accel_period_s).sin();
            let f_nav = [
                forward + noise * gauss(),
                noise * gauss(),
                G0 + noise * gauss() + jolt,
            ];
            let w_nav = [gyro_noise * gauss(), gyro_noise * gauss() + wobble, gyro_noise * gauss()];
            samples.push(ImuSample::new(t, rotate(&r_t, f_nav), rotate(&r_t, w_nav)));
            labels.push(p.label);
            i += 1;
        }
    }
    if samples.len() < 2 {
        return Err(Error::param("ride is shorter than two samples"));
    }
    Ok(Ride {
        series: ImuSeries::new(script.rate_hz, samples)?,
        labels,
    })
}

pub const TRUTH_CSV_HEADER: &str = "t,label";

pub fn write_truth_csv<W: Write>(ride: &Ride, mut out: W) -> Result<()> {
    writeln!(out, "{TRUTH_CSV_HEADER}")?;
    for (s, y) in ride.series.samples().iter().zip(&ride.labels) {
        writeln!(out, "{},{y}", s.t)?;
    }
    Ok(())
}

/// One scripted recording session of a corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct SimDrive {
    pub id: String,
    pub label: u8,
    pub script: RideScript,
}

impl SimDrive {
    /// Generates and preprocesses the ride into a labeled drive.
    pub fn to_drive(&self, pipeline: &Pipeline) -> Result<Drive> {
        let ride = generate_ride(&self.script)?;
        Ok(Drive {
            id: self.id.clone(),
            label: self.label,
            series: pipeline.run(&ride.series)?,
        })
    }
}

/// Largest per-drive mounting tilt of a corpus, degrees.
pub const CORPUS_MAX_TILT_DEG: f64 = 15.0;
/// Relative spread of corpus profile parameters around the defaults.
pub const CORPUS_PROFILE_SPREAD: f64 = 0.2;

/// Twelve sessions, 100 minutes in all: ten training drives (80 min, six
/// sidewalk and four road) and two 10-minute held-out drives, one per class.
/// Each drive gets its own mounting tilt and perturbed profile.
pub fn session_corpus(seed: u64) -> (Vec<SimDrive>, Vec<SimDrive>) {
    const TRAIN: [(u8, f64); 10] = [
        (SIDEWALK, 9.0),
        (ROAD, 7.0),
        (SIDEWALK, 8.0),
        (SIDEWALK, 10.0),
        (ROAD, 6.0),
        (SIDEWALK, 8.0),
        (ROAD, 9.0),
        (SIDEWALK, 7.0),
        (SIDEWALK, 8.0),
        (ROAD, 8.0),
    ];
    const VAL: [(u8, f64); 2] = [(SIDEWALK, 10.0), (ROAD, 10.0)];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut make = |prefix: &str, k: usize, label: u8, minutes: f64| {
        let tilt = CORPUS_MAX_TILT_DEG;
        let mount = Attitude::from_degrees(rng.random_range(-tilt..=tilt), rng.random_range(-tilt..=tilt))
            .expect("tilt within bounds");
        let profile = SurfaceProfile::for_label(label).perturbed(CORPUS_PROFILE_SPREAD, &mut rng);
        let script = RideScript::uniform(minutes * 60.0, profile, rng.random()).with_conditions(mount, 1.0);
        SimDrive {
            id: format!("{prefix}{k:02}"),
            label,
            script,
        }
    };
    let train = TRAIN.iter().enumerate().map(|(k, &(l, m))| make("train", k, l, m)).collect();
    let val = VAL.iter().enumerate().map(|(k, &(l, m))| make("val", k, l, m)).collect();
    (train, val)
}
