use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imu::Vec3;

/// Below this specific-force norm (m/s²) gravity is not observable.
pub const MIN_GRAVITY_NORM: f64 = 1.0;

pub type Mat3 = [[f64; 3]; 3];

/// Roll and pitch of the device relative to the local level, radians.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Attitude {
    pub roll: f64,
    pub pitch: f64,
}

impl Attitude {
    pub fn new(roll: f64, pitch: f64) -> Result<Self> {
        let a = Self { roll, pitch };
        if !a.is_valid() {
            return Err(Error::param(format!(
                "attitude out of range: roll {roll} must be in (-pi, pi], pitch {pitch} in [-pi/2, pi/2]"
            )));
        }
        Ok(a)
    }

    pub fn from_degrees(roll_deg: f64, pitch_deg: f64) -> Result<Self> {
        Self::new(roll_deg.to_radians(), pitch_deg.to_radians())
    }

    pub fn is_valid(&self) -> bool {
        self.roll > -PI && self.roll <= PI && self.pitch.abs() <= PI / 2.0
    }
}

/// Roll and pitch from the mean specific force `f` in the device frame.
///
/// `roll = atan2(f_y, f_z)`, `pitch = atan2(-f_x, sqrt(f_y² + f_z²))`.
pub fn estimate_roll_pitch(f: Vec3) -> Result<Attitude> {
    let [fx, fy, fz] = f;
    let norm = (fx * fx + fy * fy + fz * fz).sqrt();
    if !(norm > MIN_GRAVITY_NORM) {
        return Err(Error::Estimation(format!(
            "specific force norm {norm:.4} m/s² too small to observe gravity"
        )));
    }
    Ok(Attitude {
        roll: fy.atan2(fz),
        pitch: (-fx).atan2(fy.hypot(fz)),
    })
}

/// `R_y(pitch) · R_x(roll)`: takes device-frame vectors to the leveled frame.
pub fn rotation_from_roll_pitch(a: &Attitude) -> Mat3 {
    let (sr, cr) = a.roll.sin_cos();
    let (sp, cp) = a.pitch.sin_cos();
    [
        [cp, sp * sr, sp * cr],
        [0.0, cr, -sr],
        [-sp, cp * sr, cp * cr],
    ]
}

#[inline]
pub fn rotate(r: &Mat3, v: Vec3) -> Vec3 {
    [
        r[0][0] * v[0] + r[0][1] * v[1] + r[0][2] * v[2],
        r[1][0] * v[0] + r[1][1] * v[1] + r[1][2] * v[2],
        r[2][0] * v[0] + r[2][1] * v[1] + r[2][2] * v[2],
    ]
}

pub fn transpose(r: &Mat3) -> Mat3 {
    std::array::from_fn(|i| std::array::from_fn(|j| r[j][i]))
}

pub fn matmul(a: &Mat3, b: &Mat3) -> Mat3 {
    std::array::from_fn(|i| std::array::from_fn(|j| (0..3).map(|k| a[i][k] * b[k][j]).sum()))
}

pub fn determinant(r: &Mat3) -> f64 {
    r[0][0] * (r[1][1] * r[2][2] - r[1][2] * r[2][1]) - r[0][1] * (r[1][0] * r[2][2] - r[1][2] * r[2][0])
        + r[0][2] * (r[1][0] * r[2][1] - r[1][1] * r[2][0])
}
