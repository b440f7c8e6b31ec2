//! Coordinates, receiver layout and the isovelocity environment.
//!
//! The z axis points down from the sea surface, so the surface sits at
//! `z = 0` and the bottom at `z = h`. Inclination is measured from +z.

use std::f64::consts::PI;
use std::ops::{Add, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point in meters. `z` is depth below the surface.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CartesianPosition {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl CartesianPosition {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn distance(&self, other: &Self) -> f64 {
        (*self - *other).norm()
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

impl Sub for CartesianPosition {
    type Output = CartesianPosition;

    fn sub(self, rhs: Self) -> Self {
        Self::new(self.x - rhs.x, self.y - rhs.y, self.z - rhs.z)
    }
}

impl Add for CartesianPosition {
    type Output = CartesianPosition;

    fn add(self, rhs: Self) -> Self {
        Self::new(self.x + rhs.x, self.y + rhs.y, self.z + rhs.z)
    }
}

/// Range, azimuth and inclination.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SphericalPosition {
    pub r: f64,
    pub theta: f64,
    pub phi: f64,
}

impl SphericalPosition {
    pub const fn new(r: f64, theta: f64, phi: f64) -> Self {
        Self { r, theta, phi }
    }
}

/// `x = r sin(phi) cos(theta)`, `y = r sin(phi) sin(theta)`, `z = r cos(phi)`.
/// The origin maps to `(0, 0, 0)`.
pub fn cart_to_sph(p: CartesianPosition) -> SphericalPosition {
    let r = p.norm();
    if r == 0.0 {
        return SphericalPosition::default();
    }
    let phi = (p.z / r).clamp(-1.0, 1.0).acos();
    let theta = p.y.atan2(p.x);
    // atan2 may return -pi for (negative x, -0.0 y); canonical range is (-pi, pi].
    let theta = if theta == -PI { PI } else { theta };
    SphericalPosition { r, theta, phi }
}

pub fn sph_to_cart(s: SphericalPosition) -> CartesianPosition {
    let (sin_phi, cos_phi) = s.phi.sin_cos();
    let (sin_theta, cos_theta) = s.theta.sin_cos();
    CartesianPosition {
        x: s.r * sin_phi * cos_theta,
        y: s.r * sin_phi * sin_theta,
        z: s.r * cos_phi,
    }
}

/// Ordered receiver positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReceiverArray {
    positions: Vec<CartesianPosition>,
}

impl ReceiverArray {
    pub fn new(positions: Vec<CartesianPosition>) -> Result<Self> {
        if positions.len() < 2 {
            return Err(Error::InvalidScene(format!(
                "need at least 2 receivers, got {}",
                positions.len()
            )));
        }
        for (i, a) in positions.iter().enumerate() {
            if !a.is_finite() {
                return Err(Error::InvalidScene(format!("receiver {i} is not finite")));
            }
            for (j, b) in positions.iter().enumerate().skip(i + 1) {
                if a == b {
                    return Err(Error::InvalidScene(format!(
                        "receivers {i} and {j} coincide"
                    )));
                }
            }
        }
        Ok(Self { positions })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[CartesianPosition] {
        &self.positions
    }

    pub fn get(&self, i: usize) -> CartesianPosition {
        self.positions[i]
    }

    /// The four-hydrophone vertical-offset line used throughout the experiments.
    pub fn reference_line() -> Self {
        Self {
            positions: vec![
                CartesianPosition::new(150.0, -250.0, 10.0),
                CartesianPosition::new(50.0, -250.0, 15.0),
                CartesianPosition::new(-50.0, -250.0, 20.0),
                CartesianPosition::new(-150.0, -250.0, 25.0),
            ],
        }
    }
}

/// Isovelocity water column and sampling parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    /// Sound speed, m/s.
    pub c: f64,
    /// Bottom depth, m.
    pub h: f64,
    /// Sampling period, s.
    pub ts: f64,
    /// Samples per observation.
    pub n: usize,
}

impl Environment {
    pub fn new(c: f64, h: f64, ts: f64, n: usize) -> Result<Self> {
        let env = Self { c, h, ts, n };
        env.validate()?;
        Ok(env)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::InvalidScene(format!("sound speed must be > 0, got {}", self.c)));
        }
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(Error::InvalidScene(format!("depth must be > 0, got {}", self.h)));
        }
        if !(self.ts > 0.0 && self.ts.is_finite()) {
            return Err(Error::InvalidScene(format!(
                "sampling period must be > 0, got {}",
                self.ts
            )));
        }
        if self.n < 2 {
            return Err(Error::InvalidScene(format!("need N >= 2 samples, got {}", self.n)));
        }
        Ok(())
    }

    /// Strictly between the surface and the bottom.
    pub fn in_water_column(&self, p: &CartesianPosition) -> bool {
        p.z > 0.0 && p.z < self.h && p.is_finite()
    }

    pub fn check_in_water(&self, p: &CartesianPosition) -> Result<()> {
        if self.in_water_column(p) {
            Ok(())
        } else {
            Err(Error::OutsideWaterColumn(p.to_array(), self.h))
        }
    }

    /// Angular frequency of DFT bin `k` (zero based).
    pub fn omega(&self, k: usize) -> f64 {
        2.0 * PI * k as f64 / (self.n as f64 * self.ts)
    }
}

impl Default for Environment {
    fn default() -> Self {
        Self {
            c: 1500.0,
            h: 50.0,
            ts: 0.01,
            n: 100,
        }
    }
}

/// Receivers plus environment.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub array: ReceiverArray,
    pub env: Environment,
}

impl Scene {
    pub fn new(array: ReceiverArray, env: Environment) -> Result<Self> {
        env.validate()?;
        for (i, q) in array.positions().iter().enumerate() {
            if !env.in_water_column(q) {
                return Err(Error::InvalidScene(format!(
                    "receiver {i} at depth {} is outside (0, {})",
                    q.z, env.h
                )));
            }
        }
        Ok(Self { array, env })
    }
}

impl Default for Scene {
    fn default() -> Self {
        Self {
            array: ReceiverArray::reference_line(),
            env: Environment::default(),
        }
    }
}

/// Serializable scene description, as found under `[scene]` in config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub receivers: Vec<[f64; 3]>,
    pub c: f64,
    pub h: f64,
    pub ts: f64,
    pub n: usize,
}

impl Default for SceneConfig {
    fn default() -> Self {
        let env = Environment::default();
        Self {
            receivers: ReceiverArray::reference_line()
                .positions()
                .iter()
                .map(|p| p.to_array())
                .collect(),
            c: env.c,
            h: env.h,
            ts: env.ts,
            n: env.n,
        }
    }
}

impl SceneConfig {
    pub fn build(&self) -> Result<Scene> {
        let array = ReceiverArray::new(
            self.receivers
                .iter()
                .copied()
                .map(CartesianPosition::from_array)
                .collect(),
        )?;
        Scene::new(array, Environment::new(self.c, self.h, self.ts, self.n)?)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }
}
