//! Largest eigenvalue of a Hermitian operator by power iteration.

use nalgebra::DVector;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::propagation::complex_normal;

#[derive(Debug, Clone, Copy)]
pub struct PowerIteration {
    /// Stop once the estimated distance to the limit is below
    /// `tolerance * |lambda|`.
    pub tolerance: f64,
    /// Iteration cap per attempt, as a multiple of the dimension (floored
    /// at 100 so tiny operators still get a useful budget).
    pub cap_factor: usize,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for PowerIteration {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            cap_factor: 10,
            restarts: 3,
            seed: 0x5eed_1a3b,
        }
    }
}

impl PowerIteration {
    /// Largest (algebraic) eigenvalue of the Hermitian map `apply` on `C^dim`.
    ///
    /// A first pass finds the dominant-magnitude eigenvalue `mu`. When it is
    /// negative the spectrum is shifted by `-mu` and iterated again.
    pub fn largest<F>(&self, dim: usize, apply: F) -> Result<f64>
    where
        F: Fn(&DVector<Complex64>) -> DVector<Complex64>,
    {
        if dim == 0 {
            return Err(Error::InvalidArgument("empty operator".into()));
        }
        let mu = self.dominant(dim, &apply)?;
        if mu >= 0.0 {
            return Ok(mu);
        }
        let shifted = self.dominant(dim, |v: &DVector<Complex64>| apply(v) - v * Complex64::new(mu, 0.0))?;
        Ok(shifted + mu)
    }

    fn dominant<F>(&self, dim: usize, apply: F) -> Result<f64>
    where
        F: Fn(&DVector<Complex64>) -> DVector<Complex64>,
    {
        let cap = self.cap_factor.max(1) * dim.max(100);
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        for _ in 0..=self.restarts {
            let mut v = DVector::from_fn(dim, |_, _| complex_normal(&mut rng, 1.0));
            v /= Complex64::new(v.norm(), 0.0);
            let mut prev = f64::NAN;
            let mut prev_delta = f64::NAN;
            for _ in 0..cap {
                let w = apply(&v);
                let mu = v.dotc(&w).re;
                let norm = w.norm();
                if norm == 0.0 {
                    return Ok(0.0);
                }
                if !norm.is_finite() {
                    return Err(Error::InvalidArgument("operator produced non-finite values".into()));
                }
                let delta = (mu - prev).abs();
                if delta == 0.0 {
                    return Ok(mu);
                }
                // Geometric tail estimate from the contraction of successive steps.
                let rate = if prev_delta.is_finite() && prev_delta > 0.0 {
                    (delta / prev_delta).min(0.999_999)
                } else {
                    0.999_999
                };
                let tail = if prev_delta.is_finite() { delta * rate / (1.0 - rate) } else { f64::INFINITY };
                if tail <= self.tolerance * mu.abs() && delta <= self.tolerance * mu.abs() {
                    return Ok(mu);
                }
                prev = mu;
                prev_delta = delta;
                v = w / Complex64::new(norm, 0.0);
            }
        }
        Err(Error::NoConvergence {
            restarts: self.restarts,
        })
    }
}
