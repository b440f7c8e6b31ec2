//! Unitary discrete Fourier transform pair.
//!
//! `X[k] = N^{-1/2} sum_n x[n] exp(-j 2 pi k n / N)`, zero-based indices.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Forward and inverse plans for one length.
#[derive(Clone)]
pub struct UnitaryDft {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    scale: f64,
}

impl UnitaryDft {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
            scale: 1.0 / (n as f64).sqrt(),
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn forward_in_place(&self, buf: &mut [Complex64]) {
        assert_eq!(buf.len(), self.n, "dft length mismatch");
        self.forward.process(buf);
        buf.iter_mut().for_each(|v| *v *= self.scale);
    }

    pub fn inverse_in_place(&self, buf: &mut [Complex64]) {
        assert_eq!(buf.len(), self.n, "idft length mismatch");
        self.inverse.process(buf);
        buf.iter_mut().for_each(|v| *v *= self.scale);
    }

    pub fn forward(&self, x: &[Complex64]) -> Vec<Complex64> {
        let mut out = x.to_vec();
        self.forward_in_place(&mut out);
        out
    }

    pub fn inverse(&self, x: &[Complex64]) -> Vec<Complex64> {
        let mut out = x.to_vec();
        self.inverse_in_place(&mut out);
        out
    }
}

pub fn dft(x: &[Complex64]) -> Vec<Complex64> {
    UnitaryDft::new(x.len()).forward(x)
}

pub fn idft(x: &[Complex64]) -> Vec<Complex64> {
    UnitaryDft::new(x.len()).inverse(x)
}
