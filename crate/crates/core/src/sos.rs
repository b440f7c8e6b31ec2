//! Second-order-statistics tensor: every auto- and cross-correlation of the
//! received signals, split into real and imaginary channels.
//!
//! Row `pair_index(l1, l2)` holds `r[m] = (1/N) sum_n x_l1[n+m] conj(x_l2[n])`
//! for lags `m = -(N-1) ..= N-1`, stored low to high, with samples outside
//! `0..N` taken as zero.

use std::io::{Read, Write};

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::propagation::SignalRecord;

pub const SOS_MAGIC: &[u8; 4] = b"SOS1";
pub const SOS_HEADER_LEN: usize = 16;

/// Number of unordered receiver pairs including self pairs.
pub fn pair_count(receivers: usize) -> usize {
    receivers * (receivers + 1) / 2
}

/// One-based row of the canonical pair `1 <= l1 <= l2 <= L`, enumerating
/// the upper triangle row by row.
pub fn pair_index(l1: usize, l2: usize, receivers: usize) -> Result<usize> {
    if l1 == 0 || l1 > l2 || l2 > receivers {
        return Err(Error::InvalidArgument(format!(
            "pair ({l1}, {l2}) is not canonical for L = {receivers}"
        )));
    }
    Ok((l1 - 1) * receivers - (l1 - 1) * l1 / 2 + l2)
}

/// Inverse of [`pair_index`]: all canonical pairs in row order (one based).
pub fn pairs(receivers: usize) -> Vec<(usize, usize)> {
    (1..=receivers)
        .flat_map(|a| (a..=receivers).map(move |b| (a, b)))
        .collect()
}

/// `L_corr x (2N-1) x 2` tensor, row-major `[pair][lag][channel]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SosTensor {
    receivers: usize,
    samples: usize,
    data: Vec<f64>,
}

impl SosTensor {
    pub fn zeros(receivers: usize, samples: usize) -> Self {
        Self {
            receivers,
            samples,
            data: vec![0.0; pair_count(receivers) * (2 * samples - 1) * 2],
        }
    }

    pub fn receivers(&self) -> usize {
        self.receivers
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn rows(&self) -> usize {
        pair_count(self.receivers)
    }

    pub fn lags(&self) -> usize {
        2 * self.samples - 1
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    fn offset(&self, row: usize, lag: isize) -> usize {
        let m = (lag + self.samples as isize - 1) as usize;
        (row * self.lags() + m) * 2
    }

    /// Correlation value of zero-based `row` at signed `lag`.
    pub fn get(&self, row: usize, lag: isize) -> Complex64 {
        let o = self.offset(row, lag);
        Complex64::new(self.data[o], self.data[o + 1])
    }

    fn set(&mut self, row: usize, lag: isize, v: Complex64) {
        let o = self.offset(row, lag);
        self.data[o] = v.re;
        self.data[o + 1] = v.im;
    }

    /// Channel-first copy, `[channel][pair][lag]`, as fed to the network.
    pub fn to_channels_first(&self) -> Vec<f64> {
        let rows = self.rows();
        let lags = self.lags();
        let mut out = vec![0.0; 2 * rows * lags];
        for row in 0..rows {
            for m in 0..lags {
                let src = (row * lags + m) * 2;
                out[row * lags + m] = self.data[src];
                out[rows * lags + row * lags + m] = self.data[src + 1];
            }
        }
        out
    }

    /// Little-endian f32 payload after a 16-byte header:
    /// magic, `L`, `N`, and a reserved zero word.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(SOS_MAGIC)?;
        w.write_all(&(self.receivers as u32).to_le_bytes())?;
        w.write_all(&(self.samples as u32).to_le_bytes())?;
        w.write_all(&0u32.to_le_bytes())?;
        for v in &self.data {
            w.write_all(&(*v as f32).to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut header = [0u8; SOS_HEADER_LEN];
        r.read_exact(&mut header)?;
        if &header[..4] != SOS_MAGIC {
            return Err(Error::format("SOS tensor", "bad magic"));
        }
        let receivers = u32::from_le_bytes(header[4..8].try_into().unwrap()) as usize;
        let samples = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
        if receivers == 0 || samples == 0 {
            return Err(Error::format("SOS tensor", "empty dimensions"));
        }
        let mut t = Self::zeros(receivers, samples);
        let mut buf = [0u8; 4];
        for v in t.data.iter_mut() {
            r.read_exact(&mut buf)?;
            *v = f32::from_le_bytes(buf) as f64;
        }
        Ok(t)
    }
}

/// Builds the tensor with zero-padded FFT correlations.
pub fn build_sos(rec: &SignalRecord) -> SosTensor {
    let receivers = rec.receivers();
    let n = rec.len();
    let mut out = SosTensor::zeros(receivers, n);
    if n == 0 {
        return out;
    }
    let fft_len = (2 * n - 1).next_power_of_two();
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(fft_len);
    let inv = planner.plan_fft_inverse(fft_len);
    let spectra: Vec<Vec<Complex64>> = rec
        .samples
        .iter()
        .map(|x| {
            let mut buf = x.clone();
            buf.resize(fft_len, Complex64::default());
            fwd.process(&mut buf);
            buf
        })
        .collect();
    let scale = 1.0 / (n as f64 * fft_len as f64);
    let mut corr = vec![Complex64::default(); fft_len];
    for (row, (a, b)) in pairs(receivers).into_iter().enumerate() {
        let (xa, xb) = (&spectra[a - 1], &spectra[b - 1]);
        corr.iter_mut()
            .zip(xa.iter().zip(xb))
            .for_each(|(c, (u, v))| *c = u * v.conj());
        inv.process(&mut corr);
        for lag in -(n as isize - 1)..=(n as isize - 1) {
            let idx = lag.rem_euclid(fft_len as isize) as usize;
            out.set(row, lag, corr[idx] * scale);
        }
    }
    out
}
