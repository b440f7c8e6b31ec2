//! Two-step baseline: GCC-PHAT delay differences, then a least-squares fit
//! of the hyperbolic model over the search grid.

use num_complex::Complex64;

use crate::dft::UnitaryDft;
use crate::error::{Error, Result};
use crate::geometry::{CartesianPosition, Scene};
use crate::propagation::{SignalRecord, Spectra};

use super::search::{grid_search, SearchVolume};
use super::Estimate;

/// Bins whose cross-spectrum modulus falls below this are dropped.
pub const PHAT_FLOOR: f64 = 1e-12;

/// Delay differences `t_l = tau_l - tau_1` in seconds, `l = 2..=L`.
#[derive(Debug, Clone, PartialEq)]
pub struct TdoaSet {
    pub delays: Vec<f64>,
}

/// Peak lag (fractional samples) of the phase-transformed cross-correlation
/// between `x` and the reference `x_ref`. Positive when `x` lags the reference.
pub fn phat_peak(x: &[Complex64], x_ref: &[Complex64], plan: &UnitaryDft) -> Result<f64> {
    let n = x.len();
    let mut cross: Vec<Complex64> = x
        .iter()
        .zip(x_ref)
        .map(|(a, b)| {
            let c = a * b.conj();
            let m = c.norm();
            if m < PHAT_FLOOR {
                Complex64::default()
            } else {
                c / m
            }
        })
        .collect();
    if cross.iter().all(|c| *c == Complex64::default()) {
        return Err(Error::Degenerate("cross-spectrum vanishes in every bin".into()));
    }
    plan.inverse_in_place(&mut cross);
    let mag: Vec<f64> = cross.iter().map(|c| c.norm()).collect();
    let mut peak = 0;
    for (i, &m) in mag.iter().enumerate() {
        if m > mag[peak] {
            peak = i;
        }
    }
    let before = mag[(peak + n - 1) % n];
    let after = mag[(peak + 1) % n];
    let denom = before - 2.0 * mag[peak] + after;
    let delta = if denom.abs() > 0.0 { 0.5 * (before - after) / denom } else { 0.0 };
    let lag = if peak > n / 2 { peak as f64 - n as f64 } else { peak as f64 };
    Ok(lag + delta.clamp(-0.5, 0.5))
}

/// GCC-PHAT delay of every receiver relative to receiver 1.
pub fn gcc_phat(spectra: &Spectra, ts: f64) -> Result<TdoaSet> {
    if spectra.receivers() < 2 {
        return Err(Error::InvalidArgument("GCC-PHAT needs at least 2 receivers".into()));
    }
    let plan = UnitaryDft::new(spectra.len());
    let reference = &spectra.bins[0];
    let delays = spectra.bins[1..]
        .iter()
        .map(|x| phat_peak(x, reference, &plan).map(|lag| lag * ts))
        .collect::<Result<Vec<_>>>()?;
    Ok(TdoaSet { delays })
}

/// Sum of squared residuals between measured and model range differences.
pub fn tdoa_residual(t: &TdoaSet, p: &CartesianPosition, scene: &Scene) -> f64 {
    let q = scene.array.positions();
    let d1 = p.distance(&q[0]);
    t.delays
        .iter()
        .zip(&q[1..])
        .map(|(t, ql)| {
            let model = (p.distance(ql) - d1) / scene.env.c;
            (t - model).powi(2)
        })
        .sum()
}

/// Grid minimizer of [`tdoa_residual`].
pub fn tdoa_localize(t: &TdoaSet, scene: &Scene, vol: &SearchVolume) -> Result<Estimate> {
    if t.delays.len() + 1 != scene.array.len() {
        return Err(Error::Shape(format!(
            "{} delay differences for {} receivers",
            t.delays.len(),
            scene.array.len()
        )));
    }
    let best = grid_search(|p| -tdoa_residual(t, p, scene), vol)?;
    Ok(Estimate {
        position: best.position,
        objective: -best.value,
    })
}

/// GCC-PHAT followed by [`tdoa_localize`].
pub fn gcc_phat_localize(rec: &SignalRecord, scene: &Scene, vol: &SearchVolume) -> Result<Estimate> {
    let t = gcc_phat(&rec.spectra(), scene.env.ts)?;
    tdoa_localize(&t, scene, vol)
}
