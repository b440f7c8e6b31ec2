//! Matched-field processing with a fully known channel.

use num_complex::Complex64;

use crate::error::Result;
use crate::geometry::{CartesianPosition, Scene};
use crate::propagation::{channel_spectrum, three_ray_matrix, AttenuationMatrix, SignalRecord, Spectra};

use super::search::{grid_search, SearchVolume};
use super::Estimate;

/// `sum_k |x[k]^H h_k|^2 / ||h_k||^2`, where `x[k]` and `h_k` stack bin `k`
/// across receivers. Bins with a vanishing channel contribute zero.
pub fn mfp_objective(spectra: &Spectra, hbar: &[Vec<Complex64>]) -> f64 {
    debug_assert_eq!(spectra.receivers(), hbar.len());
    let n = spectra.len();
    let mut total = 0.0;
    for k in 0..n {
        let mut inner = Complex64::default();
        let mut energy = 0.0;
        for (x, h) in spectra.bins.iter().zip(hbar) {
            inner += x[k].conj() * h[k];
            energy += h[k].norm_sqr();
        }
        if energy > 0.0 {
            total += inner.norm_sqr() / energy;
        }
    }
    total
}

/// Channel spectra of every receiver for a hypothesized source position.
pub fn model_channels(p: &CartesianPosition, scene: &Scene, b: &AttenuationMatrix) -> Vec<Vec<Complex64>> {
    let tau = three_ray_matrix(p, &scene.array, &scene.env);
    (0..scene.array.len())
        .map(|l| {
            let delays: Vec<f64> = tau.column(l).iter().copied().collect();
            channel_spectrum(&delays, &b.receiver(l), &scene.env)
        })
        .collect()
}

/// Grid maximizer of the MFP objective using the record's true attenuations
/// and unperturbed model delays.
pub fn oracle_mfp(rec: &SignalRecord, scene: &Scene, vol: &SearchVolume) -> Result<Estimate> {
    let truth = rec.truth()?;
    let spectra = rec.spectra();
    let b = &truth.attenuations;
    let best = grid_search(|p| mfp_objective(&spectra, &model_channels(p, scene, b)), vol)?;
    Ok(Estimate::from(best))
}
