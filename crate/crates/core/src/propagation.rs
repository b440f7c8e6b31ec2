//! Three-ray isovelocity propagation and received-signal synthesis.
//!
//! Frequency bin `k` (zero based) has angular frequency
//! `w_k = 2 pi k / (N Ts)`. The channel seen by receiver `l` at that bin is
//! `h_l[k] = sum_r b_rl exp(-j w_k tau_rl)`, and the received spectrum is
//! `x_l[k] = s[k] h_l[k] + v_l[k]` under the unitary DFT.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dft::UnitaryDft;
use crate::error::{Error, Result};
use crate::geometry::{CartesianPosition, Environment, ReceiverArray};

/// Number of rays in the isovelocity model: LOS, surface, bottom.
pub const THREE_RAYS: usize = 3;

/// Row index of the surface-reflected ray.
pub const SURFACE_RAY: usize = 1;

/// Propagation delays in seconds, rays x receivers.
#[derive(Debug, Clone, PartialEq)]
pub struct RayDelaySet {
    tau: DMatrix<f64>,
}

impl RayDelaySet {
    pub fn from_matrix(tau: DMatrix<f64>) -> Result<Self> {
        if tau.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
            return Err(Error::InvalidArgument("delays must be finite and positive".into()));
        }
        Ok(Self { tau })
    }

    pub fn rays(&self) -> usize {
        self.tau.nrows()
    }

    pub fn receivers(&self) -> usize {
        self.tau.ncols()
    }

    pub fn get(&self, ray: usize, receiver: usize) -> f64 {
        self.tau[(ray, receiver)]
    }

    /// All ray delays seen by one receiver.
    pub fn receiver(&self, receiver: usize) -> Vec<f64> {
        self.tau.column(receiver).iter().copied().collect()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.tau
    }
}

/// Complex attenuation coefficients, rays x receivers.
#[derive(Debug, Clone, PartialEq)]
pub struct AttenuationMatrix {
    b: DMatrix<Complex64>,
}

impl AttenuationMatrix {
    pub fn from_matrix(b: DMatrix<Complex64>) -> Result<Self> {
        if b.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(Error::InvalidArgument("attenuations must be finite".into()));
        }
        Ok(Self { b })
    }

    pub fn rays(&self) -> usize {
        self.b.nrows()
    }

    pub fn receivers(&self) -> usize {
        self.b.ncols()
    }

    pub fn receiver(&self, receiver: usize) -> Vec<Complex64> {
        self.b.column(receiver).iter().copied().collect()
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.b
    }
}

/// Per-receiver steering matrix, N x R, entry `(k, r) = exp(-j w_k tau_r)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SteeringMatrix {
    d: DMatrix<Complex64>,
}

impl SteeringMatrix {
    pub fn from_matrix(d: DMatrix<Complex64>) -> Self {
        Self { d }
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.d
    }

    pub fn into_matrix(self) -> DMatrix<Complex64> {
        self.d
    }
}

/// Image-method delays for LOS, surface (image at `-z`) and bottom
/// (image at `2h - z`) rays.
pub fn three_ray_delays(
    p: &CartesianPosition,
    arr: &ReceiverArray,
    env: &Environment,
) -> Result<RayDelaySet> {
    env.check_in_water(p)?;
    for q in arr.positions() {
        env.check_in_water(q)?;
    }
    Ok(RayDelaySet {
        tau: three_ray_matrix(p, arr, env),
    })
}

/// Unchecked delays; callers guarantee the geometry is valid.
pub(crate) fn three_ray_matrix(
    p: &CartesianPosition,
    arr: &ReceiverArray,
    env: &Environment,
) -> DMatrix<f64> {
    let surface = CartesianPosition::new(p.x, p.y, -p.z);
    let bottom = CartesianPosition::new(p.x, p.y, 2.0 * env.h - p.z);
    DMatrix::from_fn(THREE_RAYS, arr.len(), |r, l| {
        let q = arr.get(l);
        let src = match r {
            0 => p,
            1 => &surface,
            _ => &bottom,
        };
        src.distance(&q) / env.c
    })
}

/// Fills `out[k] = exp(-j w_k tau)` for all bins by phasor recurrence,
/// re-anchored every 16 bins to bound rounding drift.
pub(crate) fn fill_phasors(tau: f64, env: &Environment, out: &mut [Complex64]) {
    let step = -2.0 * PI * tau / (env.n as f64 * env.ts);
    let rot = Complex64::from_polar(1.0, step);
    let mut cur = Complex64::new(1.0, 0.0);
    for (k, slot) in out.iter_mut().enumerate() {
        if k % 16 == 0 {
            cur = Complex64::from_polar(1.0, step * k as f64);
        }
        *slot = cur;
        cur *= rot;
    }
}

pub fn steering_matrix(delays: &[f64], env: &Environment) -> SteeringMatrix {
    let n = env.n;
    let mut d = DMatrix::zeros(n, delays.len());
    let mut col = vec![Complex64::default(); n];
    for (r, &tau) in delays.iter().enumerate() {
        fill_phasors(tau, env, &mut col);
        d.column_mut(r).iter_mut().zip(&col).for_each(|(dst, v)| *dst = *v);
    }
    SteeringMatrix { d }
}

/// `h[k] = sum_r b_r exp(-j w_k tau_r)` for one receiver.
pub fn channel_spectrum(delays: &[f64], b: &[Complex64], env: &Environment) -> Vec<Complex64> {
    assert_eq!(delays.len(), b.len(), "one attenuation per ray");
    let mut h = vec![Complex64::default(); env.n];
    let mut col = vec![Complex64::default(); env.n];
    for (&tau, &br) in delays.iter().zip(b) {
        fill_phasors(tau, env, &mut col);
        h.iter_mut().zip(&col).for_each(|(acc, v)| *acc += br * v);
    }
    h
}

/// Circularly-symmetric complex normal draw with total variance `var`.
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R, var: f64) -> Complex64 {
    let s = (var / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(s * re, s * im)
}

/// Mean modulus of each coefficient, `sqrt(1 - 0.01)`.
pub const ATTENUATION_MEAN_MODULUS: f64 = 0.994_987_437_106_620;
/// Variance of the fluctuation around the random-phase mean.
pub const ATTENUATION_FLUCTUATION_VAR: f64 = 0.01;

/// Draws `b = sqrt(0.99) e^{j psi} + g`, `psi ~ U(-pi, pi]`, `g ~ CN(0, 0.01)`,
/// so `E|b|^2 = 1` with fluctuation variance `0.1^2`.
pub fn sample_attenuations<R: Rng + ?Sized>(
    rays: usize,
    receivers: usize,
    rng: &mut R,
) -> AttenuationMatrix {
    let mut b = DMatrix::zeros(rays, receivers);
    // column-major fill: receiver by receiver
    for l in 0..receivers {
        for r in 0..rays {
            let psi = PI - rng.random::<f64>() * 2.0 * PI;
            let mean = Complex64::from_polar(ATTENUATION_MEAN_MODULUS, psi);
            b[(r, l)] = mean + complex_normal(rng, ATTENUATION_FLUCTUATION_VAR);
        }
    }
    AttenuationMatrix { b }
}

/// Random surface-height perturbation of the surface-reflected delays.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbSpec {
    /// Standard deviation as a fraction of the mean source-receiver
    /// distance, converted to seconds by `c`.
    pub relative_std: f64,
}

impl Default for PerturbSpec {
    fn default() -> Self {
        Self { relative_std: 0.01 }
    }
}

impl PerturbSpec {
    pub fn sigma(&self, p: &CartesianPosition, arr: &ReceiverArray, env: &Environment) -> f64 {
        let mean_dist = arr.positions().iter().map(|q| p.distance(q)).sum::<f64>() / arr.len() as f64;
        self.relative_std * mean_dist / env.c
    }
}

/// Adds `N(0, sigma^2)` to every surface delay; results below the LOS delay
/// of the same receiver are clamped to it.
pub fn perturb_surface_delays<R: Rng + ?Sized>(
    d: &RayDelaySet,
    p: &CartesianPosition,
    arr: &ReceiverArray,
    env: &Environment,
    spec: &PerturbSpec,
    rng: &mut R,
) -> RayDelaySet {
    let sigma = spec.sigma(p, arr, env);
    let mut tau = d.tau.clone();
    if sigma == 0.0 || d.rays() <= SURFACE_RAY {
        return RayDelaySet { tau };
    }
    let normal = Normal::new(0.0, sigma).expect("finite sigma");
    for l in 0..d.receivers() {
        let perturbed = tau[(SURFACE_RAY, l)] + normal.sample(rng);
        tau[(SURFACE_RAY, l)] = perturbed.max(tau[(0, l)]);
    }
    RayDelaySet { tau }
}

/// A recording of ambient noise: interleaved little-endian f64 (re, im)
/// pairs, normalized to unit mean power on load.
#[derive(Debug, Clone)]
pub struct NoiseRecording {
    samples: Arc<Vec<Complex64>>,
}

impl NoiseRecording {
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() % 16 != 0 {
            return Err(Error::format(
                "noise file",
                format!("{} bytes is not a whole number of complex f64 samples", bytes.len()),
            ));
        }
        let raw: Vec<Complex64> = bytes
            .chunks_exact(16)
            .map(|c| {
                let re = f64::from_le_bytes(c[..8].try_into().unwrap());
                let im = f64::from_le_bytes(c[8..].try_into().unwrap());
                Complex64::new(re, im)
            })
            .collect();
        Self::from_samples(raw)
    }

    pub fn from_samples(raw: Vec<Complex64>) -> Result<Self> {
        if raw.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(Error::format("noise file", "non-finite sample"));
        }
        let power = raw.iter().map(|v| v.norm_sqr()).sum::<f64>() / raw.len().max(1) as f64;
        if power <= 0.0 {
            return Err(Error::format("noise file", "zero power"));
        }
        let g = 1.0 / power.sqrt();
        Ok(Self {
            samples: Arc::new(raw.into_iter().map(|v| v * g).collect()),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn cursor(&self, offset: usize) -> NoiseCursor {
        NoiseCursor {
            rec: self.clone(),
            pos: offset,
        }
    }
}

/// Sequential reader over a [`NoiseRecording`].
#[derive(Debug, Clone)]
pub struct NoiseCursor {
    rec: NoiseRecording,
    pos: usize,
}

impl NoiseCursor {
    pub fn position(&self) -> usize {
        self.pos
    }

    pub fn take(&mut self, count: usize) -> Result<&[Complex64]> {
        let end = self.pos + count;
        if end > self.rec.samples.len() {
            return Err(Error::NoiseExhausted {
                needed: count,
                offset: self.pos,
                available: self.rec.samples.len(),
            });
        }
        let out = &self.rec.samples[self.pos..end];
        self.pos = end;
        Ok(out)
    }
}

pub enum NoiseSource<'a> {
    White,
    Recorded(&'a mut NoiseCursor),
}

/// What the synthesizer knew; only present on simulated records.
#[derive(Debug, Clone, PartialEq)]
pub struct Truth {
    pub attenuations: AttenuationMatrix,
    pub delays: RayDelaySet,
    /// Source spectrum `s[k]`.
    pub source: Vec<Complex64>,
    pub noise_var: f64,
}

/// Time-domain observations of all receivers plus the source label.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalRecord {
    /// `x[l][n]`.
    pub samples: Vec<Vec<Complex64>>,
    pub label: CartesianPosition,
    pub truth: Option<Truth>,
}

impl SignalRecord {
    pub fn new(samples: Vec<Vec<Complex64>>, label: CartesianPosition) -> Result<Self> {
        let n = samples.first().map_or(0, Vec::len);
        if samples.iter().any(|x| x.len() != n) {
            return Err(Error::Shape("receivers have different sample counts".into()));
        }
        if samples.iter().flatten().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(Error::InvalidArgument("non-finite samples".into()));
        }
        Ok(Self {
            samples,
            label,
            truth: None,
        })
    }

    pub fn receivers(&self) -> usize {
        self.samples.len()
    }

    pub fn len(&self) -> usize {
        self.samples.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Unitary DFT of every receiver's samples.
    pub fn spectra(&self) -> Spectra {
        let plan = UnitaryDft::new(self.len());
        Spectra {
            bins: self.samples.iter().map(|x| plan.forward(x)).collect(),
        }
    }

    pub fn truth(&self) -> Result<&Truth> {
        self.truth.as_ref().ok_or(Error::MissingTruth)
    }
}

/// Frequency-domain view of a record, `bins[l][k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectra {
    pub bins: Vec<Vec<Complex64>>,
}

impl Spectra {
    pub fn receivers(&self) -> usize {
        self.bins.len()
    }

    pub fn len(&self) -> usize {
        self.bins.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn energy(&self) -> f64 {
        self.bins.iter().flatten().map(|v| v.norm_sqr()).sum()
    }
}

/// `sigma_v^2 = 10^{-snr/10}` for a unit-power source spectrum.
pub fn noise_variance(snr_db: f64) -> Result<f64> {
    if snr_db.is_nan() {
        return Err(Error::InvalidArgument("SNR is NaN".into()));
    }
    Ok(10f64.powf(-snr_db / 10.0))
}

/// Everything `synthesize` needs besides randomness.
pub struct SynthesisInput<'a> {
    pub position: CartesianPosition,
    pub array: &'a ReceiverArray,
    pub env: &'a Environment,
    pub attenuations: &'a AttenuationMatrix,
    pub snr_db: f64,
    pub dynamic: Option<PerturbSpec>,
}

/// Draws a source spectrum and noise, and forms the received samples.
///
/// Draw order from `rng`: one seed for the surface perturbation (drawn
/// for static scenes too, so static and dynamic runs share source and
/// noise), source spectrum, then white noise receiver by receiver.
pub fn synthesize<R: Rng + ?Sized>(
    input: &SynthesisInput<'_>,
    rng: &mut R,
    noise: NoiseSource<'_>,
) -> Result<SignalRecord> {
    let SynthesisInput {
        position,
        array,
        env,
        attenuations,
        snr_db,
        dynamic,
    } = *input;
    let noise_var = noise_variance(snr_db)?;
    if attenuations.receivers() != array.len() {
        return Err(Error::Shape(format!(
            "{} attenuation columns for {} receivers",
            attenuations.receivers(),
            array.len()
        )));
    }
    let mut delays = three_ray_delays(&position, array, env)?;
    if attenuations.rays() != delays.rays() {
        return Err(Error::Shape(format!(
            "{} attenuation rows for {} rays",
            attenuations.rays(),
            delays.rays()
        )));
    }
    let side_seed: u64 = rng.random();
    if let Some(spec) = dynamic {
        let mut side = ChaCha8Rng::seed_from_u64(side_seed);
        delays = perturb_surface_delays(&delays, &position, array, env, &spec, &mut side);
    }
    let source: Vec<Complex64> = (0..env.n).map(|_| complex_normal(rng, 1.0)).collect();
    let record = synthesize_with(&delays, attenuations, &source, noise_var, env, rng, noise)?;
    Ok(SignalRecord {
        label: position,
        ..record
    })
}

/// Lower-level synthesis from explicit delays and source spectrum.
pub fn synthesize_with<R: Rng + ?Sized>(
    delays: &RayDelaySet,
    attenuations: &AttenuationMatrix,
    source: &[Complex64],
    noise_var: f64,
    env: &Environment,
    rng: &mut R,
    mut noise: NoiseSource<'_>,
) -> Result<SignalRecord> {
    if source.len() != env.n {
        return Err(Error::Shape(format!("source has {} bins, N = {}", source.len(), env.n)));
    }
    let plan = UnitaryDft::new(env.n);
    let sigma = noise_var.sqrt();
    let mut samples = Vec::with_capacity(delays.receivers());
    for l in 0..delays.receivers() {
        let h = channel_spectrum(&delays.receiver(l), &attenuations.receiver(l), env);
        let mut x: Vec<Complex64> = source.iter().zip(&h).map(|(s, h)| s * h).collect();
        plan.inverse_in_place(&mut x);
        if noise_var > 0.0 {
            match &mut noise {
                NoiseSource::White => {
                    x.iter_mut().for_each(|v| *v += complex_normal(rng, noise_var));
                }
                NoiseSource::Recorded(cursor) => {
                    let block = cursor.take(env.n)?;
                    x.iter_mut().zip(block).for_each(|(v, w)| *v += w * sigma);
                }
            }
        }
        samples.push(x);
    }
    Ok(SignalRecord {
        samples,
        label: CartesianPosition::default(),
        truth: Some(Truth {
            attenuations: attenuations.clone(),
            delays: delays.clone(),
            source: source.to_vec(),
            noise_var,
        }),
    })
}
