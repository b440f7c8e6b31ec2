//! Semi-blind localization: attenuations are free nuisance parameters and
//! the position score is the top eigenvalue of
//! `Q = sum_l X_l D_l^* (D_l^T D_l^*)^{-1} (X_l D_l^*)^H`.
//!
//! `Q` is N x N but has rank at most `L R`. Writing `Q = sum_l A_l A_l^H`
//! with `A_l = X_l D_l^* W_l` and `W_l W_l^H = (D_l^T D_l^*)^{-1}`, its
//! nonzero spectrum equals that of the `LR x LR` Gram matrix of
//! `[A_1 .. A_L]`, which is what the grid search evaluates.

use nalgebra::{Cholesky, DMatrix, Dyn};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::geometry::Scene;
use crate::propagation::{fill_phasors, steering_matrix, three_ray_matrix, SignalRecord, Spectra, SteeringMatrix};

use super::eigen::PowerIteration;
use super::search::{grid_search, SearchVolume};
use super::Estimate;

/// Relative ridge added to every `D^T D^*` before inversion.
pub const GRAM_RIDGE: f64 = 1e-10;

/// Hermitian positive semidefinite N x N data matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct QMatrix {
    q: DMatrix<Complex64>,
}

impl QMatrix {
    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.q
    }

    pub fn dim(&self) -> usize {
        self.q.nrows()
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim()).map(|i| self.q[(i, i)].re).sum()
    }
}

/// `D^T D^* + eps I` factored, with `eps = 1e-10 tr / R`.
fn ridged_gram(d: &DMatrix<Complex64>, receiver: usize) -> Result<Cholesky<Complex64, Dyn>> {
    ridged_factor(d.transpose() * d.map(|v| v.conj()), receiver)
}

/// Adds the ridge to a Gram matrix `D^T D^*` and factors it.
fn ridged_factor(mut g: DMatrix<Complex64>, receiver: usize) -> Result<Cholesky<Complex64, Dyn>> {
    let r = g.nrows();
    let trace: f64 = (0..r).map(|i| g[(i, i)].re).sum();
    let eps = GRAM_RIDGE * trace / r as f64;
    for i in 0..r {
        g[(i, i)] += Complex64::new(eps, 0.0);
    }
    // enforce exact Hermitian symmetry before factoring
    let g = (&g + g.adjoint()) * Complex64::new(0.5, 0.0);
    Cholesky::new(g).ok_or(Error::RankDeficient { receiver })
}

/// Forms `Q` explicitly from per-receiver steering matrices.
pub fn build_q(spectra: &Spectra, steering: &[SteeringMatrix]) -> Result<QMatrix> {
    if spectra.receivers() != steering.len() {
        return Err(Error::Shape(format!(
            "{} receivers of data, {} steering matrices",
            spectra.receivers(),
            steering.len()
        )));
    }
    let n = spectra.len();
    let mut q = DMatrix::<Complex64>::zeros(n, n);
    for (l, (x, d)) in spectra.bins.iter().zip(steering).enumerate() {
        let d = d.matrix();
        if d.nrows() != n {
            return Err(Error::Shape(format!("steering matrix has {} rows, N = {n}", d.nrows())));
        }
        if d.ncols() > n {
            return Err(Error::RankDeficient { receiver: l });
        }
        let chol = ridged_gram(d, l)?;
        // M = X D^*
        let m = DMatrix::from_fn(n, d.ncols(), |k, r| x[k] * d[(k, r)].conj());
        let z = chol.solve(&m.adjoint());
        q += &m * z;
    }
    let q = (&q + q.adjoint()) * Complex64::new(0.5, 0.0);
    Ok(QMatrix { q })
}

/// Largest eigenvalue of `Q` by power iteration.
pub fn lambda_max(q: &QMatrix) -> Result<f64> {
    lambda_max_with(q, &PowerIteration::default())
}

pub fn lambda_max_with(q: &QMatrix, opts: &PowerIteration) -> Result<f64> {
    opts.largest(q.dim(), |v| &q.q * v)
}

/// Per-record state for evaluating the SBL score at many positions.
pub struct SblObjective<'a> {
    spectra: &'a Spectra,
    scene: &'a Scene,
}

impl<'a> SblObjective<'a> {
    pub fn new(spectra: &'a Spectra, scene: &'a Scene) -> Self {
        Self { spectra, scene }
    }

    /// Whitened, stacked rows `[A_1^H; ..; A_L^H]`, row-major with `N`
    /// columns.
    fn stacked(&self, tau: &DMatrix<f64>) -> Result<Vec<Complex64>> {
        let env = &self.scene.env;
        let n = env.n;
        let rays = tau.nrows();
        let receivers = tau.ncols();
        let mut y = vec![Complex64::default(); rays * receivers * n];
        let mut d = vec![Complex64::default(); rays * n];
        for l in 0..receivers {
            for r in 0..rays {
                fill_phasors(tau[(r, l)], env, &mut d[r * n..(r + 1) * n]);
            }
            // (D^T D^*)[r, s] = sum_k D[k, r] conj(D[k, s])
            let gram = DMatrix::from_fn(rays, rays, |r, s| {
                let (dr, ds) = (&d[r * n..(r + 1) * n], &d[s * n..(s + 1) * n]);
                dr.iter().zip(ds).map(|(a, b)| a * b.conj()).sum::<Complex64>()
            });
            let chol = ridged_factor(gram, l)?;
            let low = chol.l();
            let x = &self.spectra.bins[l];
            let block = &mut y[l * rays * n..(l + 1) * rays * n];
            // forward substitution on M^H = D^T X^H, one row per ray
            for r in 0..rays {
                let (done, rest) = block.split_at_mut(r * n);
                let row = &mut rest[..n];
                let dr = &d[r * n..(r + 1) * n];
                for k in 0..n {
                    row[k] = dr[k] * x[k].conj();
                }
                for s in 0..r {
                    let c = low[(r, s)];
                    for (v, a) in row.iter_mut().zip(&done[s * n..(s + 1) * n]) {
                        *v -= c * a;
                    }
                }
                let inv = 1.0 / low[(r, r)];
                row.iter_mut().for_each(|v| *v *= inv);
            }
        }
        Ok(y)
    }

    /// `lambda_max(Q(p))` through the compact Gram matrix.
    pub fn evaluate(&self, p: &crate::geometry::CartesianPosition) -> Result<f64> {
        let tau = three_ray_matrix(p, &self.scene.array, &self.scene.env);
        self.evaluate_delays(&tau)
    }

    pub fn evaluate_delays(&self, tau: &DMatrix<f64>) -> Result<f64> {
        let y = self.stacked(tau)?;
        let n = self.scene.env.n;
        let m = y.len() / n;
        let mut gram = DMatrix::<Complex64>::zeros(m, m);
        for i in 0..m {
            let yi = &y[i * n..(i + 1) * n];
            for j in i..m {
                let v: Complex64 = yi.iter().zip(&y[j * n..(j + 1) * n]).map(|(a, b)| a * b.conj()).sum();
                gram[(i, j)] = v;
                gram[(j, i)] = v.conj();
            }
        }
        Ok(hermitian_max_eigenvalue(gram))
    }
}

/// Largest eigenvalue of a small Hermitian matrix by full decomposition.
pub(crate) fn hermitian_max_eigenvalue(m: DMatrix<Complex64>) -> f64 {
    let m = (&m + m.adjoint()) * Complex64::new(0.5, 0.0);
    m.symmetric_eigenvalues().iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// `lambda_max(build_q(...))` for explicit steering matrices.
pub fn sbl_objective(spectra: &Spectra, steering: &[SteeringMatrix]) -> Result<f64> {
    lambda_max(&build_q(spectra, steering)?)
}

/// Steering matrices of the three-ray model at `p`.
pub fn model_steering(p: &crate::geometry::CartesianPosition, scene: &Scene) -> Vec<SteeringMatrix> {
    let tau = three_ray_matrix(p, &scene.array, &scene.env);
    (0..scene.array.len())
        .map(|l| {
            let delays: Vec<f64> = tau.column(l).iter().copied().collect();
            steering_matrix(&delays, &scene.env)
        })
        .collect()
}

/// Grid maximizer of `lambda_max(Q(p))`.
pub fn sbl_localize(rec: &SignalRecord, scene: &Scene, vol: &SearchVolume) -> Result<Estimate> {
    let spectra = rec.spectra();
    let objective = SblObjective::new(&spectra, scene);
    let best = grid_search(|p| objective.evaluate(p).unwrap_or(f64::NAN), vol)?;
    Ok(Estimate::from(best))
}
