//! Acceptance suite. Prints one PASS/FAIL line per criterion.
//!
//! Run a subset with `cargo test --test acceptance -- 3 5`. Failing
//! criteria are reported but only change the exit status when
//! `DLOC_ACCEPTANCE_STRICT=1` is set.

use std::f64::consts::PI;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use dloc::bench::{generate_dataset, run_sweep, EstimatorKind, ExperimentConfig, ModelVariant, SweepResult};
use dloc::estimators::{build_q, lambda_max, oracle_mfp, SblObjective};
use dloc::geometry::{cart_to_sph, Scene};
use dloc::nn::layers::{relu, relu_backward, AvgPool2d, Conv2d, Dense, Dropout};
use dloc::nn::{
    joint_rmse, loss_emce, loss_emce_grad, loss_range, loss_range_grad, loss_spherical, loss_spherical_grad,
    train_progressive, InclinationLoss, Network, Tensor4, TrainingSet,
};
use dloc::propagation::{
    complex_normal, sample_attenuations, steering_matrix, synthesize_with, three_ray_delays, NoiseSource, Spectra,
    SteeringMatrix,
};
use dloc::sos::{build_sos, pairs, SosTensor};
use dloc::{CartesianPosition, Environment, SignalRecord, SphericalPosition};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: String) -> Self {
        Self { pass, detail }
    }
}

type Check = fn() -> Outcome;

const CRITERIA: [(u32, &str, Check); 10] = [
    (1, "flat-source SBL eigenvalue identity", sbl_eigenvalue_identity),
    (2, "compact Gram eigenvalue equivalence", gram_equivalence),
    (3, "noise-free oracle MFP exactness", oracle_mfp_exactness),
    (4, "SOS tensor oracle and lag symmetry", sos_oracle),
    (5, "spherical and cyclic loss properties", loss_properties),
    (6, "finite-difference gradient suite", gradient_suite),
    (7, "static RMSE trend and ordering", static_trend),
    (8, "dynamic surface degradation", dynamic_degradation),
    (9, "CNN training smoke test", training_smoke),
    (10, "byte-identical CLI reruns", cli_determinism),
];

fn main() -> ExitCode {
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let strict = std::env::var("DLOC_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let mut failed = 0;
    let mut ran = 0;
    for (id, name, check) in CRITERIA {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Outcome::new(false, format!("panicked: {msg}"))
        });
        ran += 1;
        if !outcome.pass {
            failed += 1;
        }
        println!(
            "{} {id:>2} {name}: {} [{:.1} s]",
            if outcome.pass { "PASS" } else { "FAIL" },
            outcome.detail,
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {}/{ran} criteria passed", ran - failed);
    if strict && failed > 0 {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}

fn random_steering(rng: &mut ChaCha8Rng, l: usize, r: usize, env: &Environment) -> (DMatrix<f64>, Vec<SteeringMatrix>) {
    let tau = DMatrix::from_fn(r, l, |_, _| rng.random_range(0.05..0.4));
    let d = (0..l)
        .map(|j| steering_matrix(&tau.column(j).iter().copied().collect::<Vec<_>>(), env))
        .collect();
    (tau, d)
}

fn max_eig(m: &DMatrix<Complex64>) -> f64 {
    let h = (m + m.adjoint()) * Complex64::new(0.5, 0.0);
    h.symmetric_eigenvalues().iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// `X_l D_l^*`, rows scaled by the observed bins.
fn scaled_conj(x: &[Complex64], d: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    DMatrix::from_fn(d.nrows(), d.ncols(), |k, r| x[k] * d[(k, r)].conj())
}

/// `D^T D^* + eps I`, `eps = 1e-10 tr / R`.
fn ridged_gram(d: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let g = d.transpose() * d.map(|v| v.conj());
    let r = g.nrows();
    let eps = 1e-10 * g.trace().re / r as f64;
    g + DMatrix::from_diagonal_element(r, r, Complex64::new(eps, 0.0))
}

fn explicit_q(spectra: &Spectra, steering: &[SteeringMatrix]) -> DMatrix<Complex64> {
    let n = spectra.len();
    let mut q = DMatrix::<Complex64>::zeros(n, n);
    for (x, d) in spectra.bins.iter().zip(steering) {
        let d = d.matrix();
        let xd = scaled_conj(x, d);
        let g = ridged_gram(d).try_inverse().unwrap();
        q += &xd * g * xd.adjoint();
    }
    q
}

/// `A^H A` for `A = [X_l D_l^* L_l^{-H}]` with `L_l L_l^H = D_l^T D_l^* + eps I`.
fn stacked_gram(spectra: &Spectra, steering: &[SteeringMatrix]) -> DMatrix<Complex64> {
    let blocks: Vec<DMatrix<Complex64>> = spectra
        .bins
        .iter()
        .zip(steering)
        .map(|(x, d)| {
            let d = d.matrix();
            let chol = ridged_gram(d).cholesky().unwrap();
            scaled_conj(x, d) * chol.l().try_inverse().unwrap().adjoint()
        })
        .collect();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut a = DMatrix::<Complex64>::zeros(spectra.len(), cols);
    let mut c = 0;
    for b in &blocks {
        a.columns_mut(c, b.ncols()).copy_from(b);
        c += b.ncols();
    }
    a.adjoint() * a
}

/// Residual of the attenuation least-squares fit for a fixed source.
fn residual_for_source(spectra: &Spectra, steering: &[SteeringMatrix], s: &[Complex64]) -> (f64, Vec<DVector<Complex64>>) {
    let mut total = 0.0;
    let mut channels = Vec::with_capacity(steering.len());
    for (x, d) in spectra.bins.iter().zip(steering) {
        let d = d.matrix();
        let a = DMatrix::from_fn(d.nrows(), d.ncols(), |k, r| s[k] * d[(k, r)]);
        let xv = DVector::from_column_slice(x);
        let b = a.clone().svd(true, true).solve(&xv, 1e-14).unwrap();
        total += (&xv - &a * &b).norm_squared();
        channels.push(d * b);
    }
    (total, channels)
}

/// Alternating least squares over the source and the attenuations from one
/// starting source.
fn alternating_fit(spectra: &Spectra, steering: &[SteeringMatrix], start: Vec<Complex64>) -> f64 {
    let n = spectra.len();
    let mut s = start;
    let mut best = f64::INFINITY;
    let mut stalled = 0;
    for _ in 0..20_000 {
        let (res, h) = residual_for_source(spectra, steering, &s);
        if best - res <= 1e-15 * best.max(1.0) {
            stalled += 1;
            if stalled >= 20 {
                break;
            }
        } else {
            stalled = 0;
        }
        best = best.min(res);
        for k in 0..n {
            let num: Complex64 = spectra.bins.iter().zip(&h).map(|(x, h)| h[k].conj() * x[k]).sum();
            let den: f64 = h.iter().map(|h| h[k].norm_sqr()).sum();
            s[k] = if den > 0.0 { num / den } else { Complex64::default() };
        }
        let norm = s.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            break;
        }
        s.iter_mut().for_each(|v| *v /= norm);
    }
    best
}

fn sbl_eigenvalue_identity() -> Outcome {
    let env = Environment::new(1500.0, 50.0, 0.01, 8).unwrap();
    let (l, r, instances, restarts) = (2, 2, 20, 24);
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    let mut ratios = Vec::new();
    for _ in 0..instances {
        let (_, steering) = random_steering(&mut rng, l, r, &env);
        let rho = 1.0 / (env.n as f64).sqrt();
        let s: Vec<Complex64> = (0..env.n).map(|_| Complex64::from_polar(rho, rng.random_range(-PI..PI))).collect();
        let bins = steering
            .iter()
            .map(|d| {
                let b = DVector::from_fn(r, |_, _| complex_normal(&mut rng, 1.0));
                let h = d.matrix() * b;
                (0..env.n).map(|k| s[k] * h[k] + complex_normal(&mut rng, 0.01)).collect()
            })
            .collect();
        let spectra = Spectra { bins };
        let closed = spectra.energy() - lambda_max(&build_q(&spectra, &steering).unwrap()).unwrap();

        let mut starts = vec![s.clone()];
        for _ in 1..restarts {
            let v: Vec<Complex64> = (0..env.n).map(|_| complex_normal(&mut rng, 1.0)).collect();
            let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            starts.push(v.into_iter().map(|z| z / norm).collect());
        }
        let numeric = starts
            .into_iter()
            .map(|s0| alternating_fit(&spectra, &steering, s0))
            .fold(f64::INFINITY, f64::min);
        worst = worst.max((closed - numeric).abs());
        ratios.push((spectra.energy() - numeric) / (spectra.energy() - closed));
    }
    ratios.sort_by(f64::total_cmp);
    Outcome::new(
        worst <= 1e-6,
        format!(
            "max |closed form - numerical minimum| = {worst:.3e} (tol 1e-6) over {instances} instances; \
             median explained-energy ratio numerical/closed = {:.3}",
            ratios[ratios.len() / 2]
        ),
    )
}

fn gram_equivalence() -> Outcome {
    let env = Environment::default();
    let scene = Scene::default();
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let spectra = Spectra {
            bins: (0..4)
                .map(|_| (0..env.n).map(|_| complex_normal(&mut rng, 1.0)).collect())
                .collect(),
        };
        let (tau, steering) = random_steering(&mut rng, 4, 3, &env);
        let reference = max_eig(&explicit_q(&spectra, &steering));
        let gram = max_eig(&stacked_gram(&spectra, &steering));
        let compact = SblObjective::new(&spectra, &scene).evaluate_delays(&tau).unwrap();
        for v in [gram, compact] {
            worst = worst.max((v - reference).abs() / reference);
        }
    }
    Outcome::new(worst < 1e-9, format!("max relative deviation {worst:.3e} (tol 1e-9) over 10 instances"))
}

fn oracle_mfp_exactness() -> Outcome {
    let cfg = ExperimentConfig::default();
    let scene = cfg.scene().unwrap();
    let vol = cfg.volume().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let mut hits = 0;
    let scenes = 50;
    for _ in 0..scenes {
        let p = CartesianPosition::new(
            vol.min[0] + rng.random_range(0..cfg.search.points) as f64 * vol.step[0],
            vol.min[1] + rng.random_range(0..cfg.search.points) as f64 * vol.step[1],
            vol.min[2] + rng.random_range(0..cfg.search.points) as f64 * vol.step[2],
        );
        let d = three_ray_delays(&p, &scene.array, &scene.env).unwrap();
        let b = sample_attenuations(3, scene.array.len(), &mut rng);
        let s: Vec<Complex64> = (0..scene.env.n).map(|_| complex_normal(&mut rng, 1.0)).collect();
        let mut rec = synthesize_with(&d, &b, &s, 0.0, &scene.env, &mut rng, NoiseSource::White).unwrap();
        rec.label = p;
        if oracle_mfp(&rec, &scene, &vol).unwrap().position == p {
            hits += 1;
        }
    }
    Outcome::new(hits == scenes, format!("{hits}/{scenes} scenes recovered exactly"))
}

fn nested_loop(a: &[Complex64], b: &[Complex64], lag: isize) -> Complex64 {
    let n = a.len() as isize;
    let mut acc = Complex64::default();
    for i in 0..n {
        let j = i + lag;
        if (0..n).contains(&j) {
            acc += a[j as usize] * b[i as usize].conj();
        }
    }
    acc / n as f64
}

fn sos_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    let (l, n) = (4, 100);
    let samples = (0..l)
        .map(|_| {
            (0..n)
                .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                .collect()
        })
        .collect();
    let rec = SignalRecord::new(samples, CartesianPosition::default()).unwrap();
    let sos: SosTensor = build_sos(&rec);
    let span = n as isize - 1;
    let (mut oracle, mut symmetry): (f64, f64) = (0.0, 0.0);
    for (row, (a, b)) in pairs(l).into_iter().enumerate() {
        let (xa, xb) = (&rec.samples[a - 1], &rec.samples[b - 1]);
        for lag in -span..=span {
            oracle = oracle.max((sos.get(row, lag) - nested_loop(xa, xb, lag)).norm());
            // r_ab[m] = conj(r_ba[-m]); auto rows mirror onto themselves.
            let mirrored = if a == b { sos.get(row, -lag) } else { nested_loop(xb, xa, -lag) };
            symmetry = symmetry.max((sos.get(row, lag) - mirrored.conj()).norm());
        }
    }
    Outcome::new(
        oracle < 1e-12 && symmetry < 1e-12,
        format!("oracle deviation {oracle:.3e}, symmetry deviation {symmetry:.3e} (tol 1e-12)"),
    )
}

fn loss_properties() -> Outcome {
    let cfg = ExperimentConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(105);
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let a = cfg.prior.sample(&mut rng);
        let b = cfg.prior.sample(&mut rng);
        let want = (a - b).norm().powi(2);
        let got = loss_spherical(&cart_to_sph(a), &cart_to_sph(b));
        worst = worst.max((got - want).abs() / want);
    }
    let (mut period, mut range_ok) = (0.0f64, true);
    for _ in 0..10_000 {
        let (x, y) = (rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0));
        let k = rng.random_range(-3..=3) as f64;
        let v = loss_emce(x, y);
        let w = InclinationLoss::Period.value(x, y);
        range_ok &= (0.0..=4.0).contains(&v) && (0.0..=4.0).contains(&w);
        period = period
            .max((loss_emce(x + 2.0 * PI * k, y) - v).abs())
            .max((loss_emce(x, y + 2.0 * PI * k) - v).abs())
            .max((InclinationLoss::Period.value(x + PI * k, y) - w).abs());
    }
    range_ok &= loss_emce(1.3, 1.3) == 0.0 && loss_emce(0.0, PI) == 4.0;
    // Shifts by 2 pi k are rounded in floating point; 1e-12 absorbs that.
    Outcome::new(
        worst < 1e-9 && period < 1e-12 && range_ok,
        format!(
            "spherical vs Cartesian max relative {worst:.3e} (tol 1e-9); periodicity deviation {period:.3e}; \
             range [0, 4] {}",
            if range_ok { "holds" } else { "violated" }
        ),
    )
}

const GRAD_TOL: f64 = 1e-5;
const GRAD_CASES: usize = 12;

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / na.max(nb).max(1e-12)
}

fn numeric_grad(x: &[f64], f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let mut work = x.to_vec();
    (0..x.len())
        .map(|i| {
            let h = 1e-5 * x[i].abs().max(1.0);
            work[i] = x[i] + h;
            let up = f(&work);
            work[i] = x[i] - h;
            let down = f(&work);
            work[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn tensor(shape: [usize; 4], data: &[f64]) -> Tensor4 {
    Tensor4::from_vec(shape, data.to_vec()).unwrap()
}

fn conv_case(rng: &mut ChaCha8Rng) -> f64 {
    let conv = Conv2d {
        in_channels: rng.random_range(1..4),
        out_channels: rng.random_range(1..4),
        kernel: [rng.random_range(1..4), rng.random_range(1..4)],
    };
    let shape = [
        rng.random_range(1..3),
        conv.in_channels,
        conv.kernel[0] + rng.random_range(0..4),
        conv.kernel[1] + rng.random_range(0..4),
    ];
    let x = random_vec(rng, shape.iter().product());
    let params = random_vec(rng, conv.param_count());
    let out_shape = conv.output_shape(shape).unwrap();
    let g = random_vec(rng, out_shape.iter().product());
    let mut grad = vec![0.0; params.len()];
    let dx = conv.backward(&tensor(shape, &x), &params, &tensor(out_shape, &g), &mut grad);
    let num_p = numeric_grad(&params, |p| dot(conv.forward(&tensor(shape, &x), p).unwrap().data(), &g));
    let num_x = numeric_grad(&x, |d| dot(conv.forward(&tensor(shape, d), &params).unwrap().data(), &g));
    rel_err(&grad, &num_p).max(rel_err(dx.data(), &num_x))
}

fn dense_case(rng: &mut ChaCha8Rng) -> f64 {
    let dense = Dense {
        inputs: rng.random_range(1..12),
        outputs: rng.random_range(1..6),
    };
    let shape = [rng.random_range(1..4), dense.inputs, 1, 1];
    let x = random_vec(rng, shape.iter().product());
    let params = random_vec(rng, dense.param_count());
    let g = random_vec(rng, shape[0] * dense.outputs);
    let mut grad = vec![0.0; params.len()];
    let dy = Tensor4::from_rows(shape[0], dense.outputs, g.clone()).unwrap();
    let dx = dense.backward(&tensor(shape, &x), &params, &dy, &mut grad);
    let num_p = numeric_grad(&params, |p| dot(dense.forward(&tensor(shape, &x), p).unwrap().data(), &g));
    let num_x = numeric_grad(&x, |d| dot(dense.forward(&tensor(shape, d), &params).unwrap().data(), &g));
    rel_err(&grad, &num_p).max(rel_err(dx.data(), &num_x))
}

fn pool_case(rng: &mut ChaCha8Rng) -> f64 {
    let pool = AvgPool2d {
        size: [rng.random_range(1..4), rng.random_range(1..4)],
    };
    let shape = [
        rng.random_range(1..3),
        rng.random_range(1..3),
        pool.size[0] + rng.random_range(0..5),
        pool.size[1] + rng.random_range(0..5),
    ];
    let x = random_vec(rng, shape.iter().product());
    let out_shape = pool.output_shape(shape).unwrap();
    let g = random_vec(rng, out_shape.iter().product());
    let dx = pool.backward(shape, &tensor(out_shape, &g));
    let num = numeric_grad(&x, |d| dot(pool.forward(&tensor(shape, d)).unwrap().data(), &g));
    rel_err(dx.data(), &num)
}

fn random_shape(rng: &mut ChaCha8Rng) -> [usize; 4] {
    [rng.random_range(1..3), rng.random_range(1..4), rng.random_range(1..5), rng.random_range(1..5)]
}

fn relu_case(rng: &mut ChaCha8Rng) -> f64 {
    let shape = random_shape(rng);
    // Entries stay clear of the kink.
    let x: Vec<f64> = random_vec(rng, shape.iter().product())
        .into_iter()
        .map(|v| if v.abs() < 0.05 { v.signum() * 0.5 } else { v })
        .collect();
    let g = random_vec(rng, x.len());
    let dx = relu_backward(&tensor(shape, &x), &tensor(shape, &g));
    let num = numeric_grad(&x, |d| dot(relu(&tensor(shape, d)).data(), &g));
    rel_err(dx.data(), &num)
}

fn dropout_case(rng: &mut ChaCha8Rng) -> f64 {
    let drop = Dropout {
        rate: rng.random_range(0.05..0.6),
    };
    let shape = random_shape(rng);
    let x = random_vec(rng, shape.iter().product());
    let mask = drop.draw_mask(x.len(), rng);
    let g = random_vec(rng, x.len());
    let dx = drop.backward(&tensor(shape, &g), Some(&mask));
    let num = numeric_grad(&x, |d| dot(drop.forward(&tensor(shape, d), Some(&mask)).unwrap().data(), &g));
    rel_err(dx.data(), &num)
}

fn scalar_loss_case(rng: &mut ChaCha8Rng) -> f64 {
    let (a, b) = (rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0));
    let pairs = [
        (loss_range_grad(a, b), numeric_grad(&[a], |v| loss_range(v[0], b))[0]),
        (loss_emce_grad(a, b), numeric_grad(&[a], |v| loss_emce(v[0], b))[0]),
        (
            InclinationLoss::Period.grad(a, b),
            numeric_grad(&[a], |v| InclinationLoss::Period.value(v[0], b))[0],
        ),
        (
            InclinationLoss::Scaled.grad(a, b),
            numeric_grad(&[a], |v| InclinationLoss::Scaled.value(v[0], b))[0],
        ),
    ];
    pairs.iter().map(|(x, y)| rel_err(&[*x], &[*y])).fold(0.0, f64::max)
}

fn spherical_loss_case(rng: &mut ChaCha8Rng) -> f64 {
    let mut sph = || {
        SphericalPosition::new(
            rng.random_range(1.0..200.0),
            rng.random_range(-3.1..3.1),
            rng.random_range(0.05..3.09),
        )
    };
    let (p_hat, p) = (sph(), sph());
    let analytic = loss_spherical_grad(&p_hat, &p);
    let numeric = numeric_grad(&[p_hat.r, p_hat.theta, p_hat.phi], |v| {
        loss_spherical(&SphericalPosition::new(v[0], v[1], v[2]), &p)
    });
    rel_err(&analytic, &numeric)
}

fn gradient_suite() -> Outcome {
    let cases: [(&str, fn(&mut ChaCha8Rng) -> f64); 7] = [
        ("conv", conv_case),
        ("dense", dense_case),
        ("pool", pool_case),
        ("relu", relu_case),
        ("dropout", dropout_case),
        ("scalar losses", scalar_loss_case),
        ("spherical loss", spherical_loss_case),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(106);
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, case) in cases {
        let worst = (0..GRAD_CASES).map(|_| case(&mut rng)).fold(0.0, f64::max);
        pass &= worst < GRAD_TOL;
        parts.push(format!("{name} {worst:.1e}"));
    }
    Outcome::new(pass, format!("worst relative error per family over {GRAD_CASES} shapes (tol 1e-5): {}", parts.join(", ")))
}

fn sweep_config(seed: u64, snr: &[f64], trials: usize, estimators: Vec<EstimatorKind>) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.seed = seed;
    cfg.snr_db = snr.to_vec();
    cfg.trials = trials;
    cfg.estimators = estimators;
    cfg.output.report_runtime = false;
    cfg
}

fn rmse_of(res: &SweepResult, kind: EstimatorKind, snr: f64) -> f64 {
    res.row(kind, snr).map(|r| r.rmse_m).unwrap_or(f64::NAN)
}

fn static_trend() -> Outcome {
    use EstimatorKind::{GccPhat, OracleMfp, Sbl};
    let cfg = sweep_config(2024, &[0.0, 30.0], 100, vec![OracleMfp, Sbl, GccPhat]);
    let res = run_sweep(&cfg, None).unwrap();
    let [mfp, sbl, gcc] = [OracleMfp, Sbl, GccPhat].map(|k| [rmse_of(&res, k, 0.0), rmse_of(&res, k, 30.0)]);
    let decreasing = mfp[1] < mfp[0] && sbl[1] < sbl[0];
    let ordered = mfp[1] <= sbl[1] && sbl[1] <= gcc[1];
    Outcome::new(
        decreasing && ordered,
        format!(
            "RMSE m at 0/30 dB: oracle-mfp {:.2}/{:.2}, sbl {:.2}/{:.2}, gcc-phat {:.2}/{:.2}; \
             decreasing {decreasing}, ordered at 30 dB {ordered}",
            mfp[0], mfp[1], sbl[0], sbl[1], gcc[0], gcc[1]
        ),
    )
}

/// One-sided paired sign-flip permutation test on `dynamic - static`
/// squared errors. Returns the p-value for a positive mean difference.
fn paired_permutation_p(differences: &[f64], rounds: usize, rng: &mut ChaCha8Rng) -> f64 {
    let observed: f64 = differences.iter().sum();
    let mut extreme = 0usize;
    for _ in 0..rounds {
        let flipped: f64 = differences
            .iter()
            .map(|d| if rng.random::<bool>() { *d } else { -*d })
            .sum();
        if flipped >= observed {
            extreme += 1;
        }
    }
    (extreme + 1) as f64 / (rounds + 1) as f64
}

fn dynamic_degradation() -> Outcome {
    use EstimatorKind::{OracleMfp, Sbl};
    const ALPHA: f64 = 0.05;
    let still = sweep_config(2025, &[20.0], 100, vec![OracleMfp, Sbl]);
    let moving = ExperimentConfig {
        model: ModelVariant::DynamicSurface,
        ..still.clone()
    };
    let a = run_sweep(&still, None).unwrap();
    let b = run_sweep(&moving, None).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(108);
    let mut pass = true;
    let mut parts = Vec::new();
    for kind in [OracleMfp, Sbl] {
        let errors = |res: &SweepResult| -> Vec<(usize, f64)> {
            let mut v: Vec<_> = res
                .trials
                .iter()
                .filter(|t| t.estimator == kind)
                .map(|t| (t.trial, t.error_m))
                .collect();
            v.sort_by_key(|t| t.0);
            v
        };
        let (ea, eb) = (errors(&a), errors(&b));
        assert!(ea.iter().zip(&eb).all(|(x, y)| x.0 == y.0));
        let diffs: Vec<f64> = ea.iter().zip(&eb).map(|(x, y)| y.1 * y.1 - x.1 * x.1).collect();
        let p = paired_permutation_p(&diffs, 20_000, &mut rng);
        let (ra, rb) = (rmse_of(&a, kind, 20.0), rmse_of(&b, kind, 20.0));
        let ok = rb > ra && p < ALPHA;
        pass &= ok;
        parts.push(format!("{} static {ra:.2} m vs dynamic {rb:.2} m, p = {p:.4}", kind.name()));
    }
    Outcome::new(pass, format!("{} (one-sided alpha {ALPHA})", parts.join("; ")))
}

fn sos_set(cfg: &ExperimentConfig, records: &[SignalRecord]) -> TrainingSet {
    let sos: Vec<SosTensor> = records.iter().map(build_sos).collect();
    let refs: Vec<&SosTensor> = sos.iter().collect();
    let labels: Vec<CartesianPosition> = records.iter().map(|r| r.label).collect();
    TrainingSet::new(&cfg.network, &refs, &labels).unwrap()
}

fn training_smoke() -> Outcome {
    let mut cfg = ExperimentConfig::default();
    cfg.seed = 2026;
    cfg.snr_db = vec![20.0];
    cfg.dataset.records_per_snr = 2000;
    cfg.dataset.include_truth = false;
    let train: Vec<SignalRecord> = generate_dataset(&cfg).unwrap().records.into_iter().map(|r| r.record).collect();
    let held_cfg = ExperimentConfig {
        seed: 2027,
        dataset: dloc::bench::DatasetConfig {
            records_per_snr: 400,
            ..cfg.dataset.clone()
        },
        ..cfg.clone()
    };
    let held: Vec<SignalRecord> = generate_dataset(&held_cfg).unwrap().records.into_iter().map(|r| r.record).collect();

    let blocks = cfg.network.blocks();
    let models = train_progressive(&sos_set(&cfg, &train), &cfg.network, &cfg.training).unwrap();
    let held_set = sos_set(&cfg, &held);
    let cnn = joint_rmse(&models.joint, &held_set).unwrap();
    let centroid = cfg.prior.centroid();
    let baseline =
        (held.iter().map(|r| r.label.distance(&centroid).powi(2)).sum::<f64>() / held.len() as f64).sqrt();

    let [range, azimuth, inclination] = &models.branches;
    let start = Network::assemble_joint(range, azimuth, inclination).unwrap();
    let joint_out = start.predict(held_set.inputs()).unwrap();
    let mut exact = true;
    for (b, net) in models.branches.iter().enumerate() {
        let single = net.predict(held_set.inputs()).unwrap();
        exact &= joint_out.iter().zip(&single).all(|(j, s)| j[b].to_bits() == s[0].to_bits());
    }
    Outcome::new(
        blocks == 3 && cnn < baseline && exact,
        format!(
            "{blocks}-block CNN held-out RMSE {cnn:.2} m vs centroid {baseline:.2} m on {} records; \
             assembled joint reproduces branches bit-exactly: {exact}",
            held.len()
        ),
    )
}

fn run_cli(dir: &Path, args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_dloc"))
        .args(args)
        .current_dir(dir)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr).trim()))
    }
}

fn collect_files(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let name = path.strip_prefix(root).unwrap().display().to_string();
                out.push((name, std::fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

const CLI_CONFIG: &str = r#"seed = 11
snr_db = [0.0, 20.0]
trials = 3
estimators = ["oracle-mfp", "sbl", "gcc-phat", "cnn"]
checkpoint = "model/joint.ckpt"

[dataset]
records_per_snr = 60

[training]
batch_size = 32
branch_epochs = 2
joint_epochs = 1

[output]
report_runtime = false
"#;

fn cli_pipeline(dir: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    std::fs::write(dir.join("cfg.toml"), CLI_CONFIG).map_err(|e| e.to_string())?;
    run_cli(dir, &["generate", "--config", "cfg.toml", "--out", "data.dlc"])?;
    run_cli(dir, &["train", "--config", "cfg.toml", "--input", "data.dlc", "--out", "model"])?;
    run_cli(dir, &["sweep", "--config", "cfg.toml", "--out", "sweep"])?;
    Ok(collect_files(dir))
}

fn cli_determinism() -> Outcome {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (fa, fb) = match (cli_pipeline(a.path()), cli_pipeline(b.path())) {
        (Ok(x), Ok(y)) => (x, y),
        (Err(e), _) | (_, Err(e)) => return Outcome::new(false, e),
    };
    let names: Vec<&str> = fa.iter().map(|f| f.0.as_str()).collect();
    let differing: Vec<&str> = fa.iter().zip(&fb).filter(|(x, y)| x != y).map(|(x, _)| x.0.as_str()).collect();
    let complete = ["data.dlc", "model/joint.ckpt", "sweep/sweep.csv", "sweep/trials.csv"]
        .iter()
        .all(|f| names.contains(f));
    Outcome::new(
        fa.len() == fb.len() && differing.is_empty() && complete,
        format!("{} files compared, differing: {:?}", fa.len(), differing),
    )
}
