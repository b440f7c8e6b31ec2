//! Central finite-difference checks of every layer and loss.

use dloc::nn::layers::{relu, relu_backward, AvgPool2d, Conv2d, Dense, Dropout};
use dloc::nn::{
    loss_emce, loss_emce_grad, loss_range, loss_range_grad, loss_spherical, loss_spherical_grad, InclinationLoss,
    Tensor4,
};
use dloc::SphericalPosition;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-5;
const SHAPES: usize = 12;

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / na.max(nb).max(1e-12)
}

fn step(v: f64) -> f64 {
    1e-5 * v.abs().max(1.0)
}

/// Central differences of `f` with respect to every entry of `x`.
fn numeric_grad(x: &[f64], f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let mut work = x.to_vec();
    (0..x.len())
        .map(|i| {
            let h = step(x[i]);
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

fn random_tensor(rng: &mut ChaCha8Rng, shape: [usize; 4]) -> Tensor4 {
    Tensor4::from_vec(shape, random_vec(rng, shape.iter().product())).unwrap()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[test]
fn conv2d_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for case in 0..SHAPES {
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
        let x = random_tensor(&mut rng, shape);
        let params = random_vec(&mut rng, conv.param_count());
        let out_len: usize = conv.output_shape(shape).unwrap().iter().product();
        let g = random_vec(&mut rng, out_len);

        let mut grad = vec![0.0; params.len()];
        let dy = Tensor4::from_vec(conv.output_shape(shape).unwrap(), g.clone()).unwrap();
        let dx = conv.backward(&x, &params, &dy, &mut grad);

        let num_p = numeric_grad(&params, |p| dot(conv.forward(&x, p).unwrap().data(), &g));
        let num_x = numeric_grad(x.data(), |d| {
            let xi = Tensor4::from_vec(shape, d.to_vec()).unwrap();
            dot(conv.forward(&xi, &params).unwrap().data(), &g)
        });
        let (ep, ex) = (rel_err(&grad, &num_p), rel_err(dx.data(), &num_x));
        assert!(ep < TOL && ex < TOL, "case {case} {conv:?} {shape:?}: params {ep:e}, input {ex:e}");
    }
}

#[test]
fn dense_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for case in 0..SHAPES {
        let dense = Dense {
            inputs: rng.random_range(1..12),
            outputs: rng.random_range(1..6),
        };
        let batch = rng.random_range(1..4);
        let x = random_tensor(&mut rng, [batch, dense.inputs, 1, 1]);
        let params = random_vec(&mut rng, dense.param_count());
        let g = random_vec(&mut rng, batch * dense.outputs);

        let mut grad = vec![0.0; params.len()];
        let dy = Tensor4::from_rows(batch, dense.outputs, g.clone()).unwrap();
        let dx = dense.backward(&x, &params, &dy, &mut grad);

        let num_p = numeric_grad(&params, |p| dot(dense.forward(&x, p).unwrap().data(), &g));
        let num_x = numeric_grad(x.data(), |d| {
            let xi = Tensor4::from_vec(x.shape(), d.to_vec()).unwrap();
            dot(dense.forward(&xi, &params).unwrap().data(), &g)
        });
        let (ep, ex) = (rel_err(&grad, &num_p), rel_err(dx.data(), &num_x));
        assert!(ep < TOL && ex < TOL, "case {case} {dense:?}: params {ep:e}, input {ex:e}");
    }
}

#[test]
fn avgpool_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for case in 0..SHAPES {
        let pool = AvgPool2d {
            size: [rng.random_range(1..4), rng.random_range(1..4)],
        };
        let shape = [
            rng.random_range(1..3),
            rng.random_range(1..3),
            pool.size[0] + rng.random_range(0..5),
            pool.size[1] + rng.random_range(0..5),
        ];
        let x = random_tensor(&mut rng, shape);
        let out_shape = pool.output_shape(shape).unwrap();
        let g = random_vec(&mut rng, out_shape.iter().product());
        let dx = pool.backward(shape, &Tensor4::from_vec(out_shape, g.clone()).unwrap());
        let num = numeric_grad(x.data(), |d| {
            dot(pool.forward(&Tensor4::from_vec(shape, d.to_vec()).unwrap()).unwrap().data(), &g)
        });
        let e = rel_err(dx.data(), &num);
        assert!(e < TOL, "case {case} {pool:?} {shape:?}: {e:e}");
    }
}

#[test]
fn relu_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for case in 0..SHAPES {
        let shape = [rng.random_range(1..3), rng.random_range(1..4), rng.random_range(1..5), rng.random_range(1..5)];
        // Keep every entry well away from the kink.
        let data: Vec<f64> = random_vec(&mut rng, shape.iter().product())
            .into_iter()
            .map(|v| if v.abs() < 0.05 { v.signum() * 0.5 } else { v })
            .collect();
        let x = Tensor4::from_vec(shape, data).unwrap();
        let g = random_vec(&mut rng, x.data().len());
        let dx = relu_backward(&x, &Tensor4::from_vec(shape, g.clone()).unwrap());
        let num = numeric_grad(x.data(), |d| dot(relu(&Tensor4::from_vec(shape, d.to_vec()).unwrap()).data(), &g));
        let e = rel_err(dx.data(), &num);
        assert!(e < TOL, "case {case} {shape:?}: {e:e}");
    }
}

#[test]
fn dropout_gradients_with_fixed_mask() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for case in 0..SHAPES {
        let drop = Dropout {
            rate: rng.random_range(0.05..0.6),
        };
        let shape = [rng.random_range(1..3), rng.random_range(1..4), rng.random_range(1..5), rng.random_range(1..5)];
        let x = random_tensor(&mut rng, shape);
        let mask = drop.draw_mask(x.data().len(), &mut rng);
        let g = random_vec(&mut rng, x.data().len());
        let dx = drop.backward(&Tensor4::from_vec(shape, g.clone()).unwrap(), Some(&mask));
        let num = numeric_grad(x.data(), |d| {
            let xi = Tensor4::from_vec(shape, d.to_vec()).unwrap();
            dot(drop.forward(&xi, Some(&mask)).unwrap().data(), &g)
        });
        let e = rel_err(dx.data(), &num);
        assert!(e < TOL, "case {case} rate {}: {e:e}", drop.rate);
    }
}

fn random_sph(rng: &mut ChaCha8Rng) -> SphericalPosition {
    SphericalPosition::new(
        rng.random_range(1.0..200.0),
        rng.random_range(-3.1..3.1),
        rng.random_range(0.05..3.09),
    )
}

#[test]
fn scalar_loss_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for case in 0..SHAPES {
        let (a, b) = (rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0));
        let checks: [(&str, f64, f64); 4] = [
            ("range", loss_range_grad(a, b), numeric_grad(&[a], |v| loss_range(v[0], b))[0]),
            ("emce", loss_emce_grad(a, b), numeric_grad(&[a], |v| loss_emce(v[0], b))[0]),
            (
                "inclination-period",
                InclinationLoss::Period.grad(a, b),
                numeric_grad(&[a], |v| InclinationLoss::Period.value(v[0], b))[0],
            ),
            (
                "inclination-scaled",
                InclinationLoss::Scaled.grad(a, b),
                numeric_grad(&[a], |v| InclinationLoss::Scaled.value(v[0], b))[0],
            ),
        ];
        for (name, analytic, numeric) in checks {
            let e = rel_err(&[analytic], &[numeric]);
            assert!(e < TOL, "case {case} {name} at ({a}, {b}): {e:e}");
        }
    }
}

#[test]
fn spherical_loss_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for case in 0..SHAPES {
        let (p_hat, p) = (random_sph(&mut rng), random_sph(&mut rng));
        let analytic = loss_spherical_grad(&p_hat, &p);
        let numeric = numeric_grad(&[p_hat.r, p_hat.theta, p_hat.phi], |v| {
            loss_spherical(&SphericalPosition::new(v[0], v[1], v[2]), &p)
        });
        let e = rel_err(&analytic, &numeric);
        assert!(e < TOL, "case {case}: {e:e}");
    }
}
