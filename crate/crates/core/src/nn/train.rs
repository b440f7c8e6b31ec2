//! Mini-batch Adam training: per-coordinate branches first, then the joint
//! model under the spherical loss.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{cart_to_sph, sph_to_cart, CartesianPosition, SphericalPosition};
use crate::sos::SosTensor;

use super::loss::{loss_emce, loss_emce_grad, loss_range, loss_range_grad, loss_spherical, loss_spherical_grad};
use super::network::{prepare_input, Affine, Head, Network, NetworkConfig};
use super::tensor::Tensor4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    /// Epochs for each branch.
    pub branch_epochs: usize,
    /// Epochs for the joint model.
    pub joint_epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 64,
            branch_epochs: 20,
            joint_epochs: 10,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if !(self.learning_rate >= 0.0) || !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("optimizer parameters out of range".into()));
        }
        Ok(())
    }
}

/// Adam optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(params: usize, cfg: &TrainConfig) -> Self {
        Self {
            lr: cfg.learning_rate,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            epsilon: cfg.epsilon,
            m: vec![0.0; params],
            v: vec![0.0; params],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.epsilon);
        }
    }
}

/// Network inputs with spherical labels.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    receivers: usize,
    samples: usize,
    inputs: Tensor4,
    labels: Vec<SphericalPosition>,
}

impl TrainingSet {
    pub fn new(config: &NetworkConfig, sos: &[&SosTensor], positions: &[CartesianPosition]) -> Result<Self> {
        if sos.is_empty() {
            return Err(Error::InvalidArgument("empty training set".into()));
        }
        if sos.len() != positions.len() {
            return Err(Error::Shape(format!("{} inputs, {} labels", sos.len(), positions.len())));
        }
        let receivers = sos[0].receivers();
        let samples = sos[0].samples();
        let inputs = prepare_input(config, receivers, samples, sos)?;
        Ok(Self {
            receivers,
            samples,
            inputs,
            labels: positions.iter().map(|p| cart_to_sph(*p)).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn receivers(&self) -> usize {
        self.receivers
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn labels(&self) -> &[SphericalPosition] {
        &self.labels
    }

    pub fn inputs(&self) -> &Tensor4 {
        &self.inputs
    }

    /// Inputs and labels of the listed items.
    pub fn batch(&self, idx: &[usize]) -> (Tensor4, Vec<SphericalPosition>) {
        let len = self.inputs.item_len();
        let mut data = Vec::with_capacity(idx.len() * len);
        for &i in idx {
            data.extend_from_slice(self.inputs.item(i));
        }
        let [_, c, h, w] = self.inputs.shape();
        let x = Tensor4::from_vec([idx.len(), c, h, w], data).expect("item sizes match");
        (x, idx.iter().map(|&i| self.labels[i]).collect())
    }

    /// Per-output label normalization for a model head.
    pub fn normalization(&self, head: Head) -> Vec<Affine> {
        let cols: Vec<Vec<f64>> = self.labels.iter().map(|s| head.targets(s)).collect();
        let angular = match head {
            Head::Azimuth => vec![true],
            Head::Joint => vec![false, true, false],
            _ => vec![false],
        };
        angular
            .iter()
            .enumerate()
            .map(|(j, &a)| Affine::fit(&cols.iter().map(|c| c[j]).collect::<Vec<_>>(), a))
            .collect()
    }
}

/// Mean loss and its gradient with respect to each output.
pub fn batch_loss(net: &Network, outputs: &Tensor4, labels: &[SphericalPosition]) -> (f64, Tensor4) {
    let n = labels.len();
    let outs = net.outputs();
    let incl = net.config().inclination_loss;
    let mut total = 0.0;
    let mut grad = vec![0.0; n * outs];
    for (i, s) in labels.iter().enumerate() {
        let o = outputs.item(i);
        let g = &mut grad[i * outs..(i + 1) * outs];
        match net.head() {
            Head::Range => {
                total += loss_range(o[0], s.r);
                g[0] = loss_range_grad(o[0], s.r);
            }
            Head::Azimuth => {
                total += loss_emce(o[0], s.theta);
                g[0] = loss_emce_grad(o[0], s.theta);
            }
            Head::Inclination => {
                total += incl.value(o[0], s.phi);
                g[0] = incl.grad(o[0], s.phi);
            }
            Head::Joint => {
                let p = SphericalPosition {
                    r: o[0],
                    theta: o[1],
                    phi: o[2],
                };
                total += loss_spherical(&p, s);
                g.copy_from_slice(&loss_spherical_grad(&p, s));
            }
        }
    }
    let scale = 1.0 / n as f64;
    grad.iter_mut().for_each(|v| *v *= scale);
    (total * scale, Tensor4::from_rows(n, outs, grad).expect("sizes match"))
}

/// Mini-batch losses in step order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LossTrace {
    pub losses: Vec<f64>,
    pub steps_per_epoch: usize,
}

impl LossTrace {
    pub fn epoch_means(&self) -> Vec<f64> {
        if self.steps_per_epoch == 0 {
            return Vec::new();
        }
        self.losses
            .chunks(self.steps_per_epoch)
            .map(|c| c.iter().sum::<f64>() / c.len() as f64)
            .collect()
    }

    /// `step,loss` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "step,loss")?;
        for (i, l) in self.losses.iter().enumerate() {
            writeln!(w, "{i},{l:e}")?;
        }
        Ok(())
    }
}

/// Trains `net` in place for `epochs` passes over `set`.
pub fn fit(net: &mut Network, set: &TrainingSet, epochs: usize, cfg: &TrainConfig, rng: &mut ChaCha8Rng) -> Result<LossTrace> {
    cfg.validate()?;
    if set.is_empty() {
        return Err(Error::InvalidArgument("empty training set".into()));
    }
    if set.receivers() != net.receivers() || set.samples() != net.samples() {
        return Err(Error::Shape("training set does not match the model input".into()));
    }
    let mut adam = Adam::new(net.param_count(), cfg);
    let mut order: Vec<usize> = (0..set.len()).collect();
    let steps_per_epoch = set.len().div_ceil(cfg.batch_size);
    let mut trace = LossTrace {
        losses: Vec::with_capacity(epochs * steps_per_epoch),
        steps_per_epoch,
    };
    for _ in 0..epochs {
        order.shuffle(rng);
        for idx in order.chunks(cfg.batch_size) {
            let (x, labels) = set.batch(idx);
            let masks = net.draw_masks(idx.len(), rng);
            let (y, tape) = net.forward(&x, Some(masks))?;
            let (loss, d_out) = batch_loss(net, &y, &labels);
            if !loss.is_finite() {
                return Err(Error::Diverged {
                    step: trace.losses.len(),
                    loss,
                });
            }
            let grad = net.backward(&tape, &d_out);
            adam.step(net.params_mut(), &grad);
            trace.losses.push(loss);
        }
    }
    Ok(trace)
}

/// Result of progressive training.
#[derive(Debug, Clone)]
pub struct Progressive {
    /// Range, azimuth and inclination branches after the first phase.
    pub branches: [Network; 3],
    pub branch_traces: [LossTrace; 3],
    /// Joint model after the second phase.
    pub joint: Network,
    pub joint_trace: LossTrace,
}

/// Trains the three branches, assembles them and fine-tunes the joint model.
pub fn train_progressive(set: &TrainingSet, config: &NetworkConfig, cfg: &TrainConfig) -> Result<Progressive> {
    let (branches, branch_traces) = train_branches(set, config, cfg)?;
    let mut joint = Network::assemble_joint(&branches[0], &branches[1], &branches[2])?;
    let mut rng = phase_rng(cfg.seed, 3);
    let joint_trace = fit(&mut joint, set, cfg.joint_epochs, cfg, &mut rng)?;
    Ok(Progressive {
        branches,
        branch_traces,
        joint,
        joint_trace,
    })
}

/// First phase only.
pub fn train_branches(set: &TrainingSet, config: &NetworkConfig, cfg: &TrainConfig) -> Result<([Network; 3], [LossTrace; 3])> {
    let heads = [Head::Range, Head::Azimuth, Head::Inclination];
    let mut nets = Vec::with_capacity(3);
    let mut traces = Vec::with_capacity(3);
    for (i, head) in heads.into_iter().enumerate() {
        let mut rng = phase_rng(cfg.seed, i as u64);
        let mut net = Network::new(config.clone(), set.receivers(), set.samples(), head, &mut rng)?;
        net.set_normalization(set.normalization(head))?;
        traces.push(fit(&mut net, set, cfg.branch_epochs, cfg, &mut rng)?);
        nets.push(net);
    }
    let nets: [Network; 3] = nets.try_into().expect("three branches");
    let traces: [LossTrace; 3] = traces.try_into().expect("three traces");
    Ok((nets, traces))
}

fn phase_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Root mean squared Cartesian error of a joint model.
pub fn joint_rmse(net: &Network, set: &TrainingSet) -> Result<f64> {
    if net.head() != Head::Joint {
        return Err(Error::InvalidArgument("RMSE needs a joint model".into()));
    }
    let mut total = 0.0;
    let idx: Vec<usize> = (0..set.len()).collect();
    for chunk in idx.chunks(256) {
        let (x, labels) = set.batch(chunk);
        for (o, s) in net.predict(&x)?.iter().zip(&labels) {
            let p = sph_to_cart(SphericalPosition {
                r: o[0],
                theta: o[1],
                phi: o[2],
            });
            total += (p - sph_to_cart(*s)).norm().powi(2);
        }
    }
    Ok((total / set.len() as f64).sqrt())
}
