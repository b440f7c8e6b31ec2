//! Branch cores, output heads and the joint three-branch model.
//!
//! All weights live in one flat vector: the cores in branch order (range,
//! azimuth, inclination for the joint model), then the head.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{sph_to_cart, CartesianPosition, SphericalPosition};
use crate::sos::{pair_count, SosTensor};

use super::layers::{relu, relu_backward, AvgPool2d, Conv2d, Dense, Dropout};
use super::loss::InclinationLoss;
use super::tensor::Tensor4;

/// Real and imaginary parts of the correlation tensor.
pub const INPUT_CHANNELS: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    /// Output channels of each block.
    pub channels: Vec<usize>,
    /// `[height, width]` kernel of each block.
    pub kernels: Vec<[usize; 2]>,
    /// `[height, width]` pooling window of each block.
    pub pools: Vec<[usize; 2]>,
    /// Dropout rate on every block but the last.
    pub dropout: f64,
    /// Hidden dense widths after flattening.
    pub dense: Vec<usize>,
    pub inclination_loss: InclinationLoss,
    /// Divide each input tensor by its mean zero-lag autocorrelation.
    pub normalize_input: bool,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            channels: vec![8, 16, 32],
            kernels: vec![[3, 3], [3, 3], [1, 3]],
            pools: vec![[2, 2], [2, 2], [1, 2]],
            dropout: 0.2,
            dense: vec![32],
            inclination_loss: InclinationLoss::Period,
            normalize_input: true,
        }
    }
}

impl NetworkConfig {
    pub fn blocks(&self) -> usize {
        self.channels.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels.is_empty() {
            return Err(Error::Config("network needs at least one block".into()));
        }
        if self.kernels.len() != self.blocks() || self.pools.len() != self.blocks() {
            return Err(Error::Config(format!(
                "{} blocks but {} kernels and {} pools",
                self.blocks(),
                self.kernels.len(),
                self.pools.len()
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout rate {} not in [0, 1)", self.dropout)));
        }
        if self.channels.iter().chain(&self.dense).any(|&c| c == 0) {
            return Err(Error::Config("zero-width layer".into()));
        }
        Ok(())
    }
}

/// What a model predicts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Head {
    Range,
    Azimuth,
    Inclination,
    Joint,
}

impl Head {
    pub fn outputs(self) -> usize {
        match self {
            Head::Joint => 3,
            _ => 1,
        }
    }

    pub fn branches(self) -> usize {
        self.outputs()
    }

    pub(crate) fn code(self) -> u32 {
        match self {
            Head::Range => 0,
            Head::Azimuth => 1,
            Head::Inclination => 2,
            Head::Joint => 3,
        }
    }

    pub(crate) fn from_code(code: u32) -> Option<Self> {
        [Head::Range, Head::Azimuth, Head::Inclination, Head::Joint]
            .get(code as usize)
            .copied()
    }

    /// Spherical coordinate(s) this head regresses, taken from a label.
    pub fn targets(self, s: &SphericalPosition) -> Vec<f64> {
        match self {
            Head::Range => vec![s.r],
            Head::Azimuth => vec![s.theta],
            Head::Inclination => vec![s.phi],
            Head::Joint => vec![s.r, s.theta, s.phi],
        }
    }
}

/// `value = offset + scale * raw` for one output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Affine {
    pub offset: f64,
    pub scale: f64,
}

impl Default for Affine {
    fn default() -> Self {
        Self { offset: 0.0, scale: 1.0 }
    }
}

impl Affine {
    /// Mean and standard deviation; a circular mean when `angular`.
    pub fn fit(values: &[f64], angular: bool) -> Self {
        if values.is_empty() {
            return Self::default();
        }
        let n = values.len() as f64;
        let offset = if angular {
            let s: f64 = values.iter().map(|v| v.sin()).sum();
            let c: f64 = values.iter().map(|v| v.cos()).sum();
            s.atan2(c)
        } else {
            values.iter().sum::<f64>() / n
        };
        let var = values
            .iter()
            .map(|v| {
                let d = if angular {
                    (v - offset).sin().atan2((v - offset).cos())
                } else {
                    v - offset
                };
                d * d
            })
            .sum::<f64>()
            / n;
        let scale = if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 };
        Self { offset, scale }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Op {
    Conv(Conv2d),
    Relu,
    Pool(AvgPool2d),
    Dropout(Dropout),
    Flatten,
    Dense(Dense),
}

/// Layer sequence of one branch, shared by every branch of a model.
#[derive(Debug, Clone, PartialEq)]
struct Core {
    ops: Vec<(Op, usize)>,
    params: usize,
    features: usize,
    dropouts: usize,
}

impl Core {
    fn build(config: &NetworkConfig, input: [usize; 3]) -> Result<Self> {
        config.validate()?;
        let mut ops = Vec::new();
        let mut shape = [1, input[0], input[1], input[2]];
        let mut params = 0;
        let mut dropouts = 0;
        for b in 0..config.blocks() {
            let conv = Conv2d {
                in_channels: shape[1],
                out_channels: config.channels[b],
                kernel: config.kernels[b],
            };
            shape = conv.output_shape(shape)?;
            ops.push((Op::Conv(conv), params));
            params += conv.param_count();
            ops.push((Op::Relu, params));
            let pool = AvgPool2d { size: config.pools[b] };
            shape = pool.output_shape(shape)?;
            ops.push((Op::Pool(pool), params));
            if b + 1 < config.blocks() && config.dropout > 0.0 {
                ops.push((Op::Dropout(Dropout { rate: config.dropout }), params));
                dropouts += 1;
            }
        }
        ops.push((Op::Flatten, params));
        let mut width = shape[1] * shape[2] * shape[3];
        for &out in &config.dense {
            let dense = Dense {
                inputs: width,
                outputs: out,
            };
            ops.push((Op::Dense(dense), params));
            params += dense.param_count();
            ops.push((Op::Relu, params));
            width = out;
        }
        Ok(Self {
            ops,
            params,
            features: width,
            dropouts,
        })
    }

    fn init<R: Rng + ?Sized>(&self, params: &mut [f64], rng: &mut R) {
        for (op, offset) in &self.ops {
            let (fan_in, weights) = match op {
                Op::Conv(c) => (
                    c.in_channels * c.kernel[0] * c.kernel[1],
                    c.out_channels * c.in_channels * c.kernel[0] * c.kernel[1],
                ),
                Op::Dense(d) => (d.inputs, d.inputs * d.outputs),
                _ => continue,
            };
            let he = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
            for w in &mut params[*offset..offset + weights] {
                *w = he.sample(rng);
            }
        }
    }

    /// Runs the branch, keeping every op input for the backward pass.
    fn forward(&self, x: Tensor4, params: &[f64], masks: Option<&[Vec<f64>]>) -> Result<(Tensor4, Vec<Tensor4>)> {
        let mut tape = Vec::with_capacity(self.ops.len());
        let mut cur = x;
        let mut d = 0;
        for (op, offset) in &self.ops {
            let next = match op {
                Op::Conv(c) => c.forward(&cur, &params[*offset..offset + c.param_count()])?,
                Op::Relu => relu(&cur),
                Op::Pool(p) => p.forward(&cur)?,
                Op::Dropout(dr) => {
                    let m = masks.map(|m| m[d].as_slice());
                    d += 1;
                    dr.forward(&cur, m)?
                }
                Op::Flatten => cur.clone().flatten(),
                Op::Dense(l) => l.forward(&cur, &params[*offset..offset + l.param_count()])?,
            };
            tape.push(std::mem::replace(&mut cur, next));
        }
        Ok((cur, tape))
    }

    fn backward(&self, tape: &[Tensor4], params: &[f64], masks: Option<&[Vec<f64>]>, dy: Tensor4, grad: &mut [f64]) {
        let mut d = self.dropouts;
        let mut cur = dy;
        for ((op, offset), x) in self.ops.iter().zip(tape).rev() {
            cur = match op {
                Op::Conv(c) => {
                    let r = *offset..offset + c.param_count();
                    c.backward(x, &params[r.clone()], &cur, &mut grad[r])
                }
                Op::Relu => relu_backward(x, &cur),
                Op::Pool(p) => p.backward(x.shape(), &cur),
                Op::Dropout(dr) => {
                    d -= 1;
                    dr.backward(&cur, masks.map(|m| m[d].as_slice()))
                }
                Op::Flatten => cur.reshape(x.shape()).expect("flatten preserves length"),
                Op::Dense(l) => {
                    let r = *offset..offset + l.param_count();
                    l.backward(x, &params[r.clone()], &cur, &mut grad[r])
                }
            };
        }
    }

    fn dropout_sizes(&self, input: [usize; 4]) -> Vec<usize> {
        let mut shape = input;
        let mut sizes = Vec::new();
        for (op, _) in &self.ops {
            shape = match op {
                Op::Conv(c) => c.output_shape(shape).expect("validated at build"),
                Op::Pool(p) => p.output_shape(shape).expect("validated at build"),
                Op::Dropout(_) => {
                    sizes.push(shape.iter().product());
                    shape
                }
                _ => shape,
            };
        }
        sizes
    }

    fn dropout_rates(&self) -> Vec<Dropout> {
        self.ops
            .iter()
            .filter_map(|(op, _)| match op {
                Op::Dropout(d) => Some(*d),
                _ => None,
            })
            .collect()
    }
}

/// Dropout masks for one batch, per branch then per dropout layer.
pub type DropoutMasks = Vec<Vec<Vec<f64>>>;

/// Everything the backward pass needs from a forward pass.
pub struct Tape {
    branches: Vec<Vec<Tensor4>>,
    features: Tensor4,
    masks: Option<DropoutMasks>,
}

/// A single-coordinate branch model or the joint three-branch model.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    config: NetworkConfig,
    receivers: usize,
    samples: usize,
    head: Head,
    core: Core,
    head_layer: Dense,
    params: Vec<f64>,
    norm: Vec<Affine>,
}

impl Network {
    /// Freshly initialized model for records of `receivers x samples`.
    pub fn new<R: Rng + ?Sized>(
        config: NetworkConfig,
        receivers: usize,
        samples: usize,
        head: Head,
        rng: &mut R,
    ) -> Result<Self> {
        let mut net = Self::zeroed(config, receivers, samples, head)?;
        let core_len = net.core.params;
        for b in 0..head.branches() {
            net.core.init(&mut net.params[b * core_len..(b + 1) * core_len], rng);
        }
        let start = head.branches() * core_len;
        let h = net.head_layer;
        let std = (1.0 / h.inputs as f64).sqrt();
        let normal = Normal::new(0.0, std).expect("positive std");
        for w in &mut net.params[start..start + h.inputs * h.outputs] {
            *w = normal.sample(rng);
        }
        Ok(net)
    }

    /// Model with every parameter zero.
    pub fn zeroed(config: NetworkConfig, receivers: usize, samples: usize, head: Head) -> Result<Self> {
        if receivers < 2 || samples < 2 {
            return Err(Error::Shape(format!("records of {receivers} x {samples} are too small")));
        }
        let input = [INPUT_CHANNELS, pair_count(receivers), 2 * samples - 1];
        let core = Core::build(&config, input)?;
        let head_layer = Dense {
            inputs: core.features * head.branches(),
            outputs: head.outputs(),
        };
        let total = core.params * head.branches() + head_layer.param_count();
        Ok(Self {
            config,
            receivers,
            samples,
            head,
            core,
            head_layer,
            params: vec![0.0; total],
            norm: vec![Affine::default(); head.outputs()],
        })
    }

    /// Joint model whose cores are copies of the three branches and whose
    /// head starts as the block-diagonal stack of the branch heads.
    pub fn assemble_joint(range: &Network, azimuth: &Network, inclination: &Network) -> Result<Self> {
        let parts = [(range, Head::Range), (azimuth, Head::Azimuth), (inclination, Head::Inclination)];
        for (net, head) in parts {
            if net.head != head {
                return Err(Error::InvalidArgument(format!("expected a {head:?} branch, got {:?}", net.head)));
            }
            if net.config != range.config || net.receivers != range.receivers || net.samples != range.samples {
                return Err(Error::InvalidArgument("branch configurations differ".into()));
            }
        }
        let mut joint = Self::zeroed(range.config.clone(), range.receivers, range.samples, Head::Joint)?;
        let core_len = joint.core.params;
        let features = joint.core.features;
        let head_start = 3 * core_len;
        let wide = joint.head_layer.inputs;
        for (b, (net, _)) in parts.iter().enumerate() {
            joint.params[b * core_len..(b + 1) * core_len].copy_from_slice(net.core_params(0));
            let head = net.head_params();
            let row = head_start + b * wide + b * features;
            joint.params[row..row + features].copy_from_slice(&head[..features]);
            joint.params[head_start + 3 * wide + b] = head[features];
            joint.norm[b] = net.norm[0];
        }
        Ok(joint)
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn head(&self) -> Head {
        self.head
    }

    pub fn receivers(&self) -> usize {
        self.receivers
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn outputs(&self) -> usize {
        self.head.outputs()
    }

    /// Trainable parameters in one branch core.
    pub fn core_param_count(&self) -> usize {
        self.core.params
    }

    pub fn head_param_count(&self) -> usize {
        self.head_layer.param_count()
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn set_params(&mut self, params: Vec<f64>) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::Shape(format!("{} parameters for a model of {}", params.len(), self.params.len())));
        }
        self.params = params;
        Ok(())
    }

    fn core_params(&self, branch: usize) -> &[f64] {
        &self.params[branch * self.core.params..(branch + 1) * self.core.params]
    }

    fn head_params(&self) -> &[f64] {
        &self.params[self.head.branches() * self.core.params..]
    }

    pub fn normalization(&self) -> &[Affine] {
        &self.norm
    }

    pub fn set_normalization(&mut self, norm: Vec<Affine>) -> Result<()> {
        if norm.len() != self.outputs() {
            return Err(Error::Shape(format!("{} affine maps for {} outputs", norm.len(), self.outputs())));
        }
        self.norm = norm;
        Ok(())
    }

    /// Expected input shape `[channels, height, width]`.
    pub fn input_shape(&self) -> [usize; 3] {
        [INPUT_CHANNELS, pair_count(self.receivers), 2 * self.samples - 1]
    }

    /// Stacks correlation tensors into a network batch.
    pub fn prepare(&self, sos: &[&SosTensor]) -> Result<Tensor4> {
        prepare_input(&self.config, self.receivers, self.samples, sos)
    }

    /// Draws fresh dropout masks for a batch.
    pub fn draw_masks<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> DropoutMasks {
        let [c, h, w] = self.input_shape();
        let sizes = self.core.dropout_sizes([batch, c, h, w]);
        let rates = self.core.dropout_rates();
        (0..self.head.branches())
            .map(|_| sizes.iter().zip(&rates).map(|(&n, d)| d.draw_mask(n, rng)).collect())
            .collect()
    }

    /// Outputs in label units, `[batch, outputs]`. `masks = None` is
    /// evaluation mode.
    pub fn forward(&self, x: &Tensor4, masks: Option<DropoutMasks>) -> Result<(Tensor4, Tape)> {
        let [c, h, w] = self.input_shape();
        if x.shape()[1..] != [c, h, w] {
            return Err(Error::Shape(format!("input {:?}, model expects [_, {c}, {h}, {w}]", x.shape())));
        }
        let n = x.batch();
        let branches = self.head.branches();
        let f = self.core.features;
        let mut features = vec![0.0; n * f * branches];
        let mut tapes = Vec::with_capacity(branches);
        for b in 0..branches {
            let m = masks.as_ref().map(|m| m[b].as_slice());
            let (out, tape) = self.core.forward(x.clone(), self.core_params(b), m)?;
            for i in 0..n {
                features[i * f * branches + b * f..i * f * branches + (b + 1) * f].copy_from_slice(out.item(i));
            }
            tapes.push(tape);
        }
        let features = Tensor4::from_rows(n, f * branches, features)?;
        let mut y = self.head_layer.forward(&features, self.head_params())?;
        let outs = self.outputs();
        for (i, v) in y.data_mut().iter_mut().enumerate() {
            let a = self.norm[i % outs];
            *v = a.offset + a.scale * *v;
        }
        Ok((
            y,
            Tape {
                branches: tapes,
                features,
                masks,
            },
        ))
    }

    /// Parameter gradient given `d loss / d output` in label units.
    pub fn backward(&self, tape: &Tape, d_out: &Tensor4) -> Vec<f64> {
        let mut grad = vec![0.0; self.params.len()];
        let outs = self.outputs();
        let mut d_raw = d_out.clone();
        for (i, v) in d_raw.data_mut().iter_mut().enumerate() {
            *v *= self.norm[i % outs].scale;
        }
        let branches = self.head.branches();
        let core_len = self.core.params;
        let (core_grad, head_grad) = grad.split_at_mut(branches * core_len);
        let d_features = self
            .head_layer
            .backward(&tape.features, self.head_params(), &d_raw, head_grad);
        let n = d_out.batch();
        let f = self.core.features;
        for b in 0..branches {
            let mut part = Vec::with_capacity(n * f);
            for i in 0..n {
                part.extend_from_slice(&d_features.item(i)[b * f..(b + 1) * f]);
            }
            let dy = Tensor4::from_rows(n, f, part).expect("sizes match");
            let m = tape.masks.as_ref().map(|m| m[b].as_slice());
            self.core.backward(
                &tape.branches[b],
                self.core_params(b),
                m,
                dy,
                &mut core_grad[b * core_len..(b + 1) * core_len],
            );
        }
        grad
    }

    /// Evaluation-mode outputs, one row per item.
    pub fn predict(&self, x: &Tensor4) -> Result<Vec<Vec<f64>>> {
        let (y, _) = self.forward(x, None)?;
        Ok(y.data().chunks(self.outputs()).map(|c| c.to_vec()).collect())
    }

    /// Cartesian positions from a joint model.
    pub fn predict_positions(&self, sos: &[&SosTensor]) -> Result<Vec<CartesianPosition>> {
        if self.head != Head::Joint {
            return Err(Error::InvalidArgument(format!("{:?} model cannot predict positions", self.head)));
        }
        let x = self.prepare(sos)?;
        Ok(self
            .predict(&x)?
            .into_iter()
            .map(|o| sph_to_cart(SphericalPosition { r: o[0], theta: o[1], phi: o[2] }))
            .collect())
    }
}

/// Stacks correlation tensors of `receivers x samples` records into a
/// network batch.
pub fn prepare_input(config: &NetworkConfig, receivers: usize, samples: usize, sos: &[&SosTensor]) -> Result<Tensor4> {
    let [c, h, w] = [INPUT_CHANNELS, pair_count(receivers), 2 * samples - 1];
    let mut data = Vec::with_capacity(sos.len() * c * h * w);
    for s in sos {
        if s.receivers() != receivers || s.samples() != samples {
            return Err(Error::Shape(format!(
                "tensor for {} x {} records, model expects {receivers} x {samples}",
                s.receivers(),
                s.samples(),
            )));
        }
        let mut item = s.to_channels_first();
        if config.normalize_input {
            let power = input_power(s);
            if power > 0.0 {
                item.iter_mut().for_each(|v| *v /= power);
            }
        }
        data.extend(item);
    }
    Tensor4::from_vec([sos.len(), c, h, w], data)
}

/// Mean zero-lag autocorrelation over receivers.
fn input_power(s: &SosTensor) -> f64 {
    let l = s.receivers();
    let mut total = 0.0;
    let mut row = 0;
    for l1 in 0..l {
        total += s.get(row, 0).re;
        row += l - l1;
    }
    total / l as f64
}
