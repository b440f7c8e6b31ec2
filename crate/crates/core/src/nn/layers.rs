//! Layer primitives. Each layer reads its parameters from a slice of the
//! model's flat parameter vector and accumulates gradients into a slice of
//! the same layout.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::tensor::Tensor4;

/// Valid-padding, stride-1 cross-correlation.
/// Parameters: weights `[out][in][kh][kw]`, then `out` biases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conv2d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: [usize; 2],
}

impl Conv2d {
    pub fn param_count(&self) -> usize {
        self.out_channels * (self.in_channels * self.kernel[0] * self.kernel[1] + 1)
    }

    pub fn output_shape(&self, input: [usize; 4]) -> Result<[usize; 4]> {
        let [n, c, h, w] = input;
        let [kh, kw] = self.kernel;
        if c != self.in_channels || h < kh || w < kw || kh == 0 || kw == 0 {
            return Err(Error::Shape(format!(
                "conv {}->{} kernel {:?} on input {input:?}",
                self.in_channels, self.out_channels, self.kernel
            )));
        }
        Ok([n, self.out_channels, h - kh + 1, w - kw + 1])
    }

    pub fn forward(&self, x: &Tensor4, params: &[f64]) -> Result<Tensor4> {
        let out = self.output_shape(x.shape())?;
        let [n, _, oh, ow] = out;
        let [kh, kw] = self.kernel;
        let ksize = self.in_channels * kh * kw;
        let (weights, bias) = params.split_at(self.out_channels * ksize);
        let mut y = Tensor4::zeros(out);
        for b in 0..n {
            for oc in 0..self.out_channels {
                for oy in 0..oh {
                    let yi = y.index(b, oc, oy, 0);
                    let row = &mut y.data_mut()[yi..yi + ow];
                    row.fill(bias[oc]);
                    for ic in 0..self.in_channels {
                        for ky in 0..kh {
                            let xi = x.index(b, ic, oy + ky, 0);
                            let xrow = &x.data()[xi..xi + x.shape()[3]];
                            for kx in 0..kw {
                                let wv = weights[((oc * self.in_channels + ic) * kh + ky) * kw + kx];
                                for (acc, xv) in row.iter_mut().zip(&xrow[kx..kx + ow]) {
                                    *acc += wv * xv;
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(y)
    }

    /// Returns the input gradient and adds parameter gradients into `grad`.
    pub fn backward(&self, x: &Tensor4, params: &[f64], dy: &Tensor4, grad: &mut [f64]) -> Tensor4 {
        let [n, _, oh, ow] = dy.shape();
        let [kh, kw] = self.kernel;
        let ksize = self.in_channels * kh * kw;
        let weights = &params[..self.out_channels * ksize];
        let (gw, gb) = grad.split_at_mut(self.out_channels * ksize);
        let width = x.shape()[3];
        let mut dx = Tensor4::zeros(x.shape());
        for b in 0..n {
            for oc in 0..self.out_channels {
                for oy in 0..oh {
                    let di = dy.index(b, oc, oy, 0);
                    let drow = &dy.data()[di..di + ow];
                    gb[oc] += drow.iter().sum::<f64>();
                    for ic in 0..self.in_channels {
                        for ky in 0..kh {
                            let xi = x.index(b, ic, oy + ky, 0);
                            let xrow = &x.data()[xi..xi + width];
                            for kx in 0..kw {
                                let wi = ((oc * self.in_channels + ic) * kh + ky) * kw + kx;
                                gw[wi] += drow.iter().zip(&xrow[kx..kx + ow]).map(|(d, v)| d * v).sum::<f64>();
                                let wv = weights[wi];
                                let dxrow = &mut dx.data_mut()[xi + kx..xi + kx + ow];
                                for (acc, d) in dxrow.iter_mut().zip(drow) {
                                    *acc += wv * d;
                                }
                            }
                        }
                    }
                }
            }
        }
        dx
    }
}

/// Non-overlapping mean pooling; trailing rows/columns that do not fill a
/// window are dropped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AvgPool2d {
    pub size: [usize; 2],
}

impl AvgPool2d {
    pub fn output_shape(&self, input: [usize; 4]) -> Result<[usize; 4]> {
        let [n, c, h, w] = input;
        let [ph, pw] = self.size;
        if ph == 0 || pw == 0 || h < ph || w < pw {
            return Err(Error::Shape(format!("pool {:?} on input {input:?}", self.size)));
        }
        Ok([n, c, h / ph, w / pw])
    }

    pub fn forward(&self, x: &Tensor4) -> Result<Tensor4> {
        let out = self.output_shape(x.shape())?;
        let [n, c, oh, ow] = out;
        let [ph, pw] = self.size;
        let scale = 1.0 / (ph * pw) as f64;
        let mut y = Tensor4::zeros(out);
        for b in 0..n {
            for ch in 0..c {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut acc = 0.0;
                        for dy in 0..ph {
                            for dx in 0..pw {
                                acc += x.get(b, ch, oy * ph + dy, ox * pw + dx);
                            }
                        }
                        let i = y.index(b, ch, oy, ox);
                        y.data_mut()[i] = acc * scale;
                    }
                }
            }
        }
        Ok(y)
    }

    pub fn backward(&self, input: [usize; 4], dy: &Tensor4) -> Tensor4 {
        let [n, c, oh, ow] = dy.shape();
        let [ph, pw] = self.size;
        let scale = 1.0 / (ph * pw) as f64;
        let mut dx = Tensor4::zeros(input);
        for b in 0..n {
            for ch in 0..c {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let g = dy.get(b, ch, oy, ox) * scale;
                        for ky in 0..ph {
                            for kx in 0..pw {
                                let i = dx.index(b, ch, oy * ph + ky, ox * pw + kx);
                                dx.data_mut()[i] = g;
                            }
                        }
                    }
                }
            }
        }
        dx
    }
}

pub fn relu(x: &Tensor4) -> Tensor4 {
    let mut y = x.clone();
    y.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
    y
}

/// Gradient passes where the input was strictly positive.
pub fn relu_backward(x: &Tensor4, dy: &Tensor4) -> Tensor4 {
    let mut dx = dy.clone();
    for (d, v) in dx.data_mut().iter_mut().zip(x.data()) {
        if *v <= 0.0 {
            *d = 0.0;
        }
    }
    dx
}

/// Inverted dropout. A mask holds the per-element multiplier: 0 for dropped
/// units, `1 / (1 - rate)` for kept ones.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dropout {
    pub rate: f64,
}

impl Dropout {
    pub fn draw_mask<R: Rng + ?Sized>(&self, len: usize, rng: &mut R) -> Vec<f64> {
        let keep = 1.0 / (1.0 - self.rate);
        (0..len)
            .map(|_| if rng.random::<f64>() < self.rate { 0.0 } else { keep })
            .collect()
    }

    /// `mask = None` is evaluation mode.
    pub fn forward(&self, x: &Tensor4, mask: Option<&[f64]>) -> Result<Tensor4> {
        let mut y = x.clone();
        if let Some(mask) = mask {
            if mask.len() != y.data().len() {
                return Err(Error::Shape(format!("dropout mask of {} for {} values", mask.len(), y.data().len())));
            }
            y.data_mut().iter_mut().zip(mask).for_each(|(v, m)| *v *= m);
        }
        Ok(y)
    }

    pub fn backward(&self, dy: &Tensor4, mask: Option<&[f64]>) -> Tensor4 {
        self.forward(dy, mask).expect("mask length checked in forward")
    }
}

/// Affine map on `[batch, inputs, 1, 1]`.
/// Parameters: weights `[out][in]`, then `out` biases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
}

impl Dense {
    pub fn param_count(&self) -> usize {
        self.outputs * (self.inputs + 1)
    }

    pub fn forward(&self, x: &Tensor4, params: &[f64]) -> Result<Tensor4> {
        if x.item_len() != self.inputs {
            return Err(Error::Shape(format!("dense expects {} inputs, got {:?}", self.inputs, x.shape())));
        }
        let (weights, bias) = params.split_at(self.outputs * self.inputs);
        let n = x.batch();
        let mut out = Vec::with_capacity(n * self.outputs);
        for b in 0..n {
            let xi = x.item(b);
            for o in 0..self.outputs {
                let w = &weights[o * self.inputs..(o + 1) * self.inputs];
                let mut acc = 0.0;
                for (wv, v) in w.iter().zip(xi) {
                    acc += wv * v;
                }
                out.push(acc + bias[o]);
            }
        }
        Tensor4::from_rows(n, self.outputs, out)
    }

    pub fn backward(&self, x: &Tensor4, params: &[f64], dy: &Tensor4, grad: &mut [f64]) -> Tensor4 {
        let weights = &params[..self.outputs * self.inputs];
        let (gw, gb) = grad.split_at_mut(self.outputs * self.inputs);
        let n = x.batch();
        let mut dx = Tensor4::zeros([n, self.inputs, 1, 1]);
        for b in 0..n {
            let xi = x.item(b);
            let di = dy.item(b);
            for o in 0..self.outputs {
                let d = di[o];
                gb[o] += d;
                let w = &weights[o * self.inputs..(o + 1) * self.inputs];
                let g = &mut gw[o * self.inputs..(o + 1) * self.inputs];
                for (gv, v) in g.iter_mut().zip(xi) {
                    *gv += d * v;
                }
                let start = b * self.inputs;
                for (acc, wv) in dx.data_mut()[start..start + self.inputs].iter_mut().zip(w) {
                    *acc += d * wv;
                }
            }
        }
        dx
    }
}
