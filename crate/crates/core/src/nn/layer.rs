use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::fs::ActivationKind;
use crate::{Error, Result};

/// Spatial padding of a convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Padding {
    /// Output size `ceil(in / stride)`, zero padding split with the extra
    /// row/column at the bottom/right.
    Same,
    /// No padding; output size `floor((in - k) / stride) + 1`.
    Valid,
}

/// Layer operation and its parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerKind {
    /// `y = W x + b` with `W` of shape `[out, in]`.
    Dense { weights: Tensor, bias: Tensor },
    /// Cross-correlation with `weights` of shape `[out_c, in_c, kh, kw]`.
    Conv2d {
        weights: Tensor,
        bias: Tensor,
        stride: usize,
        padding: Padding,
    },
    /// Non-overlapping mean over `size x size` windows.
    AvgPool2d { size: usize },
    Flatten,
    /// Adds the output of layer `source` to the incoming value.
    ResidualAdd { source: usize },
    /// Per-channel `gamma (x - mean) / sqrt(var + eps) + beta`.
    BatchNorm {
        gamma: Tensor,
        beta: Tensor,
        mean: Tensor,
        var: Tensor,
        eps: f64,
    },
}

impl LayerKind {
    pub const NAMES: [&'static str; 6] = [
        "dense",
        "conv2d",
        "avgpool2d",
        "flatten",
        "residual_add",
        "batchnorm",
    ];

    pub fn name(&self) -> &'static str {
        match self {
            LayerKind::Dense { .. } => "dense",
            LayerKind::Conv2d { .. } => "conv2d",
            LayerKind::AvgPool2d { .. } => "avgpool2d",
            LayerKind::Flatten => "flatten",
            LayerKind::ResidualAdd { .. } => "residual_add",
            LayerKind::BatchNorm { .. } => "batchnorm",
        }
    }

    /// Dense and conv layers, the ones carrying a weight matrix.
    pub fn is_affine(&self) -> bool {
        matches!(self, LayerKind::Dense { .. } | LayerKind::Conv2d { .. })
    }

    /// Named parameter tensors in storage order.
    pub fn tensors(&self) -> Vec<(&'static str, &Tensor)> {
        match self {
            LayerKind::Dense { weights, bias } | LayerKind::Conv2d { weights, bias, .. } => {
                vec![("weights", weights), ("bias", bias)]
            }
            LayerKind::BatchNorm {
                gamma,
                beta,
                mean,
                var,
                ..
            } => vec![("gamma", gamma), ("beta", beta), ("mean", mean), ("var", var)],
            _ => Vec::new(),
        }
    }
}

/// One layer: an operation followed by an element-wise activation.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub activation: ActivationKind,
}

fn conv_out(size: usize, k: usize, stride: usize, padding: Padding) -> Option<(usize, usize)> {
    match padding {
        Padding::Same => {
            let out = size.div_ceil(stride);
            let total = ((out - 1) * stride + k).saturating_sub(size);
            Some((out, total / 2))
        }
        Padding::Valid => (size >= k).then(|| ((size - k) / stride + 1, 0)),
    }
}

impl LayerSpec {
    pub fn new(kind: LayerKind, activation: ActivationKind) -> Self {
        Self { kind, activation }
    }

    pub fn dense(weights: Tensor, bias: Tensor, activation: ActivationKind) -> Self {
        Self::new(LayerKind::Dense { weights, bias }, activation)
    }

    pub fn parameter_count(&self) -> usize {
        self.kind.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    /// Output shape for an input of shape `input`; `earlier` holds the output
    /// shapes of all preceding layers.
    pub fn output_shape(&self, input: &[usize], earlier: &[Vec<usize>]) -> Result<Vec<usize>> {
        let here = earlier.len();
        let fail = |msg: String| Err(Error::Shape(format!("layer {here} ({}): {msg}", self.kind.name())));
        match &self.kind {
            LayerKind::Dense { weights, bias } => {
                let ws = weights.shape();
                if ws.len() != 2 {
                    return fail(format!("weights must be [out, in], got {ws:?}"));
                }
                if bias.shape() != [ws[0]] {
                    return fail(format!("bias shape {:?} does not match {} outputs", bias.shape(), ws[0]));
                }
                if input != [ws[1]] {
                    return fail(format!("expects input [{}], got {input:?}", ws[1]));
                }
                Ok(vec![ws[0]])
            }
            LayerKind::Conv2d {
                weights,
                bias,
                stride,
                padding,
            } => {
                let ws = weights.shape();
                if ws.len() != 4 {
                    return fail(format!("weights must be [out_c, in_c, kh, kw], got {ws:?}"));
                }
                if bias.shape() != [ws[0]] {
                    return fail(format!("bias shape {:?} does not match {} channels", bias.shape(), ws[0]));
                }
                if *stride == 0 {
                    return fail("stride must be positive".into());
                }
                if input.len() != 3 || input[0] != ws[1] {
                    return fail(format!("expects input [{}, h, w], got {input:?}", ws[1]));
                }
                let (Some((oh, _)), Some((ow, _))) = (
                    conv_out(input[1], ws[2], *stride, *padding),
                    conv_out(input[2], ws[3], *stride, *padding),
                ) else {
                    return fail(format!("kernel {}x{} larger than input {input:?}", ws[2], ws[3]));
                };
                Ok(vec![ws[0], oh, ow])
            }
            LayerKind::AvgPool2d { size } => {
                if *size == 0 || input.len() != 3 || input[1] < *size || input[2] < *size {
                    return fail(format!("cannot pool {input:?} with size {size}"));
                }
                Ok(vec![input[0], input[1] / size, input[2] / size])
            }
            LayerKind::Flatten => Ok(vec![input.iter().product()]),
            LayerKind::ResidualAdd { source } => match earlier.get(*source) {
                Some(s) if *source < here && s.as_slice() == input => Ok(input.to_vec()),
                Some(s) if *source < here => fail(format!("source layer {source} has shape {s:?}, input is {input:?}")),
                _ => fail(format!("source {source} is not an earlier layer")),
            },
            LayerKind::BatchNorm {
                gamma,
                beta,
                mean,
                var,
                eps,
            } => {
                let c = input.first().copied().unwrap_or(0);
                for (name, t) in [("gamma", gamma), ("beta", beta), ("mean", mean), ("var", var)] {
                    if t.shape() != [c] {
                        return fail(format!("{name} shape {:?} does not match {c} channels", t.shape()));
                    }
                }
                if !(*eps >= 0.0) || var.data().iter().any(|&v| v + eps <= 0.0) {
                    return fail("var + eps must be positive".into());
                }
                Ok(input.to_vec())
            }
        }
    }

    /// The value fed to the activation: the layer operation applied to
    /// `input` (shape `in_shape`). `outputs` are the activated outputs of all
    /// preceding layers. Shapes must already have been validated.
    pub fn pre_activation(&self, input: &[f64], in_shape: &[usize], outputs: &[Vec<f64>]) -> Vec<f64> {
        match &self.kind {
            LayerKind::Dense { weights, bias } => {
                let n_in = input.len();
                weights
                    .data()
                    .chunks_exact(n_in)
                    .zip(bias.data())
                    .map(|(row, &b)| {
                        let mut acc = 0.0;
                        for (w, x) in row.iter().zip(input) {
                            acc += w * x;
                        }
                        acc + b
                    })
                    .collect()
            }
            LayerKind::Conv2d {
                weights,
                bias,
                stride,
                padding,
            } => conv2d(input, in_shape, weights, bias, *stride, *padding),
            LayerKind::AvgPool2d { size } => avgpool(input, in_shape, *size),
            LayerKind::Flatten => input.to_vec(),
            LayerKind::ResidualAdd { source } => input
                .iter()
                .zip(&outputs[*source])
                .map(|(a, b)| a + b)
                .collect(),
            LayerKind::BatchNorm {
                gamma,
                beta,
                mean,
                var,
                eps,
            } => {
                let c = in_shape[0];
                let plane = input.len() / c;
                input
                    .iter()
                    .enumerate()
                    .map(|(i, &x)| {
                        let ch = i / plane;
                        gamma.data()[ch] * (x - mean.data()[ch]) / (var.data()[ch] + eps).sqrt()
                            + beta.data()[ch]
                    })
                    .collect()
            }
        }
    }
}

fn conv2d(
    input: &[f64],
    in_shape: &[usize],
    weights: &Tensor,
    bias: &Tensor,
    stride: usize,
    padding: Padding,
) -> Vec<f64> {
    let (ic, h, w) = (in_shape[0], in_shape[1], in_shape[2]);
    let ws = weights.shape();
    let (oc, kh, kw) = (ws[0], ws[2], ws[3]);
    let (oh, pad_t) = conv_out(h, kh, stride, padding).expect("validated");
    let (ow, pad_l) = conv_out(w, kw, stride, padding).expect("validated");
    let wd = weights.data();
    let mut out = vec![0.0; oc * oh * ow];
    for o in 0..oc {
        for y in 0..oh {
            for x in 0..ow {
                let mut acc = 0.0;
                for c in 0..ic {
                    for dy in 0..kh {
                        let iy = (y * stride + dy) as isize - pad_t as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for dx in 0..kw {
                            let ix = (x * stride + dx) as isize - pad_l as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            acc += wd[((o * ic + c) * kh + dy) * kw + dx]
                                * input[(c * h + iy as usize) * w + ix as usize];
                        }
                    }
                }
                out[(o * oh + y) * ow + x] = acc + bias.data()[o];
            }
        }
    }
    out
}

fn avgpool(input: &[f64], in_shape: &[usize], size: usize) -> Vec<f64> {
    let (c, h, w) = (in_shape[0], in_shape[1], in_shape[2]);
    let (oh, ow) = (h / size, w / size);
    let norm = (size * size) as f64;
    let mut out = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        for y in 0..oh {
            for x in 0..ow {
                let mut acc = 0.0;
                for dy in 0..size {
                    for dx in 0..size {
                        acc += input[(ch * h + y * size + dy) * w + x * size + dx];
                    }
                }
                out.push(acc / norm);
            }
        }
    }
    out
}
