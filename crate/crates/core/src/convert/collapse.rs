use serde::Serialize;

use crate::fs::ActivationKind;
use crate::nn::{LayerKind, LayerSpec, NetworkSpec, Tensor};
use crate::{Error, Result};

/// What [`collapse_linear`] did, with layer indices of the source network.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CollapseReport {
    /// `(linear layer, layer it was merged into)`.
    pub fused: Vec<(usize, usize)>,
    /// Linear affine layers left in place, with the reason.
    pub skipped: Vec<(usize, String)>,
    pub layers_before: usize,
    pub layers_after: usize,
}

/// `second ∘ first` for two affine layers when the composition is itself a
/// single layer of the supported kinds.
fn compose(first: &LayerKind, second: &LayerKind) -> Option<Result<LayerKind>> {
    match (first, second) {
        (LayerKind::Dense { weights: w1, bias: b1 }, LayerKind::Dense { weights: w2, bias: b2 }) => {
            let (mid, n_in) = (w1.shape()[0], w1.shape()[1]);
            let n_out = w2.shape()[0];
            Some(mix(w2, b1, b2, w1.data(), mid, n_in).and_then(|(w, b)| {
                Ok(LayerKind::Dense {
                    weights: Tensor::new(vec![n_out, n_in], w)?,
                    bias: Tensor::vector(b)?,
                })
            }))
        }
        (
            LayerKind::Conv2d {
                weights: w1,
                bias: b1,
                stride,
                padding,
            },
            LayerKind::Conv2d {
                weights: w2,
                bias: b2,
                stride: 1,
                ..
            },
        ) if w2.shape()[2] == 1 && w2.shape()[3] == 1 => {
            let s1 = w1.shape();
            let mid = s1[0];
            let per_filter = s1[1] * s1[2] * s1[3];
            let out_c = w2.shape()[0];
            Some(mix(w2, b1, b2, w1.data(), mid, per_filter).and_then(|(w, b)| {
                Ok(LayerKind::Conv2d {
                    weights: Tensor::new(vec![out_c, s1[1], s1[2], s1[3]], w)?,
                    bias: Tensor::vector(b)?,
                    stride: *stride,
                    padding: *padding,
                })
            }))
        }
        _ => None,
    }
}

/// `W = W2 W1` and `b = W2 b1 + b2`, where `W2` is read as `[out, mid]` and
/// `W1` as `[mid, cols]`.
fn mix(w2: &Tensor, b1: &Tensor, b2: &Tensor, w1: &[f64], mid: usize, cols: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let w2d = w2.data();
    let out = w2.shape()[0];
    if w2d.len() != out * mid {
        return Err(Error::Shape(format!("cannot compose {mid} channels into {:?}", w2.shape())));
    }
    let mut w = vec![0.0; out * cols];
    let mut b = b2.data().to_vec();
    for o in 0..out {
        for m in 0..mid {
            let a = w2d[o * mid + m];
            for (dst, src) in w[o * cols..(o + 1) * cols].iter_mut().zip(&w1[m * cols..(m + 1) * cols]) {
                *dst += a * src;
            }
            b[o] += a * b1.data()[m];
        }
    }
    Ok((w, b))
}

/// Merges every dense or conv layer with identity activation into the affine
/// layer that follows it, when the pair composes to one layer: dense into
/// dense, and conv into a 1x1 stride-1 conv. Runs collapse repeatedly.
/// Layers whose output feeds a residual add are kept.
pub fn collapse_linear(net: &NetworkSpec) -> Result<(NetworkSpec, CollapseReport)> {
    let src = net.layers();
    let referenced: Vec<usize> = src
        .iter()
        .filter_map(|l| match l.kind {
            LayerKind::ResidualAdd { source } => Some(source),
            _ => None,
        })
        .collect();

    let mut report = CollapseReport {
        layers_before: src.len(),
        ..Default::default()
    };
    let mut out: Vec<LayerSpec> = Vec::with_capacity(src.len());
    // original index -> new index of the layer now producing that value
    let mut index_map: Vec<Option<usize>> = Vec::with_capacity(src.len());
    // original index whose value the last emitted layer produces
    let mut tail: Option<usize> = None;

    for (j, layer) in src.iter().enumerate() {
        let candidate = out.last().filter(|prev| {
            prev.kind.is_affine() && prev.activation == ActivationKind::Identity
        });
        if let (Some(prev), Some(t)) = (candidate, tail) {
            if referenced.contains(&t) {
                report.skipped.push((t, "its output feeds a residual add".into()));
            } else if let Some(kind) = compose(&prev.kind, &layer.kind) {
                let merged = LayerSpec::new(kind?, layer.activation);
                *out.last_mut().unwrap() = merged;
                index_map[t] = None;
                index_map.push(Some(out.len() - 1));
                report.fused.push((t, j));
                tail = Some(j);
                continue;
            } else {
                report.skipped.push((
                    t,
                    format!("no single-layer composition with layer {j} ({})", layer.kind.name()),
                ));
            }
        }
        out.push(layer.clone());
        index_map.push(Some(out.len() - 1));
        tail = Some(j);
    }

    for layer in &mut out {
        if let LayerKind::ResidualAdd { source } = &mut layer.kind {
            *source = index_map[*source].expect("residual sources are never fused away");
        }
    }
    report.layers_after = out.len();
    let collapsed = NetworkSpec::new(out, net.input_shape().to_vec(), net.class_count())?;
    Ok((collapsed, report))
}
