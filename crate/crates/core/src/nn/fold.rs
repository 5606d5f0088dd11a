use super::{LayerKind, LayerSpec, NetworkSpec, Tensor};
use crate::fs::ActivationKind;
use crate::{Error, Result};

/// Rescales `weights`/`bias` of an affine layer per output channel.
fn fold_into(weights: &Tensor, bias: &Tensor, scale: &[f64], shift: &[f64]) -> Result<(Tensor, Tensor)> {
    let per_channel = weights.len() / scale.len();
    let w = weights
        .data()
        .iter()
        .enumerate()
        .map(|(i, &v)| v * scale[i / per_channel])
        .collect();
    let b = bias
        .data()
        .iter()
        .zip(scale.iter().zip(shift))
        .map(|(&b, (&s, &t))| b * s + t)
        .collect();
    Ok((
        Tensor::new(weights.shape().to_vec(), w)?,
        Tensor::new(bias.shape().to_vec(), b)?,
    ))
}

/// Removes every batch-norm layer by folding it into the dense or conv layer
/// directly before it. The folded layer takes over the batch-norm's
/// activation; residual references are renumbered.
pub fn fold_batchnorm(net: &NetworkSpec) -> Result<NetworkSpec> {
    let src = net.layers();
    let referenced: Vec<usize> = src
        .iter()
        .filter_map(|l| match l.kind {
            LayerKind::ResidualAdd { source } => Some(source),
            _ => None,
        })
        .collect();

    let mut out: Vec<LayerSpec> = Vec::with_capacity(src.len());
    let mut index_map: Vec<Option<usize>> = Vec::with_capacity(src.len());
    for (i, layer) in src.iter().enumerate() {
        let LayerKind::BatchNorm {
            gamma,
            beta,
            mean,
            var,
            eps,
        } = &layer.kind
        else {
            out.push(layer.clone());
            index_map.push(Some(out.len() - 1));
            continue;
        };
        let orphan = |why: &str| {
            Err(Error::invalid(
                "batch-norm placement",
                format!("layer {i} cannot be folded: {why}"),
            ))
        };
        let Some(prev) = i.checked_sub(1).map(|p| &src[p]) else {
            return orphan("it is the first layer");
        };
        if !prev.kind.is_affine() || index_map[i - 1].is_none() {
            return orphan("it does not directly follow a dense or conv2d layer");
        }
        if prev.activation != ActivationKind::Identity {
            return orphan("the preceding layer applies an activation");
        }
        if referenced.contains(&(i - 1)) {
            return orphan("the preceding layer's output is used by a residual add");
        }

        let scale: Vec<f64> = gamma
            .data()
            .iter()
            .zip(var.data())
            .map(|(&g, &v)| g / (v + eps).sqrt())
            .collect();
        let shift: Vec<f64> = beta
            .data()
            .iter()
            .zip(mean.data().iter().zip(&scale))
            .map(|(&b, (&m, &s))| b - m * s)
            .collect();
        let target = out.last_mut().expect("previous layer exists");
        target.kind = match &target.kind {
            LayerKind::Dense { weights, bias } => {
                let (weights, bias) = fold_into(weights, bias, &scale, &shift)?;
                LayerKind::Dense { weights, bias }
            }
            LayerKind::Conv2d {
                weights,
                bias,
                stride,
                padding,
            } => {
                let (weights, bias) = fold_into(weights, bias, &scale, &shift)?;
                LayerKind::Conv2d {
                    weights,
                    bias,
                    stride: *stride,
                    padding: *padding,
                }
            }
            _ => unreachable!("checked affine above"),
        };
        target.activation = layer.activation;
        index_map.push(index_map[i - 1]);
        index_map[i - 1] = None;
    }

    for layer in &mut out {
        if let LayerKind::ResidualAdd { source } = &mut layer.kind {
            *source = index_map[*source].ok_or_else(|| {
                Error::invalid("batch-norm placement", format!("residual source {source} was folded away"))
            })?;
        }
    }
    NetworkSpec::new(out, net.input_shape().to_vec(), net.class_count())
}
