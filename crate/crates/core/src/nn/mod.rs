//! Reference ANN: layers, exact forward pass, batch-norm folding, activation
//! statistics, weight files and a small MLP trainer.

mod fold;
mod io;
mod layer;
mod stats;
mod tensor;
mod train;

use rayon::prelude::*;

use crate::{Error, Result};

pub use fold::fold_batchnorm;
pub use io::{load_network, save_network, save_network_as, Dtype, MANIFEST_FILE, WEIGHTS_FILE};
pub(crate) use io::{read_manifest_extras, write_with_extras, ManifestExtras};
pub use layer::{LayerKind, LayerSpec, Padding};
pub use stats::{activation_stats, Histogram, HistogramSpec, LayerStats};
pub use tensor::Tensor;
pub use train::{train_mlp, EpochRecord, MlpArch, TrainConfig, TrainOutcome, TrainReport};

/// An ordered stack of layers with validated shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    layers: Vec<LayerSpec>,
    input_shape: Vec<usize>,
    class_count: usize,
    shapes: Vec<Vec<usize>>,
}

/// Result of [`NetworkSpec::forward`].
#[derive(Debug, Clone, PartialEq)]
pub struct Forward {
    pub logits: Tensor,
    /// Per-layer values before the activation, when requested.
    pub pre_activations: Option<Vec<Tensor>>,
}

/// Per-layer values of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerValues {
    pub pre_activations: Vec<Vec<f64>>,
    pub outputs: Vec<Vec<f64>>,
}

/// Class predicted from a logit vector. A single logit is read as a binary
/// classifier: class 1 when it is non-negative.
pub fn predict(logits: &[f64]) -> usize {
    if logits.len() == 1 {
        return usize::from(logits[0] >= 0.0);
    }
    let mut best = 0;
    for (i, &v) in logits.iter().enumerate() {
        if v > logits[best] {
            best = i;
        }
    }
    best
}

impl NetworkSpec {
    pub fn new(layers: Vec<LayerSpec>, input_shape: Vec<usize>, class_count: usize) -> Result<Self> {
        if input_shape.is_empty() || input_shape.contains(&0) {
            return Err(Error::Shape(format!("invalid input shape {input_shape:?}")));
        }
        let mut shapes: Vec<Vec<usize>> = Vec::with_capacity(layers.len());
        for layer in &layers {
            let input = shapes.last().unwrap_or(&input_shape);
            let out = layer.output_shape(input, &shapes)?;
            shapes.push(out);
        }
        let out = shapes.last().unwrap_or(&input_shape);
        if out.iter().product::<usize>() != class_count {
            return Err(Error::Shape(format!(
                "network output {out:?} does not hold {class_count} classes"
            )));
        }
        Ok(Self {
            layers,
            input_shape,
            class_count,
            shapes,
        })
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    /// Output shape of each layer.
    pub fn layer_shapes(&self) -> &[Vec<usize>] {
        &self.shapes
    }

    /// Input shape of layer `i`.
    pub fn layer_input_shape(&self, i: usize) -> &[usize] {
        if i == 0 {
            &self.input_shape
        } else {
            &self.shapes[i - 1]
        }
    }

    pub fn into_layers(self) -> Vec<LayerSpec> {
        self.layers
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(LayerSpec::parameter_count).sum()
    }

    /// Number of scalar outputs of layers whose activation is not the
    /// identity.
    pub fn activation_neuron_count(&self) -> usize {
        self.layers
            .iter()
            .zip(&self.shapes)
            .filter(|(l, _)| !l.activation.is_linear())
            .map(|(_, s)| s.iter().product::<usize>())
            .sum()
    }

    pub(crate) fn check_input(&self, input: &Tensor) -> Result<()> {
        if input.shape() != self.input_shape.as_slice() {
            return Err(Error::Shape(format!(
                "input shape {:?} does not match network input {:?}",
                input.shape(),
                self.input_shape
            )));
        }
        Ok(())
    }

    /// Pre-activations and outputs of every layer for one sample.
    pub fn layer_values(&self, input: &Tensor) -> Result<LayerValues> {
        self.check_input(input)?;
        let mut pre_activations = Vec::with_capacity(self.layers.len());
        let mut outputs: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let x = outputs.last().map_or(input.data(), Vec::as_slice);
            let pre = layer.pre_activation(x, self.layer_input_shape(i), &outputs);
            let act = layer.activation;
            let out = if act.is_linear() {
                pre.clone()
            } else {
                pre.iter().map(|&v| act.eval(v)).collect()
            };
            pre_activations.push(pre);
            outputs.push(out);
        }
        Ok(LayerValues {
            pre_activations,
            outputs,
        })
    }

    /// Exact forward pass of one sample of shape `input_shape`.
    pub fn forward(&self, input: &Tensor, record_preactivations: bool) -> Result<Forward> {
        let values = self.layer_values(input)?;
        let out_shape = self.shapes.last().unwrap_or(&self.input_shape).clone();
        let logits_data = values
            .outputs
            .last()
            .cloned()
            .unwrap_or_else(|| input.data().to_vec());
        let logits = Tensor::new(out_shape, logits_data)?;
        let pre_activations = if record_preactivations {
            Some(
                values
                    .pre_activations
                    .into_iter()
                    .zip(&self.shapes)
                    .map(|(d, s)| Tensor::new(s.clone(), d))
                    .collect::<Result<_>>()?,
            )
        } else {
            None
        };
        Ok(Forward {
            logits,
            pre_activations,
        })
    }

    /// Logits for every sample of a batch `[N, ..input_shape]`, in parallel.
    pub fn forward_batch(&self, batch: &Tensor) -> Result<Vec<Vec<f64>>> {
        self.check_batch(batch)?;
        (0..batch.batch_len())
            .into_par_iter()
            .map(|i| Ok(self.forward(&batch.sample_tensor(i), false)?.logits.into_data()))
            .collect()
    }

    pub(crate) fn check_batch(&self, batch: &Tensor) -> Result<()> {
        if batch.sample_shape() != self.input_shape.as_slice() {
            return Err(Error::Shape(format!(
                "batch samples have shape {:?}, network expects {:?}",
                batch.sample_shape(),
                self.input_shape
            )));
        }
        Ok(())
    }

    /// Fraction of samples whose [`predict`]ed class equals the label.
    pub fn accuracy(&self, batch: &Tensor, labels: &[usize]) -> Result<f64> {
        if labels.len() != batch.batch_len() || labels.is_empty() {
            return Err(Error::Shape(format!(
                "{} samples but {} labels",
                batch.batch_len(),
                labels.len()
            )));
        }
        let logits = self.forward_batch(batch)?;
        let hits = logits
            .iter()
            .zip(labels)
            .filter(|(l, &y)| predict(l) == y)
            .count();
        Ok(hits as f64 / labels.len() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fs::ActivationKind;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn identity_dense_relu() {
        let layer = LayerSpec::dense(t(&[2, 2], &[1., 0., 0., 1.]), t(&[2], &[0., 0.]), ActivationKind::Relu);
        let net = NetworkSpec::new(vec![layer], vec![2], 2).unwrap();
        let out = net.forward(&t(&[2], &[1., -1.]), true).unwrap();
        assert_eq!(out.logits.data(), &[1., 0.]);
        assert_eq!(out.pre_activations.unwrap()[0].data(), &[1., -1.]);
    }

    #[test]
    fn one_by_one_conv() {
        let conv = LayerKind::Conv2d {
            weights: t(&[1, 1, 1, 1], &[2.]),
            bias: t(&[1], &[0.]),
            stride: 1,
            padding: Padding::Valid,
        };
        let net = NetworkSpec::new(vec![LayerSpec::new(conv, ActivationKind::Identity)], vec![1, 2, 2], 4).unwrap();
        let out = net.forward(&t(&[1, 2, 2], &[1.; 4]), false).unwrap();
        assert_eq!(out.logits.data(), &[2.; 4]);
    }

    #[test]
    fn shape_errors() {
        let layer = LayerSpec::dense(t(&[2, 3], &[0.; 6]), t(&[2], &[0.; 2]), ActivationKind::Relu);
        assert!(NetworkSpec::new(vec![layer.clone()], vec![2], 2).is_err());
        assert!(NetworkSpec::new(vec![layer.clone()], vec![3], 5).is_err());
        let net = NetworkSpec::new(vec![layer], vec![3], 2).unwrap();
        assert!(net.forward(&t(&[2], &[0.; 2]), false).is_err());
        let bad_res = LayerSpec::new(LayerKind::ResidualAdd { source: 0 }, ActivationKind::Identity);
        assert!(NetworkSpec::new(vec![bad_res], vec![3], 3).is_err());
    }

    #[test]
    fn predict_rules() {
        assert_eq!(predict(&[0.1, 0.3, -1.0]), 1);
        assert_eq!(predict(&[0.3, 0.3]), 0);
        assert_eq!(predict(&[0.0]), 1);
        assert_eq!(predict(&[-0.1]), 0);
    }
}
