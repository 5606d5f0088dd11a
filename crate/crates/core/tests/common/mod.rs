#![allow(dead_code)]

use fewspike::fs::ActivationKind;
use fewspike::nn::{LayerKind, LayerSpec, NetworkSpec, Padding, Tensor};
use rand::Rng;

pub fn rand_tensor(rng: &mut impl Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(lo..hi)).collect()).unwrap()
}

pub fn dense(rng: &mut impl Rng, n_in: usize, n_out: usize, act: ActivationKind) -> LayerSpec {
    let bound = (3.0 / n_in as f64).sqrt();
    LayerSpec::dense(
        rand_tensor(rng, &[n_out, n_in], -bound, bound),
        rand_tensor(rng, &[n_out], -0.5, 0.5),
        act,
    )
}

pub fn conv(
    rng: &mut impl Rng,
    c_in: usize,
    c_out: usize,
    k: usize,
    stride: usize,
    padding: Padding,
    act: ActivationKind,
) -> LayerSpec {
    let bound = (3.0 / (c_in * k * k) as f64).sqrt();
    LayerSpec::new(
        LayerKind::Conv2d {
            weights: rand_tensor(rng, &[c_out, c_in, k, k], -bound, bound),
            bias: rand_tensor(rng, &[c_out], -0.5, 0.5),
            stride,
            padding,
        },
        act,
    )
}

pub fn batchnorm(rng: &mut impl Rng, c: usize, act: ActivationKind) -> LayerSpec {
    LayerSpec::new(
        LayerKind::BatchNorm {
            gamma: rand_tensor(rng, &[c], 0.5, 1.5),
            beta: rand_tensor(rng, &[c], -0.5, 0.5),
            mean: rand_tensor(rng, &[c], -0.5, 0.5),
            var: rand_tensor(rng, &[c], 0.2, 2.0),
            eps: 1e-5,
        },
        act,
    )
}

pub fn pick_act(rng: &mut impl Rng) -> ActivationKind {
    use ActivationKind::*;
    [Relu, Silu, Sigmoid][rng.gen_range(0..3)]
}

/// Pushes `affine` with an identity activation plus a batch-norm carrying
/// `act`, or, one time in four, `affine` with `act` and no batch-norm.
fn block(rng: &mut impl Rng, layers: &mut Vec<LayerSpec>, mut affine: LayerSpec, channels: usize) {
    let act = pick_act(rng);
    if rng.gen_bool(0.75) {
        affine.activation = ActivationKind::Identity;
        layers.push(affine);
        layers.push(batchnorm(rng, channels, act));
    } else {
        affine.activation = act;
        layers.push(affine);
    }
}

/// conv (+bn), 1x1 conv (+bn), flatten, dense (+bn), dense.
/// Input `[2, 6, 6]`, 5 classes.
pub fn random_bn_net(rng: &mut impl Rng) -> NetworkSpec {
    let mut layers = Vec::new();
    let (c1, c2) = (rng.gen_range(1..=4), rng.gen_range(1..=4));
    let stride = rng.gen_range(1..=2);
    let side = 6 / stride;
    let first = conv(rng, 2, c1, 3, stride, Padding::Same, ActivationKind::Identity);
    block(rng, &mut layers, first, c1);
    let pointwise = conv(rng, c1, c2, 1, 1, Padding::Valid, ActivationKind::Identity);
    block(rng, &mut layers, pointwise, c2);
    layers.push(LayerSpec::new(LayerKind::Flatten, ActivationKind::Identity));
    let hidden = rng.gen_range(2..=8);
    let fc = dense(rng, c2 * side * side, hidden, ActivationKind::Identity);
    block(rng, &mut layers, fc, hidden);
    layers.push(dense(rng, hidden, 5, ActivationKind::Identity));
    NetworkSpec::new(layers, vec![2, 6, 6], 5).unwrap()
}

/// Dense chains, some layers with identity activation, sometimes with a
/// residual add around a ReLU layer. Input `[6]`, 3 classes.
pub fn random_dense_chain(rng: &mut impl Rng) -> NetworkSpec {
    let mut layers = Vec::new();
    let mut width = 6;
    for _ in 0..rng.gen_range(2..=5) {
        let out = rng.gen_range(2..=7);
        let act = if rng.gen_bool(0.5) {
            ActivationKind::Identity
        } else {
            pick_act(rng)
        };
        layers.push(dense(rng, width, out, act));
        width = out;
    }
    if rng.gen_bool(0.5) {
        let source = layers.len() - 1;
        layers.push(dense(rng, width, width, ActivationKind::Relu));
        layers.push(LayerSpec::new(LayerKind::ResidualAdd { source }, ActivationKind::Identity));
    }
    layers.push(dense(rng, width, 4, ActivationKind::Identity));
    layers.push(dense(rng, 4, 3, ActivationKind::Identity));
    NetworkSpec::new(layers, vec![6], 3).unwrap()
}

/// conv chains where 3x3 convs feed 1x1 convs. Input `[2, 5, 5]`.
pub fn random_conv_chain(rng: &mut impl Rng) -> NetworkSpec {
    let c1 = rng.gen_range(1..=3);
    let c2 = rng.gen_range(1..=3);
    let stride = rng.gen_range(1..=2);
    let padding = if rng.gen_bool(0.5) { Padding::Same } else { Padding::Valid };
    let act = pick_act(rng);
    let layers = vec![
        conv(rng, 2, c1, 3, stride, padding, ActivationKind::Identity),
        conv(rng, c1, c2, 1, 1, Padding::Valid, ActivationKind::Identity),
        conv(rng, c2, 2, 1, 1, Padding::Valid, act),
        LayerSpec::new(LayerKind::Flatten, ActivationKind::Identity),
    ];
    let side = match padding {
        Padding::Same => 5usize.div_ceil(stride),
        Padding::Valid => (5 - 3) / stride + 1,
    };
    let n = 2 * side * side;
    NetworkSpec::new(layers, vec![2, 5, 5], n).unwrap()
}

pub fn rel_close(a: &[f64], b: &[f64], rel: f64) -> bool {
    let scale = a.iter().chain(b).fold(0.0f64, |m, v| m.max(v.abs()));
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= rel * scale)
}

pub fn random_input(rng: &mut impl Rng, shape: &[usize]) -> Tensor {
    rand_tensor(rng, shape, -2.0, 2.0)
}

pub fn idx_file(magic: u32, dims: &[u32], payload: &[u8]) -> Vec<u8> {
    let mut v = magic.to_be_bytes().to_vec();
    for d in dims {
        v.extend(d.to_be_bytes());
    }
    v.extend(payload);
    v
}

pub fn cifar_record(label: u8, seed: u8) -> Vec<u8> {
    let mut r = vec![label];
    r.extend((0..3072).map(|i| (i as u8).wrapping_mul(7).wrapping_add(seed)));
    r
}

/// A corrupt input, the loader's result and the diagnostic it must carry.
pub struct CorruptCase {
    pub name: &'static str,
    pub result: fewspike::Result<fewspike::data::Dataset>,
    pub offset: u64,
    pub needle: &'static str,
}

impl CorruptCase {
    /// Whether the load failed with a format error at the expected offset
    /// whose message contains the expected text.
    pub fn diagnosed(&self) -> bool {
        match &self.result {
            Err(fewspike::Error::Format { offset, msg, .. }) => *offset == self.offset && msg.contains(self.needle),
            _ => false,
        }
    }
}

/// Seven corrupt MNIST pairs and three corrupt CIFAR-10 files written to `dir`.
pub fn corrupt_cases(dir: &std::path::Path) -> Vec<CorruptCase> {
    use fewspike::data::{load_cifar10, load_mnist};
    let write = |name: &str, bytes: &[u8]| {
        let p = dir.join(name);
        std::fs::write(&p, bytes).unwrap();
        p
    };
    let good_images = write("good-images", &idx_file(0x803, &[2, 2, 2], &[0, 64, 128, 255, 1, 2, 3, 4]));
    let good_labels = write("good-labels", &idx_file(0x801, &[2], &[3, 9]));
    let mnist = |images: &std::path::Path, labels: &std::path::Path| load_mnist(images, labels);

    let mut cases = Vec::new();
    let p = write("bad-image-magic", &idx_file(0x802, &[2, 2, 2], &[0; 8]));
    cases.push(CorruptCase {
        name: "mnist image magic",
        result: mnist(&p, &good_labels),
        offset: 0,
        needle: "expected image magic 0x00000803, found 0x00000802",
    });
    let p = write("bad-label-magic", &idx_file(0x803, &[2], &[0; 2]));
    cases.push(CorruptCase {
        name: "mnist label magic",
        result: mnist(&good_images, &p),
        offset: 0,
        needle: "expected label magic 0x00000801",
    });
    let p = write("short-header", &idx_file(0x803, &[2], &[]));
    cases.push(CorruptCase {
        name: "mnist truncated header",
        result: mnist(&p, &good_labels),
        offset: 8,
        needle: "truncated header",
    });
    let p = write("short-payload", &idx_file(0x803, &[2, 2, 2], &[0; 7]));
    cases.push(CorruptCase {
        name: "mnist truncated payload",
        result: mnist(&p, &good_labels),
        offset: 23,
        needle: "header promises 8 bytes, found 7",
    });
    let p = write("trailing", &idx_file(0x803, &[2, 2, 2], &[0; 9]));
    cases.push(CorruptCase {
        name: "mnist trailing bytes",
        result: mnist(&p, &good_labels),
        offset: 24,
        needle: "1 trailing bytes",
    });
    let p = write("count-mismatch", &idx_file(0x801, &[3], &[1, 2, 3]));
    cases.push(CorruptCase {
        name: "mnist count mismatch",
        result: mnist(&good_images, &p),
        offset: 4,
        needle: "count mismatch: 3 labels for 2 images",
    });
    let p = write("label-range", &idx_file(0x801, &[2], &[4, 10]));
    cases.push(CorruptCase {
        name: "mnist label range",
        result: mnist(&good_images, &p),
        offset: 9,
        needle: "label 10 out of range 0..9",
    });

    let p = write("empty.bin", &[]);
    cases.push(CorruptCase {
        name: "cifar empty file",
        result: load_cifar10(&[p]),
        offset: 0,
        needle: "empty file",
    });
    let mut bytes = cifar_record(1, 0);
    bytes.extend(&cifar_record(2, 1)[..100]);
    let p = write("partial.bin", &bytes);
    cases.push(CorruptCase {
        name: "cifar partial record",
        result: load_cifar10(&[p]),
        offset: 3073,
        needle: "file length 3173 is not a multiple of the 3073-byte record",
    });
    let mut bytes = cifar_record(1, 0);
    bytes.extend(cifar_record(11, 1));
    let p = write("label.bin", &bytes);
    cases.push(CorruptCase {
        name: "cifar label range",
        result: load_cifar10(&[p]),
        offset: 3073,
        needle: "label 11 out of range 0..9 in record 1",
    });
    cases
}
