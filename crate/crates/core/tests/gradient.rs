use fewspike::fit::{forward_backward, Region, RegionWeights, SpikeRelaxation};
use fewspike::fs::{ActivationKind, FsParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const REL_TOL: f64 = 1e-4;
const H: f64 = 1e-6;

fn loss(flat: &[f64], xs: &[f64], weights: &RegionWeights, width: f64) -> f64 {
    let p = FsParams::from_flat(flat, ActivationKind::Silu).unwrap();
    forward_backward(xs, &p, &ActivationKind::Silu, weights, width, SpikeRelaxation::Smoothed)
        .unwrap()
        .loss
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[test]
fn bptt_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let weights = RegionWeights::new(vec![
        Region::new("main", vec![[-2.0, 2.0]], 10.0),
        Region::new("outer", vec![[-5.0, -2.0], [2.0, 5.0]], 1.0),
    ])
    .unwrap();
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let k = rng.gen_range(2..=8);
        let width = rng.gen_range(0.3..1.5);
        let t: Vec<f64> = (0..k).map(|_| rng.gen_range(-1.0..2.0)).collect();
        let h: Vec<f64> = (0..k).map(|_| rng.gen_range(0.1..2.0)).collect();
        let d: Vec<f64> = (0..k).map(|_| rng.gen_range(-1.0..2.0)).collect();
        let xs: Vec<f64> = (0..16).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let p = FsParams::new(t, h, d, ActivationKind::Silu).unwrap();

        let analytic = forward_backward(&xs, &p, &ActivationKind::Silu, &weights, width, SpikeRelaxation::Smoothed)
            .unwrap()
            .to_flat();
        let flat = p.to_flat();
        let numeric: Vec<f64> = (0..flat.len())
            .map(|i| {
                let mut up = flat.clone();
                let mut down = flat.clone();
                up[i] += H;
                down[i] -= H;
                (loss(&up, &xs, &weights, width) - loss(&down, &xs, &weights, width)) / (2.0 * H)
            })
            .collect();
        let diff: Vec<f64> = analytic.iter().zip(&numeric).map(|(a, b)| a - b).collect();
        let scale = norm(&analytic).max(norm(&numeric)).max(1e-8);
        let rel = norm(&diff) / scale;
        worst = worst.max(rel);
        assert!(rel <= REL_TOL, "relative error {rel:e} for K={k}, width={width}");
    }
    eprintln!("worst relative error {worst:e}");
}

#[test]
fn hard_and_smoothed_agree_on_loss_far_from_thresholds() {
    // every potential stays more than the width away from each threshold
    let p = FsParams::new(vec![10.0, 10.0], vec![1.0, 1.0], vec![1.0, 1.0], ActivationKind::Silu).unwrap();
    let weights = RegionWeights::new(vec![Region::new("all", vec![[-2.0, 2.0]], 1.0)]).unwrap();
    let xs = [-1.0, 0.0, 1.5];
    let hard = forward_backward(&xs, &p, &ActivationKind::Silu, &weights, 0.5, SpikeRelaxation::Hard).unwrap();
    let soft = forward_backward(&xs, &p, &ActivationKind::Silu, &weights, 0.5, SpikeRelaxation::Smoothed).unwrap();
    assert_eq!(hard.loss, soft.loss);
}
