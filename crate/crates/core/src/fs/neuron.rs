use super::FsParams;

/// Membrane state of a single FS-neuron during its `K`-step window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FsNeuronState {
    /// Membrane potential `v(t)`.
    pub potential: f64,
    /// Current step `t`, 1-based.
    pub step: usize,
}

impl FsNeuronState {
    /// State at `t = 1` with `v(1) = x`.
    pub fn start(x: f64) -> Self {
        FsNeuronState {
            potential: x,
            step: 1,
        }
    }
}

/// Result of running one neuron for its full window.
#[derive(Debug, Clone, PartialEq)]
pub struct FsOutput {
    /// Decoded output `sum_t d(t) z(t)`.
    pub value: f64,
    pub spikes: Vec<bool>,
    pub spike_count: usize,
}

/// Advances one step: fires when `v(t) >= T(t)` and subtracts `h(t)` on a spike.
///
/// # Panics
///
/// If `state.step` is outside `1..=K`.
#[inline]
pub fn fs_step(state: FsNeuronState, params: &FsParams) -> (FsNeuronState, bool) {
    let k = params.num_steps();
    assert!(
        (1..=k).contains(&state.step),
        "FS step {} outside 1..={k}",
        state.step
    );
    let i = state.step - 1;
    let spike = state.potential >= params.thresholds()[i];
    let potential = if spike {
        state.potential - params.resets()[i]
    } else {
        state.potential
    };
    (
        FsNeuronState {
            potential,
            step: state.step + 1,
        },
        spike,
    )
}

/// Runs all `K` steps from `v(1) = x`.
pub fn fs_simulate(x: f64, params: &FsParams) -> FsOutput {
    let mut state = FsNeuronState::start(x);
    let mut spikes = Vec::with_capacity(params.num_steps());
    let mut value = 0.0;
    for &d in params.output_weights() {
        let (next, spike) = fs_step(state, params);
        if spike {
            value += d;
        }
        spikes.push(spike);
        state = next;
    }
    let spike_count = spikes.iter().filter(|&&s| s).count();
    FsOutput {
        value,
        spikes,
        spike_count,
    }
}

/// Decoded value and spike count without materializing the spike train.
///
/// Bit-identical to [`fs_simulate`]; the simulators call this in their inner loop.
#[inline]
pub fn fs_decode(x: f64, params: &FsParams) -> (f64, u32) {
    let mut v = x;
    let mut value = 0.0;
    let mut count = 0;
    let t = params.thresholds();
    let h = params.resets();
    let d = params.output_weights();
    for i in 0..t.len() {
        if v >= t[i] {
            v -= h[i];
            value += d[i];
            count += 1;
        }
    }
    (value, count)
}

/// Closed form of the analytic ReLU coder: `x` rounded down onto the grid of
/// multiples of `alpha * 2^-K`, saturating at `alpha * (1 - 2^-K)`.
pub fn relu_closed_form(x: f64, num_steps: usize, alpha: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let levels = 2f64.powi(num_steps as i32);
    let quantum = alpha / levels;
    if x >= alpha {
        return alpha - quantum;
    }
    quantum * (x * levels / alpha).floor()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fs::make_relu_params;

    fn relu_k3() -> FsParams {
        make_relu_params(3, 8.0).unwrap()
    }

    #[test]
    fn step_fires_and_resets() {
        let (s, spike) = fs_step(FsNeuronState::start(5.0), &relu_k3());
        assert!(spike);
        assert_eq!(s.potential, 1.0);
        assert_eq!(s.step, 2);
    }

    #[test]
    fn step_below_threshold_keeps_potential() {
        for step in 1..=3 {
            let (s, spike) = fs_step(
                FsNeuronState {
                    potential: -0.5,
                    step,
                },
                &relu_k3(),
            );
            assert!(!spike);
            assert_eq!(s.potential, -0.5);
        }
    }

    #[test]
    fn step_fires_at_threshold() {
        let (s, spike) = fs_step(FsNeuronState::start(4.0), &relu_k3());
        assert!(spike);
        assert_eq!(s.potential, 0.0);
    }

    #[test]
    #[should_panic]
    fn step_out_of_range_panics() {
        fs_step(
            FsNeuronState {
                potential: 0.0,
                step: 4,
            },
            &relu_k3(),
        );
    }

    #[test]
    fn simulate_examples() {
        let out = fs_simulate(5.0, &relu_k3());
        assert_eq!(out.value, 5.0);
        assert_eq!(out.spikes, vec![true, false, true]);
        assert_eq!(out.spike_count, 2);

        let out = fs_simulate(7.9, &relu_k3());
        assert_eq!(out.value, 7.0);
        assert_eq!(out.spikes, vec![true, true, true]);

        for k in [1, 4, 10] {
            let out = fs_simulate(-0.5, &make_relu_params(k, 3.0).unwrap());
            assert_eq!(out.value, 0.0);
            assert_eq!(out.spike_count, 0);
        }
    }

    #[test]
    fn decode_matches_simulate() {
        let p = make_relu_params(6, 10.0).unwrap();
        for i in -20..120 {
            let x = i as f64 * 0.0937;
            let out = fs_simulate(x, &p);
            let (v, n) = fs_decode(x, &p);
            assert_eq!(v.to_bits(), out.value.to_bits());
            assert_eq!(n as usize, out.spike_count);
        }
    }

    #[test]
    fn closed_form_examples() {
        assert_eq!(relu_closed_form(7.9, 3, 8.0), 7.0);
        assert_eq!(relu_closed_form(-3.0, 5, 2.0), 0.0);
        assert_eq!(relu_closed_form(0.0, 5, 2.0), 0.0);
        // saturation
        assert_eq!(relu_closed_form(8.0, 3, 8.0), 7.0);
        assert_eq!(relu_closed_form(1e9, 3, 8.0), 7.0);
        for m in 0..8 {
            assert_eq!(relu_closed_form(m as f64, 3, 8.0), m as f64);
        }
    }
}
