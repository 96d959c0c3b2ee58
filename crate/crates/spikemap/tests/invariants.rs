//! Property tests for the documented invariants: NCS recurrence vs direct
//! summation, SAM gating and linearity, distribution normalization,
//! localization error bounds, variance algebra, LIF conservation, and the
//! attack's norm bound.

use proptest::prelude::*;
use spikemap::eval::{
    cross_entropy, entropy, heatmap_variance, localization_error, normalize_to_distribution,
    perturb_by_sign,
};
use spikemap::interpret::{ncs_direct, sam_compute, Heatmap, NcsState};
use spikemap::kernels::{conv2d_forward, linear_forward};
use spikemap::snn::{lif_step, LifParams, SpikeRecord};
use spikemap::tensor::Tensor;
use spikemap::train::bptt_step;
use spikemap::Tensor64;

fn spike_seq() -> impl Strategy<Value = Vec<bool>> {
    prop::collection::vec(prop::bool::ANY, 1..60)
}

fn gammas() -> impl Strategy<Value = f64> {
    prop::sample::select(vec![0.0, 0.1, 0.25, 0.5, 1.0, 2.0])
}

proptest! {
    #[test]
    fn ncs_recurrence_equals_direct_sum(seq in spike_seq(), gamma in gammas()) {
        let mut state = NcsState::new(&[1], gamma).unwrap();
        for t in 0..seq.len() {
            // state currently holds the score for step t (strictly earlier spikes)
            let times: Vec<usize> = seq[..t]
                .iter()
                .enumerate()
                .filter_map(|(i, &s)| s.then_some(i))
                .collect();
            let direct = ncs_direct(&times, t, gamma).unwrap();
            prop_assert!((state.scores().data()[0] - direct).abs() < 1e-9,
                "t={} recurrence {} direct {}", t, state.scores().data()[0], direct);
            let frame = Tensor::from_vec(&[1], vec![if seq[t] { 1.0 } else { 0.0 }]).unwrap();
            state.advance(&frame).unwrap();
        }
    }

    #[test]
    fn sam_maps_are_gated_by_current_spikes(
        frames in prop::collection::vec(prop::collection::vec(prop::bool::ANY, 8), 2..12),
        gamma in gammas(),
    ) {
        // two channels of 2x2, spikes[t] laid out [1,2,2,2]
        let record = synthetic_record(&frames);
        let maps = sam_compute(&record, 0, gamma).unwrap();
        prop_assert_eq!(maps.len(), frames.len());
        for (t, map) in maps.iter().enumerate() {
            for (i, &v) in map.values.data().iter().enumerate() {
                prop_assert!(v >= 0.0);
                let spiked_now = frames[t][i] || frames[t][4 + i];
                if !spiked_now {
                    prop_assert_eq!(v, 0.0, "t={} pixel {} has value {} with no spike", t, i, v);
                }
            }
        }
    }

    #[test]
    fn sam_at_gamma_zero_counts_earlier_spikes(
        frames in prop::collection::vec(prop::collection::vec(prop::bool::ANY, 8), 2..12),
    ) {
        let record = synthetic_record(&frames);
        let maps = sam_compute(&record, 0, 0.0).unwrap();
        for (t, map) in maps.iter().enumerate() {
            for pix in 0..4 {
                let mut expected = 0.0;
                for k in 0..2 {
                    let now = frames[t][k * 4 + pix];
                    if now {
                        let count = frames[..t].iter().filter(|f| f[k * 4 + pix]).count();
                        expected += count as f64;
                    }
                }
                prop_assert!((map.values.data()[pix] - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn duplicating_a_channel_doubles_the_map(
        frames in prop::collection::vec(prop::collection::vec(prop::bool::ANY, 4), 2..10),
        gamma in gammas(),
    ) {
        // one channel vs the same channel twice
        let single: Vec<Vec<bool>> = frames.clone();
        let doubled: Vec<Vec<bool>> = frames.iter().map(|f| {
            let mut d = f.clone();
            d.extend_from_slice(f);
            d
        }).collect();
        let rec1 = synthetic_record_channels(&single, 1);
        let rec2 = synthetic_record_channels(&doubled, 2);
        let m1 = sam_compute(&rec1, 0, gamma).unwrap();
        let m2 = sam_compute(&rec2, 0, gamma).unwrap();
        for (a, b) in m1.iter().zip(m2.iter()) {
            for (x, y) in a.values.data().iter().zip(b.values.data().iter()) {
                prop_assert!((2.0 * x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn normalization_yields_a_distribution_and_ignores_scale(
        vals in prop::collection::vec(0.0f64..50.0, 1..40),
        scale in 1e-3f64..1e3,
    ) {
        let t = Tensor::from_vec(&[vals.len()], vals.clone()).unwrap();
        let q = normalize_to_distribution(&t, 1e-8).unwrap();
        let total: f64 = q.data().iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-9);
        prop_assert!(q.data().iter().all(|&v| v >= 0.0));

        let sum: f64 = vals.iter().sum();
        if sum > 1e-6 {
            let scaled = t.scale(scale);
            let qs = normalize_to_distribution(&scaled, 1e-8).unwrap();
            for (a, b) in q.data().iter().zip(qs.data().iter()) {
                prop_assert!((a - b).abs() < 1e-9, "{} vs {}", a, b);
            }
        }
    }

    #[test]
    fn localization_error_never_beats_reference_entropy(
        reference in prop::collection::vec(0.01f64..10.0, 4),
        candidates in prop::collection::vec(prop::collection::vec(0.0f64..10.0, 4), 1..6),
    ) {
        let rmap = Heatmap::new(Tensor::from_vec(&[2, 2], reference).unwrap(), None).unwrap();
        let cmaps: Vec<Heatmap> = candidates
            .into_iter()
            .enumerate()
            .map(|(t, v)| Heatmap::new(Tensor::from_vec(&[2, 2], v).unwrap(), Some(t)).unwrap())
            .collect();
        let res = localization_error(&cmaps, &rmap, 1e-8).unwrap();
        prop_assert!(res.min_error >= res.reference_entropy - 1e-12);
        for &v in &res.per_step {
            prop_assert!(res.min_error <= v + 1e-15);
        }
    }

    #[test]
    fn variance_is_translation_invariant_and_quadratic(
        vals in prop::collection::vec(-5.0f64..5.0, 2..30),
        shift in -10.0f64..10.0,
        scale in -3.0f64..3.0,
    ) {
        let base = Heatmap::new(
            Tensor::from_vec(&[1, vals.len()], vals.iter().map(|v| v + 6.0).collect()).unwrap(),
            None,
        ).unwrap();
        let v0 = heatmap_variance(&base).unwrap();
        let shifted = Heatmap::new(base.values.map(|x| x + shift.abs()), None).unwrap();
        let vs = heatmap_variance(&shifted).unwrap();
        prop_assert!((v0 - vs).abs() < 1e-9 * v0.max(1.0));
        let scaled = Heatmap::new(base.values.map(|x| x * scale.abs()), None).unwrap();
        let vq = heatmap_variance(&scaled).unwrap();
        prop_assert!((vq - scale * scale * v0).abs() < 1e-9 * vq.max(1.0));
    }

    #[test]
    fn non_firing_unit_leak_lif_conserves_charge(
        inputs in prop::collection::vec(-2.0f64..2.0, 1..40),
    ) {
        let params = LifParams { leak: 1.0, threshold: f64::INFINITY, is_output: true };
        let mut u = Tensor64::zeros(&[1]);
        for &x in &inputs {
            let frame = Tensor::from_vec(&[1], vec![x]).unwrap();
            let (spikes, u_new) = lif_step(&u, &frame, &params).unwrap();
            prop_assert_eq!(spikes.data()[0], 0.0);
            u = u_new;
        }
        let total: f64 = inputs.iter().sum();
        prop_assert!((u.data()[0] - total).abs() < 1e-9);
    }

    #[test]
    fn gibbs_inequality_for_cross_entropy(
        p in prop::collection::vec(0.01f64..1.0, 5),
        q in prop::collection::vec(0.01f64..1.0, 5),
    ) {
        let pt = normalize_to_distribution(&Tensor::from_vec(&[5], p).unwrap(), 0.0).unwrap();
        let qt = normalize_to_distribution(&Tensor::from_vec(&[5], q).unwrap(), 0.0).unwrap();
        let ce = cross_entropy(&pt, &qt).unwrap();
        let h = entropy(&pt).unwrap();
        prop_assert!(ce >= h - 1e-12);
    }

    #[test]
    fn perturbation_respects_the_infinity_norm(
        pixels in prop::collection::vec(0.0f64..1.0, 9),
        grads in prop::collection::vec(-1.0f64..1.0, 9),
        eps in 0.0f64..0.2,
    ) {
        let img = Tensor::from_vec(&[1, 3, 3], pixels).unwrap();
        let g = Tensor::from_vec(&[1, 3, 3], grads).unwrap();
        let (adv, _) = perturb_by_sign(&img, &g, eps);
        for (a, x) in adv.data().iter().zip(img.data().iter()) {
            prop_assert!((a - x).abs() <= eps + 1e-15);
            prop_assert!((0.0..=1.0).contains(a));
        }
    }
}

/// Two channels of 2x2 spikes from flat per-step vectors of 8 booleans.
fn synthetic_record(frames: &[Vec<bool>]) -> SpikeRecord {
    synthetic_record_channels(frames, 2)
}

fn synthetic_record_channels(frames: &[Vec<bool>], channels: usize) -> SpikeRecord {
    let t = frames.len();
    let spikes: Vec<Tensor64> = frames
        .iter()
        .map(|f| {
            let data: Vec<f64> = f.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
            Tensor::from_vec(&[1, channels, 2, 2], data).unwrap()
        })
        .collect();
    SpikeRecord {
        time_steps: t,
        input_frames: Vec::new(),
        lif_layers: vec![2],
        spikes: vec![spikes],
        potentials: Vec::new(),
        output_trace: Vec::new(),
        output: Tensor64::zeros(&[1, 2]),
        predictions: vec![0],
    }
}

/// conv2d with 1x1 spatial extent is exactly a linear map (module invariant).
#[test]
fn conv_on_single_pixel_matches_linear() {
    use rand::Rng;
    let mut rng = spikemap::rng::stream_rng(5, &[3]);
    let input: Vec<f64> = (0..6).map(|_| rng.gen::<f64>() - 0.5).collect();
    let weight: Vec<f64> = (0..12).map(|_| rng.gen::<f64>() - 0.5).collect();
    let bias: Vec<f64> = (0..4).map(|_| rng.gen::<f64>() - 0.5).collect();

    let x4 = Tensor::from_vec(&[2, 3, 1, 1], input.clone()).unwrap();
    let k = Tensor::from_vec(&[4, 3, 1, 1], weight.clone()).unwrap();
    let b = Tensor::from_vec(&[4], bias.clone()).unwrap();
    let conv = conv2d_forward(&x4, &k, Some(&b), 1, 0).unwrap();

    let x2 = Tensor::from_vec(&[2, 3], input).unwrap();
    let w = Tensor::from_vec(&[4, 3], weight).unwrap();
    let lin = linear_forward(&x2, &w, Some(&b)).unwrap();

    assert_eq!(conv.shape(), &[2, 4, 1, 1]);
    for (a, b) in conv.data().iter().zip(lin.data().iter()) {
        assert!((a - b).abs() < 1e-14);
    }
}

/// With the surrogate gate closed (beta = 0) no gradient crosses a hidden
/// spike, but the readout path stays exact.
#[test]
fn closed_surrogate_gate_blocks_hidden_gradients() {
    use spikemap::snn::{poisson_encode, LayerSpec, Network, NetworkConfig};
    let cfg = NetworkConfig {
        input: [1, 4, 4],
        classes: 2,
        time_steps: 6,
        beta: 0.0,
        init_seed: 31,
        layers: vec![
            LayerSpec::Conv { out_channels: 3, kernel: 3, stride: 1, padding: 1, bias: true },
            LayerSpec::Lif { leak: 0.9, threshold: 0.05 },
            LayerSpec::Flatten,
            LayerSpec::Linear { out_features: 2, bias: true },
            LayerSpec::Output,
        ],
    };
    let mut net = Network::new(cfg).unwrap();
    let mut rng = spikemap::rng::stream_rng(8, &[4]);
    use rand::Rng;
    let pixels: Vec<f64> = (0..16).map(|_| rng.gen::<f64>() * 255.0).collect();
    let img = Tensor::from_vec(&[1, 4, 4], pixels).unwrap();
    let train = poisson_encode(&img, 6, 11).unwrap();
    let out = bptt_step(&mut net, &[train], &[1]).unwrap();
    let fired: f64 = out.spike_fraction[0].iter().sum();
    assert!(fired > 0.0, "hidden layer never spiked; nothing to block");
    for (name, grad) in &out.grads {
        let l1: f64 = grad.data().iter().map(|v| v.abs()).sum();
        if name.starts_with("layer00.") {
            assert_eq!(l1, 0.0, "{} leaked gradient {}", name, l1);
        }
        if name.starts_with("layer03.") {
            assert!(l1 > 0.0, "{} should receive exact readout gradient", name);
        }
    }
}
