//! Property tests over the simulation and metric contracts.

use mmbeam_core::channel::{
    make_dft_codebook, optimal_beam, power_profile, realize_channel, steering_vector, ArrayConfig,
    Path, PathSet,
};
use mmbeam_core::model::top_m;
use mmbeam_core::nn::{cross_entropy, masked_global_max, softmax, Tensor};
use num_complex::Complex64;
use proptest::prelude::*;

fn angle() -> impl Strategy<Value = f64> {
    -1.5f64..1.5
}

fn path_strategy() -> impl Strategy<Value = Path> {
    (angle(), -0.5f64..0.5, 0.05f64..2.0, 0.0f64..core::f64::consts::TAU, 0.0f64..2e-6).prop_map(
        |(az, el, mag, phase, delay)| Path {
            gain: Complex64::from_polar(mag, phase),
            delay_s: delay,
            azimuth_rad: az,
            elevation_rad: el,
        },
    )
}

fn path_set() -> impl Strategy<Value = PathSet> {
    proptest::collection::vec(path_strategy(), 1..4).prop_map(|paths| PathSet {
        paths,
        cyclic_prefix_len: 1,
        n_subcarriers: 4,
        symbol_period_s: 1e-5,
        pulse: mmbeam_core::channel::PulseKind::Sinc,
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn steering_vectors_have_unit_norm(az in angle(), el in -1.5f64..1.5, n in 1usize..24) {
        let cfg = ArrayConfig { n_elements: n, element_spacing: 0.5 };
        let v = steering_vector(&cfg, az, el);
        let norm: f64 = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        prop_assert!((norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn codebook_beams_have_unit_norm(n in 1usize..12, extra in 0usize..20) {
        let cfg = ArrayConfig { n_elements: n, element_spacing: 0.5 };
        let cb = make_dft_codebook(&cfg, n + extra).unwrap();
        for beam in cb.beams() {
            let norm: f64 = beam.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
            prop_assert!((norm - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn profile_is_invariant_to_global_phase(ps in path_set(), phase in 0.0f64..core::f64::consts::TAU) {
        let cfg = ArrayConfig::new(8);
        let cb = make_dft_codebook(&cfg, 16).unwrap();
        let ch = realize_channel(&cfg, &ps);
        let base = power_profile(&ch, &cb).unwrap();

        let rotated = mmbeam_core::channel::ChannelRealization {
            subcarriers: ch
                .subcarriers
                .iter()
                .map(|h| h.iter().map(|v| v * Complex64::from_polar(1.0, phase)).collect())
                .collect(),
        };
        let rotated_profile = power_profile(&rotated, &cb).unwrap();
        for (a, b) in base.iter().zip(rotated_profile.iter()) {
            let denom = a.abs().max(1e-30);
            prop_assert!(((a - b).abs() / denom) < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn gain_scaling_squares_the_profile(ps in path_set(), k in 0.1f64..4.0) {
        let cfg = ArrayConfig::new(8);
        let cb = make_dft_codebook(&cfg, 16).unwrap();
        let base = power_profile(&realize_channel(&cfg, &ps), &cb).unwrap();

        let mut scaled_ps = ps.clone();
        for p in &mut scaled_ps.paths {
            p.gain *= k;
        }
        let scaled = power_profile(&realize_channel(&cfg, &scaled_ps), &cb).unwrap();
        for (a, b) in base.iter().zip(scaled.iter()) {
            let expect = a * k * k;
            let denom = expect.abs().max(1e-30);
            prop_assert!(((b - expect).abs() / denom) < 1e-9);
        }
        if base.iter().any(|&p| p > 1e-30) {
            prop_assert_eq!(optimal_beam(&base).unwrap(), optimal_beam(&scaled).unwrap());
        }
    }

    #[test]
    fn softmax_contract(logits in proptest::collection::vec(-30.0f64..30.0, 1..80)) {
        let probs = softmax(&logits);
        let sum: f64 = probs.iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-9);
        prop_assert!(probs.iter().all(|&p| p > 0.0 && p < 1.0 + 1e-12));
        let argmax_l = logits
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        let argmax_p = probs
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        // With ties the argmax may legitimately differ; require equal values.
        prop_assert_eq!(logits[argmax_l], logits[argmax_p]);
    }

    #[test]
    fn cross_entropy_is_nonnegative(mut probs in proptest::collection::vec(1e-6f64..1.0, 2..32), label in 0usize..32) {
        let sum: f64 = probs.iter().sum();
        for p in &mut probs {
            *p /= sum;
        }
        let label = label % probs.len();
        let (loss, _) = cross_entropy(&probs, label).unwrap();
        prop_assert!(loss >= 0.0);
        // Zero loss only when the label carries all the mass.
        if loss == 0.0 {
            prop_assert!(probs[label] >= 1.0 - 1e-12);
        }
    }

    #[test]
    fn masked_max_invariant_under_joint_permutation(
        rows in 2usize..12,
        cols in 1usize..6,
        seed in 0u64..1000,
    ) {
        use rand::Rng;
        let mut rng = mmbeam_core::rng::substream(seed, mmbeam_core::rng::Stream::Noise, 0);
        let data: Vec<f64> = (0..rows * cols).map(|_| rng.gen::<f64>() * 4.0 - 2.0).collect();
        let mask: Vec<bool> = (0..rows).map(|_| rng.gen::<bool>()).collect();
        prop_assume!(mask.iter().any(|&m| m));
        let x = Tensor::from_vec(&[rows, cols], data.clone()).unwrap();
        let base = masked_global_max(&x, Some(&mask)).unwrap();

        let mut perm: Vec<usize> = (0..rows).collect();
        mmbeam_core::rng::shuffle(&mut perm, &mut rng);
        let mut pdata = vec![0.0; rows * cols];
        let mut pmask = vec![false; rows];
        for (dst, &src) in perm.iter().enumerate() {
            pdata[dst * cols..(dst + 1) * cols]
                .copy_from_slice(&data[src * cols..(src + 1) * cols]);
            pmask[dst] = mask[src];
        }
        let px = Tensor::from_vec(&[rows, cols], pdata).unwrap();
        let permuted = masked_global_max(&px, Some(&pmask)).unwrap();
        prop_assert_eq!(base.data(), permuted.data());
    }

    #[test]
    fn top_m_sets_are_nested(probs in proptest::collection::vec(0.0f64..1.0, 2..40)) {
        for m in 1..probs.len() {
            let small = top_m(&probs, m).unwrap();
            let big = top_m(&probs, m + 1).unwrap();
            prop_assert_eq!(&big[..m], &small[..]);
        }
        let all = top_m(&probs, probs.len()).unwrap();
        let mut seen: Vec<usize> = all.iter().map(|b| b.0).collect();
        seen.sort_unstable();
        prop_assert_eq!(seen, (1..=probs.len()).collect::<Vec<_>>());
    }
}
