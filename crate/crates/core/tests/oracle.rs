//! Independent brute-force re-derivation of the optimal-beam labels.
//!
//! The oracle below rebuilds the channel vectors, per-beam powers, and the
//! argmax from scratch with its own complex arithmetic, sharing no code with
//! the library path it checks.

use mmbeam_core::channel::{
    make_dft_codebook, optimal_beam, power_profile, realize_channel, ArrayConfig, BeamIndex,
    Codebook, Path, PathSet, PulseKind,
};
use mmbeam_core::rng::{substream, Stream};
use num_complex::Complex64;
use rand::Rng;

#[derive(Clone, Copy)]
struct C(f64, f64);

impl C {
    fn add(self, o: C) -> C {
        C(self.0 + o.0, self.1 + o.1)
    }
    fn mul(self, o: C) -> C {
        C(self.0 * o.0 - self.1 * o.1, self.0 * o.1 + self.1 * o.0)
    }
    fn scale(self, k: f64) -> C {
        C(self.0 * k, self.1 * k)
    }
    fn abs2(self) -> f64 {
        self.0 * self.0 + self.1 * self.1
    }
    fn expj(theta: f64) -> C {
        C(theta.cos(), theta.sin())
    }
}

/// Naive term-by-term evaluation of the channel and the beam-selection
/// objective.
fn brute_force_best_beam(cfg: &ArrayConfig, ps: &PathSet, codebook: &Codebook) -> usize {
    let n_r = cfg.n_elements;
    let scale = 1.0 / (n_r as f64).sqrt();
    let mut best = (0usize, f64::NEG_INFINITY);
    for (i, beam) in codebook.beams().enumerate() {
        let mut objective = 0.0;
        for n in 0..ps.n_subcarriers {
            // h_n, element by element.
            let mut dot = C(0.0, 0.0);
            for k in 0..n_r {
                let mut h_k = C(0.0, 0.0);
                for c in 0..ps.cyclic_prefix_len {
                    for path in &ps.paths {
                        let tap = C::expj(
                            -2.0 * core::f64::consts::PI * n as f64 * c as f64
                                / ps.n_subcarriers as f64,
                        );
                        let pulse = {
                            let x = -path.delay_s / ps.symbol_period_s;
                            match ps.pulse {
                                PulseKind::Sinc => {
                                    if x == 0.0 {
                                        1.0
                                    } else {
                                        (core::f64::consts::PI * x).sin()
                                            / (core::f64::consts::PI * x)
                                    }
                                }
                                PulseKind::Rect => {
                                    if path.delay_s.abs() < ps.symbol_period_s / 2.0 {
                                        1.0
                                    } else {
                                        0.0
                                    }
                                }
                            }
                        };
                        let steer = C::expj(
                            -2.0 * core::f64::consts::PI
                                * cfg.element_spacing
                                * k as f64
                                * path.azimuth_rad.sin()
                                * path.elevation_rad.cos(),
                        )
                        .scale(scale);
                        let gain = C(path.gain.re, path.gain.im);
                        h_k = h_k.add(tap.mul(gain).scale(pulse).mul(steer));
                    }
                }
                h_k = h_k.scale((n_r as f64).sqrt());
                let q = beam[k];
                dot = dot.add(h_k.mul(C(q.re, q.im)));
            }
            objective += dot.abs2();
        }
        if objective > best.1 {
            best = (i, objective);
        }
    }
    best.0
}

fn random_path_set(rng: &mut impl Rng) -> PathSet {
    let n_paths = rng.gen_range(1..=3);
    let paths = (0..n_paths)
        .map(|_| Path {
            gain: Complex64::from_polar(
                rng.gen::<f64>() * 1.5 + 0.05,
                rng.gen::<f64>() * core::f64::consts::TAU,
            ),
            delay_s: rng.gen::<f64>() * 2e-6,
            azimuth_rad: (rng.gen::<f64>() - 0.5) * core::f64::consts::PI,
            elevation_rad: (rng.gen::<f64>() - 0.5) * 0.8,
        })
        .collect();
    PathSet {
        paths,
        cyclic_prefix_len: rng.gen_range(1..=2),
        n_subcarriers: rng.gen_range(1..=8),
        symbol_period_s: 1e-5,
        pulse: PulseKind::Sinc,
    }
}

#[test]
fn optimal_beam_matches_independent_reevaluation_on_100_channels() {
    let cfg = ArrayConfig::new(16);
    let codebook = make_dft_codebook(&cfg, 64).unwrap();
    let mut rng = substream(2024, Stream::Noise, 0);
    for trial in 0..100 {
        let ps = random_path_set(&mut rng);
        let ch = realize_channel(&cfg, &ps);
        let profile = power_profile(&ch, &codebook).unwrap();
        let library = optimal_beam(&profile).unwrap();
        let brute = brute_force_best_beam(&cfg, &ps, &codebook);
        assert_eq!(library, BeamIndex::from_zero_based(brute), "trial {trial}");
    }
}
