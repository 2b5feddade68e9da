//! Codebook beamforming over a geometric multipath channel.
//!
//! A receiver with an `N_R`-element uniform linear array sweeps a codebook of
//! unit-norm beams; the frequency-domain channel on each OFDM subcarrier is a
//! sum over cyclic-prefix taps and propagation paths of gain × pulse ×
//! steering vector. The per-beam received powers summed over subcarriers give
//! the power profile whose argmax is the ground-truth beam.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;
#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::rng::{complex_normal, substream, Stream};

/// 1-based index into a codebook, matching how beams are reported on disk
/// and in metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BeamIndex(pub usize);

impl BeamIndex {
    /// Zero-based position, e.g. for indexing `Codebook::beam` or class labels.
    pub fn zero_based(self) -> usize {
        self.0 - 1
    }

    pub fn from_zero_based(i: usize) -> Self {
        BeamIndex(i + 1)
    }
}

impl core::fmt::Display for BeamIndex {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ChannelError {
    /// Codebook would not span the array's spatial resolution.
    UndersampledCodebook { n_beams: usize, n_elements: usize },
    /// Subcarrier index outside the configured range.
    IndexError { index: usize, len: usize },
    /// Vector dimensions do not agree.
    ShapeError(String),
    /// An operation that needs at least one entry got none.
    EmptyInput,
}

impl core::fmt::Display for ChannelError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            ChannelError::UndersampledCodebook { n_beams, n_elements } => write!(
                f,
                "codebook of {n_beams} beams undersamples a {n_elements}-element array"
            ),
            ChannelError::IndexError { index, len } => {
                write!(f, "subcarrier {index} out of range (0..{len})")
            }
            ChannelError::ShapeError(msg) => write!(f, "shape mismatch: {msg}"),
            ChannelError::EmptyInput => write!(f, "empty input"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for ChannelError {}

/// Receiver antenna array.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArrayConfig {
    /// Number of array elements (`N_R`).
    pub n_elements: usize,
    /// Element spacing in carrier wavelengths.
    pub element_spacing: f64,
}

impl ArrayConfig {
    pub fn new(n_elements: usize) -> Self {
        ArrayConfig { n_elements, element_spacing: 0.5 }
    }
}

impl Default for ArrayConfig {
    fn default() -> Self {
        ArrayConfig::new(16)
    }
}

/// A fixed table of unit-norm beamforming vectors, indexed 1..=len.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    beams: Vec<Vec<Complex64>>,
}

impl Codebook {
    /// Builds directly from beam vectors. Callers are responsible for norms;
    /// [`make_dft_codebook`] is the usual constructor.
    pub fn from_beams(beams: Vec<Vec<Complex64>>) -> Self {
        Codebook { beams }
    }

    pub fn len(&self) -> usize {
        self.beams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beams.is_empty()
    }

    pub fn beam(&self, index: BeamIndex) -> &[Complex64] {
        &self.beams[index.zero_based()]
    }

    pub fn beams(&self) -> impl Iterator<Item = &[Complex64]> {
        self.beams.iter().map(|b| b.as_slice())
    }

    pub fn n_elements(&self) -> usize {
        self.beams.first().map_or(0, |b| b.len())
    }
}

/// Pulse shape applied to path delays.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PulseKind {
    /// Band-limited `sinc(t / T_s)` (normalized sinc, value 1 at t = 0).
    Sinc,
    /// Rectangular `1[|t| < T_s / 2]`.
    Rect,
}

/// One propagation path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Path {
    pub gain: Complex64,
    /// Propagation delay in seconds.
    pub delay_s: f64,
    /// Azimuth angle of arrival, radians from array broadside.
    pub azimuth_rad: f64,
    /// Elevation angle of arrival, radians.
    pub elevation_rad: f64,
}

/// The parameters that generate one channel realization.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSet {
    pub paths: Vec<Path>,
    /// Cyclic prefix length `C`.
    pub cyclic_prefix_len: usize,
    /// Number of OFDM subcarriers `N`.
    pub n_subcarriers: usize,
    /// Symbol period `T_s` in seconds.
    pub symbol_period_s: f64,
    pub pulse: PulseKind,
}

impl PathSet {
    /// Single-tap, single-subcarrier carrier for the given paths; used by
    /// tests that want the steering geometry without OFDM structure.
    pub fn narrowband(paths: Vec<Path>) -> Self {
        PathSet {
            paths,
            cyclic_prefix_len: 1,
            n_subcarriers: 1,
            symbol_period_s: 1e-5,
            pulse: PulseKind::Sinc,
        }
    }
}

/// Frequency-domain channel: one length-`N_R` vector per subcarrier.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub subcarriers: Vec<Vec<Complex64>>,
}

impl ChannelRealization {
    pub fn n_subcarriers(&self) -> usize {
        self.subcarriers.len()
    }
}

/// Additive measurement-noise model for simulated sweeps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseConfig {
    /// Complex noise variance sigma^2 (>= 0).
    pub variance: f64,
    pub seed: u64,
}

/// Array response `a_R(theta, phi)` for a ULA: element `k` is
/// `exp(-j 2 pi d k sin(az) cos(el)) / sqrt(N_R)`, so the vector always has
/// unit norm.
pub fn steering_vector(cfg: &ArrayConfig, azimuth_rad: f64, elevation_rad: f64) -> Vec<Complex64> {
    let n = cfg.n_elements;
    let scale = 1.0 / (n as f64).sqrt();
    let spatial = cfg.element_spacing * azimuth_rad.sin() * elevation_rad.cos();
    (0..n)
        .map(|k| {
            let phase = -2.0 * PI * spatial * k as f64;
            Complex64::from_polar(scale, phase)
        })
        .collect()
}

/// DFT codebook: conjugated steering vectors at `n_beams` spatial
/// frequencies uniformly covering [-1, 1). With `n_beams == n_elements` the
/// beams are exactly orthogonal; larger counts oversample the same span.
pub fn make_dft_codebook(cfg: &ArrayConfig, n_beams: usize) -> Result<Codebook, ChannelError> {
    if n_beams < cfg.n_elements {
        return Err(ChannelError::UndersampledCodebook {
            n_beams,
            n_elements: cfg.n_elements,
        });
    }
    let n = cfg.n_elements;
    let scale = 1.0 / (n as f64).sqrt();
    let beams = (0..n_beams)
        .map(|i| {
            let u = -1.0 + 2.0 * i as f64 / n_beams as f64;
            (0..n)
                .map(|k| Complex64::from_polar(scale, PI * u * k as f64))
                .collect()
        })
        .collect();
    Ok(Codebook::from_beams(beams))
}

/// Spatial frequency a beam responds to, `2 d sin(az) cos(el)`; beam `i` of a
/// DFT codebook is matched to `u_i = -1 + 2i/|Q|`.
pub fn spatial_frequency(cfg: &ArrayConfig, azimuth_rad: f64, elevation_rad: f64) -> f64 {
    2.0 * cfg.element_spacing * azimuth_rad.sin() * elevation_rad.cos()
}

fn pulse_value(kind: PulseKind, t: f64, symbol_period: f64) -> f64 {
    match kind {
        PulseKind::Sinc => {
            let x = t / symbol_period;
            if x == 0.0 {
                1.0
            } else {
                (PI * x).sin() / (PI * x)
            }
        }
        PulseKind::Rect => {
            if t.abs() < symbol_period / 2.0 {
                1.0
            } else {
                0.0
            }
        }
    }
}

/// Frequency-domain channel vector on subcarrier `n` at symbol `m`:
/// `h_n = sqrt(N_R) * sum_c sum_l gain_l * exp(-j 2 pi n c / N)
///        * p(m T_s - tau_l) * a_R(el_l, az_l)`.
pub fn channel_vector(
    cfg: &ArrayConfig,
    ps: &PathSet,
    subcarrier_n: usize,
    symbol_m: usize,
) -> Result<Vec<Complex64>, ChannelError> {
    if subcarrier_n >= ps.n_subcarriers {
        return Err(ChannelError::IndexError {
            index: subcarrier_n,
            len: ps.n_subcarriers,
        });
    }
    let mut h = vec![Complex64::new(0.0, 0.0); cfg.n_elements];
    let t_sym = symbol_m as f64 * ps.symbol_period_s;
    for c in 0..ps.cyclic_prefix_len {
        let tap =
            Complex64::from_polar(1.0, -2.0 * PI * subcarrier_n as f64 * c as f64 / ps.n_subcarriers as f64);
        for path in &ps.paths {
            let p = pulse_value(ps.pulse, t_sym - path.delay_s, ps.symbol_period_s);
            if p == 0.0 {
                continue;
            }
            let weight = tap * path.gain * p;
            let a = steering_vector(cfg, path.azimuth_rad, path.elevation_rad);
            for (hk, ak) in h.iter_mut().zip(a.iter()) {
                *hk += weight * ak;
            }
        }
    }
    let root_n = (cfg.n_elements as f64).sqrt();
    for hk in &mut h {
        *hk *= root_n;
    }
    Ok(h)
}

/// All subcarrier vectors of one realization (symbol index fixed to 0: one
/// static snapshot per sample).
pub fn realize_channel(cfg: &ArrayConfig, ps: &PathSet) -> ChannelRealization {
    let subcarriers = (0..ps.n_subcarriers)
        .map(|n| channel_vector(cfg, ps, n, 0).expect("subcarrier index in range"))
        .collect();
    ChannelRealization { subcarriers }
}

/// Noise-free expected signal power `|h^T q|^2 * symbol_energy`.
pub fn received_power(
    h: &[Complex64],
    beam: &[Complex64],
    symbol_energy: f64,
) -> Result<f64, ChannelError> {
    if h.len() != beam.len() {
        return Err(ChannelError::ShapeError(format!(
            "channel has {} elements, beam has {}",
            h.len(),
            beam.len()
        )));
    }
    let dot: Complex64 = h.iter().zip(beam.iter()).map(|(a, b)| a * b).sum();
    Ok(dot.norm_sqr() * symbol_energy)
}

/// Per-beam received power summed over subcarriers (unit symbol energy).
pub fn power_profile(ch: &ChannelRealization, cb: &Codebook) -> Result<Vec<f64>, ChannelError> {
    let mut profile = vec![0.0; cb.len()];
    for h in &ch.subcarriers {
        for (entry, beam) in profile.iter_mut().zip(cb.beams()) {
            *entry += received_power(h, beam, 1.0)?;
        }
    }
    Ok(profile)
}

/// Argmax of a power profile; ties break toward the lowest index.
pub fn optimal_beam(profile: &[f64]) -> Result<BeamIndex, ChannelError> {
    if profile.is_empty() {
        return Err(ChannelError::EmptyInput);
    }
    let mut best = 0;
    for (i, &p) in profile.iter().enumerate().skip(1) {
        if p > profile[best] {
            best = i;
        }
    }
    Ok(BeamIndex::from_zero_based(best))
}

/// Adds the squared magnitude of a complex Gaussian draw (variance
/// `noise.variance`) to every beam's power, emulating a measured sweep.
pub fn simulate_measurement(profile: &[f64], noise: &NoiseConfig) -> Vec<f64> {
    if noise.variance == 0.0 {
        return profile.to_vec();
    }
    let mut rng = substream(noise.seed, Stream::Noise, 0);
    profile
        .iter()
        .map(|&p| {
            let (re, im) = complex_normal(&mut rng, noise.variance);
            p + re * re + im * im
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn approx(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn steering_broadside_is_uniform_real() {
        let cfg = ArrayConfig::new(16);
        let a = steering_vector(&cfg, 0.0, 0.0);
        assert_eq!(a.len(), 16);
        for v in a {
            assert!(approx(v.re, 0.25, 1e-15) && approx(v.im, 0.0, 1e-15));
        }
    }

    #[test]
    fn steering_single_element_is_unity() {
        let cfg = ArrayConfig::new(1);
        let a = steering_vector(&cfg, 0.73, -0.2);
        assert_eq!(a.len(), 1);
        assert!(approx(a[0].re, 1.0, 1e-15) && approx(a[0].im, 0.0, 1e-15));
    }

    #[test]
    fn steering_phase_matches_independent_per_element_loop() {
        // At azimuth pi/6, elevation 0: phase of element k is -pi * k * 0.5.
        let cfg = ArrayConfig::new(16);
        let a = steering_vector(&cfg, PI / 6.0, 0.0);
        for (k, v) in a.iter().enumerate() {
            let expected = Complex64::from_polar(0.25, -PI * k as f64 * 0.5);
            assert!(approx((v - expected).norm(), 0.0, 1e-12), "element {k}");
            assert!(approx(v.norm(), 0.25, 1e-12));
        }
    }

    #[test]
    fn dft_codebook_beams_are_unit_norm() {
        let cfg = ArrayConfig::new(16);
        let cb = make_dft_codebook(&cfg, 64).unwrap();
        assert_eq!(cb.len(), 64);
        for beam in cb.beams() {
            let norm: f64 = beam.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
            assert!(approx(norm, 1.0, 1e-12));
        }
        let small = make_dft_codebook(&ArrayConfig::new(2), 4).unwrap();
        for beam in small.beams() {
            let norm: f64 = beam.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
            assert!(approx(norm, 1.0, 1e-12));
        }
    }

    #[test]
    fn critically_sampled_dft_codebook_is_orthogonal() {
        let cfg = ArrayConfig::new(16);
        let cb = make_dft_codebook(&cfg, 16).unwrap();
        for i in 0..16 {
            for j in 0..16 {
                let g: Complex64 = cb
                    .beam(BeamIndex(i + 1))
                    .iter()
                    .zip(cb.beam(BeamIndex(j + 1)).iter())
                    .map(|(a, b)| a.conj() * b)
                    .sum();
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!(approx(g.norm(), expected, 1e-12), "gram[{i}][{j}] = {g}");
            }
        }
    }

    #[test]
    fn undersampled_codebook_is_rejected() {
        let cfg = ArrayConfig::new(16);
        assert_eq!(
            make_dft_codebook(&cfg, 8),
            Err(ChannelError::UndersampledCodebook { n_beams: 8, n_elements: 16 })
        );
    }

    #[test]
    fn single_path_broadside_channel_hand_evaluated() {
        // sqrt(16) * 1 * 1 * 1 * (0.25, ...) = all entries 1.0.
        let cfg = ArrayConfig::new(16);
        let ps = PathSet::narrowband(alloc::vec![Path {
            gain: Complex64::new(1.0, 0.0),
            delay_s: 0.0,
            azimuth_rad: 0.0,
            elevation_rad: 0.0,
        }]);
        let h = channel_vector(&cfg, &ps, 0, 0).unwrap();
        for v in h {
            assert!(approx(v.re, 1.0, 1e-12) && approx(v.im, 0.0, 1e-12));
        }
    }

    #[test]
    fn zero_gains_give_zero_channel() {
        let cfg = ArrayConfig::new(8);
        let ps = PathSet::narrowband(alloc::vec![
            Path {
                gain: Complex64::new(0.0, 0.0),
                delay_s: 0.0,
                azimuth_rad: 0.4,
                elevation_rad: 0.0
            },
            Path {
                gain: Complex64::new(0.0, 0.0),
                delay_s: 1e-7,
                azimuth_rad: -0.4,
                elevation_rad: 0.1
            },
        ]);
        let h = channel_vector(&cfg, &ps, 0, 0).unwrap();
        assert!(h.iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn cyclic_prefix_sum_cancels_at_half_band() {
        // C = 2, n = N/2: the tap sum is 1 + exp(-j pi) = 0, so h = 0.
        // Cross-checked against direct summation of the two taps.
        let cfg = ArrayConfig::new(4);
        let mut ps = PathSet::narrowband(alloc::vec![Path {
            gain: Complex64::new(0.7, -0.3),
            delay_s: 0.0,
            azimuth_rad: 0.2,
            elevation_rad: 0.0,
        }]);
        ps.cyclic_prefix_len = 2;
        ps.n_subcarriers = 8;
        let h = channel_vector(&cfg, &ps, 4, 0).unwrap();
        for v in &h {
            assert!(approx(v.norm(), 0.0, 1e-12));
        }
        let direct: Complex64 = (0..2)
            .map(|c| Complex64::from_polar(1.0, -2.0 * PI * 4.0 * c as f64 / 8.0))
            .sum();
        assert!(approx(direct.norm(), 0.0, 1e-12));
    }

    #[test]
    fn subcarrier_out_of_range_is_an_error() {
        let cfg = ArrayConfig::new(4);
        let ps = PathSet::narrowband(alloc::vec![]);
        assert_eq!(
            channel_vector(&cfg, &ps, 1, 0),
            Err(ChannelError::IndexError { index: 1, len: 1 })
        );
    }

    #[test]
    fn matched_beam_gain_equals_element_count() {
        let cfg = ArrayConfig::new(16);
        let az = 0.31;
        let a = steering_vector(&cfg, az, 0.0);
        let h: Vec<Complex64> = a.iter().map(|v| v * 4.0).collect(); // sqrt(N_R) * a
        let beam: Vec<Complex64> = a.iter().map(|v| v.conj()).collect();
        let p = received_power(&h, &beam, 1.0).unwrap();
        assert!(approx(p, 16.0, 1e-9), "got {p}");
        // Independent direct multiply.
        let dot: Complex64 = h.iter().zip(beam.iter()).map(|(x, y)| x * y).sum();
        assert!(approx(dot.norm_sqr(), p, 1e-12));
    }

    #[test]
    fn orthogonal_beam_and_zero_energy_give_zero_power() {
        let cfg = ArrayConfig::new(16);
        let cb = make_dft_codebook(&cfg, 16).unwrap();
        let h: Vec<Complex64> = cb.beam(BeamIndex(3)).iter().map(|v| v.conj()).collect();
        let p_orth = received_power(&h, cb.beam(BeamIndex(9)), 1.0).unwrap();
        assert!(approx(p_orth, 0.0, 1e-20));
        let p_zero = received_power(&h, cb.beam(BeamIndex(3)), 0.0).unwrap();
        assert_eq!(p_zero, 0.0);
    }

    #[test]
    fn received_power_rejects_mismatched_shapes() {
        let h = alloc::vec![Complex64::new(1.0, 0.0); 4];
        let q = alloc::vec![Complex64::new(1.0, 0.0); 5];
        assert!(matches!(
            received_power(&h, &q, 1.0),
            Err(ChannelError::ShapeError(_))
        ));
    }

    #[test]
    fn profile_peaks_at_beam_nearest_the_path() {
        let cfg = ArrayConfig::new(16);
        let cb = make_dft_codebook(&cfg, 64).unwrap();
        let az = 0.05; // just off broadside
        let ps = PathSet::narrowband(alloc::vec![Path {
            gain: Complex64::new(1.0, 0.0),
            delay_s: 0.0,
            azimuth_rad: az,
            elevation_rad: 0.0,
        }]);
        let ch = realize_channel(&cfg, &ps);
        let profile = power_profile(&ch, &cb).unwrap();
        let best = optimal_beam(&profile).unwrap();
        // Exhaustive independent search for the nearest steering frequency.
        let u = spatial_frequency(&cfg, az, 0.0);
        let mut nearest = 0;
        for i in 0..64 {
            let ui = -1.0 + 2.0 * i as f64 / 64.0;
            let un = -1.0 + 2.0 * nearest as f64 / 64.0;
            if (ui - u).abs() < (un - u).abs() {
                nearest = i;
            }
        }
        assert_eq!(best.zero_based(), nearest);
    }

    #[test]
    fn zero_channel_gives_zero_profile() {
        let cfg = ArrayConfig::new(16);
        let cb = make_dft_codebook(&cfg, 64).unwrap();
        let ch = ChannelRealization {
            subcarriers: alloc::vec![alloc::vec![Complex64::new(0.0, 0.0); 16]; 4],
        };
        let profile = power_profile(&ch, &cb).unwrap();
        assert!(profile.iter().all(|&p| p == 0.0));
    }

    #[test]
    fn permuting_beams_permutes_the_profile() {
        let cfg = ArrayConfig::new(8);
        let cb = make_dft_codebook(&cfg, 16).unwrap();
        let ps = PathSet::narrowband(alloc::vec![Path {
            gain: Complex64::new(0.8, 0.4),
            delay_s: 0.0,
            azimuth_rad: -0.6,
            elevation_rad: 0.05,
        }]);
        let ch = realize_channel(&cfg, &ps);
        let profile = power_profile(&ch, &cb).unwrap();

        let mut beams: Vec<Vec<Complex64>> = cb.beams().map(|b| b.to_vec()).collect();
        beams.rotate_left(5);
        let permuted = Codebook::from_beams(beams);
        let permuted_profile = power_profile(&ch, &permuted).unwrap();
        let mut expected = profile.clone();
        expected.rotate_left(5);
        for (a, b) in permuted_profile.iter().zip(expected.iter()) {
            assert!(approx(*a, *b, 1e-12));
        }
    }

    #[test]
    fn optimal_beam_basic_and_tie_rule() {
        assert_eq!(optimal_beam(&[1.0, 3.0, 2.0]).unwrap(), BeamIndex(2));
        assert_eq!(optimal_beam(&[5.0, 5.0]).unwrap(), BeamIndex(1));
        assert_eq!(optimal_beam(&[]), Err(ChannelError::EmptyInput));
    }

    #[test]
    fn optimal_beam_matches_linear_scan_oracle() {
        use rand::Rng;
        let mut rng = substream(42, Stream::Noise, 9);
        for _ in 0..1000 {
            let profile: Vec<f64> = (0..64).map(|_| rng.gen::<f64>()).collect();
            let got = optimal_beam(&profile).unwrap();
            let mut best = 0usize;
            let mut best_val = f64::NEG_INFINITY;
            for (i, &p) in profile.iter().enumerate() {
                if p > best_val {
                    best_val = p;
                    best = i;
                }
            }
            assert_eq!(got.zero_based(), best);
        }
    }

    #[test]
    fn zero_variance_measurement_is_identity() {
        let profile = alloc::vec![0.5, 1.5, 0.25];
        let noise = NoiseConfig { variance: 0.0, seed: 3 };
        assert_eq!(simulate_measurement(&profile, &noise), profile);
    }

    #[test]
    fn measurement_is_deterministic_per_seed() {
        let profile = alloc::vec![0.5; 32];
        let noise = NoiseConfig { variance: 0.3, seed: 17 };
        let a = simulate_measurement(&profile, &noise);
        let b = simulate_measurement(&profile, &noise);
        assert_eq!(a, b);
        let c = simulate_measurement(&profile, &NoiseConfig { variance: 0.3, seed: 18 });
        assert_ne!(a, c);
    }

    #[test]
    fn measurement_noise_has_expected_mean_power() {
        let profile = alloc::vec![0.0; 100_000];
        let noise = NoiseConfig { variance: 1.0, seed: 5 };
        let noisy = simulate_measurement(&profile, &noise);
        let mean: f64 = noisy.iter().sum::<f64>() / noisy.len() as f64;
        assert!((mean - 1.0).abs() < 0.02, "mean noise power {mean}");
    }
}
