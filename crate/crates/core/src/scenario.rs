//! Labeled synthetic V2I/V2V scenarios.
//!
//! A transmitter vehicle drives a waypoint trajectory past a receiver whose
//! ULA lies along the x-axis with broadside facing +y. Each timestep derives
//! the line-of-sight path (free-space 1/distance gain, geometry-exact
//! angles), optionally adds single-bounce reflections off obstacle faces,
//! labels the best beam through the power-profile oracle, and emulates the
//! three sensors: GPS with Gaussian error, a ray-cast LiDAR, and an
//! orthographic occupancy camera.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;
#[cfg(not(feature = "std"))]
use num_traits::Float;
use rand::Rng;

use crate::channel::{
    make_dft_codebook, optimal_beam, power_profile, realize_channel, simulate_measurement,
    ArrayConfig, BeamIndex, Codebook, NoiseConfig, Path, PathSet, PulseKind,
};
use crate::rng::{normal, substream, Stream};

const SPEED_OF_LIGHT: f64 = 299_792_458.0;
const METERS_PER_DEG_LAT: f64 = 111_320.0;

#[derive(Debug, Clone, PartialEq)]
pub enum ScenarioError {
    InvalidSpec(String),
}

impl core::fmt::Display for ScenarioError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            ScenarioError::InvalidSpec(msg) => write!(f, "invalid scenario spec: {msg}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for ScenarioError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioKind {
    V2I,
    V2V,
}

/// Geodetic reference the local metric frame is anchored to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeoAnchor {
    pub lat_deg: f64,
    pub lon_deg: f64,
}

impl Default for GeoAnchor {
    fn default() -> Self {
        // Urban test range in the US Southwest.
        GeoAnchor { lat_deg: 33.42, lon_deg: -111.93 }
    }
}

/// Axis-aligned box obstacle in scene coordinates (meters).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Obstacle {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Obstacle {
    pub fn new(min: [f64; 3], max: [f64; 3]) -> Self {
        Obstacle { min, max }
    }
}

/// Piecewise-linear path traversed at constant speed; the vehicle parks at
/// the final waypoint once the path is exhausted.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub waypoints: Vec<[f64; 2]>,
    pub speed_mps: f64,
}

impl Trajectory {
    pub fn position_at(&self, time_s: f64) -> [f64; 2] {
        let mut remaining = self.speed_mps * time_s;
        for pair in self.waypoints.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            let seg = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
            if remaining <= seg && seg > 0.0 {
                let f = remaining / seg;
                return [a[0] + f * (b[0] - a[0]), a[1] + f * (b[1] - a[1])];
            }
            remaining -= seg;
        }
        *self.waypoints.last().expect("validated: waypoints non-empty")
    }
}

/// Sensor emulation knobs (all deterministic given the run seed).
#[derive(Debug, Clone, PartialEq)]
pub struct SensorConfig {
    pub anchor: GeoAnchor,
    /// RMS horizontal GPS error in meters.
    pub gps_noise_std_m: f64,
    pub lidar_rays: usize,
    pub lidar_max_range_m: f64,
    pub image_width: usize,
    pub image_height: usize,
    /// Half-extent of the camera's top-down view window, meters.
    pub view_half_extent_m: f64,
}

impl Default for SensorConfig {
    fn default() -> Self {
        SensorConfig {
            anchor: GeoAnchor::default(),
            gps_noise_std_m: 1.0,
            lidar_rays: 192,
            lidar_max_range_m: 120.0,
            image_width: 224,
            image_height: 224,
            view_half_extent_m: 100.0,
        }
    }
}

/// Channel-model knobs for label generation.
#[derive(Debug, Clone, PartialEq)]
pub struct RadioConfig {
    pub n_subcarriers: usize,
    pub cyclic_prefix_len: usize,
    pub symbol_period_s: f64,
    pub pulse: PulseKind,
    /// Single-bounce reflections kept per sample (shortest paths first).
    pub max_reflections: usize,
    /// Linear amplitude loss applied to reflected paths.
    pub reflection_loss: f64,
    /// Opt-in measurement noise on the recorded profile; labels always
    /// follow the recorded profile, so zero keeps them oracle-exact.
    pub measurement_noise_variance: f64,
}

impl Default for RadioConfig {
    fn default() -> Self {
        RadioConfig {
            n_subcarriers: 16,
            cyclic_prefix_len: 1,
            symbol_period_s: 1e-5,
            pulse: PulseKind::Sinc,
            max_reflections: 2,
            reflection_loss: 0.3,
            measurement_noise_variance: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    pub n_samples: usize,
    /// Receiver planar position, meters.
    pub receiver_position: [f64; 2],
    pub trajectory: Trajectory,
    pub obstacles: Vec<Obstacle>,
    pub sample_interval_s: f64,
    pub seed: u64,
    pub sensors: SensorConfig,
    pub radio: RadioConfig,
}

impl ScenarioSpec {
    /// Receiver antenna/sensor height: elevated unit for V2I, roof-mounted
    /// for V2V.
    pub fn receiver_height_m(&self) -> f64 {
        match self.kind {
            ScenarioKind::V2I => 6.0,
            ScenarioKind::V2V => 1.5,
        }
    }

    pub fn transmitter_height_m(&self) -> f64 {
        1.5
    }

    fn validate(&self) -> Result<(), ScenarioError> {
        if self.n_samples == 0 {
            return Err(ScenarioError::InvalidSpec("n_samples must be >= 1".into()));
        }
        if self.sample_interval_s <= 0.0 {
            return Err(ScenarioError::InvalidSpec("sample_interval must be > 0".into()));
        }
        if self.trajectory.waypoints.is_empty() {
            return Err(ScenarioError::InvalidSpec("trajectory needs waypoints".into()));
        }
        if self.trajectory.speed_mps < 0.0 {
            return Err(ScenarioError::InvalidSpec("speed must be >= 0".into()));
        }
        Ok(())
    }
}

/// Interleaved 8-bit image, row-major `[row][col][channel]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<u8>,
}

impl Raster {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        Raster { width, height, channels, data: vec![0; width * height * channels] }
    }

    pub fn get(&self, x: usize, y: usize, c: usize) -> u8 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    pub fn set(&mut self, x: usize, y: usize, c: usize, value: u8) {
        self.data[(y * self.width + x) * self.channels + c] = value;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpsFix {
    pub lat_deg: f64,
    pub lon_deg: f64,
}

/// One timestamped multimodal observation with its ground-truth beam.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub timestamp_s: f64,
    pub gps: GpsFix,
    pub image: Raster,
    pub cloud: Vec<[f64; 3]>,
    pub power_profile: Vec<f64>,
    pub best_beam: BeamIndex,
}

/// Disjoint, exhaustive index sets over a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl SplitIndices {
    /// Random 60/20/20 partition of `0..n`, seeded.
    pub fn random(n: usize, seed: u64) -> Self {
        let mut order: Vec<usize> = (0..n).collect();
        let mut rng = substream(seed, Stream::Split, 0);
        crate::rng::shuffle(&mut order, &mut rng);
        let n_train = n * 6 / 10;
        let n_val = n * 2 / 10;
        let mut train: Vec<usize> = order[..n_train].to_vec();
        let mut val: Vec<usize> = order[n_train..n_train + n_val].to_vec();
        let mut test: Vec<usize> = order[n_train + n_val..].to_vec();
        train.sort_unstable();
        val.sort_unstable();
        test.sort_unstable();
        SplitIndices { train, val, test }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub split: SplitIndices,
}

/// Output of [`generate_scenario`]: the dataset plus indices of samples whose
/// line-of-sight azimuth left the codebook's +/-90 degree span (kept, but
/// flagged).
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedScenario {
    pub dataset: Dataset,
    pub coverage_warnings: Vec<usize>,
}

/// Converts a local metric position to geodetic degrees around `anchor` and
/// adds GPS error. `noise_std_m` is the RMS horizontal error, so each axis
/// gets `noise_std_m / sqrt(2)` of Gaussian noise. Latitude is clamped to
/// +/-90 and longitude wrapped into +/-180.
pub fn emulate_gps(
    true_position: [f64; 2],
    noise_std_m: f64,
    anchor: &GeoAnchor,
    seed: u64,
) -> GpsFix {
    let mut rng = substream(seed, Stream::Noise, 0);
    let axis_std = noise_std_m / core::f64::consts::SQRT_2;
    let ex = axis_std * normal(&mut rng);
    let ey = axis_std * normal(&mut rng);
    let meters_per_deg_lon = METERS_PER_DEG_LAT * anchor.lat_deg.to_radians().cos();
    let lat = anchor.lat_deg + (true_position[1] + ey) / METERS_PER_DEG_LAT;
    let lon = anchor.lon_deg + (true_position[0] + ex) / meters_per_deg_lon;
    GpsFix { lat_deg: lat.clamp(-90.0, 90.0), lon_deg: wrap_longitude(lon) }
}

fn wrap_longitude(lon: f64) -> f64 {
    let mut x = (lon + 180.0) % 360.0;
    if x < 0.0 {
        x += 360.0;
    }
    x - 180.0
}

/// First-hit ray cast from the receiver over a fan of directions: 8 elevation
/// rows between -25 and +10 degrees, `rays / 8` azimuths across +/-90 degrees
/// of boresight (+y). Hits on obstacles, the transmitter's bounding box, or
/// the ground plane return points in receiver-local coordinates (z stays in
/// world height above ground).
pub fn emulate_pointcloud(
    scene: &[Obstacle],
    tx_pose: [f64; 3],
    rx_pose: [f64; 3],
    rays: usize,
    max_range_m: f64,
    seed: u64,
) -> Vec<[f64; 3]> {
    let mut rng = substream(seed, Stream::Noise, 1);
    let tx_box = transmitter_box(tx_pose);
    let n_rows = 8usize;
    let n_az = (rays / n_rows).max(1);
    let mut points = Vec::new();
    for row in 0..n_rows {
        let elevation = (-25.0 + 35.0 * row as f64 / (n_rows - 1) as f64).to_radians();
        for a in 0..n_az {
            let base = -90.0 + 180.0 * (a as f64 + 0.5) / n_az as f64;
            let jitter: f64 = (rng.gen::<f64>() - 0.5) * (180.0 / n_az as f64) * 0.25;
            let azimuth = (base + jitter).to_radians();
            // Boresight +y; azimuth rotates toward +x.
            let dir = [
                azimuth.sin() * elevation.cos(),
                azimuth.cos() * elevation.cos(),
                elevation.sin(),
            ];
            let mut nearest = f64::INFINITY;
            for obstacle in scene.iter().chain(core::iter::once(&tx_box)) {
                if let Some(t) = ray_box_intersection(rx_pose, dir, obstacle) {
                    if t < nearest {
                        nearest = t;
                    }
                }
            }
            if dir[2] < 0.0 {
                let t = -rx_pose[2] / dir[2];
                if t > 0.0 && t < nearest {
                    nearest = t;
                }
            }
            if nearest.is_finite() && nearest <= max_range_m {
                // Coordinates quantize to f32, the sensor's native precision
                // and the on-disk cloud format; round trips stay lossless.
                points.push([
                    (nearest * dir[0]) as f32 as f64,
                    (nearest * dir[1]) as f32 as f64,
                    (rx_pose[2] + nearest * dir[2]) as f32 as f64,
                ]);
            }
        }
    }
    points
}

fn transmitter_box(tx_pose: [f64; 3]) -> Obstacle {
    // Car-sized bounding box centered on the transmitter position.
    Obstacle::new(
        [tx_pose[0] - 2.3, tx_pose[1] - 0.9, 0.0],
        [tx_pose[0] + 2.3, tx_pose[1] + 0.9, tx_pose[2]],
    )
}

fn ray_box_intersection(origin: [f64; 3], dir: [f64; 3], obstacle: &Obstacle) -> Option<f64> {
    let mut t_min = 0.0f64;
    let mut t_max = f64::INFINITY;
    for axis in 0..3 {
        if dir[axis].abs() < 1e-12 {
            if origin[axis] < obstacle.min[axis] || origin[axis] > obstacle.max[axis] {
                return None;
            }
            continue;
        }
        let inv = 1.0 / dir[axis];
        let mut t0 = (obstacle.min[axis] - origin[axis]) * inv;
        let mut t1 = (obstacle.max[axis] - origin[axis]) * inv;
        if t0 > t1 {
            core::mem::swap(&mut t0, &mut t1);
        }
        t_min = t_min.max(t0);
        t_max = t_max.min(t1);
        if t_min > t_max {
            return None;
        }
    }
    if t_min > 1e-9 {
        Some(t_min)
    } else {
        None
    }
}

/// Top-down orthographic render centered on the receiver: channel 0 is
/// obstacle occupancy, channel 1 a Gaussian blob at the transmitter's
/// projected position, channel 2 a range encoding (bright = near).
pub fn emulate_image(
    scene: &[Obstacle],
    tx_pose: [f64; 3],
    rx_pose: [f64; 3],
    width: usize,
    height: usize,
    view_half_extent_m: f64,
) -> Raster {
    let mut raster = Raster::new(width, height, 3);
    let extent = view_half_extent_m;
    let px_per_m_x = width as f64 / (2.0 * extent);
    let px_per_m_y = height as f64 / (2.0 * extent);
    let world_to_col = |x: f64| (x - rx_pose[0] + extent) * px_per_m_x;
    let world_to_row = |y: f64| (extent - (y - rx_pose[1])) * px_per_m_y;

    for obstacle in scene {
        let c0 = world_to_col(obstacle.min[0]).floor().max(0.0) as usize;
        let c1 = (world_to_col(obstacle.max[0]).ceil().max(0.0) as usize).min(width);
        let r0 = world_to_row(obstacle.max[1]).floor().max(0.0) as usize;
        let r1 = (world_to_row(obstacle.min[1]).ceil().max(0.0) as usize).min(height);
        for row in r0..r1 {
            for col in c0..c1 {
                raster.set(col, row, 0, 255);
            }
        }
    }

    let blob_col = world_to_col(tx_pose[0]);
    let blob_row = world_to_row(tx_pose[1]);
    let sigma = 3.0;
    let radius = 10isize;
    let center_col = blob_col.floor() as isize;
    let center_row = blob_row.floor() as isize;
    for dr in -radius..=radius {
        for dc in -radius..=radius {
            let (col, row) = (center_col + dc, center_row + dr);
            if col < 0 || row < 0 || col >= width as isize || row >= height as isize {
                continue;
            }
            let dx = (col as f64 + 0.5) - blob_col;
            let dy = (row as f64 + 0.5) - blob_row;
            let value = 255.0 * (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp();
            let value = value.round().clamp(0.0, 255.0) as u8;
            if value > raster.get(col as usize, row as usize, 1) {
                raster.set(col as usize, row as usize, 1, value);
            }
        }
    }

    for row in 0..height {
        for col in 0..width {
            let x = rx_pose[0] - extent + (col as f64 + 0.5) / px_per_m_x;
            let y = rx_pose[1] + extent - (row as f64 + 0.5) / px_per_m_y;
            let d = ((x - rx_pose[0]).powi(2) + (y - rx_pose[1]).powi(2)).sqrt();
            let value = 255.0 * (1.0 - (d / extent).min(1.0));
            raster.set(col, row, 2, value.round() as u8);
        }
    }
    raster
}

struct ReflectedPath {
    azimuth_rad: f64,
    elevation_rad: f64,
    path_length_m: f64,
}

/// Specular single bounce off the vertical faces of an axis-aligned box,
/// validated by the mirror-image construction in the horizontal plane.
fn reflections(
    rx: [f64; 2],
    tx: [f64; 2],
    height_delta: f64,
    obstacles: &[Obstacle],
) -> Vec<ReflectedPath> {
    let mut out = Vec::new();
    for obstacle in obstacles {
        let faces = [
            (0usize, obstacle.min[0]),
            (0, obstacle.max[0]),
            (1, obstacle.min[1]),
            (1, obstacle.max[1]),
        ];
        for (axis, plane) in faces {
            let other = 1 - axis;
            // Both endpoints must sit on the same side of the face plane.
            let side_rx = rx[axis] - plane;
            let side_tx = tx[axis] - plane;
            if side_rx * side_tx <= 0.0 {
                continue;
            }
            let mut mirrored = tx;
            mirrored[axis] = 2.0 * plane - tx[axis];
            let denom = mirrored[axis] - rx[axis];
            if denom.abs() < 1e-12 {
                continue;
            }
            let s = (plane - rx[axis]) / denom;
            if !(1e-9..=1.0 - 1e-9).contains(&s) {
                continue;
            }
            let hit_other = rx[other] + s * (mirrored[other] - rx[other]);
            if hit_other < obstacle.min[other] || hit_other > obstacle.max[other] {
                continue;
            }
            let mut hit = [0.0; 2];
            hit[axis] = plane;
            hit[other] = hit_other;
            let leg1 = ((hit[0] - rx[0]).powi(2) + (hit[1] - rx[1]).powi(2)).sqrt();
            let leg2 = ((tx[0] - hit[0]).powi(2) + (tx[1] - hit[1]).powi(2)).sqrt();
            let horizontal = leg1 + leg2;
            if horizontal < 1e-9 {
                continue;
            }
            out.push(ReflectedPath {
                azimuth_rad: (hit[0] - rx[0]).atan2(hit[1] - rx[1]),
                elevation_rad: height_delta.atan2(horizontal),
                path_length_m: (horizontal * horizontal + height_delta * height_delta).sqrt(),
            });
        }
    }
    out
}

/// Generates one labeled scenario. Each sample is derived from its own seed
/// substream, so generation order (or parallel generation in index order)
/// cannot change the output.
pub fn generate_scenario(
    spec: &ScenarioSpec,
    array: &ArrayConfig,
    codebook: &Codebook,
) -> Result<GeneratedScenario, ScenarioError> {
    spec.validate()?;
    let mut samples = Vec::with_capacity(spec.n_samples);
    let mut warnings = Vec::new();
    for i in 0..spec.n_samples {
        let (sample, covered) = generate_sample(spec, array, codebook, i);
        if !covered {
            warnings.push(i);
        }
        samples.push(sample);
    }
    let split = SplitIndices::random(spec.n_samples, spec.seed);
    Ok(GeneratedScenario { dataset: Dataset { samples, split }, coverage_warnings: warnings })
}

/// Generates the `index`-th sample of a scenario; deterministic in
/// `(spec.seed, index)` alone. Returns the sample and whether the LoS
/// azimuth fell inside the codebook's span.
pub fn generate_sample(
    spec: &ScenarioSpec,
    array: &ArrayConfig,
    codebook: &Codebook,
    index: usize,
) -> (Sample, bool) {
    let mut rng = substream(spec.seed, Stream::Sample, index as u64);
    let timestamp = index as f64 * spec.sample_interval_s;
    let tx_xy = spec.trajectory.position_at(timestamp);
    let rx_xy = spec.receiver_position;
    let rx_h = spec.receiver_height_m();
    let tx_h = spec.transmitter_height_m();
    let height_delta = tx_h - rx_h;

    let dx = tx_xy[0] - rx_xy[0];
    let dy = tx_xy[1] - rx_xy[1];
    let horizontal = (dx * dx + dy * dy).sqrt().max(1e-6);
    let los_azimuth = dx.atan2(dy);
    let los_elevation = height_delta.atan2(horizontal);
    let los_distance = (horizontal * horizontal + height_delta * height_delta).sqrt();
    let in_coverage = los_azimuth.abs() <= core::f64::consts::FRAC_PI_2;

    let mut paths = vec![Path {
        gain: Complex64::from_polar(1.0 / los_distance, rng.gen::<f64>() * core::f64::consts::TAU),
        delay_s: los_distance / SPEED_OF_LIGHT,
        azimuth_rad: los_azimuth,
        elevation_rad: los_elevation,
    }];
    let mut bounced = reflections(rx_xy, tx_xy, height_delta, &spec.obstacles);
    bounced.sort_unstable_by(|a, b| a.path_length_m.partial_cmp(&b.path_length_m).unwrap());
    for refl in bounced.into_iter().take(spec.radio.max_reflections) {
        paths.push(Path {
            gain: Complex64::from_polar(
                spec.radio.reflection_loss / refl.path_length_m,
                rng.gen::<f64>() * core::f64::consts::TAU,
            ),
            delay_s: refl.path_length_m / SPEED_OF_LIGHT,
            azimuth_rad: refl.azimuth_rad,
            elevation_rad: refl.elevation_rad,
        });
    }

    let path_set = PathSet {
        paths,
        cyclic_prefix_len: spec.radio.cyclic_prefix_len,
        n_subcarriers: spec.radio.n_subcarriers,
        symbol_period_s: spec.radio.symbol_period_s,
        pulse: spec.radio.pulse,
    };
    let channel = realize_channel(array, &path_set);
    let mut profile = power_profile(&channel, codebook).expect("codebook matches array");
    if spec.radio.measurement_noise_variance > 0.0 {
        let noise_seed = rng.gen::<u64>();
        profile = simulate_measurement(
            &profile,
            &NoiseConfig { variance: spec.radio.measurement_noise_variance, seed: noise_seed },
        );
    }
    let best_beam = optimal_beam(&profile).expect("profile non-empty");

    let gps_seed = rng.gen::<u64>();
    let lidar_seed = rng.gen::<u64>();
    let gps = emulate_gps(tx_xy, spec.sensors.gps_noise_std_m, &spec.sensors.anchor, gps_seed);
    let rx_pose = [rx_xy[0], rx_xy[1], rx_h];
    let tx_pose = [tx_xy[0], tx_xy[1], tx_h];
    let cloud = emulate_pointcloud(
        &spec.obstacles,
        tx_pose,
        rx_pose,
        spec.sensors.lidar_rays,
        spec.sensors.lidar_max_range_m,
        lidar_seed,
    );
    let image = emulate_image(
        &spec.obstacles,
        tx_pose,
        rx_pose,
        spec.sensors.image_width,
        spec.sensors.image_height,
        spec.sensors.view_half_extent_m,
    );

    (
        Sample { timestamp_s: timestamp, gps, image, cloud, power_profile: profile, best_beam },
        in_coverage,
    )
}

/// The codebook every scenario shares by default: 64 beams on 16 elements.
pub fn default_array_and_codebook() -> (ArrayConfig, Codebook) {
    let array = ArrayConfig::default();
    let codebook = make_dft_codebook(&array, 64).expect("64 >= 16");
    (array, codebook)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn drive_past_spec(n_samples: usize, seed: u64) -> ScenarioSpec {
        ScenarioSpec {
            kind: ScenarioKind::V2I,
            n_samples,
            receiver_position: [0.0, 0.0],
            trajectory: Trajectory {
                waypoints: vec![[-80.0, 18.0], [80.0, 18.0]],
                speed_mps: 4.0,
            },
            obstacles: vec![],
            sample_interval_s: 0.1,
            seed,
            sensors: SensorConfig {
                lidar_rays: 64,
                image_width: 64,
                image_height: 64,
                ..Default::default()
            },
            radio: RadioConfig::default(),
        }
    }

    #[test]
    fn drive_past_beam_sequence_is_monotone() {
        let (array, codebook) = default_array_and_codebook();
        let spec = drive_past_spec(400, 7);
        let out = generate_scenario(&spec, &array, &codebook).unwrap();
        let beams: Vec<usize> = out.dataset.samples.iter().map(|s| s.best_beam.0).collect();
        for pair in beams.windows(2) {
            assert!(pair[1] >= pair[0], "beam index regressed: {pair:?}");
        }
        assert!(beams.last().unwrap() > beams.first().unwrap());
        // Spot-check labels against a per-sample brute-force argmax.
        for idx in [0usize, 100, 399] {
            let s = &out.dataset.samples[idx];
            let mut best = 0;
            for (i, &p) in s.power_profile.iter().enumerate() {
                if p > s.power_profile[best] {
                    best = i;
                }
            }
            assert_eq!(s.best_beam.zero_based(), best);
        }
    }

    #[test]
    fn stationary_transmitter_keeps_one_beam() {
        let (array, codebook) = default_array_and_codebook();
        let mut spec = drive_past_spec(25, 3);
        spec.trajectory = Trajectory { waypoints: vec![[0.0, 30.0]], speed_mps: 0.0 };
        let out = generate_scenario(&spec, &array, &codebook).unwrap();
        let first = out.dataset.samples[0].best_beam;
        assert!(out.dataset.samples.iter().all(|s| s.best_beam == first));
        assert!(out.coverage_warnings.is_empty());
    }

    #[test]
    fn generation_is_bitwise_deterministic() {
        let (array, codebook) = default_array_and_codebook();
        let spec = drive_past_spec(20, 99);
        let a = generate_scenario(&spec, &array, &codebook).unwrap();
        let b = generate_scenario(&spec, &array, &codebook).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn every_label_matches_recomputed_argmax() {
        let (array, codebook) = default_array_and_codebook();
        let mut spec = drive_past_spec(60, 11);
        spec.obstacles = vec![Obstacle::new([-40.0, 28.0, 0.0], [-10.0, 38.0, 9.0])];
        let out = generate_scenario(&spec, &array, &codebook).unwrap();
        for s in &out.dataset.samples {
            assert_eq!(s.best_beam, optimal_beam(&s.power_profile).unwrap());
        }
    }

    #[test]
    fn split_is_disjoint_and_exhaustive() {
        let split = SplitIndices::random(103, 5);
        let mut all: Vec<usize> = split
            .train
            .iter()
            .chain(split.val.iter())
            .chain(split.test.iter())
            .copied()
            .collect();
        all.sort_unstable();
        assert_eq!(all, (0..103).collect::<Vec<_>>());
        assert_eq!(split.train.len(), 61);
        assert_eq!(split.val.len(), 20);
        assert_eq!(split.test.len(), 22);
    }

    #[test]
    fn gps_without_noise_is_exact() {
        let anchor = GeoAnchor::default();
        let fix = emulate_gps([250.0, -40.0], 0.0, &anchor, 1);
        let meters_per_deg_lon = METERS_PER_DEG_LAT * anchor.lat_deg.to_radians().cos();
        assert!((fix.lat_deg - (anchor.lat_deg - 40.0 / METERS_PER_DEG_LAT)).abs() < 1e-12);
        assert!((fix.lon_deg - (anchor.lon_deg + 250.0 / meters_per_deg_lon)).abs() < 1e-12);
    }

    #[test]
    fn gps_noise_rms_matches_configured_std() {
        let anchor = GeoAnchor::default();
        let meters_per_deg_lon = METERS_PER_DEG_LAT * anchor.lat_deg.to_radians().cos();
        let clean = emulate_gps([10.0, 10.0], 0.0, &anchor, 0);
        let mut sum_sq = 0.0;
        let n = 10_000;
        for k in 0..n {
            let fix = emulate_gps([10.0, 10.0], 1.0, &anchor, k as u64);
            let ex = (fix.lon_deg - clean.lon_deg) * meters_per_deg_lon;
            let ey = (fix.lat_deg - clean.lat_deg) * METERS_PER_DEG_LAT;
            sum_sq += ex * ex + ey * ey;
        }
        let rms = (sum_sq / n as f64).sqrt();
        assert!((rms - 1.0).abs() < 0.05, "rms {rms}");
    }

    #[test]
    fn antipodal_anchor_stays_in_longitude_range() {
        let anchor = GeoAnchor { lat_deg: 10.0, lon_deg: 179.9999 };
        for k in 0..50 {
            let fix = emulate_gps([500.0, 0.0], 2.0, &anchor, k);
            assert!(fix.lon_deg.abs() <= 180.0, "lon {}", fix.lon_deg);
        }
    }

    #[test]
    fn box_dead_ahead_returns_points_on_its_near_face() {
        let obstacle = Obstacle::new([-5.0, 20.0, 0.0], [5.0, 30.0, 10.0]);
        let points = emulate_pointcloud(
            &[obstacle],
            [0.0, 200.0, 1.5], // transmitter far beyond the lidar range
            [0.0, 0.0, 2.0],
            128,
            120.0,
            4,
        );
        let face_hits: Vec<&[f64; 3]> = points
            .iter()
            .filter(|p| p[1] > 1.0 && p[2] > 1e-6)
            .collect();
        assert!(!face_hits.is_empty());
        for p in face_hits {
            assert!((p[1] - 20.0).abs() < 1e-9, "hit not on near face: {p:?}");
        }
    }

    #[test]
    fn empty_scene_returns_ground_points_only() {
        let points = emulate_pointcloud(&[], [1000.0, 1000.0, 1.5], [0.0, 0.0, 2.0], 64, 120.0, 9);
        assert!(!points.is_empty());
        for p in &points {
            assert!(p[2].abs() < 1e-9, "non-ground point {p:?}");
        }
    }

    #[test]
    fn doubling_rays_roughly_doubles_points() {
        let scene = [Obstacle::new([-20.0, 15.0, 0.0], [20.0, 25.0, 8.0])];
        let a = emulate_pointcloud(&scene, [0.0, 10.0, 1.5], [0.0, 0.0, 2.0], 96, 120.0, 2).len();
        let b = emulate_pointcloud(&scene, [0.0, 10.0, 1.5], [0.0, 0.0, 2.0], 192, 120.0, 2).len();
        let ratio = b as f64 / a as f64;
        assert!((ratio - 2.0).abs() <= 0.2, "ratio {ratio} ({a} vs {b})");
    }

    #[test]
    fn image_blob_lands_at_center_for_colocated_transmitter() {
        let raster = emulate_image(&[], [0.0, 0.0, 1.5], [0.0, 0.0, 6.0], 64, 64, 100.0);
        let mut best = (0usize, 0usize, 0u8);
        for row in 0..64 {
            for col in 0..64 {
                let v = raster.get(col, row, 1);
                if v > best.2 {
                    best = (col, row, v);
                }
            }
        }
        assert!((best.0 as isize - 32).unsigned_abs() <= 1);
        assert!((best.1 as isize - 32).unsigned_abs() <= 1);
    }

    #[test]
    fn empty_scene_has_blank_occupancy_channel() {
        let raster = emulate_image(&[], [5.0, 5.0, 1.5], [0.0, 0.0, 6.0], 32, 32, 50.0);
        for row in 0..32 {
            for col in 0..32 {
                assert_eq!(raster.get(col, row, 0), 0);
            }
        }
    }

    #[test]
    fn shifting_transmitter_moves_blob_by_pixel_scale() {
        let centroid = |raster: &Raster| {
            let (mut sx, mut sw) = (0.0, 0.0);
            for row in 0..raster.height {
                for col in 0..raster.width {
                    let v = raster.get(col, row, 1) as f64;
                    sx += v * col as f64;
                    sw += v;
                }
            }
            sx / sw
        };
        let extent = 50.0;
        let width = 200usize;
        let a = emulate_image(&[], [0.0, 20.0, 1.5], [0.0, 0.0, 6.0], width, width, extent);
        let b = emulate_image(&[], [5.0, 20.0, 1.5], [0.0, 0.0, 6.0], width, width, extent);
        let px_per_m = width as f64 / (2.0 * extent);
        let moved = centroid(&b) - centroid(&a);
        assert!((moved - 5.0 * px_per_m).abs() <= 1.0, "moved {moved} px");
    }

    #[test]
    fn blob_offset_sign_matches_los_azimuth_sign() {
        let (array, codebook) = default_array_and_codebook();
        let spec = drive_past_spec(40, 21);
        let out = generate_scenario(&spec, &array, &codebook).unwrap();
        for (i, s) in out.dataset.samples.iter().enumerate() {
            let raster = &s.image;
            let (mut sx, mut sw) = (0.0, 0.0);
            for row in 0..raster.height {
                for col in 0..raster.width {
                    let v = raster.get(col, row, 1) as f64;
                    sx += v * col as f64;
                    sw += v;
                }
            }
            if sw == 0.0 {
                continue; // transmitter outside the view window
            }
            let offset = sx / sw - (raster.width as f64 - 1.0) / 2.0;
            let tx = spec.trajectory.position_at(s.timestamp_s);
            let azimuth = tx[0].atan2(tx[1]);
            if offset.abs() > 1.0 {
                assert_eq!(offset.signum(), azimuth.signum(), "sample {i}");
            }
        }
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let (array, codebook) = default_array_and_codebook();
        let mut spec = drive_past_spec(10, 0);
        spec.n_samples = 0;
        assert!(generate_scenario(&spec, &array, &codebook).is_err());
        let mut spec = drive_past_spec(10, 0);
        spec.sample_interval_s = 0.0;
        assert!(generate_scenario(&spec, &array, &codebook).is_err());
        let mut spec = drive_past_spec(10, 0);
        spec.trajectory.waypoints.clear();
        assert!(generate_scenario(&spec, &array, &codebook).is_err());
    }

    #[test]
    fn coverage_warning_fires_behind_the_array() {
        let (array, codebook) = default_array_and_codebook();
        let mut spec = drive_past_spec(5, 2);
        spec.trajectory = Trajectory { waypoints: vec![[0.0, -30.0]], speed_mps: 0.0 };
        let out = generate_scenario(&spec, &array, &codebook).unwrap();
        assert_eq!(out.coverage_warnings, vec![0, 1, 2, 3, 4]);
        assert_eq!(out.dataset.samples.len(), 5);
    }
}
