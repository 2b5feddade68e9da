//! Turns raw samples into fixed-shape model inputs.
//!
//! Positions are min-max normalized against statistics computed on the
//! training split only; images are resized to 224x224 and standardized with
//! the fixed per-channel constants; point clouds are padded or randomly
//! downsampled to exactly 15,000 rows with a validity mask.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;
use rand::Rng;

use crate::nn::Tensor;
use crate::rng::{substream, Stream};
use crate::scenario::{Dataset, GpsFix, Raster, Sample};

pub const IMAGE_SIZE: usize = 224;
pub const IMAGE_MEAN: [f64; 3] = [0.485, 0.456, 0.406];
pub const IMAGE_STD: [f64; 3] = [0.229, 0.224, 0.225];
pub const CLOUD_POINTS: usize = 15_000;

#[derive(Debug, Clone, PartialEq)]
pub enum PreprocessError {
    /// Min equals max on an axis, so min-max normalization is undefined.
    DegenerateRange { axis: &'static str },
    /// Image does not have exactly three channels.
    ChannelError { got: usize },
    /// Image has a zero dimension.
    EmptyImage,
    Invalid(String),
}

impl core::fmt::Display for PreprocessError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            PreprocessError::DegenerateRange { axis } => {
                write!(f, "degenerate normalization range on {axis}")
            }
            PreprocessError::ChannelError { got } => {
                write!(f, "expected a 3-channel image, got {got} channels")
            }
            PreprocessError::EmptyImage => write!(f, "image has a zero dimension"),
            PreprocessError::Invalid(msg) => write!(f, "{msg}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for PreprocessError {}

/// Position min-max bounds, computed on the training split only.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizationStats {
    pub lat_min: f64,
    pub lat_max: f64,
    pub lon_min: f64,
    pub lon_max: f64,
}

impl NormalizationStats {
    pub fn from_fixes<'a>(
        fixes: impl Iterator<Item = &'a GpsFix>,
    ) -> Result<Self, PreprocessError> {
        let mut stats = NormalizationStats {
            lat_min: f64::INFINITY,
            lat_max: f64::NEG_INFINITY,
            lon_min: f64::INFINITY,
            lon_max: f64::NEG_INFINITY,
        };
        for fix in fixes {
            stats.lat_min = stats.lat_min.min(fix.lat_deg);
            stats.lat_max = stats.lat_max.max(fix.lat_deg);
            stats.lon_min = stats.lon_min.min(fix.lon_deg);
            stats.lon_max = stats.lon_max.max(fix.lon_deg);
        }
        stats.validate()?;
        Ok(stats)
    }

    /// Bounds over the training-split rows of a dataset; validation and test
    /// rows are never read.
    pub fn from_training_split(ds: &Dataset) -> Result<Self, PreprocessError> {
        Self::from_fixes(ds.split.train.iter().map(|&i| &ds.samples[i].gps))
    }

    fn validate(&self) -> Result<(), PreprocessError> {
        if !(self.lat_max > self.lat_min) {
            return Err(PreprocessError::DegenerateRange { axis: "latitude" });
        }
        if !(self.lon_max > self.lon_min) {
            return Err(PreprocessError::DegenerateRange { axis: "longitude" });
        }
        Ok(())
    }

    /// Stats packed as `[lat_min, lat_max, lon_min, lon_max]` so they can ride
    /// in a checkpoint as a named tensor.
    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_vec(&[4], vec![self.lat_min, self.lat_max, self.lon_min, self.lon_max])
            .expect("fixed shape")
    }

    pub fn from_tensor(t: &Tensor) -> Result<Self, PreprocessError> {
        if t.shape() != [4] {
            return Err(PreprocessError::Invalid(format!(
                "position stats tensor must have 4 entries, got shape {:?}",
                t.shape()
            )));
        }
        let d = t.data();
        let stats = NormalizationStats { lat_min: d[0], lat_max: d[1], lon_min: d[2], lon_max: d[3] };
        stats.validate()?;
        Ok(stats)
    }
}

/// Min-max normalization of a GPS fix into the unit square; values outside
/// the training range clamp to [0, 1] (deployment sees unseen positions).
pub fn normalize_position(
    raw: &GpsFix,
    stats: &NormalizationStats,
) -> Result<[f64; 2], PreprocessError> {
    stats.validate()?;
    let lat = (raw.lat_deg - stats.lat_min) / (stats.lat_max - stats.lat_min);
    let lon = (raw.lon_deg - stats.lon_min) / (stats.lon_max - stats.lon_min);
    Ok([lat.clamp(0.0, 1.0), lon.clamp(0.0, 1.0)])
}

/// A standardized image tensor `[3, 224, 224]` plus a flag noting that the
/// source was below the expected 224x224 and had to be upscaled.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedImage {
    pub tensor: Tensor,
    pub upscaled: bool,
}

/// Bilinear resize to 224x224, scale to [0, 1], subtract the per-channel
/// means and divide by the per-channel standard deviations.
pub fn normalize_image(raw: &Raster) -> Result<NormalizedImage, PreprocessError> {
    if raw.channels != 3 {
        return Err(PreprocessError::ChannelError { got: raw.channels });
    }
    if raw.width == 0 || raw.height == 0 {
        return Err(PreprocessError::EmptyImage);
    }
    let upscaled = raw.width < IMAGE_SIZE || raw.height < IMAGE_SIZE;
    let mut out = Tensor::zeros(&[3, IMAGE_SIZE, IMAGE_SIZE]);
    let scale_x = raw.width as f64 / IMAGE_SIZE as f64;
    let scale_y = raw.height as f64 / IMAGE_SIZE as f64;
    let data = out.data_mut();
    for row in 0..IMAGE_SIZE {
        // Half-pixel-center mapping; an identity at 224x224 input.
        let sy = ((row as f64 + 0.5) * scale_y - 0.5).clamp(0.0, (raw.height - 1) as f64);
        let y0 = sy.floor() as usize;
        let y1 = (y0 + 1).min(raw.height - 1);
        let fy = sy - y0 as f64;
        for col in 0..IMAGE_SIZE {
            let sx = ((col as f64 + 0.5) * scale_x - 0.5).clamp(0.0, (raw.width - 1) as f64);
            let x0 = sx.floor() as usize;
            let x1 = (x0 + 1).min(raw.width - 1);
            let fx = sx - x0 as f64;
            for c in 0..3 {
                let v00 = raw.get(x0, y0, c) as f64;
                let v10 = raw.get(x1, y0, c) as f64;
                let v01 = raw.get(x0, y1, c) as f64;
                let v11 = raw.get(x1, y1, c) as f64;
                let top = v00 + fx * (v10 - v00);
                let bottom = v01 + fx * (v11 - v01);
                let value = (top + fy * (bottom - top)) / 255.0;
                data[(c * IMAGE_SIZE + row) * IMAGE_SIZE + col] =
                    (value - IMAGE_MEAN[c]) / IMAGE_STD[c];
            }
        }
    }
    Ok(NormalizedImage { tensor: out, upscaled })
}

/// Pads with masked zero rows or randomly downsamples (without replacement,
/// original order preserved) to exactly `target` rows.
pub fn fix_pointcount(
    cloud: &[[f64; 3]],
    target: usize,
    seed: u64,
) -> (Tensor, Vec<bool>) {
    let n = cloud.len();
    let mut out = Tensor::zeros(&[target, 3]);
    let mut mask = vec![false; target];
    if n <= target {
        let data = out.data_mut();
        for (i, p) in cloud.iter().enumerate() {
            data[i * 3..i * 3 + 3].copy_from_slice(p);
            mask[i] = true;
        }
    } else {
        let mut idx: Vec<usize> = (0..n).collect();
        let mut rng = substream(seed, Stream::CloudFix, 0);
        for i in 0..target {
            let j = rng.gen_range(i..n);
            idx.swap(i, j);
        }
        idx.truncate(target);
        idx.sort_unstable();
        let data = out.data_mut();
        for (i, &src) in idx.iter().enumerate() {
            data[i * 3..i * 3 + 3].copy_from_slice(&cloud[src]);
            mask[i] = true;
        }
    }
    (out, mask)
}

/// Modalities a model consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModalitySet {
    pub position: bool,
    pub visual: bool,
    pub lidar: bool,
}

impl ModalitySet {
    pub const ALL: ModalitySet = ModalitySet { position: true, visual: true, lidar: true };
    pub const POSITION_ONLY: ModalitySet =
        ModalitySet { position: true, visual: false, lidar: false };

    pub fn any(&self) -> bool {
        self.position || self.visual || self.lidar
    }
}

/// Fixed-shape model inputs for one sample. Disabled modalities stay `None`
/// and are never computed.
#[derive(Debug, Clone, PartialEq)]
pub struct PreprocessedSample {
    pub pos: Option<[f64; 2]>,
    pub vis: Option<Tensor>,
    pub cloud_points: Option<Tensor>,
    pub cloud_mask: Option<Vec<bool>>,
    /// Zero-based class label (best beam index - 1).
    pub label: usize,
}

/// Preprocesses one sample. `sample_key` must be stable per sample (its
/// dataset position) so the cloud downsampling draw is reproducible whether
/// samples are processed in any order or in parallel.
pub fn preprocess_sample(
    sample: &Sample,
    stats: &NormalizationStats,
    modalities: &ModalitySet,
    target_points: usize,
    seed: u64,
    sample_key: u64,
) -> Result<PreprocessedSample, PreprocessError> {
    let pos = if modalities.position {
        Some(normalize_position(&sample.gps, stats)?)
    } else {
        None
    };
    let vis = if modalities.visual {
        Some(normalize_image(&sample.image)?.tensor)
    } else {
        None
    };
    let (cloud_points, cloud_mask) = if modalities.lidar {
        let (points, mask) = fix_pointcount(
            &sample.cloud,
            target_points,
            seed.wrapping_add(sample_key.wrapping_mul(0x9e3779b97f4a7c15)),
        );
        (Some(points), Some(mask))
    } else {
        (None, None)
    };
    Ok(PreprocessedSample {
        pos,
        vis,
        cloud_points,
        cloud_mask,
        label: sample.best_beam.zero_based(),
    })
}
