//! On-disk dataset format.
//!
//! A dataset directory holds one `index.csv` with the per-sample schema
//! `seq,timestamp,lat,lon,img_path,cloud_path,power1..powerN,best_beam`,
//! a `manifest.json` with the codebook geometry and split membership, and
//! the referenced artifacts: binary PPM images and raw point-cloud files
//! (8-byte little-endian count, then 32-bit little-endian float triplets).
//! Floats in the CSV use Rust's shortest round-trip formatting, so a
//! save/load cycle is lossless.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use mmbeam_core::channel::BeamIndex;
use mmbeam_core::nn::ParamSet;
use mmbeam_core::scenario::{Dataset, GpsFix, Raster, Sample, SplitIndices};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("row {row}: missing artifact in column {column}: {path}")]
    MissingArtifact { row: usize, column: &'static str, path: PathBuf },
    #[error("row {row}: {message}")]
    SchemaError { row: usize, message: String },
    #[error("{path}: {message}")]
    Malformed { path: PathBuf, message: String },
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io { path: path.to_path_buf(), source }
}

/// Dataset-level metadata stored next to the index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub n_beams: usize,
    pub n_elements: usize,
    pub seed: u64,
    pub kind: String,
    pub units: Units,
    pub splits: Splits,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Units {
    pub power: String,
    pub position: String,
    pub time: String,
}

impl Default for Units {
    fn default() -> Self {
        Units {
            power: "watt".into(),
            position: "degrees".into(),
            time: "seconds".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Non-fatal observations from loading (e.g. out-of-order timestamps; the
/// loader preserves file order either way).
#[derive(Debug, Clone, Default)]
pub struct LoadReport {
    pub warnings: Vec<String>,
}

// ── artifact formats ────────────────────────────────────────────────────────

/// Writes a 3-channel raster as binary PPM (P6, maxval 255).
pub fn write_ppm(path: &Path, raster: &Raster) -> Result<(), DataError> {
    if raster.channels != 3 {
        return Err(DataError::Malformed {
            path: path.to_path_buf(),
            message: format!("PPM requires 3 channels, raster has {}", raster.channels),
        });
    }
    let mut bytes = format!("P6\n{} {}\n255\n", raster.width, raster.height).into_bytes();
    bytes.extend_from_slice(&raster.data);
    atomic_write(path, &bytes)
}

pub fn read_ppm(path: &Path) -> Result<Raster, DataError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    let malformed = |message: &str| DataError::Malformed {
        path: path.to_path_buf(),
        message: message.into(),
    };
    // Header: magic, width, height, maxval as whitespace-separated tokens.
    let mut pos = 0usize;
    let mut tokens = Vec::new();
    while tokens.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(malformed("truncated header"));
        }
        tokens.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| malformed("bad header"))?);
    }
    if tokens[0] != "P6" {
        return Err(malformed("not a binary PPM (P6)"));
    }
    let width: usize = tokens[1].parse().map_err(|_| malformed("bad width"))?;
    let height: usize = tokens[2].parse().map_err(|_| malformed("bad height"))?;
    if tokens[3] != "255" {
        return Err(malformed("only maxval 255 is supported"));
    }
    pos += 1; // single whitespace after maxval
    let expect = width * height * 3;
    if bytes.len() < pos + expect {
        return Err(malformed("pixel data truncated"));
    }
    Ok(Raster { width, height, channels: 3, data: bytes[pos..pos + expect].to_vec() })
}

/// Writes a point cloud: u64 LE count, then count x 3 f32 LE values.
pub fn write_cloud(path: &Path, cloud: &[[f64; 3]]) -> Result<(), DataError> {
    let mut bytes = Vec::with_capacity(8 + cloud.len() * 12);
    bytes.extend_from_slice(&(cloud.len() as u64).to_le_bytes());
    for p in cloud {
        for &v in p {
            bytes.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    atomic_write(path, &bytes)
}

pub fn read_cloud(path: &Path) -> Result<Vec<[f64; 3]>, DataError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    let malformed = |message: &str| DataError::Malformed {
        path: path.to_path_buf(),
        message: message.into(),
    };
    if bytes.len() < 8 {
        return Err(malformed("missing count header"));
    }
    let count = u64::from_le_bytes(bytes[..8].try_into().unwrap()) as usize;
    if bytes.len() != 8 + count * 12 {
        return Err(malformed("length does not match count header"));
    }
    let mut cloud = Vec::with_capacity(count);
    for i in 0..count {
        let base = 8 + i * 12;
        let mut p = [0.0f64; 3];
        for (axis, v) in p.iter_mut().enumerate() {
            let off = base + axis * 4;
            *v = f32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()) as f64;
        }
        cloud.push(p);
    }
    Ok(cloud)
}

/// Write-to-temp-then-rename so readers never observe partial files.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<(), DataError> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp).map_err(io_err(&tmp))?;
        f.write_all(bytes).map_err(io_err(&tmp))?;
        f.sync_all().map_err(io_err(&tmp))?;
    }
    fs::rename(&tmp, path).map_err(io_err(path))?;
    Ok(())
}

// ── dataset save / load ─────────────────────────────────────────────────────

fn artifact_names(seq: usize) -> (String, String) {
    (format!("images/{seq:06}.ppm"), format!("clouds/{seq:06}.bin"))
}

/// Saves a dataset into `dir` (index, manifest, image and cloud artifacts).
pub fn save_dataset(
    dataset: &Dataset,
    dir: &Path,
    n_elements: usize,
    seed: u64,
    kind: &str,
) -> Result<(), DataError> {
    fs::create_dir_all(dir.join("images")).map_err(io_err(dir))?;
    fs::create_dir_all(dir.join("clouds")).map_err(io_err(dir))?;
    let n_beams = dataset.samples.first().map_or(0, |s| s.power_profile.len());

    let manifest = DatasetManifest {
        n_beams,
        n_elements,
        seed,
        kind: kind.into(),
        units: Units::default(),
        splits: Splits {
            train: dataset.split.train.clone(),
            val: dataset.split.val.clone(),
            test: dataset.split.test.clone(),
        },
    };
    let manifest_json =
        serde_json::to_vec_pretty(&manifest).expect("manifest serialization is infallible");
    atomic_write(&dir.join("manifest.json"), &manifest_json)?;

    let index_path = dir.join("index.csv");
    let mut writer = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = ["seq", "timestamp", "lat", "lon", "img_path", "cloud_path"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for i in 1..=n_beams {
        header.push(format!("power{i}"));
    }
    header.push("best_beam".into());
    writer
        .write_record(&header)
        .map_err(|e| DataError::Malformed { path: index_path.clone(), message: e.to_string() })?;

    for (seq, sample) in dataset.samples.iter().enumerate() {
        let (img_rel, cloud_rel) = artifact_names(seq);
        write_ppm(&dir.join(&img_rel), &sample.image)?;
        write_cloud(&dir.join(&cloud_rel), &sample.cloud)?;
        let mut record: Vec<String> = vec![
            seq.to_string(),
            format!("{}", sample.timestamp_s),
            format!("{}", sample.gps.lat_deg),
            format!("{}", sample.gps.lon_deg),
            img_rel,
            cloud_rel,
        ];
        for p in &sample.power_profile {
            record.push(format!("{p}"));
        }
        record.push(sample.best_beam.0.to_string());
        writer.write_record(&record).map_err(|e| DataError::Malformed {
            path: index_path.clone(),
            message: e.to_string(),
        })?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| DataError::Malformed { path: index_path.clone(), message: e.to_string() })?;
    atomic_write(&index_path, &bytes)
}

/// Loads a dataset directory. Rows keep file order; out-of-order timestamps
/// are reported, not rejected.
pub fn load_dataset(dir: &Path) -> Result<(Dataset, DatasetManifest, LoadReport), DataError> {
    let manifest_path = dir.join("manifest.json");
    let manifest_bytes = fs::read(&manifest_path).map_err(io_err(&manifest_path))?;
    let manifest: DatasetManifest =
        serde_json::from_slice(&manifest_bytes).map_err(|e| DataError::Malformed {
            path: manifest_path.clone(),
            message: e.to_string(),
        })?;

    let index_path = dir.join("index.csv");
    let file = fs::File::open(&index_path).map_err(io_err(&index_path))?;
    let mut reader = csv::Reader::from_reader(file);
    let headers = reader
        .headers()
        .map_err(|e| DataError::Malformed { path: index_path.clone(), message: e.to_string() })?
        .clone();
    let expected_fields = 7 + manifest.n_beams;
    if headers.len() != expected_fields {
        return Err(DataError::SchemaError {
            row: 0,
            message: format!(
                "index has {} columns, expected {expected_fields} for {} beams",
                headers.len(),
                manifest.n_beams
            ),
        });
    }

    let mut report = LoadReport::default();
    let mut samples = Vec::new();
    let mut previous_time = f64::NEG_INFINITY;
    for (i, record) in reader.records().enumerate() {
        let row = i + 1; // 1-based data row, matching spreadsheet conventions
        let record = record
            .map_err(|e| DataError::SchemaError { row, message: e.to_string() })?;
        if record.len() != expected_fields {
            return Err(DataError::SchemaError {
                row,
                message: format!(
                    "row has {} fields, expected {expected_fields} ({} power columns)",
                    record.len(),
                    manifest.n_beams
                ),
            });
        }
        let parse_f64 = |field: usize, name: &str| -> Result<f64, DataError> {
            record[field].parse().map_err(|_| DataError::SchemaError {
                row,
                message: format!("bad {name}: {:?}", &record[field]),
            })
        };
        let timestamp = parse_f64(1, "timestamp")?;
        if timestamp < previous_time {
            report
                .warnings
                .push(format!("row {row}: timestamp {timestamp} not monotonically increasing"));
        }
        previous_time = timestamp;
        let lat = parse_f64(2, "lat")?;
        let lon = parse_f64(3, "lon")?;

        let img_path = dir.join(&record[4]);
        if !img_path.is_file() {
            return Err(DataError::MissingArtifact { row, column: "img_path", path: img_path });
        }
        let cloud_path = dir.join(&record[5]);
        if !cloud_path.is_file() {
            return Err(DataError::MissingArtifact { row, column: "cloud_path", path: cloud_path });
        }
        let image = read_ppm(&img_path)?;
        let cloud = read_cloud(&cloud_path)?;

        let mut power_profile = Vec::with_capacity(manifest.n_beams);
        for b in 0..manifest.n_beams {
            power_profile.push(parse_f64(6 + b, &format!("power{}", b + 1))?);
        }
        let best_beam: usize = record[6 + manifest.n_beams].parse().map_err(|_| {
            DataError::SchemaError {
                row,
                message: format!("bad best_beam: {:?}", &record[6 + manifest.n_beams]),
            }
        })?;
        if best_beam < 1 || best_beam > manifest.n_beams {
            return Err(DataError::SchemaError {
                row,
                message: format!("best_beam {best_beam} outside 1..={}", manifest.n_beams),
            });
        }
        samples.push(Sample {
            timestamp_s: timestamp,
            gps: GpsFix { lat_deg: lat, lon_deg: lon },
            image,
            cloud,
            power_profile,
            best_beam: BeamIndex(best_beam),
        });
    }

    let n = samples.len();
    for (name, split) in [
        ("train", &manifest.splits.train),
        ("val", &manifest.splits.val),
        ("test", &manifest.splits.test),
    ] {
        if let Some(&bad) = split.iter().find(|&&i| i >= n) {
            return Err(DataError::SchemaError {
                row: 0,
                message: format!("{name} split references sample {bad}, dataset has {n}"),
            });
        }
    }

    let dataset = Dataset {
        samples,
        split: SplitIndices {
            train: manifest.splits.train.clone(),
            val: manifest.splits.val.clone(),
            test: manifest.splits.test.clone(),
        },
    };
    Ok((dataset, manifest, report))
}

// ── checkpoints and tables ──────────────────────────────────────────────────

pub fn write_checkpoint(path: &Path, params: &ParamSet) -> Result<(), DataError> {
    atomic_write(path, &mmbeam_core::nn::encode_checkpoint(params))
}

pub fn read_checkpoint(path: &Path) -> Result<ParamSet, DataError> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .map_err(io_err(path))?
        .read_to_end(&mut bytes)
        .map_err(io_err(path))?;
    mmbeam_core::nn::decode_checkpoint(&bytes)
        .map_err(|e| DataError::Malformed { path: path.to_path_buf(), message: e.to_string() })
}

/// Writes rows of `(name, value)` pairs as a two-line-per-entry flat CSV.
pub fn write_csv_table(
    path: &Path,
    header: &[&str],
    rows: &[Vec<String>],
) -> Result<(), DataError> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer
        .write_record(header)
        .map_err(|e| DataError::Malformed { path: path.to_path_buf(), message: e.to_string() })?;
    for row in rows {
        writer.write_record(row).map_err(|e| DataError::Malformed {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| DataError::Malformed { path: path.to_path_buf(), message: e.to_string() })?;
    atomic_write(path, &bytes)
}

/// Effective-config snapshot type used across manifests: sorted key/value.
pub type ConfigSnapshot = BTreeMap<String, String>;
