//! Flat key-value run configuration.
//!
//! The config file is plain text, one `key = value` per line, `#` comments,
//! dotted section prefixes (`scenario.`, `train.`, ...). Every key has a
//! default; the file overrides defaults and repeated `--override key=value`
//! flags override the file. Unknown keys are rejected so typos surface as
//! usage errors, and the effective snapshot is recorded in the run manifest.

use std::collections::BTreeMap;
use std::path::Path;

use mmbeam_core::channel::PulseKind;
use mmbeam_core::model::{
    FusionHeadConfig, ModelConfig, PointNetLiteConfig, VisualNetConfig,
};
use mmbeam_core::nn::AdamConfig;
use mmbeam_core::preprocess::ModalitySet;
use mmbeam_core::scenario::{
    GeoAnchor, Obstacle, RadioConfig, ScenarioKind, ScenarioSpec, SensorConfig, Trajectory,
};
use mmbeam_core::model::TrainConfig;

use crate::dataio::ConfigSnapshot;
use crate::CliError;

const DEFAULTS: &[(&str, &str)] = &[
    ("scenario.kind", "v2i"),
    ("scenario.n_samples", "400"),
    ("scenario.receiver_x", "0"),
    ("scenario.receiver_y", "0"),
    ("scenario.waypoints", "-80,14; 80,30"),
    ("scenario.speed", "8"),
    ("scenario.interval", "0.1"),
    ("scenario.obstacles", ""),
    ("sensors.anchor_lat", "33.42"),
    ("sensors.anchor_lon", "-111.93"),
    ("sensors.gps_noise_std", "1"),
    ("sensors.lidar_rays", "192"),
    ("sensors.lidar_max_range", "120"),
    ("sensors.image_width", "224"),
    ("sensors.image_height", "224"),
    ("sensors.view_half_extent", "100"),
    ("radio.n_subcarriers", "16"),
    ("radio.cyclic_prefix", "1"),
    ("radio.symbol_period", "1e-5"),
    ("radio.pulse", "sinc"),
    ("radio.max_reflections", "2"),
    ("radio.reflection_loss", "0.3"),
    ("radio.noise_variance", "0"),
    ("array.n_elements", "16"),
    ("array.spacing", "0.5"),
    ("codebook.n_beams", "64"),
    ("data.path", ""),
    ("train.epochs", "40"),
    ("train.batch_size", "16"),
    ("train.learning_rate", "0.01"),
    ("train.weight_decay", "1e-4"),
    ("train.modalities", "pos,vis,lid"),
    ("model.preset", "default"),
    ("model.fusion_hidden", "256"),
    ("model.target_points", "15000"),
    ("eval.checkpoint", ""),
    ("eval.topm", "1,5,9,13"),
];

/// Effective configuration: defaults, file, then overrides.
#[derive(Debug, Clone)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
    pub seed: u64,
}

impl RunConfig {
    pub fn load(
        config_path: Option<&Path>,
        overrides: &[String],
        seed: u64,
    ) -> Result<Self, CliError> {
        let mut values: BTreeMap<String, String> =
            DEFAULTS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();

        if let Some(path) = config_path {
            let text = std::fs::read_to_string(path).map_err(|e| {
                CliError::Usage(format!("cannot read config {}: {e}", path.display()))
            })?;
            for (lineno, line) in text.lines().enumerate() {
                let line = line.split('#').next().unwrap_or("").trim();
                if line.is_empty() {
                    continue;
                }
                let Some((key, value)) = line.split_once('=') else {
                    return Err(CliError::Usage(format!(
                        "{}:{}: expected `key = value`",
                        path.display(),
                        lineno + 1
                    )));
                };
                Self::set_known(&mut values, key.trim(), value.trim())?;
            }
        }
        for item in overrides {
            let Some((key, value)) = item.split_once('=') else {
                return Err(CliError::Usage(format!("--override {item:?}: expected key=value")));
            };
            Self::set_known(&mut values, key.trim(), value.trim())?;
        }
        Ok(RunConfig { values, seed })
    }

    fn set_known(
        values: &mut BTreeMap<String, String>,
        key: &str,
        value: &str,
    ) -> Result<(), CliError> {
        if !values.contains_key(key) {
            return Err(CliError::Usage(format!("unknown config key {key:?}")));
        }
        values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    pub fn snapshot(&self) -> ConfigSnapshot {
        let mut map = self.values.clone();
        map.insert("run.seed".into(), self.seed.to_string());
        map
    }

    fn raw(&self, key: &str) -> &str {
        self.values.get(key).map(|s| s.as_str()).unwrap_or("")
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T, CliError> {
        self.raw(key).parse().map_err(|_| {
            CliError::Usage(format!("config {key} = {:?} is not valid", self.raw(key)))
        })
    }

    pub fn string(&self, key: &str) -> String {
        self.raw(key).to_string()
    }

    // ── typed sections ──────────────────────────────────────────────────

    pub fn scenario_kind(&self) -> Result<ScenarioKind, CliError> {
        match self.raw("scenario.kind").to_ascii_lowercase().as_str() {
            "v2i" => Ok(ScenarioKind::V2I),
            "v2v" => Ok(ScenarioKind::V2V),
            other => Err(CliError::Usage(format!(
                "scenario.kind must be v2i or v2v, got {other:?}"
            ))),
        }
    }

    pub fn scenario_spec(&self) -> Result<ScenarioSpec, CliError> {
        let waypoints = parse_waypoints(self.raw("scenario.waypoints"))?;
        let obstacles = parse_obstacles(self.raw("scenario.obstacles"))?;
        Ok(ScenarioSpec {
            kind: self.scenario_kind()?,
            n_samples: self.parse("scenario.n_samples")?,
            receiver_position: [self.parse("scenario.receiver_x")?, self.parse("scenario.receiver_y")?],
            trajectory: Trajectory { waypoints, speed_mps: self.parse("scenario.speed")? },
            obstacles,
            sample_interval_s: self.parse("scenario.interval")?,
            seed: self.seed,
            sensors: SensorConfig {
                anchor: GeoAnchor {
                    lat_deg: self.parse("sensors.anchor_lat")?,
                    lon_deg: self.parse("sensors.anchor_lon")?,
                },
                gps_noise_std_m: self.parse("sensors.gps_noise_std")?,
                lidar_rays: self.parse("sensors.lidar_rays")?,
                lidar_max_range_m: self.parse("sensors.lidar_max_range")?,
                image_width: self.parse("sensors.image_width")?,
                image_height: self.parse("sensors.image_height")?,
                view_half_extent_m: self.parse("sensors.view_half_extent")?,
            },
            radio: RadioConfig {
                n_subcarriers: self.parse("radio.n_subcarriers")?,
                cyclic_prefix_len: self.parse("radio.cyclic_prefix")?,
                symbol_period_s: self.parse("radio.symbol_period")?,
                pulse: match self.raw("radio.pulse").to_ascii_lowercase().as_str() {
                    "sinc" => PulseKind::Sinc,
                    "rect" => PulseKind::Rect,
                    other => {
                        return Err(CliError::Usage(format!(
                            "radio.pulse must be sinc or rect, got {other:?}"
                        )))
                    }
                },
                max_reflections: self.parse("radio.max_reflections")?,
                reflection_loss: self.parse("radio.reflection_loss")?,
                measurement_noise_variance: self.parse("radio.noise_variance")?,
            },
        })
    }

    pub fn array(&self) -> Result<mmbeam_core::channel::ArrayConfig, CliError> {
        Ok(mmbeam_core::channel::ArrayConfig {
            n_elements: self.parse("array.n_elements")?,
            element_spacing: self.parse("array.spacing")?,
        })
    }

    pub fn n_beams(&self) -> Result<usize, CliError> {
        self.parse("codebook.n_beams")
    }

    pub fn modalities(&self, flag: Option<&str>) -> Result<ModalitySet, CliError> {
        let raw = flag.map(|s| s.to_string()).unwrap_or_else(|| self.string("train.modalities"));
        let mut set = ModalitySet { position: false, visual: false, lidar: false };
        for item in raw.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            match item.to_ascii_lowercase().as_str() {
                "pos" | "position" => set.position = true,
                "vis" | "visual" => set.visual = true,
                "lid" | "lidar" => set.lidar = true,
                other => {
                    return Err(CliError::Usage(format!(
                        "unknown modality {other:?} (expected pos, vis, lid)"
                    )))
                }
            }
        }
        if !set.any() {
            return Err(CliError::Usage("at least one modality must be enabled".into()));
        }
        Ok(set)
    }

    pub fn model_config(&self, modalities: ModalitySet) -> Result<ModelConfig, CliError> {
        let visual = match self.raw("model.preset") {
            "default" => VisualNetConfig::default(),
            "tiny" => VisualNetConfig::tiny(),
            other => {
                return Err(CliError::Usage(format!(
                    "model.preset must be default or tiny, got {other:?}"
                )))
            }
        };
        let mut cfg = ModelConfig {
            n_beams: self.n_beams()?,
            modalities,
            visual,
            fusion: FusionHeadConfig { hidden: self.parse("model.fusion_hidden")? },
            pointnet: PointNetLiteConfig {
                target_points: self.parse("model.target_points")?,
                ..Default::default()
            },
            ..Default::default()
        };
        if self.raw("model.preset") == "tiny" {
            cfg.pointnet.mlp2 = [64, 128, 256];
        }
        Ok(cfg)
    }

    pub fn train_config(&self, modalities: ModalitySet) -> Result<TrainConfig, CliError> {
        Ok(TrainConfig {
            epochs: self.parse("train.epochs")?,
            batch_size: self.parse("train.batch_size")?,
            adam: AdamConfig {
                learning_rate: self.parse("train.learning_rate")?,
                weight_decay: self.parse("train.weight_decay")?,
                ..Default::default()
            },
            seed: self.seed,
            model: self.model_config(modalities)?,
        })
    }

    pub fn topm_list(&self, flag: Option<&str>) -> Result<Vec<usize>, CliError> {
        let raw = flag.map(|s| s.to_string()).unwrap_or_else(|| self.string("eval.topm"));
        let mut out = Vec::new();
        for item in raw.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let m: usize = item
                .parse()
                .map_err(|_| CliError::Usage(format!("bad top-M value {item:?}")))?;
            out.push(m);
        }
        if out.is_empty() {
            return Err(CliError::Usage("top-M list is empty".into()));
        }
        Ok(out)
    }
}

fn parse_waypoints(raw: &str) -> Result<Vec<[f64; 2]>, CliError> {
    let mut out = Vec::new();
    for part in raw.split(';').map(str::trim).filter(|s| !s.is_empty()) {
        let nums: Vec<&str> = part.split(',').map(str::trim).collect();
        if nums.len() != 2 {
            return Err(CliError::Usage(format!(
                "waypoint {part:?} must be `x,y`"
            )));
        }
        let x = nums[0]
            .parse()
            .map_err(|_| CliError::Usage(format!("bad waypoint x {:?}", nums[0])))?;
        let y = nums[1]
            .parse()
            .map_err(|_| CliError::Usage(format!("bad waypoint y {:?}", nums[1])))?;
        out.push([x, y]);
    }
    if out.is_empty() {
        return Err(CliError::Usage("scenario.waypoints is empty".into()));
    }
    Ok(out)
}

fn parse_obstacles(raw: &str) -> Result<Vec<Obstacle>, CliError> {
    let mut out = Vec::new();
    for part in raw.split(';').map(str::trim).filter(|s| !s.is_empty()) {
        let nums: Result<Vec<f64>, _> =
            part.split(',').map(|s| s.trim().parse::<f64>()).collect();
        let nums = nums
            .map_err(|_| CliError::Usage(format!("bad obstacle {part:?}")))?;
        if nums.len() != 6 {
            return Err(CliError::Usage(format!(
                "obstacle {part:?} must be `x0,y0,z0,x1,y1,z1`"
            )));
        }
        out.push(Obstacle::new(
            [nums[0], nums[1], nums[2]],
            [nums[3], nums[4], nums[5]],
        ));
    }
    Ok(out)
}
