//! `mmbeam generate`: synthesize a labeled scenario and write the dataset.

use std::path::Path;

use mmbeam_core::channel::make_dft_codebook;
use mmbeam_core::scenario::{generate_scenario, ScenarioKind};

use crate::config::RunConfig;
use crate::dataio::save_dataset;
use crate::manifest::RunManifest;
use crate::CliError;

use super::{dataset_dir, ensure_out_dir};

pub fn cmd_generate(cfg: &RunConfig, out_dir: &Path, config_path: Option<&Path>) -> Result<(), CliError> {
    ensure_out_dir(out_dir)?;
    let spec = cfg.scenario_spec()?;
    let array = cfg.array()?;
    let codebook = make_dft_codebook(&array, cfg.n_beams()?)
        .map_err(|e| CliError::Usage(e.to_string()))?;

    let generated = generate_scenario(&spec, &array, &codebook)
        .map_err(|e| CliError::Usage(e.to_string()))?;

    let dir = dataset_dir(cfg, out_dir);
    let kind = match spec.kind {
        ScenarioKind::V2I => "V2I",
        ScenarioKind::V2V => "V2V",
    };
    save_dataset(&generated.dataset, &dir, array.n_elements, cfg.seed, kind)
        .map_err(|e| CliError::Data(e.to_string()))?;

    let mut manifest = RunManifest::new("generate", cfg.seed, cfg.snapshot());
    if let Some(path) = config_path {
        manifest.add_input("config", path);
    }
    manifest.write(out_dir).map_err(|e| CliError::Data(e.to_string()))?;

    println!(
        "generated {} samples ({kind}, {} beams) into {}",
        generated.dataset.samples.len(),
        codebook.len(),
        dir.display()
    );
    if !generated.coverage_warnings.is_empty() {
        println!(
            "coverage warning: {} samples outside the codebook span (kept): first at index {}",
            generated.coverage_warnings.len(),
            generated.coverage_warnings[0]
        );
    }
    Ok(())
}
