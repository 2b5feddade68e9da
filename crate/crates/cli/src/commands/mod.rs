//! Command implementations behind the `mmbeam` binary.

mod eval;
mod generate;
mod gradcheck;
mod sweep;
mod train;

pub use eval::cmd_eval;
pub use generate::cmd_generate;
pub use gradcheck::cmd_gradcheck;
pub use sweep::cmd_sweep_report;
pub use train::cmd_train;

use std::path::{Path, PathBuf};

use crate::config::RunConfig;
use crate::CliError;

/// Dataset directory: `data.path` from the config, defaulting to
/// `<out>/dataset`.
pub(crate) fn dataset_dir(cfg: &RunConfig, out_dir: &Path) -> PathBuf {
    let configured = cfg.string("data.path");
    if configured.is_empty() {
        out_dir.join("dataset")
    } else {
        PathBuf::from(configured)
    }
}

/// Checkpoint path: `eval.checkpoint` from the config, defaulting to
/// `<out>/best.ckpt`.
pub(crate) fn checkpoint_path(cfg: &RunConfig, out_dir: &Path) -> PathBuf {
    let configured = cfg.string("eval.checkpoint");
    if configured.is_empty() {
        out_dir.join("best.ckpt")
    } else {
        PathBuf::from(configured)
    }
}

pub(crate) fn ensure_out_dir(out_dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(out_dir)
        .map_err(|e| CliError::Usage(format!("cannot create {}: {e}", out_dir.display())))
}
