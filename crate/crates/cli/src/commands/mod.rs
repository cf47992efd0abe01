pub mod build_dataset;
pub mod evaluate;
pub mod forecast;
pub mod judge;
pub mod synth;
pub mod train_toy;

use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use shockcast::dataset::{self, ForecastingQuestion};
use shockcast::manifest::RunManifest;

use crate::CliError;

/// Creates the output directory and returns a manifest seeded with the
/// command, config snapshot, and input digests.
pub fn start_run(
    command: &str,
    config_snapshot: serde_json::Value,
    inputs: &[PathBuf],
    out_dir: &Path,
) -> Result<RunManifest, CliError> {
    fs::create_dir_all(out_dir)?;
    RunManifest::new(command, config_snapshot, inputs)
        .map_err(|e| CliError::input(format!("cannot digest inputs: {e}")))
}

pub fn finish_run(mut manifest: RunManifest, out_dir: &Path) -> Result<(), CliError> {
    manifest.finish();
    manifest
        .write_to(out_dir)
        .map_err(|e| CliError::input(format!("cannot write manifest: {e}")))
}

/// Loads questions from native JSONL, or through an adapter mapping when
/// `adapter` names a TOML config for an external schema.
pub fn load_questions(
    path: &Path,
    adapter: Option<&Path>,
) -> Result<Vec<ForecastingQuestion>, CliError> {
    let file = fs::File::open(path)
        .map_err(|e| CliError::input(format!("cannot open {}: {e}", path.display())))?;
    let reader = BufReader::new(file);
    match adapter {
        None => dataset::read_questions_jsonl(reader)
            .map_err(|e| CliError::input(format!("{}: {e}", path.display()))),
        Some(adapter_path) => {
            let text = fs::read_to_string(adapter_path).map_err(|e| {
                CliError::input(format!(
                    "cannot read adapter {}: {e}",
                    adapter_path.display()
                ))
            })?;
            let config: dataset::AdapterConfig = toml::from_str(&text)
                .map_err(|e| CliError::input(format!("adapter {}: {e}", adapter_path.display())))?;
            dataset::load_adapted_questions(reader, &config)
                .map_err(|e| CliError::input(format!("{}: {e}", path.display())))
        }
    }
}
