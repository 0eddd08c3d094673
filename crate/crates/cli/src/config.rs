//! The `--config` file: one optional section per subcommand, mirroring its
//! flags. Flags given on the command line win over file values.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use deskew::datagen::GenConfig;
use serde::Deserialize;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    #[serde(default)]
    pub generate: GenerateSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(default)]
    pub deskew: DeskewSection,
    #[serde(default)]
    pub compare_losses: CompareSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateSection {
    pub docs: Option<PathBuf>,
    pub backgrounds: Option<Vec<PathBuf>>,
    pub n: Option<usize>,
    pub out: Option<PathBuf>,
    pub occlude_margins: Option<bool>,
    pub grayscale: Option<bool>,
    /// Full generator configuration; `seed`, `occlude_margins` and
    /// `grayscale` flags are applied on top.
    pub gen: Option<GenConfig>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub dataset: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub history: Option<PathBuf>,
    pub width: Option<f64>,
    pub loss: Option<String>,
    pub berhu_c: Option<f64>,
    pub berhu_continuous: Option<bool>,
    pub optimizer: Option<String>,
    pub lr: Option<f64>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub max_steps: Option<usize>,
    pub no_schedule: Option<bool>,
    pub log_every: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    pub model: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
    pub split: Option<String>,
    pub report: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeskewSection {
    pub model: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub dump_corners: Option<PathBuf>,
    pub size: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareSection {
    pub dataset: Option<PathBuf>,
    pub losses: Option<Vec<String>>,
    pub seeds: Option<Vec<u64>>,
    pub berhu_c: Option<f64>,
    pub width: Option<f64>,
    pub lr: Option<f64>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub max_steps: Option<usize>,
    pub split: Option<String>,
    pub csv: Option<PathBuf>,
}

impl FileConfig {
    /// Parses a config file; errors name the offending key path.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let de = &mut serde_json::Deserializer::from_str(&text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            anyhow::anyhow!(
                "config {}: at `{}`: {}",
                path.display(),
                e.path(),
                e.inner()
            )
        })
    }
}
