use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use framegraph::decoder::DecodeOptions;
use framegraph::encoder::EncoderConfig;
use framegraph::training::TrainConfig;
use serde::{Deserialize, Serialize};

/// Run-level switches.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Flags {
    pub lu_mask: bool,
    pub promote_singleton_pprd: bool,
    /// Training is single-threaded and seeded, so runs are always
    /// reproducible; the flag is kept for the config echo.
    pub deterministic: bool,
}

impl Default for Flags {
    fn default() -> Self {
        Flags {
            lu_mask: true,
            promote_singleton_pprd: false,
            deterministic: true,
        }
    }
}

impl Flags {
    pub fn decode_options(&self) -> DecodeOptions {
        DecodeOptions {
            lu_mask: self.lu_mask,
            promote_singleton_pprd: self.promote_singleton_pprd,
        }
    }
}

/// Training run configuration, read from a JSON file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub train_path: PathBuf,
    #[serde(default)]
    pub dev_path: Option<PathBuf>,
    pub ontology_path: PathBuf,
    pub checkpoint_dir: PathBuf,
    #[serde(default)]
    pub encoder: EncoderConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub flags: Flags,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut config: RunConfig = serde_json::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        // Relative paths are taken from the config file's directory.
        if let Some(base) = path.parent() {
            config.resolve_paths(base);
        }
        Ok(config)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.train_path);
        fix(&mut self.ontology_path);
        fix(&mut self.checkpoint_dir);
        if let Some(dev) = &mut self.dev_path {
            fix(dev);
        }
    }

    /// Checks everything that can be checked before training starts.
    pub fn validate(&self) -> Result<()> {
        for (what, path) in [
            ("ontology", Some(&self.ontology_path)),
            ("train corpus", Some(&self.train_path)),
            ("dev corpus", self.dev_path.as_ref()),
        ] {
            if let Some(path) = path {
                if !path.is_file() {
                    bail!("{what} {} does not exist", path.display());
                }
            }
        }
        self.encoder.validate()?;
        self.train.validate()?;
        Ok(())
    }
}
