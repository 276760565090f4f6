use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

/// Looked up in the working directory when `--config` is absent.
pub const DEFAULT_CONFIG_FILE: &str = "mazenav.toml";

/// Settings shared by every subcommand. Command-line flags override the
/// file, which overrides the built-in defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GlobalConfig {
    /// Glyph pack name: ascii, emoji or placeholders.
    pub glyphs: String,
    pub segment_len: usize,
    pub tiers: Vec<u32>,
    pub turnpoint: usize,
    pub rule: usize,
    pub structured: usize,
    pub out_dir: PathBuf,
    pub seed: u64,
}

impl Default for GlobalConfig {
    fn default() -> Self {
        GlobalConfig {
            glyphs: "ascii".into(),
            segment_len: mazenav_core::sdpo::DEFAULT_SEGMENT_LEN,
            tiers: (1..=mazenav_core::DifficultyTier::DEFAULT_COUNT).collect(),
            turnpoint: 11_000,
            rule: 5_000,
            structured: 7_000,
            out_dir: PathBuf::from("out"),
            seed: 0,
        }
    }
}

impl GlobalConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    /// Reads `explicit` if given, else the default file if it exists,
    /// else the built-in defaults.
    pub fn load(explicit: Option<&Path>) -> Result<Self> {
        let path = match explicit {
            Some(p) => p.to_path_buf(),
            None => {
                let p = PathBuf::from(DEFAULT_CONFIG_FILE);
                if !p.exists() {
                    return Ok(Self::default());
                }
                p
            }
        };
        let text = std::fs::read_to_string(&path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.segment_len == 0 {
            bail!("segment_len must be at least 1");
        }
        if self.tiers.is_empty() || self.tiers.contains(&0) {
            bail!("tiers must be a non-empty list of positive integers");
        }
        mazenav_core::GlyphTable::pack(&self.glyphs)?;
        Ok(())
    }
}
