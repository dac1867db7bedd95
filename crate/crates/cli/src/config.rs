//! File configuration. Values left out of the file keep their defaults, and
//! command-line flags are applied on top afterwards.

use std::path::Path;

use anyhow::{Context, Result};
use serde::Deserialize;
use stitchstab::hyperlapse::{HyperlapseParams, Preset};
use stitchstab::pipeline::RunOptions;
use stitchstab::synth::SynthSpec;

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub run: RunOptions,
    pub hyperlapse: HyperlapseParams,
    /// `preset` key of the `[hyperlapse]` table; sets the beam width unless
    /// `beam` is given there too.
    #[serde(skip)]
    pub preset: Option<Preset>,
    pub synth: SynthSpec,
    /// Skip factors the `eval` command plans hyperlapses for.
    pub eval_skips: Option<Vec<usize>>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let mut table: toml::Table = toml::from_str(text)?;
        let mut preset = None;
        let mut explicit_beam = false;
        if let Some(toml::Value::Table(hl)) = table.get_mut("hyperlapse") {
            explicit_beam = hl.contains_key("beam");
            if let Some(p) = hl.remove("preset") {
                preset = Some(p.try_into::<Preset>()?);
            }
        }
        let mut cfg: Config = toml::Value::Table(table).try_into()?;
        cfg.preset = preset;
        if let (Some(p), false) = (preset, explicit_beam) {
            cfg.hyperlapse.beam = p.beam();
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}
