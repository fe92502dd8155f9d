//! JSON config files and their merge with command-line flags.
//!
//! Precedence, highest first: flag, environment (output dir only), config
//! file, built-in default.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use qig::codec::QualityLevel;
use qig::harness::{Metric, ProviderSpec, SyntheticRecipe};
use qig::ig::Scheme;
use qig::viz::Polarity;
use serde::{Deserialize, Serialize};

/// A problem with how the tool was invoked. Maps to exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Where the scorer comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelSource {
    Checkpoint(PathBuf),
    Provider(ProviderSpec),
    TrainFresh,
}

/// Which quality levels get overlay images.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum OverlayMode {
    /// Only the most degraded quality.
    #[default]
    Last,
    All,
    None,
}

/// Partial synthetic-recipe settings; unset fields keep the recipe default.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecipeOverrides {
    pub classes: Option<usize>,
    pub per_class: Option<usize>,
    pub eval_per_class: Option<usize>,
    pub side: Option<usize>,
    pub hidden: Option<Vec<usize>>,
    pub embed_dim: Option<usize>,
    pub temperature: Option<f64>,
    pub lr: Option<f64>,
    pub epochs: Option<usize>,
    pub batch: Option<usize>,
}

impl RecipeOverrides {
    /// `self` wins over `under`.
    pub fn over(self, under: RecipeOverrides) -> RecipeOverrides {
        RecipeOverrides {
            classes: self.classes.or(under.classes),
            per_class: self.per_class.or(under.per_class),
            eval_per_class: self.eval_per_class.or(under.eval_per_class),
            side: self.side.or(under.side),
            hidden: self.hidden.or(under.hidden),
            embed_dim: self.embed_dim.or(under.embed_dim),
            temperature: self.temperature.or(under.temperature),
            lr: self.lr.or(under.lr),
            epochs: self.epochs.or(under.epochs),
            batch: self.batch.or(under.batch),
        }
    }

    pub fn build(self, seed: u64) -> SyntheticRecipe {
        let d = SyntheticRecipe::default();
        SyntheticRecipe {
            seed,
            classes: self.classes.unwrap_or(d.classes),
            per_class: self.per_class.unwrap_or(d.per_class),
            eval_per_class: self.eval_per_class.unwrap_or(d.eval_per_class),
            side: self.side.unwrap_or(d.side),
            hidden: self.hidden.unwrap_or(d.hidden),
            embed_dim: self.embed_dim.unwrap_or(d.embed_dim),
            temperature: self.temperature.unwrap_or(d.temperature),
            lr: self.lr.unwrap_or(d.lr),
            epochs: self.epochs.unwrap_or(d.epochs),
            batch: self.batch.unwrap_or(d.batch),
        }
    }
}

/// Everything a config file may set. All fields are optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub out: Option<PathBuf>,
    pub steps: Option<usize>,
    pub scheme: Option<Scheme>,
    pub qualities: Option<Vec<QualityLevel>>,
    pub metric: Option<Metric>,
    pub model: Option<ModelSource>,
    pub model_name: Option<String>,
    pub data: Option<PathBuf>,
    #[serde(default)]
    pub synthetic: RecipeOverrides,
    pub subsample_below: Option<u8>,
    pub limit: Option<usize>,
    pub overlays: Option<OverlayMode>,
    pub polarity: Option<Polarity>,
    pub image_weight: Option<f64>,
    pub ig_weight: Option<f64>,
    pub save_maps: Option<bool>,
}

impl FileConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text)
            .map_err(|e| usage(format!("invalid config {}: {e}", path.display())))
    }
}

/// The echo of every resolved setting, written next to the artifacts.
#[derive(Debug, Serialize)]
pub struct Manifest<'a, S: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub subcommand: &'a str,
    pub settings: &'a S,
}

pub const MANIFEST_FILE: &str = "run-manifest.json";

pub fn write_manifest<S: Serialize>(
    out: &Path,
    subcommand: &str,
    settings: &S,
) -> anyhow::Result<()> {
    let m = Manifest {
        tool: "qig",
        version: env!("CARGO_PKG_VERSION"),
        subcommand,
        settings,
    };
    let mut text = serde_json::to_string_pretty(&m)?;
    text.push('\n');
    let path = out.join(MANIFEST_FILE);
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model_source_forms() {
        let c: FileConfig = serde_json::from_str(r#"{"model":"train_fresh"}"#).unwrap();
        assert_eq!(c.model, Some(ModelSource::TrainFresh));
        let c: FileConfig = serde_json::from_str(r#"{"model":{"checkpoint":"m.json"}}"#).unwrap();
        assert_eq!(c.model, Some(ModelSource::Checkpoint("m.json".into())));
        let c: FileConfig =
            serde_json::from_str(r#"{"model":{"provider":{"command":["py","srv.py"]}}}"#).unwrap();
        match c.model {
            Some(ModelSource::Provider(p)) => assert_eq!(p.command, ["py", "srv.py"]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn two_model_sources_rejected() {
        let r = serde_json::from_str::<FileConfig>(
            r#"{"model":{"checkpoint":"m.json","provider":{"command":["x"]}}}"#,
        );
        assert!(r.is_err());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(serde_json::from_str::<FileConfig>(r#"{"step":5}"#).is_err());
    }

    #[test]
    fn qualities_parse() {
        let c: FileConfig = serde_json::from_str(r#"{"qualities":["original","50"]}"#).unwrap();
        assert_eq!(
            c.qualities.unwrap(),
            [QualityLevel::Original, QualityLevel::Quality(50)]
        );
    }

    #[test]
    fn recipe_layering() {
        let flags = RecipeOverrides {
            epochs: Some(3),
            ..Default::default()
        };
        let file = RecipeOverrides {
            epochs: Some(9),
            classes: Some(2),
            ..Default::default()
        };
        let r = flags.over(file).build(5);
        assert_eq!((r.seed, r.epochs, r.classes), (5, 3, 2));
        assert_eq!(r.side, SyntheticRecipe::default().side);
    }
}
