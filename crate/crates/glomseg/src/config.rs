//! Flat `key = value` run configuration with section prefixes.
//!
//! Files hold one assignment per line; `#` starts a comment. Every key must
//! appear in [`SCHEMA`]. Command-line `--set key=value` pairs are applied on
//! top of the file, in order.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use glomseg_core::data::{Normalization, TransferApproach, DEFAULT_RATIOS};
use glomseg_core::evaluation::EvalOptions;
use glomseg_core::loss::LossKind;
use glomseg_core::network::NetConfig;
use glomseg_core::optim::{LrSchedule, Method, OptimizerConfig};
use glomseg_core::taxonomy::{ClassSet, Species, Taxonomy};
use glomseg_core::training::{Augmentation, TrainConfig};

use crate::error::{PipelineError, Result};
use crate::io::read_text;

/// `(key, default, description)` for every accepted key.
pub const SCHEMA: &[(&str, &str, &str)] = &[
    ("data.root", "data", "dataset tree root"),
    ("data.manifest", "", "manifest path; defaults to <data.root>/manifest.tsv"),
    ("data.size", "512", "patch side after resizing"),
    ("data.ratios", "0.6,0.1,0.3", "train/val/test patient ratios"),
    ("data.classes", "all", "classes used for training and evaluation"),
    ("model.stages", "32,64,128,256,512", "backbone channel width per level"),
    ("model.blocks", "2", "residual blocks per level"),
    ("model.norm_groups", "8", "group-normalization groups"),
    ("model.decoder_out", "8", "decoder output channels fed to the head"),
    ("model.head_hidden", "8", "hidden width of the dynamic head"),
    ("train.epochs", "200", "training epochs"),
    ("train.batch_size", "4", "images per optimization step"),
    ("train.optimizer", "sgd", "sgd (momentum 0.99, nesterov) or adam"),
    ("train.lr", "0.01", "initial learning rate"),
    ("train.weight_decay", "0.0001", "L2 penalty"),
    ("train.schedule", "poly", "poly or constant"),
    ("train.loss", "dice_bce", "dice_bce, dice or bce"),
    ("train.flip", "true", "random horizontal and vertical flips"),
    ("train.rotate90", "true", "random quarter turns"),
    ("train.drop_last", "false", "discard the short batch at the end of an epoch"),
    ("eval.split", "test", "split scored by eval: train, val or test"),
    ("eval.kind", "holistic", "holistic or rodent"),
    ("eval.include_empty", "false", "score samples with empty ground truth"),
    ("eval.method", "DynamicHead", "method name printed in report tables"),
    ("eval.checkpoint", "", "checkpoint for eval and segment"),
    ("transfer.approaches", "all", "comma-separated subset of H2H,R2H,RH2H,RH2H_T"),
    ("synth.count", "56", "number of phantoms"),
    ("synth.canvas", "512", "phantom side length in pixels"),
    ("synth.classes", "all", "classes cycled through the phantoms"),
    ("synth.patients", "10", "patients assigned round-robin"),
    ("synth.species", "rodent", "rodent, human or mixed"),
    ("synth.shift", "0.35", "colour-shift strength of human phantoms"),
    ("segment.input", "", "directory of patches to segment"),
    ("segment.classes", "all", "classes exported as mask channels"),
    ("run.seed", "0", "seed for splits, sampling and initialization"),
    ("run.out", "runs", "parent directory of run directories"),
    ("run.name", "", "run directory name; defaults to the command"),
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
    /// Keys set by a file or override, in the order they were applied.
    explicit: Vec<String>,
}

fn config_error(msg: impl Into<String>) -> PipelineError {
    PipelineError::Config(msg.into())
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            values: SCHEMA.iter().map(|(k, v, _)| (k.to_string(), v.to_string())).collect(),
            explicit: Vec::new(),
        }
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let mut cfg = RunConfig::default();
        cfg.apply_text(&read_text(path)?)
            .map_err(|e| config_error(format!("{}: {}", path.display(), e.to_string().trim_start_matches("config: "))))?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| config_error(format!("line {}: expected key = value", n + 1)))?;
            self.set(k.trim(), v.trim()).map_err(|e| config_error(format!("line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if !SCHEMA.iter().any(|(k, _, _)| *k == key) {
            return Err(config_error(format!("unknown key `{key}`")));
        }
        self.values.insert(key.to_string(), value.to_string());
        self.explicit.retain(|k| k != key);
        self.explicit.push(key.to_string());
        Ok(())
    }

    /// `key=value` override from the command line.
    pub fn apply_override(&mut self, pair: &str) -> Result<()> {
        let (k, v) = pair.split_once('=').ok_or_else(|| config_error(format!("override `{pair}` is not key=value")))?;
        self.set(k.trim(), v.trim())
    }

    pub fn get(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or_else(|| panic!("`{key}` is not in the schema"))
    }

    pub fn parse<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        let v = self.get(key);
        v.parse().map_err(|e| config_error(format!("{key} = `{v}`: {e}")))
    }

    fn list<T: FromStr>(&self, key: &str) -> Result<Vec<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)
            .split(',')
            .map(|p| p.trim().parse().map_err(|e| config_error(format!("{key}: `{p}`: {e}"))))
            .collect()
    }

    pub fn path(&self, key: &str) -> Option<PathBuf> {
        let v = self.get(key);
        (!v.is_empty()).then(|| PathBuf::from(v))
    }

    pub fn seed(&self) -> Result<u64> {
        self.parse("run.seed")
    }

    /// Every key with its effective value, one `key = value` line each.
    pub fn echo(&self) -> String {
        SCHEMA.iter().map(|(k, _, _)| format!("{k} = {}\n", self.get(k))).collect()
    }

    pub fn explicit_keys(&self) -> &[String] {
        &self.explicit
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.path("data.manifest").unwrap_or_else(|| self.path("data.root").unwrap_or_default().join("manifest.tsv"))
    }

    pub fn size(&self) -> Result<usize> {
        self.parse("data.size")
    }

    pub fn ratios(&self) -> Result<[f64; 3]> {
        let r: Vec<f64> = self.list("data.ratios")?;
        if r.len() != 3 {
            return Err(config_error(format!("data.ratios needs three values, got {}", r.len())));
        }
        let _ = DEFAULT_RATIOS;
        Ok([r[0], r[1], r[2]])
    }

    pub fn classes(&self, key: &str) -> Result<ClassSet> {
        Ok(Taxonomy::canonical().parse_set(self.get(key))?)
    }

    pub fn net(&self) -> Result<NetConfig> {
        let mut net = NetConfig::default();
        net.backbone.stage_channels = self.list("model.stages")?;
        net.backbone.blocks_per_stage = self.parse("model.blocks")?;
        net.backbone.norm_groups = self.parse("model.norm_groups")?;
        net.backbone.decoder_out_channels = self.parse("model.decoder_out")?;
        net.backbone.input_size = self.size()?;
        net.head_hidden = self.parse("model.head_hidden")?;
        net.validate()?;
        Ok(net)
    }

    pub fn train(&self, normalization: Option<Normalization>) -> Result<TrainConfig> {
        let method: Method = self.parse("train.optimizer")?;
        Ok(TrainConfig {
            epochs: self.parse("train.epochs")?,
            batch_size: self.parse("train.batch_size")?,
            loss: self.parse::<LossKind>("train.loss")?,
            optimizer: OptimizerConfig { method, lr: self.parse("train.lr")?, weight_decay: self.parse("train.weight_decay")? },
            schedule: self.parse::<LrSchedule>("train.schedule")?,
            seed: self.seed()?,
            normalization,
            augmentation: Augmentation { flip: self.parse("train.flip")?, rotate90: self.parse("train.rotate90")? },
            drop_last: self.parse("train.drop_last")?,
            eval: self.eval_options()?,
        })
    }

    pub fn approaches(&self) -> Result<Vec<TransferApproach>> {
        let list = self.get("transfer.approaches");
        if list.trim().eq_ignore_ascii_case("all") {
            return Ok(TransferApproach::ALL.to_vec());
        }
        list.split(',').map(|a| a.trim().parse().map_err(|e| config_error(format!("transfer.approaches: {e}")))).collect()
    }

    /// `None` for mixed-species synthesis.
    pub fn synth_species(&self) -> Result<Option<Species>> {
        match self.get("synth.species").to_ascii_lowercase().as_str() {
            "mixed" => Ok(None),
            other => other.parse().map(Some).map_err(|e| config_error(format!("synth.species: {e}"))),
        }
    }

    /// Parse every typed key so bad values surface before any work starts.
    pub fn validate(&self) -> Result<()> {
        self.seed()?;
        self.size()?;
        self.ratios()?;
        self.net()?;
        self.train(None)?;
        self.approaches()?;
        self.synth_species()?;
        for key in ["data.classes", "synth.classes", "segment.classes"] {
            self.classes(key).map_err(|e| config_error(format!("{key}: {e}")))?;
        }
        for key in ["synth.count", "synth.canvas", "synth.patients"] {
            self.parse::<usize>(key)?;
        }
        self.parse::<f32>("synth.shift")?;
        let split = self.get("eval.split");
        if !["train", "val", "test"].contains(&split) {
            return Err(config_error(format!("eval.split = `{split}` (expected train, val or test)")));
        }
        let kind = self.get("eval.kind");
        if !["holistic", "rodent"].contains(&kind) {
            return Err(config_error(format!("eval.kind = `{kind}` (expected holistic or rodent)")));
        }
        Ok(())
    }

    pub fn eval_options(&self) -> Result<EvalOptions> {
        Ok(EvalOptions { include_empty: self.parse("eval.include_empty")? })
    }
}

/// Markdown-free listing of the schema, printed by `glomseg config`.
pub fn schema_text() -> String {
    let width = SCHEMA.iter().map(|(k, _, _)| k.len()).max().unwrap_or(0);
    SCHEMA.iter().map(|(k, d, h)| format!("{k:<width$}  = {d:<20} # {h}\n")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_then_overrides() {
        let mut cfg = RunConfig::default();
        cfg.apply_text("# comment\ntrain.epochs = 3  # short\n\nrun.seed=5\n").unwrap();
        cfg.apply_override("train.epochs=7").unwrap();
        assert_eq!(cfg.parse::<usize>("train.epochs").unwrap(), 7);
        assert_eq!(cfg.seed().unwrap(), 5);
        assert_eq!(cfg.explicit_keys(), ["run.seed", "train.epochs"]);
        assert!(cfg.echo().contains("train.epochs = 7\n"));
    }

    #[test]
    fn unknown_keys_and_bad_values_are_config_errors() {
        let mut cfg = RunConfig::default();
        assert!(matches!(cfg.apply_text("train.epoch = 3"), Err(PipelineError::Config(_))));
        assert!(cfg.apply_override("noequals").is_err());
        cfg.set("train.epochs", "many").unwrap();
        assert_eq!(cfg.parse::<usize>("train.epochs").unwrap_err().exit_code(), 2);
        cfg.set("train.optimizer", "rmsprop").unwrap();
        assert!(cfg.train(None).is_err());
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::default();
        cfg.set("eval.split", "holdout").unwrap();
        assert_eq!(cfg.validate().unwrap_err().exit_code(), 2);
        cfg.set("eval.split", "val").unwrap();
        cfg.set("transfer.approaches", "R2H,RH2H_T").unwrap();
        assert_eq!(cfg.approaches().unwrap(), [TransferApproach::R2H, TransferApproach::RH2HT]);
    }

    #[test]
    fn defaults_build_the_full_network() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.net().unwrap(), NetConfig::default());
        let t = cfg.train(None).unwrap();
        assert_eq!(t, TrainConfig { eval: EvalOptions::default(), ..TrainConfig::default() });
        assert_eq!(cfg.ratios().unwrap(), DEFAULT_RATIOS);
        assert_eq!(cfg.manifest_path(), PathBuf::from("data/manifest.tsv"));
        cfg.validate().unwrap();
    }
}
