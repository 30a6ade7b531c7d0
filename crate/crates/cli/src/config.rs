//! Config file loading, flag overrides, and the echoed effective config.
//!
//! Precedence, lowest to highest: built-in defaults, the `--config` file,
//! command-line flags.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use skillr1_core::engine::RetryPolicy;
use skillr1_core::env::SyntheticEnvConfig;
use skillr1_core::{EnvKind, TrainConfig};
use skillr1_llm::LlmConfig;

use crate::args::Overrides;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub train: TrainConfig,
    pub synthetic: SyntheticEnvConfig,
    pub llm: LlmConfig,
    pub retry: RetryPolicy,
}

fn absolutize(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(path) = p {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

impl FileConfig {
    /// Parse a config file. Relative paths inside it are resolved against the
    /// file's directory so the echoed copy works from anywhere.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        let mut cfg: FileConfig =
            toml::from_str(&text).with_context(|| format!("invalid config {}", path.display()))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let base = std::path::absolute(&base).unwrap_or(base);
        absolutize(&base, &mut cfg.llm.tasks);
        absolutize(&base, &mut cfg.llm.skill_dir);
        absolutize(&base, &mut cfg.llm.cassette_dir);
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        let t = &mut self.train;
        macro_rules! set {
            ($field:ident, $value:expr) => {
                if let Some(v) = $value {
                    t.$field = v;
                }
            };
        }
        set!(master_seed, o.seed);
        set!(mode, o.mode);
        set!(environment, o.env);
        set!(generations, o.generations);
        set!(group_size, o.group_size);
        set!(lambda, o.lambda);
        set!(gamma, o.gamma);
        set!(epsilon, o.epsilon);
        set!(beta, o.beta);
        set!(learning_rate, o.lr);
        set!(episodes_per_update, o.episodes_per_update);
        set!(updates, o.updates);
        set!(eval_repeats, o.eval_repeats);
    }

    pub fn violations(&self) -> Vec<String> {
        let mut errs: Vec<String> = self
            .train
            .violations()
            .into_iter()
            .map(|e| format!("train.{e}"))
            .collect();
        // the echoed config is TOML, whose integers are signed 64-bit
        if i64::try_from(self.train.master_seed).is_err() {
            errs.push(format!(
                "train.master_seed: must be below 2^63 (got {})",
                self.train.master_seed
            ));
        }
        match self.train.environment {
            EnvKind::Synthetic => errs.extend(
                self.synthetic
                    .violations()
                    .into_iter()
                    .map(|e| format!("synthetic.{e}")),
            ),
            EnvKind::Llm => {
                errs.extend(self.llm.violations().into_iter().map(|e| format!("llm.{e}")));
                if self.llm.tasks.is_none() {
                    errs.push("llm.tasks: a task file is required for environment llm".into());
                }
            }
        }
        errs
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }
}
