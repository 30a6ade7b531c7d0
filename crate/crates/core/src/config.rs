//! Training configuration and its validation.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Train the skill generator with the bi-level surrogate.
    Train,
    /// Run the recurrent loop with a frozen generator.
    Inference,
    /// Single-generation GRPO baseline: train with `G = 1` and `lambda = 0`.
    VanillaGrpo,
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Mode::Train),
            "inference" => Ok(Mode::Inference),
            "vanilla-grpo" => Ok(Mode::VanillaGrpo),
            other => Err(Error::Parse(format!(
                "unknown mode {other:?} (expected train, inference or vanilla-grpo)"
            ))),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Train => "train",
            Mode::Inference => "inference",
            Mode::VanillaGrpo => "vanilla-grpo",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnvKind {
    Synthetic,
    Llm,
}

impl FromStr for EnvKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "synthetic" => Ok(EnvKind::Synthetic),
            "llm" => Ok(EnvKind::Llm),
            other => Err(Error::Parse(format!(
                "unknown environment {other:?} (expected synthetic or llm)"
            ))),
        }
    }
}

impl fmt::Display for EnvKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EnvKind::Synthetic => "synthetic",
            EnvKind::Llm => "llm",
        })
    }
}

/// Schedule for the KL anchor policy.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReferenceSchedule {
    /// Reference fixed at the initial parameters.
    #[default]
    Frozen,
    /// Reference replaced by the behavior snapshot at every update.
    RefreshToBehavior,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Generations per episode (G).
    pub generations: u32,
    /// Rollouts per generation (K).
    pub group_size: usize,
    /// Weight of the inter-generation advantage.
    pub lambda: f64,
    /// Discount of the evaluation objective.
    pub gamma: f64,
    /// Clip radius of the importance ratio.
    pub epsilon: f64,
    /// KL penalty weight.
    pub beta: f64,
    pub learning_rate: f64,
    pub episodes_per_update: usize,
    /// Number of ascent steps in a training run.
    pub updates: usize,
    pub master_seed: u64,
    pub mode: Mode,
    pub environment: EnvKind,
    /// Give generation 1 inter-generation credit relative to generation 0.
    pub inter_uses_gen0: bool,
    pub reference: ReferenceSchedule,
    /// Standard deviation of the initial policy weights.
    pub init_scale: f64,
    /// Episodes per instance during evaluation.
    pub eval_repeats: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            generations: 5,
            group_size: 4,
            lambda: 0.25,
            gamma: 1.0,
            epsilon: 0.2,
            beta: 0.01,
            learning_rate: 0.05,
            episodes_per_update: 8,
            updates: 300,
            master_seed: 0,
            mode: Mode::Train,
            environment: EnvKind::Synthetic,
            inter_uses_gen0: false,
            reference: ReferenceSchedule::Frozen,
            init_scale: 0.01,
            eval_repeats: 1,
        }
    }
}

impl TrainConfig {
    /// Collect every bound violation.
    pub fn violations(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if self.generations < 1 {
            errs.push(format!("generations: G ≥ 1 required (got {})", self.generations));
        }
        if self.group_size < 2 {
            errs.push(format!("group_size: K ≥ 2 required (got {})", self.group_size));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            errs.push(format!("lambda: λ ≥ 0 required (got {})", self.lambda));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            errs.push(format!("gamma: γ ∈ (0, 1] required (got {})", self.gamma));
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            errs.push(format!("epsilon: ε > 0 required (got {})", self.epsilon));
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            errs.push(format!("beta: β ≥ 0 required (got {})", self.beta));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            errs.push(format!(
                "learning_rate: finite and ≥ 0 required (got {})",
                self.learning_rate
            ));
        }
        if self.episodes_per_update < 1 {
            errs.push("episodes_per_update: ≥ 1 required (got 0)".to_string());
        }
        if !(self.init_scale.is_finite() && self.init_scale >= 0.0) {
            errs.push(format!("init_scale: finite and ≥ 0 required (got {})", self.init_scale));
        }
        if self.eval_repeats < 1 {
            errs.push("eval_repeats: ≥ 1 required (got 0)".to_string());
        }
        errs
    }

    pub fn validate(&self) -> Result<()> {
        let errs = self.violations();
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }

    /// The configuration the engine actually runs. Vanilla GRPO is train mode
    /// restricted to one generation with no inter-generation credit.
    pub fn effective(&self) -> TrainConfig {
        let mut cfg = self.clone();
        if cfg.mode == Mode::VanillaGrpo {
            cfg.generations = 1;
            cfg.lambda = 0.0;
        }
        cfg
    }
}
