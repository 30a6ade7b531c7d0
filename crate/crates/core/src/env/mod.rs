//! Environment ports: the frozen task model, the verifier, and the skill
//! generator that proposes each revision.

mod skill_bank;
mod synthetic;

pub use skill_bank::{load_skill_bank, parse_skill_file};
pub use synthetic::{make_instances, synth_rollout, synth_verify, SyntheticEnv, SyntheticEnvConfig};

use thiserror::Error;

use crate::types::{EvolutionHistory, RolloutContent, Skill, TaskInstance};

#[derive(Clone, Debug, Error)]
#[error("{message}")]
pub struct PortError {
    pub message: String,
    /// Transient failures (timeouts, rate limits, 5xx) may be retried.
    pub retryable: bool,
}

impl PortError {
    pub fn fatal(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
            retryable: false,
        }
    }

    pub fn transient(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
            retryable: true,
        }
    }
}

/// Frozen task model. Implementations must be deterministic in
/// `(instance, skill, seed)` and callable from several threads at once.
pub trait TaskModel: Send + Sync {
    fn rollout(&self, instance: &TaskInstance, skill: &Skill, seed: u64) -> Result<RolloutContent, PortError>;
}

/// Deterministic rollout scorer.
pub trait Verifier: Send + Sync {
    fn verify(&self, instance: &TaskInstance, content: &RolloutContent) -> Result<f64, PortError>;

    /// Whether every reward is in `{0, 1}`.
    fn binary(&self) -> bool {
        true
    }
}

/// A proposed skill revision.
#[derive(Clone, Debug)]
pub struct Generated {
    pub skill: Skill,
    /// Log-probability under the generating policy, when it exposes one.
    pub logprob: Option<f64>,
}

/// Produces the next skill from the history of one instance.
pub trait SkillGenerator: Send + Sync {
    fn generate(
        &self,
        instance: &TaskInstance,
        history: &EvolutionHistory,
        child_id: String,
        seed: u64,
    ) -> Result<Generated, PortError>;
}
