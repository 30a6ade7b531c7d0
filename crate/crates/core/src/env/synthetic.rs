//! Bitstring environment with a hidden per-instance target.
//!
//! A rollout copies each skill bit and flips it independently with
//! probability `eta`. The verifier rewards a rollout iff it lies within
//! Hamming distance `tol` of the target. The policy only ever sees rollouts
//! and rewards, never the target.
//!
//! Noise stream: the rollout seed initializes a ChaCha8 generator and bit `j`
//! (from the left) flips iff the `j`-th `f64` drawn from it is below `eta`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{PortError, TaskModel, Verifier};
use crate::error::{Error, Result};
use crate::rng::{self, Purpose};
use crate::types::{Bits, Payload, RolloutContent, Skill, SkillBank, TaskInstance};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticEnvConfig {
    /// Bitstring length.
    pub d: usize,
    /// Per-bit execution-noise probability.
    pub eta: f64,
    /// Hamming tolerance for success (inclusive).
    pub tol: usize,
    pub instance_count: usize,
    /// Initial skills per instance.
    pub bank_size: usize,
}

impl Default for SyntheticEnvConfig {
    fn default() -> Self {
        Self {
            d: 8,
            eta: 0.1,
            tol: 1,
            instance_count: 1,
            bank_size: 1,
        }
    }
}

impl SyntheticEnvConfig {
    pub fn violations(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if self.d < 1 {
            errs.push("d: bitstring length ≥ 1 required (got 0)".to_string());
        }
        if !(self.eta >= 0.0 && self.eta < 0.5) {
            errs.push(format!("eta: 0 ≤ η < 0.5 required (got {})", self.eta));
        }
        if self.tol > self.d {
            errs.push(format!("tol: 0 ≤ tol ≤ d = {} required (got {})", self.d, self.tol));
        }
        if self.instance_count < 1 {
            errs.push("instance_count: ≥ 1 required (got 0)".to_string());
        }
        if self.bank_size < 1 {
            errs.push("bank_size: ≥ 1 required (got 0)".to_string());
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
}

/// Apply execution noise to the skill vector.
pub fn synth_rollout(skill: &Skill, eta: f64, seed: u64) -> Result<Bits> {
    let vector = skill
        .vector
        .as_ref()
        .ok_or_else(|| Error::Precondition(format!("skill {} has no feature vector", skill.id)))?;
    let mut rng = rng::stream(seed);
    Ok(Bits::new(
        vector
            .iter()
            .map(|b| if rng.random::<f64>() < eta { !b } else { b })
            .collect(),
    ))
}

/// 1 iff `Hamming(rollout, target) ≤ tol`.
pub fn synth_verify(instance: &TaskInstance, rollout: &Bits, tol: usize) -> Result<f64> {
    let target = instance
        .target()
        .ok_or_else(|| Error::Precondition(format!("instance {} has no hidden target", instance.id)))?;
    if target.len() != rollout.len() {
        return Err(Error::Shape {
            expected: format!("rollout of length {}", target.len()),
            got: format!("length {}", rollout.len()),
        });
    }
    Ok(if rollout.hamming(target) <= tol { 1.0 } else { 0.0 })
}

/// Draw instances with uniform targets and uniform initial skills, fully
/// determined by `master_seed`.
pub fn make_instances(cfg: &SyntheticEnvConfig, master_seed: u64) -> Result<Vec<(TaskInstance, SkillBank)>> {
    cfg.validate()?;
    (0..cfg.instance_count)
        .map(|i| {
            let mut rng = rng::stream(rng::derive_seed(master_seed, Purpose::Instances, &[i as u64]));
            let mut draw = || Bits::new((0..cfg.d).map(|_| rng.random::<bool>()).collect());
            let id = format!("inst-{i:04}");
            let target = draw();
            let skills = (0..cfg.bank_size)
                .map(|k| Skill::seed_vector(format!("{id}/bank-{k}"), draw()))
                .collect();
            let instance = TaskInstance {
                id: id.clone(),
                payload: Payload::Target { bits: target },
                skill_bank_ref: format!("bank/{id}"),
            };
            Ok((instance, SkillBank::new(id, skills)?))
        })
        .collect()
}

/// Task model and verifier of the bitstring environment.
#[derive(Clone, Debug)]
pub struct SyntheticEnv {
    pub cfg: SyntheticEnvConfig,
}

impl SyntheticEnv {
    pub fn new(cfg: SyntheticEnvConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { cfg })
    }
}

impl TaskModel for SyntheticEnv {
    fn rollout(&self, _instance: &TaskInstance, skill: &Skill, seed: u64) -> Result<RolloutContent, PortError> {
        synth_rollout(skill, self.cfg.eta, seed)
            .map(RolloutContent::Bits)
            .map_err(|e| PortError::fatal(e.to_string()))
    }
}

impl Verifier for SyntheticEnv {
    fn verify(&self, instance: &TaskInstance, content: &RolloutContent) -> Result<f64, PortError> {
        match content {
            RolloutContent::Bits(bits) => {
                synth_verify(instance, bits, self.cfg.tol).map_err(|e| PortError::fatal(e.to_string()))
            }
            RolloutContent::Text(_) => Err(PortError::fatal("synthetic verifier expects a bitstring")),
        }
    }
}
