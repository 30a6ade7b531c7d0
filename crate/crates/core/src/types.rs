//! Domain types shared across the crate.
//!
//! The word "trajectory" is used in two senses by the algorithm: a single
//! task-model rollout under one skill ([`Rollout`]) and the whole sequence of
//! generations for one instance ([`EvolutionHistory`]).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Fixed-length bitstring, serialized as a string of `0`/`1` characters.
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct Bits(Vec<bool>);

impl Bits {
    pub fn new(bits: Vec<bool>) -> Self {
        Self(bits)
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![false; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, i: usize) -> bool {
        self.0[i]
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.0
    }

    /// Copy with bit `i` toggled (0-based from the left).
    pub fn flipped(&self, i: usize) -> Self {
        let mut out = self.0.clone();
        out[i] = !out[i];
        Self(out)
    }

    pub fn hamming(&self, other: &Bits) -> usize {
        self.0.iter().zip(&other.0).filter(|(a, b)| a != b).count()
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        self.0.iter().copied()
    }
}

impl fmt::Display for Bits {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.0 {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for Bits {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Bits({self})")
    }
}

impl FromStr for Bits {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::Parse(format!("invalid bit character {other:?}"))),
            })
            .collect::<Result<Vec<_>>>()
            .map(Bits)
    }
}

impl Serialize for Bits {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Bits {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Environment-specific content of a task instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Payload {
    /// Hidden target bitstring of the synthetic environment.
    Target { bits: Bits },
    /// Natural-language task with an optional reference answer for verification.
    Text {
        task: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        answer: Option<String>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskInstance {
    pub id: String,
    pub payload: Payload,
    pub skill_bank_ref: String,
}

impl TaskInstance {
    pub fn target(&self) -> Option<&Bits> {
        match &self.payload {
            Payload::Target { bits } => Some(bits),
            Payload::Text { .. } => None,
        }
    }
}

/// A procedural artifact conditioning the task model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Skill {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vector: Option<Bits>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    pub generation: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent_id: Option<String>,
}

impl Skill {
    /// Generation-0 skill carrying a feature vector.
    pub fn seed_vector(id: impl Into<String>, vector: Bits) -> Self {
        Self {
            id: id.into(),
            vector: Some(vector),
            description: None,
            text: None,
            generation: 0,
            parent_id: None,
        }
    }

    /// Generation-0 skill carrying free text.
    pub fn seed_text(id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            vector: None,
            description: None,
            text: Some(text.into()),
            generation: 0,
            parent_id: None,
        }
    }

    /// Revision of `self` with lineage filled in. Vector and text are copied
    /// and can be replaced by the caller.
    pub fn child(&self, id: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            vector: self.vector.clone(),
            description: self.description.clone(),
            text: self.text.clone(),
            generation: self.generation + 1,
            parent_id: Some(self.id.clone()),
        }
    }

    pub fn check(&self, dim: Option<usize>) -> Result<()> {
        if (self.generation == 0) != self.parent_id.is_none() {
            return Err(Error::Invariant(format!(
                "skill {}: parent_id must be absent iff generation is 0",
                self.id
            )));
        }
        if let (Some(d), Some(v)) = (dim, &self.vector) {
            if v.len() != d {
                return Err(Error::Invariant(format!(
                    "skill {}: vector length {} != configured d = {d}",
                    self.id,
                    v.len()
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkillBank {
    pub instance_id: String,
    skills: Vec<Skill>,
}

impl SkillBank {
    pub fn new(instance_id: impl Into<String>, skills: Vec<Skill>) -> Result<Self> {
        if skills.is_empty() {
            return Err(Error::Invariant("skill bank must be nonempty".into()));
        }
        if let Some(s) = skills.iter().find(|s| s.generation != 0) {
            return Err(Error::Invariant(format!(
                "skill bank member {} has generation {} (expected 0)",
                s.id, s.generation
            )));
        }
        Ok(Self {
            instance_id: instance_id.into(),
            skills,
        })
    }

    pub fn skills(&self) -> &[Skill] {
        &self.skills
    }

    /// Initial skill for an episode: the first bank entry.
    pub fn initial(&self) -> &Skill {
        &self.skills[0]
    }

    pub fn len(&self) -> usize {
        self.skills.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum RolloutContent {
    Bits(Bits),
    Text(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rollout {
    /// 1-based position in the group.
    pub index: usize,
    pub content: RolloutContent,
    pub reward: f64,
    pub seed: u64,
    /// Set when the rollout could not be produced and its reward was forced to 0.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub generation: u32,
    pub skill: Skill,
    pub rollouts: Vec<Rollout>,
    pub mean_reward: f64,
    /// Log-probability of `skill` under the data-collection policy.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub behavior_logprob: Option<f64>,
}

impl GenerationRecord {
    pub fn new(skill: Skill, rollouts: Vec<Rollout>, behavior_logprob: Option<f64>) -> Result<Self> {
        if rollouts.is_empty() {
            return Err(Error::Invariant("generation record needs at least one rollout".into()));
        }
        if let Some(r) = rollouts.iter().find(|r| !r.reward.is_finite()) {
            return Err(Error::Invariant(format!("rollout {} has non-finite reward", r.index)));
        }
        let mean_reward = mean(rollouts.iter().map(|r| r.reward));
        Ok(Self {
            generation: skill.generation,
            skill,
            rollouts,
            mean_reward,
            behavior_logprob,
        })
    }

    pub fn rewards(&self) -> Vec<f64> {
        self.rollouts.iter().map(|r| r.reward).collect()
    }

    pub fn any_success(&self) -> bool {
        self.rollouts.iter().any(|r| r.reward > 0.0)
    }
}

pub(crate) fn mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, n) = values.into_iter().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    sum / n as f64
}

/// Append-only per-instance record of generations 0..=current.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvolutionHistory {
    pub instance_id: String,
    records: Vec<GenerationRecord>,
}

impl EvolutionHistory {
    /// Start a history from the generation-0 record.
    pub fn new(instance_id: impl Into<String>, initial: GenerationRecord) -> Result<Self> {
        if initial.generation != 0 {
            return Err(Error::Invariant(format!(
                "history must start at generation 0, got {}",
                initial.generation
            )));
        }
        Ok(Self {
            instance_id: instance_id.into(),
            records: vec![initial],
        })
    }

    pub fn push(&mut self, record: GenerationRecord) -> Result<()> {
        let expected = self.current_generation() + 1;
        if record.generation != expected {
            return Err(Error::Invariant(format!(
                "expected generation {expected}, got {}",
                record.generation
            )));
        }
        self.records.push(record);
        Ok(())
    }

    pub fn records(&self) -> &[GenerationRecord] {
        &self.records
    }

    pub fn last(&self) -> &GenerationRecord {
        self.records.last().expect("history is never empty")
    }

    pub fn current_generation(&self) -> u32 {
        self.last().generation
    }

    /// Records strictly before generation `g`.
    pub fn prefix(&self, g: u32) -> &[GenerationRecord] {
        &self.records[..g as usize]
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Per-generation advantages for one group of rollouts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdvantageBundle {
    pub generation: u32,
    pub intra: Vec<f64>,
    pub inter: f64,
    pub combined: Vec<f64>,
    pub lambda: f64,
}
