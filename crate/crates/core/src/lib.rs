//! Recurrent skill evolution trained with a bi-level group-relative policy
//! optimization objective.
//!
//! A frozen task model executes each skill K times; a verifier scores the
//! rollouts; a trainable skill generator revises the skill from the latest
//! generation's outcomes. Advantages combine the within-generation comparison
//! of rollouts with the across-generation change in mean reward, and the
//! generator is trained with a clipped surrogate plus a KL anchor.

// `!(x > 0.0)` style checks also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod advantages;
pub mod config;
pub mod engine;
pub mod env;
pub mod error;
pub mod events;
pub mod metrics;
pub mod objective;
pub mod policy;
pub mod rng;
pub mod types;

pub use config::{EnvKind, Mode, ReferenceSchedule, TrainConfig};
pub use error::{Error, Result};
pub use types::{
    AdvantageBundle, Bits, EvolutionHistory, GenerationRecord, Payload, Rollout, RolloutContent, Skill, SkillBank,
    TaskInstance,
};
