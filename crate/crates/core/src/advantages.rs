//! Group-relative advantages.
//!
//! All advantages are mean-centered only. There is no standard-deviation
//! normalization, so a group of identical rewards gets all-zero advantages.

use crate::error::{Error, Result};
use crate::types::{mean, AdvantageBundle, GenerationRecord};

/// Reward minus the group mean, for each rollout of one generation.
pub fn intra_advantage(rewards: &[f64]) -> Result<Vec<f64>> {
    if rewards.len() < 2 {
        return Err(Error::Precondition(format!(
            "group-relative advantage needs at least 2 rewards, got {}",
            rewards.len()
        )));
    }
    if rewards.iter().any(|r| !r.is_finite()) {
        return Err(Error::Precondition("rewards must be finite".into()));
    }
    let m = mean(rewards.iter().copied());
    Ok(rewards.iter().map(|r| r - m).collect())
}

/// Change in population mean reward from generation `g - 1` to `g`.
///
/// Generation 1 receives no inter-generation credit.
pub fn inter_advantage(mean_g: f64, mean_prev: f64, g: u32) -> Result<f64> {
    if g < 1 {
        return Err(Error::Precondition("inter-generation advantage needs g ≥ 1".into()));
    }
    if !(mean_g.is_finite() && mean_prev.is_finite()) {
        return Err(Error::Precondition("population means must be finite".into()));
    }
    if g == 1 {
        return Ok(0.0);
    }
    Ok(mean_g - mean_prev)
}

/// `intra[i] + lambda * inter` for every rollout.
pub fn bilevel_advantage(intra: &[f64], inter: f64, lambda: f64) -> Result<Vec<f64>> {
    if !(lambda >= 0.0) {
        return Err(Error::Precondition(format!("lambda must be ≥ 0, got {lambda}")));
    }
    if lambda == 0.0 {
        return Ok(intra.to_vec());
    }
    Ok(intra.iter().map(|a| a + lambda * inter).collect())
}

/// Single-group GRPO advantage. Same contract as [`intra_advantage`]; kept as
/// its own entry point for the vanilla baseline.
pub fn vanilla_grpo_advantage(rewards: &[f64]) -> Result<Vec<f64>> {
    intra_advantage(rewards)
}

/// Advantages of generation `current.generation` given its predecessor.
///
/// With `inter_uses_gen0` set, generation 1 is credited relative to
/// generation 0 instead of receiving zero.
pub fn generation_advantages(
    previous: &GenerationRecord,
    current: &GenerationRecord,
    lambda: f64,
    inter_uses_gen0: bool,
) -> Result<AdvantageBundle> {
    let g = current.generation;
    let intra = intra_advantage(&current.rewards())?;
    let inter = if g == 1 && inter_uses_gen0 {
        current.mean_reward - previous.mean_reward
    } else {
        inter_advantage(current.mean_reward, previous.mean_reward, g)?
    };
    let combined = bilevel_advantage(&intra, inter, lambda)?;
    Ok(AdvantageBundle {
        generation: g,
        intra,
        inter,
        combined,
        lambda,
    })
}
