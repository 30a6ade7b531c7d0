//! Clipped bi-level surrogate, KL penalty, and the evaluation objective.
//!
//! Every rollout of generation `g` shares the single skill `s_g`, so the K
//! per-rollout terms all scale the same gradient direction `∇ log π(s_g)`.
//! At unit ratio the intra-generation advantages cancel inside that sum and
//! the skill generator sees `K · λ · A_inter(g)`; the intra terms only matter
//! through the asymmetry introduced by clipping.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::advantages::vanilla_grpo_advantage;
use crate::error::{Error, Result};
use crate::policy::{self, featurize_record, EditAction, HistoryFeatures, PolicyParams, PolicySnapshot};
use crate::types::{AdvantageBundle, EvolutionHistory};

pub fn importance_ratio(logprob_current: f64, logprob_behavior: f64) -> Result<f64> {
    if !(logprob_current.is_finite() && logprob_behavior.is_finite()) {
        return Err(Error::Precondition(format!(
            "log-probabilities must be finite (current {logprob_current}, behavior {logprob_behavior})"
        )));
    }
    Ok((logprob_current - logprob_behavior).exp())
}

/// `min(ρ·A, clip(ρ, 1-ε, 1+ε)·A)`.
pub fn clipped_term(ratio: f64, advantage: f64, epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0) {
        return Err(Error::Precondition(format!("epsilon must be > 0, got {epsilon}")));
    }
    if !(ratio > 0.0) {
        return Err(Error::Precondition(format!("ratio must be > 0, got {ratio}")));
    }
    Ok(clip_branches(ratio, advantage, epsilon).0)
}

/// Value of the clipped term and whether the unclipped branch is the active one.
fn clip_branches(ratio: f64, advantage: f64, epsilon: f64) -> (f64, bool) {
    let unclipped = ratio * advantage;
    let clipped = ratio.clamp(1.0 - epsilon, 1.0 + epsilon) * advantage;
    if unclipped <= clipped {
        (unclipped, true)
    } else {
        (clipped, false)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurrogateTerm {
    pub generation: u32,
    pub ratio: f64,
    pub advantages: Vec<f64>,
    pub clipped_value: f64,
    pub kl_value: f64,
}

#[derive(Clone, Debug)]
pub struct Surrogate {
    pub value: f64,
    pub gradient: Array2<f64>,
    pub terms: Vec<SurrogateTerm>,
}

impl Surrogate {
    pub fn mean_kl(&self) -> f64 {
        if self.terms.is_empty() {
            return 0.0;
        }
        self.terms.iter().map(|t| t.kl_value).sum::<f64>() / self.terms.len() as f64
    }
}

/// One episode's contribution to the training objective and its gradient with
/// respect to `params`.
///
/// The behavior probabilities are the ones recorded when each skill was
/// sampled. A term whose clipped branch is active is constant in the
/// parameters and contributes no gradient.
pub fn episode_surrogate(
    history: &EvolutionHistory,
    advantages: &[AdvantageBundle],
    params: &PolicyParams,
    reference: &PolicySnapshot,
    epsilon: f64,
    beta: f64,
) -> Result<Surrogate> {
    if !(epsilon > 0.0) {
        return Err(Error::Precondition(format!("epsilon must be > 0, got {epsilon}")));
    }
    let records = history.records();
    if advantages.len() + 1 != records.len() {
        return Err(Error::Precondition(format!(
            "{} advantage bundles for {} generated skills",
            advantages.len(),
            records.len() - 1
        )));
    }
    let mut value = 0.0;
    let mut gradient = Array2::zeros(params.weights.raw_dim());
    let mut terms = Vec::with_capacity(advantages.len());

    for (pair, bundle) in records.windows(2).zip(advantages) {
        let (prev, rec) = (&pair[0], &pair[1]);
        if bundle.generation != rec.generation {
            return Err(Error::Precondition(format!(
                "advantage bundle for generation {} paired with record {}",
                bundle.generation, rec.generation
            )));
        }
        let behavior = rec.behavior_logprob.ok_or_else(|| Error::MissingBehaviorLogprob {
            instance: history.instance_id.clone(),
            generation: rec.generation,
        })?;
        let feats = featurize_record(prev)?;
        let action = skill_action(prev, rec)?;

        let lp = policy::logprob(params, &feats, action)?;
        let ratio = importance_ratio(lp, behavior)?;
        let mut clipped_value = 0.0;
        let mut coeff = 0.0;
        for &a in &bundle.combined {
            let (v, unclipped) = clip_branches(ratio, a, epsilon);
            clipped_value += v;
            if unclipped {
                coeff += ratio * a;
            }
        }
        if coeff != 0.0 {
            gradient.scaled_add(coeff, &policy::logprob_grad(params, &feats, action)?);
        }

        let kl_value = policy::kl_divergence(params, reference.params(), &feats)?;
        if beta != 0.0 {
            gradient.scaled_add(-beta, &policy::kl_grad(params, reference.params(), &feats)?);
        }
        value += clipped_value - beta * kl_value;
        terms.push(SurrogateTerm {
            generation: rec.generation,
            ratio,
            advantages: bundle.combined.clone(),
            clipped_value,
            kl_value,
        });
    }
    Ok(Surrogate { value, gradient, terms })
}

/// Action index of the edit from `prev.skill` to `rec.skill`.
pub(crate) fn skill_action(
    prev: &crate::types::GenerationRecord,
    rec: &crate::types::GenerationRecord,
) -> Result<usize> {
    let (Some(parent), Some(child)) = (&prev.skill.vector, &rec.skill.vector) else {
        return Err(Error::Precondition(format!(
            "generation {} skill has no feature vector",
            rec.generation
        )));
    };
    Ok(EditAction::between(parent, child)?.index(parent.len()))
}

/// `Σ_{g=1..G} γ^(g-1) · r̄_g`.
pub fn discounted_objective(history: &EvolutionHistory, gamma: f64) -> Result<f64> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::Precondition(format!("gamma must lie in (0, 1], got {gamma}")));
    }
    if history.len() < 2 {
        return Err(Error::Precondition("history has no generated skills".into()));
    }
    let mut weight = 1.0;
    let mut total = 0.0;
    for rec in &history.records()[1..] {
        total += weight * rec.mean_reward;
        weight *= gamma;
    }
    Ok(total)
}

/// Single-generation GRPO objective `Σ_i A_i · log π(a_i | f_i)` over a group
/// of sampled edits, with its gradient.
pub fn vanilla_grpo_loss(
    params: &PolicyParams,
    samples: &[(HistoryFeatures, usize)],
    rewards: &[f64],
) -> Result<(f64, Array2<f64>)> {
    if samples.len() != rewards.len() {
        return Err(Error::Precondition(format!(
            "{} samples for {} rewards",
            samples.len(),
            rewards.len()
        )));
    }
    let adv = vanilla_grpo_advantage(rewards)?;
    let mut value = 0.0;
    let mut grad = Array2::zeros(params.weights.raw_dim());
    for ((feats, action), a) in samples.iter().zip(&adv) {
        value += a * policy::logprob(params, feats, *action)?;
        grad.scaled_add(*a, &policy::logprob_grad(params, feats, *action)?);
    }
    Ok((value, grad))
}

/// Plain gradient ascent.
pub fn ascent_step(params: &mut PolicyParams, gradient: &Array2<f64>, learning_rate: f64) {
    if learning_rate != 0.0 {
        params.weights.scaled_add(learning_rate, gradient);
    }
}
