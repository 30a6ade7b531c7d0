//! Linear-softmax skill generator over single-bit edits.
//!
//! A skill vector of length `d` admits `d + 1` edits: flip bit `j` (action
//! `j`, counted from the left) or keep the skill unchanged (action `d`). The
//! policy scores every edit with a row of the weight matrix applied to the
//! [`HistoryFeatures`] of the latest generation.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::rng::{self, Purpose};
use crate::types::{Bits, EvolutionHistory, GenerationRecord, RolloutContent, Skill};

/// Feature length for skills of length `d`.
pub fn feature_dim(d: usize) -> usize {
    2 * d + 2
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EditAction {
    Flip(usize),
    Keep,
}

impl EditAction {
    pub fn index(self, d: usize) -> usize {
        match self {
            EditAction::Flip(j) => j,
            EditAction::Keep => d,
        }
    }

    pub fn from_index(index: usize, d: usize) -> Self {
        if index == d {
            EditAction::Keep
        } else {
            EditAction::Flip(index)
        }
    }

    pub fn apply(self, bits: &Bits) -> Bits {
        match self {
            EditAction::Flip(j) => bits.flipped(j),
            EditAction::Keep => bits.clone(),
        }
    }

    /// Recover the edit that turned `parent` into `child`.
    pub fn between(parent: &Bits, child: &Bits) -> Result<Self> {
        if parent.len() != child.len() {
            return Err(Error::Shape {
                expected: format!("skill of length {}", parent.len()),
                got: format!("length {}", child.len()),
            });
        }
        let diff: Vec<usize> = (0..parent.len()).filter(|&j| parent.get(j) != child.get(j)).collect();
        match diff.as_slice() {
            [] => Ok(EditAction::Keep),
            [j] => Ok(EditAction::Flip(*j)),
            _ => Err(Error::Invariant(format!(
                "skills {parent} -> {child} differ in {} bits; expected a single edit",
                diff.len()
            ))),
        }
    }
}

/// Summary of the latest generation that conditions the next edit.
///
/// Layout: skill bits (d), previous mean reward (1), per-bit disagreement of
/// rewarded rollouts with the skill (d), bias (1).
#[derive(Clone, Debug, PartialEq)]
pub struct HistoryFeatures(pub Array1<f64>);

impl HistoryFeatures {
    pub fn view(&self) -> ArrayView1<'_, f64> {
        self.0.view()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

pub fn featurize(history: &EvolutionHistory) -> Result<HistoryFeatures> {
    featurize_record(history.last())
}

/// Features of a single generation record.
pub fn featurize_record(last: &GenerationRecord) -> Result<HistoryFeatures> {
    let skill = last
        .skill
        .vector
        .as_ref()
        .ok_or_else(|| Error::Precondition(format!("skill {} has no feature vector", last.skill.id)))?;
    let d = skill.len();
    let mut f = Array1::zeros(feature_dim(d));
    for (j, b) in skill.iter().enumerate() {
        f[j] = f64::from(u8::from(b));
    }
    f[d] = last.mean_reward;

    let mut sums = vec![0.0; d];
    let mut rewarded = 0usize;
    for r in last.rollouts.iter().filter(|r| r.reward > 0.0) {
        let RolloutContent::Bits(bits) = &r.content else {
            return Err(Error::Precondition(format!(
                "rollout {} of generation {} is not a bitstring",
                r.index, last.generation
            )));
        };
        if bits.len() != d {
            return Err(Error::Shape {
                expected: format!("rollout of length {d}"),
                got: format!("length {}", bits.len()),
            });
        }
        for (s, b) in sums.iter_mut().zip(bits.iter()) {
            *s += f64::from(u8::from(b));
        }
        rewarded += 1;
    }
    if rewarded > 0 {
        for j in 0..d {
            f[d + 1 + j] = sums[j] / rewarded as f64 - f[j];
        }
    }
    f[2 * d + 1] = 1.0;
    Ok(HistoryFeatures(f))
}

/// Weights of the edit policy, one row per action.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    pub weights: Array2<f64>,
}

impl PolicyParams {
    pub fn zeros(d: usize) -> Self {
        Self {
            weights: Array2::zeros((d + 1, feature_dim(d))),
        }
    }

    /// Gaussian initialization with standard deviation `scale`, drawn from the
    /// policy-init stream of `master_seed`.
    pub fn random(d: usize, scale: f64, master_seed: u64) -> Self {
        let mut rng = rng::stream(rng::derive_seed(master_seed, Purpose::PolicyInit, &[d as u64]));
        let weights = Array2::from_shape_simple_fn((d + 1, feature_dim(d)), || {
            let z: f64 = rng.sample(StandardNormal);
            scale * z
        });
        Self { weights }
    }

    pub fn from_weights(weights: Array2<f64>) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Invariant("policy weights must be finite".into()));
        }
        Ok(Self { weights })
    }

    pub fn action_count(&self) -> usize {
        self.weights.nrows()
    }

    pub fn feature_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn logits(&self, feats: &HistoryFeatures) -> Result<Array1<f64>> {
        if feats.len() != self.feature_dim() {
            return Err(Error::Shape {
                expected: format!("{} features", self.feature_dim()),
                got: format!("{}", feats.len()),
            });
        }
        Ok(self.weights.dot(&feats.0))
    }

    /// SHA-256 over the shape and the exact bit patterns of the weights.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.weights.nrows() as u64).to_le_bytes());
        h.update((self.weights.ncols() as u64).to_le_bytes());
        for w in self.weights.iter() {
            h.update(w.to_bits().to_le_bytes());
        }
        h.finalize().iter().fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }

    pub fn max_abs_diff(&self, other: &PolicyParams) -> f64 {
        self.weights
            .iter()
            .zip(other.weights.iter())
            .fold(0.0, |m, (a, b)| f64::max(m, (a - b).abs()))
    }

    /// Text form: a `shape rows cols` header followed by one row per line.
    pub fn to_text(&self) -> String {
        let mut out = String::from("skillr1-policy v1\n");
        let _ = writeln!(out, "shape {} {}", self.weights.nrows(), self.weights.ncols());
        for row in self.weights.rows() {
            let line: Vec<String> = row.iter().map(|w| format!("{w:?}")).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        if lines.next().map(str::trim) != Some("skillr1-policy v1") {
            return Err(Error::Parse("missing policy header".into()));
        }
        let shape = lines.next().ok_or_else(|| Error::Parse("missing shape line".into()))?;
        let dims: Vec<usize> = shape
            .strip_prefix("shape")
            .ok_or_else(|| Error::Parse(format!("bad shape line {shape:?}")))?
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| Error::Parse(format!("bad dimension {t:?}"))))
            .collect::<Result<_>>()?;
        let [rows, cols] = dims[..] else {
            return Err(Error::Parse(format!("bad shape line {shape:?}")));
        };
        let values: Vec<f64> = lines
            .flat_map(str::split_whitespace)
            .map(|t| t.parse().map_err(|_| Error::Parse(format!("bad weight {t:?}"))))
            .collect::<Result<_>>()?;
        if values.len() != rows * cols {
            return Err(Error::Shape {
                expected: format!("{} weights", rows * cols),
                got: format!("{}", values.len()),
            });
        }
        let weights = Array2::from_shape_vec((rows, cols), values).map_err(|e| Error::Parse(e.to_string()))?;
        Self::from_weights(weights)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SnapshotRole {
    Behavior,
    Reference,
}

/// Frozen copy of the parameters.
#[derive(Clone, Debug)]
pub struct PolicySnapshot {
    role: SnapshotRole,
    params: Arc<PolicyParams>,
}

impl PolicySnapshot {
    pub fn new(role: SnapshotRole, params: &PolicyParams) -> Self {
        Self {
            role,
            params: Arc::new(params.clone()),
        }
    }

    pub fn role(&self) -> SnapshotRole {
        self.role
    }

    pub fn params(&self) -> &PolicyParams {
        &self.params
    }

    pub fn with_role(&self, role: SnapshotRole) -> Self {
        Self {
            role,
            params: Arc::clone(&self.params),
        }
    }
}

fn log_softmax(logits: &Array1<f64>) -> Array1<f64> {
    let max = logits.fold(f64::NEG_INFINITY, |m, &z| m.max(z));
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    logits.mapv(|z| z - lse)
}

pub fn action_log_distribution(params: &PolicyParams, feats: &HistoryFeatures) -> Result<Array1<f64>> {
    Ok(log_softmax(&params.logits(feats)?))
}

/// Softmax of `weights · feats`.
pub fn action_distribution(params: &PolicyParams, feats: &HistoryFeatures) -> Result<Array1<f64>> {
    let logits = params.logits(feats)?;
    let max = logits.fold(f64::NEG_INFINITY, |m, &z| m.max(z));
    let exp = logits.mapv(|z| (z - max).exp());
    let total = exp.sum();
    Ok(exp / total)
}

pub fn logprob(params: &PolicyParams, feats: &HistoryFeatures, action: usize) -> Result<f64> {
    let lp = action_log_distribution(params, feats)?;
    lp.get(action).copied().ok_or_else(|| Error::Shape {
        expected: format!("action < {}", lp.len()),
        got: action.to_string(),
    })
}

/// A sampled revision of a skill.
#[derive(Clone, Debug)]
pub struct SampledSkill {
    pub skill: Skill,
    pub action: EditAction,
    pub logprob: f64,
}

/// Draw an edit from the policy and apply it to `current`.
pub fn sample_skill<R: Rng + ?Sized>(
    params: &PolicyParams,
    feats: &HistoryFeatures,
    current: &Skill,
    child_id: impl Into<String>,
    rng: &mut R,
) -> Result<SampledSkill> {
    let vector = current
        .vector
        .as_ref()
        .ok_or_else(|| Error::Precondition(format!("skill {} has no feature vector", current.id)))?;
    let d = vector.len();
    if params.action_count() != d + 1 {
        return Err(Error::Shape {
            expected: format!("{} actions", d + 1),
            got: params.action_count().to_string(),
        });
    }
    let probs = action_distribution(params, feats)?;
    let index = sample_index(probs.view(), rng.random::<f64>());
    let action = EditAction::from_index(index, d);
    let mut skill = current.child(child_id);
    skill.vector = Some(action.apply(vector));
    Ok(SampledSkill {
        skill,
        action,
        logprob: logprob(params, feats, index)?,
    })
}

/// Inverse-CDF draw for `u` in `[0, 1)`.
pub fn sample_index(probs: ArrayView1<'_, f64>, u: f64) -> usize {
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // u landed in the rounding gap above the final partial sum
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// Gradient of `log π(action | feats)` with respect to the weights:
/// `(onehot(action) - π) ⊗ feats`.
pub fn logprob_grad(params: &PolicyParams, feats: &HistoryFeatures, action: usize) -> Result<Array2<f64>> {
    let mut coeff = -action_distribution(params, feats)?;
    if action >= coeff.len() {
        return Err(Error::Shape {
            expected: format!("action < {}", coeff.len()),
            got: action.to_string(),
        });
    }
    coeff[action] += 1.0;
    Ok(outer(coeff.view(), feats.view()))
}

/// Exact `KL(p || q)` between the edit distributions of two parameter sets.
pub fn kl_divergence(p: &PolicyParams, q: &PolicyParams, feats: &HistoryFeatures) -> Result<f64> {
    let lp = action_log_distribution(p, feats)?;
    let lq = action_log_distribution(q, feats)?;
    let kl: f64 = lp.iter().zip(lq.iter()).map(|(a, b)| a.exp() * (a - b)).sum();
    Ok(kl.max(0.0))
}

/// Gradient of [`kl_divergence`] with respect to the weights of `p`.
pub fn kl_grad(p: &PolicyParams, q: &PolicyParams, feats: &HistoryFeatures) -> Result<Array2<f64>> {
    let lp = action_log_distribution(p, feats)?;
    let lq = action_log_distribution(q, feats)?;
    let probs = lp.mapv(f64::exp);
    let kl: f64 = probs
        .iter()
        .zip(lp.iter().zip(lq.iter()))
        .map(|(pa, (a, b))| pa * (a - b))
        .sum();
    let coeff = Array1::from_iter(
        probs
            .iter()
            .zip(lp.iter().zip(lq.iter()))
            .map(|(pa, (a, b))| pa * (a - b - kl)),
    );
    Ok(outer(coeff.view(), feats.view()))
}

fn outer(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> Array2<f64> {
    Array2::from_shape_fn((a.len(), b.len()), |(i, j)| a[i] * b[j])
}
