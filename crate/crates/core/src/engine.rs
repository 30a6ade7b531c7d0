//! Multi-generation episodes, the batched trainer, and evaluation.
//!
//! An episode selects the first bank skill, scores K rollouts to form
//! generation 0, then for `g = 1..=G` proposes a revision conditioned on the
//! latest generation, scores its K rollouts, and computes the intra-, inter-
//! and bi-level advantages. Generations are sequential; the rollouts of one
//! generation may run concurrently. Every random draw comes from a stream
//! keyed by `(master_seed, instance, episode, generation, rollout)`, so
//! results do not depend on scheduling.

use std::thread;
use std::time::Duration;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::advantages::{generation_advantages, vanilla_grpo_advantage};
use crate::config::{Mode, ReferenceSchedule, TrainConfig};
use crate::env::{Generated, PortError, SkillGenerator, TaskModel, Verifier};
use crate::error::{Error, Result};
use crate::events::{Event, EventSink};
use crate::metrics::{GenerationMetrics, UpdateMetrics};
use crate::objective::{ascent_step, discounted_objective, episode_surrogate};
use crate::policy::{featurize, sample_skill, PolicyParams, PolicySnapshot, SnapshotRole};
use crate::rng::{self, EpisodeStreams};
use crate::types::{
    AdvantageBundle, EvolutionHistory, GenerationRecord, Rollout, RolloutContent, SkillBank, TaskInstance,
};

/// Episode numbers at or above this offset belong to evaluation runs, so
/// evaluation never replays training noise.
pub const EVAL_EPISODE_OFFSET: u64 = 1 << 62;

/// Retry schedule for transient port failures.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay_ms: u64,
    pub max_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 3,
            base_delay_ms: 500,
            max_delay_ms: 8_000,
        }
    }
}

impl RetryPolicy {
    pub fn none() -> Self {
        Self {
            max_retries: 0,
            base_delay_ms: 0,
            max_delay_ms: 0,
        }
    }

    pub fn delay(&self, attempt: u32) -> Duration {
        let ms = self
            .base_delay_ms
            .saturating_mul(1u64 << attempt.min(20))
            .min(self.max_delay_ms);
        Duration::from_millis(ms)
    }

    /// Run `f` until it succeeds, fails permanently, or retries run out.
    pub fn run<T>(&self, mut f: impl FnMut(u32) -> Result<T, PortError>) -> Result<T, PortError> {
        let mut attempt = 0;
        loop {
            match f(attempt) {
                Err(e) if e.retryable && attempt < self.max_retries => {
                    let wait = self.delay(attempt);
                    if !wait.is_zero() {
                        thread::sleep(wait);
                    }
                    attempt += 1;
                }
                other => return other,
            }
        }
    }
}

/// Everything `run_episode` needs besides the instance and the ports.
#[derive(Clone, Debug)]
pub struct EpisodeSettings {
    pub generations: u32,
    pub group_size: usize,
    pub lambda: f64,
    pub gamma: f64,
    pub inter_uses_gen0: bool,
    /// Use the single-group GRPO advantage path (vanilla baseline).
    pub vanilla: bool,
    pub retry: RetryPolicy,
    pub concurrent_rollouts: bool,
}

impl EpisodeSettings {
    pub fn from_config(cfg: &TrainConfig) -> Self {
        let cfg = cfg.effective();
        Self {
            generations: cfg.generations,
            group_size: cfg.group_size,
            lambda: cfg.lambda,
            gamma: cfg.gamma,
            inter_uses_gen0: cfg.inter_uses_gen0,
            vanilla: cfg.mode == Mode::VanillaGrpo,
            retry: RetryPolicy::none(),
            concurrent_rollouts: false,
        }
    }
}

/// Frozen task model and verifier.
#[derive(Clone, Copy)]
pub struct Ports<'a> {
    pub task: &'a dyn TaskModel,
    pub verifier: &'a dyn Verifier,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationStat {
    pub mean_reward: f64,
    pub any_success: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub episode: u64,
    pub history: EvolutionHistory,
    /// Bundles for generations 1..=G.
    pub advantages: Vec<AdvantageBundle>,
    pub objective_value: f64,
    /// Stats for generations 0..=G.
    pub generation_stats: Vec<GenerationStat>,
}

/// The linear-softmax policy as a skill generator.
#[derive(Clone, Debug)]
pub struct LinearEditor {
    snapshot: PolicySnapshot,
    record_logprob: bool,
}

impl LinearEditor {
    /// Generator for training: records the behavior log-probability.
    pub fn behavior(snapshot: PolicySnapshot) -> Self {
        Self {
            snapshot,
            record_logprob: true,
        }
    }

    /// Generator for inference and evaluation: no log-probabilities recorded.
    pub fn frozen(snapshot: PolicySnapshot) -> Self {
        Self {
            snapshot,
            record_logprob: false,
        }
    }
}

impl SkillGenerator for LinearEditor {
    fn generate(
        &self,
        _instance: &TaskInstance,
        history: &EvolutionHistory,
        child_id: String,
        seed: u64,
    ) -> Result<Generated, PortError> {
        let feats = featurize(history).map_err(|e| PortError::fatal(e.to_string()))?;
        let current = &history.last().skill;
        let sampled = sample_skill(
            self.snapshot.params(),
            &feats,
            current,
            child_id,
            &mut rng::stream(seed),
        )
        .map_err(|e| PortError::fatal(e.to_string()))?;
        Ok(Generated {
            skill: sampled.skill,
            logprob: self.record_logprob.then_some(sampled.logprob),
        })
    }
}

fn port_error(instance: &TaskInstance, generation: u32, rollout: Option<usize>, e: impl ToString) -> Error {
    Error::Port {
        instance: instance.id.clone(),
        generation,
        rollout,
        message: e.to_string(),
    }
}

fn sample_group(
    instance: &TaskInstance,
    skill: &crate::types::Skill,
    generation: u32,
    ports: &Ports<'_>,
    settings: &EpisodeSettings,
    streams: &EpisodeStreams,
) -> Result<Vec<Rollout>> {
    let one = |index: usize| -> Result<Rollout> {
        let seed = streams.rollout_seed(generation, index);
        let outcome = settings.retry.run(|_| {
            let content = ports.task.rollout(instance, skill, seed)?;
            let reward = ports.verifier.verify(instance, &content)?;
            Ok((content, reward))
        });
        match outcome {
            Ok((content, reward)) => {
                if !reward.is_finite() || (ports.verifier.binary() && reward != 0.0 && reward != 1.0) {
                    return Err(port_error(
                        instance,
                        generation,
                        Some(index),
                        format!("verifier returned {reward}, outside its declared range"),
                    ));
                }
                Ok(Rollout {
                    index,
                    content,
                    reward,
                    seed,
                    error: None,
                })
            }
            Err(e) if e.retryable => Ok(Rollout {
                index,
                content: RolloutContent::Text(String::new()),
                reward: 0.0,
                seed,
                error: Some(e.message),
            }),
            Err(e) => Err(port_error(instance, generation, Some(index), e)),
        }
    };
    if settings.concurrent_rollouts {
        (1..=settings.group_size).into_par_iter().map(one).collect()
    } else {
        (1..=settings.group_size).map(one).collect()
    }
}

/// Run one multi-generation episode for `instance`.
pub fn run_episode(
    instance: &TaskInstance,
    bank: &SkillBank,
    generator: &dyn SkillGenerator,
    ports: &Ports<'_>,
    settings: &EpisodeSettings,
    streams: EpisodeStreams,
) -> Result<EpisodeResult> {
    if settings.group_size < 2 || settings.generations < 1 {
        return Err(Error::Precondition(format!(
            "episode needs K ≥ 2 and G ≥ 1 (got K = {}, G = {})",
            settings.group_size, settings.generations
        )));
    }
    let s0 = bank.initial().clone();
    let rollouts = sample_group(instance, &s0, 0, ports, settings, &streams)?;
    let mut history = EvolutionHistory::new(instance.id.clone(), GenerationRecord::new(s0, rollouts, None)?)?;
    let mut advantages = Vec::with_capacity(settings.generations as usize);

    for g in 1..=settings.generations {
        let child_id = format!("{}/e{}/g{g}", instance.id, streams.episode);
        let generated = settings
            .retry
            .run(|_| generator.generate(instance, &history, child_id.clone(), streams.action_seed(g)))
            .map_err(|e| port_error(instance, g, None, e))?;
        let skill = generated.skill;
        if skill.generation != g {
            return Err(Error::Invariant(format!(
                "generator returned generation {} at step {g}",
                skill.generation
            )));
        }
        let rollouts = sample_group(instance, &skill, g, ports, settings, &streams)?;
        let record = GenerationRecord::new(skill, rollouts, generated.logprob)?;
        let mut bundle = generation_advantages(history.last(), &record, settings.lambda, settings.inter_uses_gen0)?;
        if settings.vanilla {
            bundle.intra = vanilla_grpo_advantage(&record.rewards())?;
            bundle.combined = crate::advantages::bilevel_advantage(&bundle.intra, bundle.inter, bundle.lambda)?;
        }
        advantages.push(bundle);
        history.push(record)?;
    }

    let objective_value = discounted_objective(&history, settings.gamma)?;
    let generation_stats = history
        .records()
        .iter()
        .map(|r| GenerationStat {
            mean_reward: r.mean_reward,
            any_success: r.any_success(),
        })
        .collect();
    Ok(EpisodeResult {
        episode: streams.episode,
        history,
        advantages,
        objective_value,
        generation_stats,
    })
}

/// Skill-vector length shared by every bank.
pub fn skill_dim(instances: &[(TaskInstance, SkillBank)]) -> Result<usize> {
    let mut dims = instances
        .iter()
        .flat_map(|(_, b)| b.skills())
        .map(|s| s.vector.as_ref().map(|v| v.len()));
    let first = dims
        .next()
        .flatten()
        .ok_or_else(|| Error::Precondition("instances carry no skill vectors".into()))?;
    if dims.any(|d| d != Some(first)) {
        return Err(Error::Precondition("skill vectors differ in length".into()));
    }
    Ok(first)
}

/// Initial parameters for a run.
pub fn init_params(d: usize, cfg: &TrainConfig) -> PolicyParams {
    PolicyParams::random(d, cfg.init_scale, cfg.master_seed)
}

/// Runtime options that do not affect results.
pub struct RunOptions<'a> {
    /// Worker threads for concurrent episodes.
    pub jobs: usize,
    pub sink: &'a dyn EventSink,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: PolicyParams,
    pub updates: Vec<UpdateMetrics>,
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Precondition(format!("cannot start worker pool: {e}")))
}

fn emit_episode(sink: &dyn EventSink, ep: &EpisodeResult) {
    for record in ep.history.records() {
        sink.emit(&Event::Generation {
            episode: ep.episode,
            instance_id: ep.history.instance_id.clone(),
            record: record.clone(),
        });
    }
    sink.emit(&Event::Episode {
        episode: ep.episode,
        instance_id: ep.history.instance_id.clone(),
        advantages: ep.advantages.clone(),
        objective: ep.objective_value,
    });
}

/// Train the linear editor: each update snapshots the behavior policy, runs
/// `episodes_per_update` episodes over the instances in round-robin order,
/// sums the episode surrogate gradients in episode order, and takes one
/// ascent step.
pub fn train(
    instances: &[(TaskInstance, SkillBank)],
    cfg: &TrainConfig,
    ports: &Ports<'_>,
    init: PolicyParams,
    opts: &RunOptions<'_>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if !matches!(cfg.mode, Mode::Train | Mode::VanillaGrpo) {
        return Err(Error::Precondition(format!(
            "train requires mode train or vanilla-grpo, got {}",
            cfg.mode
        )));
    }
    if instances.is_empty() {
        return Err(Error::Precondition("no instances to train on".into()));
    }
    let eff = cfg.effective();
    let settings = EpisodeSettings::from_config(cfg);
    let workers = pool(opts.jobs)?;
    let n = instances.len() as u64;

    let mut params = init;
    let mut reference = PolicySnapshot::new(SnapshotRole::Reference, &params);
    let mut updates = Vec::with_capacity(eff.updates);

    for u in 0..eff.updates {
        let behavior = PolicySnapshot::new(SnapshotRole::Behavior, &params);
        if eff.reference == ReferenceSchedule::RefreshToBehavior {
            reference = behavior.with_role(SnapshotRole::Reference);
        }
        let editor = LinearEditor::behavior(behavior.clone());
        let first = (u * eff.episodes_per_update) as u64;
        let batch: Vec<(EpisodeResult, crate::objective::Surrogate)> = workers.install(|| {
            (0..eff.episodes_per_update as u64)
                .into_par_iter()
                .map(|k| {
                    let e = first + k;
                    let (instance, bank) = &instances[(e % n) as usize];
                    let streams = EpisodeStreams::new(eff.master_seed, &instance.id, e);
                    let ep = run_episode(instance, bank, &editor, ports, &settings, streams)?;
                    let sur = episode_surrogate(
                        &ep.history,
                        &ep.advantages,
                        behavior.params(),
                        &reference,
                        eff.epsilon,
                        eff.beta,
                    )?;
                    Ok((ep, sur))
                })
                .collect::<Result<Vec<_>>>()
        })?;

        let mut grad = Array2::zeros(params.weights.raw_dim());
        let mut surrogate = 0.0;
        let mut kl = 0.0;
        let mut objective = 0.0;
        let mut gen_rewards = vec![0.0; eff.generations as usize + 1];
        for (ep, sur) in &batch {
            if sur.gradient.iter().any(|x| !x.is_finite()) || !sur.value.is_finite() {
                return Err(Error::NonFiniteGradient {
                    update: u,
                    episode: ep.episode,
                    instance: ep.history.instance_id.clone(),
                });
            }
            grad += &sur.gradient;
            surrogate += sur.value;
            kl += sur.mean_kl();
            objective += ep.objective_value;
            for (acc, s) in gen_rewards.iter_mut().zip(&ep.generation_stats) {
                *acc += s.mean_reward;
            }
            emit_episode(opts.sink, ep);
        }
        let count = batch.len() as f64;
        gen_rewards.iter_mut().for_each(|x| *x /= count);
        ascent_step(&mut params, &grad, eff.learning_rate);

        let metrics = UpdateMetrics {
            update: u,
            surrogate,
            mean_kl: kl / count,
            grad_max_abs: grad.iter().fold(0.0, |m: f64, x| m.max(x.abs())),
            generation_rewards: gen_rewards,
            objective: objective / count,
        };
        opts.sink.emit(&Event::Update(metrics.clone()));
        updates.push(metrics);
    }
    Ok(TrainOutcome { params, updates })
}

#[derive(Clone, Debug)]
pub struct EvalReport {
    pub generations: Vec<GenerationMetrics>,
    pub episodes: Vec<EpisodeResult>,
}

/// Run `eval_repeats` episodes per instance with a frozen generator and
/// aggregate per-generation mean reward and accuracy (fraction of episodes
/// with at least one rewarded rollout).
pub fn evaluate(
    instances: &[(TaskInstance, SkillBank)],
    generator: &dyn SkillGenerator,
    ports: &Ports<'_>,
    settings: &EpisodeSettings,
    cfg: &TrainConfig,
    opts: &RunOptions<'_>,
) -> Result<EvalReport> {
    if instances.is_empty() {
        return Err(Error::Precondition("no instances to evaluate".into()));
    }
    let n = instances.len() as u64;
    let total = n * cfg.eval_repeats.max(1) as u64;
    let workers = pool(opts.jobs)?;
    let episodes: Vec<EpisodeResult> = workers.install(|| {
        (0..total)
            .into_par_iter()
            .map(|k| {
                let (instance, bank) = &instances[(k % n) as usize];
                let streams = EpisodeStreams::new(cfg.master_seed, &instance.id, EVAL_EPISODE_OFFSET + k);
                run_episode(instance, bank, generator, ports, settings, streams)
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let gens = settings.generations as usize + 1;
    let mut reward = vec![0.0; gens];
    let mut solved = vec![0usize; gens];
    for ep in &episodes {
        emit_episode(opts.sink, ep);
        for (g, s) in ep.generation_stats.iter().enumerate() {
            reward[g] += s.mean_reward;
            solved[g] += s.any_success as usize;
        }
    }
    let count = episodes.len() as f64;
    let generations: Vec<GenerationMetrics> = (0..gens)
        .map(|g| GenerationMetrics {
            generation: g as u32,
            mean_reward: reward[g] / count,
            accuracy: solved[g] as f64 / count,
        })
        .collect();
    for m in &generations {
        opts.sink.emit(&Event::Evaluation(m.clone()));
    }
    Ok(EvalReport { generations, episodes })
}
