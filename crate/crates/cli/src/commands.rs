use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use skillr1_core::engine::{self, EpisodeSettings, LinearEditor, Ports, RunOptions};
use skillr1_core::env::{make_instances, SkillGenerator, SyntheticEnv};
use skillr1_core::events::{Event, EventSink, JsonlSink};
use skillr1_core::metrics::{compare_runs, format_generation_table, format_update_table, parse_generation_table, Run};
use skillr1_core::policy::{PolicyParams, PolicySnapshot, SnapshotRole};
use skillr1_core::{EnvKind, Mode, SkillBank, TaskInstance};
use skillr1_llm::tasks::{attach_banks, load_tasks};
use skillr1_llm::{
    CassetteMode, CassetteReplay, ChatClient, ChatTransport, Endpoint, ExactMatchVerifier, HttpTransport, InFlight,
    LlmSkillEditor, LlmTaskModel, RateLimiter, Recorder,
};

use crate::args::{CompareArgs, EvalArgs, RunArgs, TrainArgs};
use crate::config::FileConfig;
use crate::output::{self, Console};
use crate::UsageError;

fn load(run: &RunArgs, extra: impl FnOnce(&mut FileConfig)) -> Result<FileConfig> {
    let mut cfg = FileConfig::load(&run.config).map_err(|e| UsageError(format!("{e:#}")))?;
    cfg.apply(&run.overrides);
    extra(&mut cfg);
    let errs = cfg.violations();
    if !errs.is_empty() {
        return Err(UsageError(format!("invalid configuration:\n  {}", errs.join("\n  "))).into());
    }
    Ok(cfg)
}

struct Started {
    dir: PathBuf,
    sink: Arc<Console>,
}

fn start(command: &str, run: &RunArgs, cfg: &FileConfig) -> Result<Started> {
    let dir = output::prepare(&run.out, run.force)?;
    output::write(&dir, "config.toml", &cfg.to_toml()?)?;
    let sink = Arc::new(Console {
        log: JsonlSink::create(&dir.join("events.jsonl"))?,
        total_updates: cfg.train.updates,
    });
    sink.emit(&Event::RunStart {
        command: command.to_string(),
        config: serde_json::to_value(cfg)?,
    });
    Ok(Started { dir, sink })
}

fn synthetic(cfg: &FileConfig) -> Result<(SyntheticEnv, Vec<(TaskInstance, SkillBank)>)> {
    let env = SyntheticEnv::new(cfg.synthetic.clone())?;
    let instances = make_instances(&cfg.synthetic, cfg.train.master_seed)?;
    Ok((env, instances))
}

pub fn train(args: TrainArgs) -> Result<()> {
    let cfg = load(&args.run, |c| {
        if let Some(u) = args.updates {
            c.train.updates = u;
        }
    })?;
    if cfg.train.environment == EnvKind::Llm {
        return Err(UsageError(
            "train needs environment synthetic: chat endpoints expose no trainable log-probabilities \
(use eval for the llm environment)"
                .into(),
        )
        .into());
    }
    if cfg.train.mode == Mode::Inference {
        return Err(UsageError("mode inference never trains; use eval".into()).into());
    }
    let Started { dir, sink } = start("train", &args.run, &cfg)?;
    let (env, instances) = synthetic(&cfg)?;
    let ports = Ports {
        task: &env,
        verifier: &env,
    };
    let opts = RunOptions {
        jobs: args.run.jobs,
        sink: sink.as_ref(),
    };
    let init = engine::init_params(engine::skill_dim(&instances)?, &cfg.train);
    let outcome = engine::train(&instances, &cfg.train, &ports, init, &opts)?;
    outcome.params.save(&dir.join("policy.txt"))?;
    output::write(&dir, "updates.csv", &format_update_table(&outcome.updates))?;

    let editor = LinearEditor::frozen(PolicySnapshot::new(SnapshotRole::Behavior, &outcome.params));
    let report = engine::evaluate(
        &instances,
        &editor,
        &ports,
        &EpisodeSettings::from_config(&cfg.train),
        &cfg.train,
        &opts,
    )?;
    let table = format_generation_table(&report.generations);
    output::write(&dir, "generations.csv", &table)?;
    sink.emit(&Event::RunEnd {
        updates: outcome.updates.len(),
        params_fingerprint: outcome.params.fingerprint(),
    });
    sink.log.flush()?;
    print!("\n{table}");
    Ok(())
}

fn llm_transport(cfg: &FileConfig) -> Result<Arc<dyn ChatTransport>> {
    let llm = &cfg.llm;
    let http = || -> Result<Arc<dyn ChatTransport>> {
        let endpoint = Endpoint::from_env().map_err(UsageError)?;
        Ok(Arc::new(HttpTransport::new(
            &endpoint,
            Duration::from_millis(llm.timeout_ms),
        )))
    };
    Ok(match (llm.cassette_mode, &llm.cassette_dir) {
        (CassetteMode::Off, _) => http()?,
        (CassetteMode::Replay, Some(dir)) => Arc::new(CassetteReplay::new(dir)?),
        (CassetteMode::Record, Some(dir)) => Arc::new(Recorder::new(http()?, dir)?),
        (_, None) => unreachable!("validated: cassette modes need a directory"),
    })
}

pub fn eval(args: EvalArgs) -> Result<()> {
    let cfg = load(&args.run, |c| {
        if let Some(r) = args.eval_repeats {
            c.train.eval_repeats = r;
        }
    })?;
    if cfg.train.environment == EnvKind::Synthetic && args.params.is_none() && !args.frozen_random {
        return Err(UsageError("eval needs --params FILE or --frozen-random".into()).into());
    }
    let Started { dir, sink } = start("eval", &args.run, &cfg)?;
    let opts = RunOptions {
        jobs: args.run.jobs,
        sink: sink.as_ref(),
    };
    let mut settings = EpisodeSettings::from_config(&cfg.train);

    let report = match cfg.train.environment {
        EnvKind::Synthetic => {
            let (env, instances) = synthetic(&cfg)?;
            let d = engine::skill_dim(&instances)?;
            let params = match &args.params {
                Some(path) => load_params(path, d)?,
                None => engine::init_params(d, &cfg.train),
            };
            let editor = LinearEditor::frozen(PolicySnapshot::new(SnapshotRole::Behavior, &params));
            let ports = Ports {
                task: &env,
                verifier: &env,
            };
            engine::evaluate(&instances, &editor, &ports, &settings, &cfg.train, &opts)?
        }
        EnvKind::Llm => {
            if args.params.is_some() {
                return Err(UsageError("--params applies to the synthetic environment only".into()).into());
            }
            let tasks = cfg.llm.tasks.as_deref().expect("validated: llm.tasks is set");
            let instances = attach_banks(load_tasks(tasks)?, cfg.llm.skill_dir.as_deref())?;
            let client = ChatClient::new(llm_transport(&cfg)?)
                .with_limits(
                    Arc::new(RateLimiter::new(cfg.llm.requests_per_second, cfg.llm.burst)),
                    Arc::new(InFlight::new(cfg.llm.max_in_flight)),
                )
                .with_sink(sink.clone());
            let task = LlmTaskModel::new(client.clone(), cfg.llm.clone());
            let editor = LlmSkillEditor::new(client, cfg.llm.clone());
            let verifier = ExactMatchVerifier::new(cfg.llm.answer_marker.clone());
            settings.retry = cfg.retry.clone();
            settings.concurrent_rollouts = true;
            let ports = Ports {
                task: &task,
                verifier: &verifier,
            };
            engine::evaluate(
                &instances,
                &editor as &dyn SkillGenerator,
                &ports,
                &settings,
                &cfg.train,
                &opts,
            )?
        }
    };
    let table = format_generation_table(&report.generations);
    output::write(&dir, "generations.csv", &table)?;
    sink.log.flush()?;
    print!("{table}");
    Ok(())
}

fn load_params(path: &Path, d: usize) -> Result<PolicyParams> {
    let params = PolicyParams::load(path).with_context(|| format!("cannot load parameters {}", path.display()))?;
    if params.action_count() != d + 1 {
        bail!(
            "parameters in {} are for bitstrings of length {}, but the environment has d = {d}",
            path.display(),
            params.action_count() - 1
        );
    }
    Ok(params)
}

pub fn compare(args: CompareArgs) -> Result<()> {
    if !args.labels.is_empty() && args.labels.len() != args.runs.len() {
        return Err(UsageError(format!(
            "{} labels given for {} runs",
            args.labels.len(),
            args.runs.len()
        ))
        .into());
    }
    let runs = args
        .runs
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let file = if p.is_dir() {
                p.join("generations.csv")
            } else {
                p.clone()
            };
            let text = std::fs::read_to_string(&file).with_context(|| format!("cannot read {}", file.display()))?;
            let rows = parse_generation_table(&text).with_context(|| format!("in {}", file.display()))?;
            let label = args.labels.get(i).cloned().unwrap_or_else(|| {
                let named = if p.is_dir() {
                    p.as_path()
                } else {
                    p.parent().filter(|q| !q.as_os_str().is_empty()).unwrap_or(p)
                };
                named
                    .file_stem()
                    .map_or_else(|| format!("run{i}"), |s| s.to_string_lossy().into_owned())
            });
            Ok(Run { label, rows })
        })
        .collect::<Result<Vec<_>>>()?;
    print!("{}", compare_runs(&runs)?);
    Ok(())
}
