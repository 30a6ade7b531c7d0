use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use skillr1_core::engine::{run_episode, EpisodeSettings, Ports, RetryPolicy};
use skillr1_core::events::{Event, MemorySink};
use skillr1_core::rng::EpisodeStreams;
use skillr1_core::{EvolutionHistory, RolloutContent, SkillBank, TaskInstance, TrainConfig};
use skillr1_llm::mock::{MockReply, MockServer, ScriptedModel};
use skillr1_llm::prompt::editor_messages;
use skillr1_llm::tasks::{attach_banks, load_tasks};
use skillr1_llm::{
    CassetteReplay, ChatClient, ChatTransport, Endpoint, ExactMatchVerifier, HttpTransport, LlmConfig, LlmSkillEditor,
    LlmTaskModel, Recorder,
};

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn instances(with_skills: bool) -> Vec<(TaskInstance, SkillBank)> {
    let skills = fixtures().join("skills");
    attach_banks(
        load_tasks(&fixtures().join("tasks.jsonl")).unwrap(),
        with_skills.then_some(skills.as_path()),
    )
    .unwrap()
}

fn scripted() -> ScriptedModel {
    ScriptedModel::new([
        ("What is the capital of France?", "Paris"),
        ("Which planet is known as the Red Planet?", "Mars"),
    ])
}

fn http(server: &MockServer) -> Arc<dyn ChatTransport> {
    Arc::new(HttpTransport::new(
        &Endpoint {
            base_url: server.url().to_string(),
            api_key: Some("sk-mock".into()),
        },
        Duration::from_secs(10),
    ))
}

fn settings() -> EpisodeSettings {
    let mut s = EpisodeSettings::from_config(&TrainConfig {
        generations: 2,
        group_size: 3,
        ..Default::default()
    });
    s.concurrent_rollouts = true;
    s
}

/// One episode per instance through the given transport.
fn run_all(transport: Arc<dyn ChatTransport>, with_skills: bool) -> Vec<EvolutionHistory> {
    let cfg = LlmConfig::default();
    let client = ChatClient::new(transport);
    let task = LlmTaskModel::new(client.clone(), cfg.clone());
    let editor = LlmSkillEditor::new(client, cfg.clone());
    let verifier = ExactMatchVerifier::new(cfg.answer_marker.clone());
    let ports = Ports {
        task: &task,
        verifier: &verifier,
    };
    instances(with_skills)
        .iter()
        .map(|(inst, bank)| {
            run_episode(
                inst,
                bank,
                &editor,
                &ports,
                &settings(),
                EpisodeStreams::new(7, &inst.id, 0),
            )
            .unwrap()
            .history
        })
        .collect()
}

fn to_json(histories: &[EvolutionHistory]) -> String {
    serde_json::to_string_pretty(histories).unwrap() + "\n"
}

fn cassettes() -> PathBuf {
    fixtures().join("cassettes")
}

fn bless() {
    let dir = cassettes();
    let _ = std::fs::remove_dir_all(&dir);
    let model = scripted();
    let server = MockServer::start(move |r| model.reply(r)).unwrap();
    let rec: Arc<dyn ChatTransport> = Arc::new(Recorder::new(http(&server), &dir).unwrap());
    let histories = run_all(rec, true);
    std::fs::write(fixtures().join("history.json"), to_json(&histories)).unwrap();
    let (inst, _) = &instances(true)[0];
    let skillr1_core::Payload::Text { task, .. } = &inst.payload else {
        unreachable!()
    };
    let prompt = &editor_messages(task, &histories[0], LlmConfig::default().max_prompt_chars)[1].content;
    std::fs::write(fixtures().join("editor_prompt.txt"), prompt).unwrap();
}

#[test]
fn cassette_replay_matches_golden_history() {
    if std::env::var_os("SKILLR1_BLESS").is_some() {
        bless();
    }
    let replayed = run_all(Arc::new(CassetteReplay::new(cassettes()).unwrap()), true);
    let golden = std::fs::read_to_string(fixtures().join("history.json")).unwrap();
    assert_eq!(to_json(&replayed), golden);
    // rewards are a mix, so the fixture exercises both verifier outcomes
    let rewards: Vec<f64> = replayed
        .iter()
        .flat_map(|h| h.records())
        .flat_map(|r| r.rewards())
        .collect();
    assert!(rewards.contains(&0.0) && rewards.contains(&1.0));
}

#[test]
fn cassette_replay_reproduces_golden_prompt() {
    let replayed = run_all(Arc::new(CassetteReplay::new(cassettes()).unwrap()), true);
    let (inst, _) = &instances(true)[0];
    let skillr1_core::Payload::Text { task, .. } = &inst.payload else {
        unreachable!()
    };
    let prompt = &editor_messages(task, &replayed[0], LlmConfig::default().max_prompt_chars)[1].content;
    assert_eq!(
        prompt,
        &std::fs::read_to_string(fixtures().join("editor_prompt.txt")).unwrap()
    );
}

#[test]
fn live_recording_replays_byte_identically() {
    let dir = tempfile::tempdir().unwrap();
    let model = scripted();
    let server = MockServer::start(move |r| model.reply(r)).unwrap();
    let live = run_all(Arc::new(Recorder::new(http(&server), dir.path()).unwrap()), false);
    drop(server);
    let replayed = run_all(Arc::new(CassetteReplay::new(dir.path()).unwrap()), false);
    assert_eq!(to_json(&live), to_json(&replayed));
}

#[test]
fn no_skill_prompts_omit_the_skill_section() {
    let model = scripted();
    let server = MockServer::start(move |r| model.reply(r)).unwrap();
    run_all(http(&server), false);
    let task_bodies: Vec<String> = server
        .requests()
        .into_iter()
        .map(|r| r.body)
        .filter(|b| b.contains("Solve the task"))
        .collect();
    assert_eq!(task_bodies.len(), 2 * 3 * 3);
    // generation 0 runs on the empty skill; later generations carry edited text
    let gen0: Vec<&String> = task_bodies.iter().filter(|b| !b.contains("## Skill")).collect();
    assert_eq!(gen0.len(), 2 * 3);
    for b in gen0 {
        assert!(b.contains(r###""content":"## Task\n"###), "{b}");
    }
}

#[test]
fn canned_completion_is_the_rollout() {
    let server = MockServer::start(|_| MockReply::completion("FINAL ANSWER: Paris")).unwrap();
    let task = LlmTaskModel::new(ChatClient::new(http(&server)), LlmConfig::default());
    let (inst, bank) = &instances(true)[0];
    let out = skillr1_core::env::TaskModel::rollout(&task, inst, bank.initial(), 1).unwrap();
    assert_eq!(out, RolloutContent::Text("FINAL ANSWER: Paris".into()));
}

/// Editor that hands back the skill it was shown.
fn identity_editor(req: &skillr1_llm::mock::MockRequest) -> MockReply {
    let chat: skillr1_llm::wire::ChatRequest = serde_json::from_str(&req.body).unwrap();
    let user = &chat.messages[1].content;
    if !user.contains("## Evolution history") {
        return MockReply::completion("FINAL ANSWER: Paris");
    }
    let last = user.rsplit("### Generation ").next().unwrap();
    let skill = last
        .split_once("Skill:\n")
        .unwrap()
        .1
        .split_once("\nRollouts (")
        .unwrap()
        .0;
    MockReply::completion(skill)
}

#[test]
fn identity_editor_keeps_text_and_advances_generation() {
    let server = MockServer::start(identity_editor).unwrap();
    let cfg = LlmConfig::default();
    let client = ChatClient::new(http(&server));
    let task = LlmTaskModel::new(client.clone(), cfg.clone());
    let editor = LlmSkillEditor::new(client, cfg.clone());
    let verifier = ExactMatchVerifier::new(cfg.answer_marker.clone());
    let ports = Ports {
        task: &task,
        verifier: &verifier,
    };
    let (inst, bank) = &instances(true)[0];
    let ep = run_episode(
        inst,
        bank,
        &editor,
        &ports,
        &settings(),
        EpisodeStreams::new(1, &inst.id, 0),
    )
    .unwrap();
    let recs = ep.history.records();
    for w in recs.windows(2) {
        assert_eq!(
            w[1].skill.text.as_deref().map(str::trim_end),
            w[0].skill.text.as_deref().map(str::trim_end)
        );
        assert_eq!(w[1].skill.generation, w[0].skill.generation + 1);
        assert_eq!(w[1].skill.parent_id.as_deref(), Some(w[0].skill.id.as_str()));
        assert_eq!(w[1].behavior_logprob, None);
    }
    assert!(recs.iter().flat_map(|r| r.rewards()).all(|r| r == 1.0));
}

#[test]
fn transient_failures_are_retried_and_logged() {
    let calls = Arc::new(std::sync::atomic::AtomicUsize::new(0));
    let counter = calls.clone();
    let server = MockServer::start(move |_| {
        if counter.fetch_add(1, std::sync::atomic::Ordering::SeqCst) < 2 {
            MockReply {
                status: 503,
                body: "overloaded".into(),
            }
        } else {
            MockReply::completion("FINAL ANSWER: Paris")
        }
    })
    .unwrap();
    let sink = Arc::new(MemorySink::new());
    let cfg = LlmConfig::default();
    let client = ChatClient::new(http(&server)).with_sink(sink.clone());
    let task = LlmTaskModel::new(client.clone(), cfg.clone());
    let editor = LlmSkillEditor::new(client, cfg.clone());
    let verifier = ExactMatchVerifier::new(cfg.answer_marker.clone());
    let ports = Ports {
        task: &task,
        verifier: &verifier,
    };
    let mut s = settings();
    s.concurrent_rollouts = false;
    s.retry = RetryPolicy {
        max_retries: 3,
        base_delay_ms: 1,
        max_delay_ms: 2,
    };
    let (inst, bank) = &instances(false)[0];
    let ep = run_episode(inst, bank, &editor, &ports, &s, EpisodeStreams::new(1, &inst.id, 0)).unwrap();
    assert_eq!(ep.history.records()[0].rollouts[0].error, None);
    let attempts: Vec<(u32, Option<u16>)> = sink
        .events()
        .iter()
        .filter_map(|e| match e {
            Event::LlmExchange { attempt, status, .. } => Some((*attempt, *status)),
            _ => None,
        })
        .take(3)
        .collect();
    assert_eq!(attempts, vec![(1, Some(503)), (2, Some(503)), (3, Some(200))]);
}

#[test]
fn replay_without_a_cassette_fails_loudly() {
    let empty = tempfile::tempdir().unwrap();
    let cfg = LlmConfig::default();
    let task = LlmTaskModel::new(
        ChatClient::new(Arc::new(CassetteReplay::new(empty.path()).unwrap())),
        cfg,
    );
    let (inst, bank) = &instances(false)[0];
    let err = skillr1_core::env::TaskModel::rollout(&task, inst, bank.initial(), 0).unwrap_err();
    assert!(!err.retryable);
    assert!(err.message.contains("no cassette"));
    assert!(!Path::new(&empty.path().join("x")).exists());
}
