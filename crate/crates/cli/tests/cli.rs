use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use skillr1_llm::mock::{MockServer, ScriptedModel};
use tempfile::TempDir;

fn skillr1(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_skillr1"))
        .args(args)
        .env_remove("SKILLR1_BASE_URL")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn blessing() -> bool {
    std::env::var_os("SKILLR1_BLESS").is_some()
}

fn golden(name: &str, actual: &str) {
    let path = fixtures().join(name);
    if blessing() {
        std::fs::write(&path, actual).unwrap();
    }
    assert_eq!(actual, std::fs::read_to_string(&path).unwrap(), "golden {name}");
}

const SMALL: &str =
    "[train]\nupdates = 6\neval_repeats = 2\nepisodes_per_update = 4\n\n[synthetic]\ninstance_count = 3\n";

fn config(tmp: &TempDir, text: &str) -> PathBuf {
    let path = tmp.path().join("cfg.toml");
    std::fs::write(&path, text).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn train(cfg: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["train", "--config", s(cfg), "--out", s(out)];
    args.extend_from_slice(extra);
    skillr1(&args)
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap()
}

#[test]
fn train_writes_every_artifact_reproducibly() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(&tmp, SMALL);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for out in [&a, &b] {
        let o = train(&cfg, out, &["--seed", "3"]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for f in [
        "config.toml",
        "events.jsonl",
        "policy.txt",
        "updates.csv",
        "generations.csv",
    ] {
        assert_eq!(read(&a, f), read(&b, f), "{f}");
    }
    let events = read(&a, "events.jsonl");
    let first = events.lines().next().unwrap();
    let last = events.lines().last().unwrap();
    assert!(first.contains("\"run_start\""), "{first}");
    assert!(last.contains("\"run_end\""), "{last}");
    assert_eq!(read(&a, "updates.csv").lines().count(), 1 + 6);
    // header plus generations 0..=5
    assert_eq!(read(&a, "generations.csv").lines().count(), 1 + 6);
}

#[test]
fn jobs_never_reaches_the_artifacts() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(&tmp, SMALL);
    let out = tmp.path().join("run");
    assert!(train(&cfg, &out, &["--jobs", "3"]).status.success());
    assert!(!read(&out, "config.toml").contains("jobs"));
    assert!(!read(&out, "events.jsonl").contains("jobs"));
}

#[test]
fn echoed_config_reproduces_the_run() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(&tmp, SMALL);
    let first = tmp.path().join("first");
    assert!(
        train(&cfg, &first, &["--seed", "11", "--lambda", "0.3", "--generations", "3"])
            .status
            .success()
    );
    let second = tmp.path().join("second");
    let o = train(&first.join("config.toml"), &second, &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in [
        "config.toml",
        "policy.txt",
        "updates.csv",
        "generations.csv",
        "events.jsonl",
    ] {
        assert_eq!(read(&first, f), read(&second, f), "{f}");
    }
    assert!(read(&first, "config.toml").contains("lambda = 0.3"));
}

#[test]
fn vanilla_mode_trains() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(&tmp, SMALL);
    let out = tmp.path().join("v");
    let o = train(&cfg, &out, &["--mode", "vanilla-grpo"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(read(&out, "config.toml").contains("vanilla-grpo"));
    // single generation: header plus generations 0 and 1
    assert_eq!(read(&out, "generations.csv").lines().count(), 3);
}

#[test]
fn missing_config_is_a_usage_error() {
    let tmp = TempDir::new().unwrap();
    let o = skillr1(&["train", "--out", s(&tmp.path().join("x"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--config"), "{}", stderr(&o));
}

#[test]
fn unreadable_config_is_a_usage_error() {
    let tmp = TempDir::new().unwrap();
    let o = train(&tmp.path().join("absent.toml"), &tmp.path().join("x"), &[]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn non_empty_output_needs_force() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(&tmp, SMALL);
    let out = tmp.path().join("run");
    std::fs::create_dir(&out).unwrap();
    std::fs::write(out.join("keep.txt"), "x").unwrap();
    let o = train(&cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--force"), "{}", stderr(&o));
    assert!(train(&cfg, &out, &["--force"]).status.success());
}

#[test]
fn invalid_values_are_listed() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(
        &tmp,
        "[train]\ngroup_size = 1\nepsilon = 0.0\n\n[synthetic]\neta = 0.7\n",
    );
    let o = train(&cfg, &tmp.path().join("x"), &["--gamma", "1.5"]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    for key in ["train.group_size", "train.epsilon", "train.gamma", "synthetic.eta"] {
        assert!(err.contains(key), "{key} missing from {err}");
    }
    assert!(!tmp.path().join("x").exists());
}

#[test]
fn unknown_keys_are_rejected() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(&tmp, "[train]\ngroup_sise = 4\n");
    let o = train(&cfg, &tmp.path().join("x"), &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("group_sise"), "{}", stderr(&o));
}

#[test]
fn train_refuses_the_llm_environment() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(
        &tmp,
        "[train]\nenvironment = \"llm\"\n\n[llm]\ntasks = \"tasks.jsonl\"\n",
    );
    let o = train(&cfg, &tmp.path().join("x"), &[]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
}

#[test]
fn eval_needs_an_editor() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(&tmp, SMALL);
    let o = skillr1(&["eval", "--config", s(&cfg), "--out", s(&tmp.path().join("e"))]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn eval_of_trained_params_matches_train_table() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(&tmp, SMALL);
    let run = tmp.path().join("run");
    assert!(train(&cfg, &run, &["--seed", "5"]).status.success());
    let ev = tmp.path().join("ev");
    let o = skillr1(&[
        "eval",
        "--config",
        s(&cfg),
        "--out",
        s(&ev),
        "--seed",
        "5",
        "--params",
        s(&run.join("policy.txt")),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(read(&ev, "generations.csv"), read(&run, "generations.csv"));
    assert_eq!(String::from_utf8(o.stdout).unwrap(), read(&ev, "generations.csv"));
}

#[test]
fn eval_rejects_params_of_another_width() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(&tmp, SMALL);
    let run = tmp.path().join("run");
    assert!(train(&cfg, &run, &[]).status.success());
    let wide = config(&tmp, "[synthetic]\nd = 6\n");
    let o = skillr1(&[
        "eval",
        "--config",
        s(&wide),
        "--out",
        s(&tmp.path().join("e")),
        "--params",
        s(&run.join("policy.txt")),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("d = 6"), "{}", stderr(&o));
}

#[test]
fn frozen_random_table_is_stable() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(
        &tmp,
        "[train]\neval_repeats = 3\nmaster_seed = 2\n\n[synthetic]\ninstance_count = 4\n",
    );
    let out = tmp.path().join("e");
    let o = skillr1(&["eval", "--config", s(&cfg), "--out", s(&out), "--frozen-random"]);
    assert!(o.status.success(), "{}", stderr(&o));
    golden("frozen_random_generations.csv", &read(&out, "generations.csv"));
}

#[test]
fn noiseless_exact_targets_saturate() {
    // with eta = 0 and tol = d every rollout succeeds
    let tmp = TempDir::new().unwrap();
    let cfg = config(
        &tmp,
        "[train]\neval_repeats = 2\n\n[synthetic]\nd = 4\neta = 0.0\ntol = 4\ninstance_count = 2\n",
    );
    let out = tmp.path().join("e");
    assert!(
        skillr1(&["eval", "--config", s(&cfg), "--out", s(&out), "--frozen-random"])
            .status
            .success()
    );
    golden("saturated_generations.csv", &read(&out, "generations.csv"));
}

#[test]
fn compare_of_identical_runs_has_zero_deltas() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(&tmp, SMALL);
    let run = tmp.path().join("run");
    assert!(train(&cfg, &run, &[]).status.success());
    let o = skillr1(&["compare", s(&run), s(&run.join("generations.csv")), "--labels", "a,b"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report = String::from_utf8(o.stdout).unwrap();
    let table: Vec<&str> = report.lines().take_while(|l| !l.is_empty()).collect();
    assert_eq!(
        table[0],
        "generation,a_reward,b_reward,delta_reward_a_vs_b,delta_accuracy_a_vs_b"
    );
    for row in &table[1..] {
        let cols: Vec<&str> = row.split(',').collect();
        assert_eq!(cols[1], cols[2]);
        assert_eq!(&cols[3..], ["+0.0000", "+0.0000"], "{row}");
    }
    assert!(report.contains("a - b: reward +0.0000, accuracy +0.0 pts"), "{report}");
}

#[test]
fn compare_report_is_stable() {
    let dir = fixtures().join("compare");
    let runs: Vec<String> = ["bilevel.csv", "vanilla.csv", "frozen.csv"]
        .iter()
        .map(|f| dir.join(f).to_string_lossy().into_owned())
        .collect();
    let o = skillr1(&[
        "compare",
        &runs[0],
        &runs[1],
        &runs[2],
        "--labels",
        "bilevel,vanilla,frozen",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    golden("compare/report.txt", &String::from_utf8(o.stdout).unwrap());
}

#[test]
fn compare_label_count_must_match() {
    let dir = fixtures().join("compare");
    let o = skillr1(&[
        "compare",
        s(&dir.join("bilevel.csv")),
        s(&dir.join("vanilla.csv")),
        "--labels",
        "only-one",
    ]);
    assert_eq!(o.status.code(), Some(1));
}

fn llm_config(tmp: &TempDir, mode: &str, cassettes: &Path) -> PathBuf {
    let llm = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../llm/tests/fixtures");
    config(
        tmp,
        &format!(
            "[train]\nenvironment = \"llm\"\nmode = \"inference\"\ngenerations = 2\ngroup_size = 3\nmaster_seed = 7\neval_repeats = 2\n\n\
[llm]\ntasks = {:?}\nskill_dir = {:?}\ncassette_mode = \"{mode}\"\ncassette_dir = {:?}\n",
            llm.join("tasks.jsonl"),
            llm.join("skills"),
            cassettes,
        ),
    )
}

fn record(cassettes: &Path, out: &Path, tmp: &TempDir) -> Output {
    let model = ScriptedModel::new([
        ("What is the capital of France?", "Paris"),
        ("Which planet is known as the Red Planet?", "Mars"),
    ]);
    let server = MockServer::start(move |r| model.reply(r)).unwrap();
    let cfg = llm_config(tmp, "record", cassettes);
    Command::new(env!("CARGO_BIN_EXE_skillr1"))
        .args(["eval", "--config", s(&cfg), "--out", s(out)])
        .env("SKILLR1_BASE_URL", server.url())
        .output()
        .unwrap()
}

#[test]
fn llm_eval_records_then_replays() {
    let tmp = TempDir::new().unwrap();
    let cassettes = tmp.path().join("cassettes");
    let live = tmp.path().join("live");
    let o = record(&cassettes, &live, &tmp);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(read(&live, "events.jsonl").contains("\"llm_exchange\""));
    // header plus generations 0..=2
    assert_eq!(read(&live, "generations.csv").lines().count(), 4);

    let cfg = llm_config(&tmp, "replay", &cassettes);
    let replay = tmp.path().join("replay");
    let o = skillr1(&["eval", "--config", s(&cfg), "--out", s(&replay)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(read(&live, "generations.csv"), read(&replay, "generations.csv"));
}

#[test]
fn llm_eval_replays_committed_cassettes() {
    let tmp = TempDir::new().unwrap();
    let cassettes = fixtures().join("llm_cassettes");
    if blessing() {
        let _ = std::fs::remove_dir_all(&cassettes);
        let o = record(&cassettes, &tmp.path().join("rec"), &tmp);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let cfg = llm_config(&tmp, "replay", &cassettes);
    let out = tmp.path().join("e");
    let o = skillr1(&["eval", "--config", s(&cfg), "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    golden("llm_replay_generations.csv", &read(&out, "generations.csv"));
}

#[test]
fn llm_eval_without_endpoint_is_a_usage_error() {
    let tmp = TempDir::new().unwrap();
    let llm = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../llm/tests/fixtures");
    let cfg = config(
        &tmp,
        &format!(
            "[train]\nenvironment = \"llm\"\n\n[llm]\ntasks = {:?}\n",
            llm.join("tasks.jsonl")
        ),
    );
    let o = skillr1(&["eval", "--config", s(&cfg), "--out", s(&tmp.path().join("e"))]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stderr(&o).contains("SKILLR1_BASE_URL"));
}

#[test]
fn compare_rejects_mismatched_generation_counts() {
    let tmp = TempDir::new().unwrap();
    let short = tmp.path().join("short.csv");
    std::fs::write(&short, "generation,mean_reward,accuracy\n0,0.25,0.500\n").unwrap();
    let o = skillr1(&["compare", s(&fixtures().join("compare/bilevel.csv")), s(&short)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("generation count mismatch"), "{}", stderr(&o));
}
