use std::env;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

pub const BASE_URL_VAR: &str = "SKILLR1_BASE_URL";
pub const API_KEY_VAR: &str = "SKILLR1_API_KEY";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CassetteMode {
    /// Talk to the endpoint directly.
    #[default]
    Off,
    /// Talk to the endpoint and write every exchange to the cassette directory.
    Record,
    /// Serve every request from the cassette directory; no network.
    Replay,
}

/// Adapter settings. Credentials are deliberately absent: they come from the
/// environment only (see [`Endpoint::from_env`]).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmConfig {
    pub task_model: String,
    pub editor_model: String,
    pub temperature: f64,
    pub editor_temperature: f64,
    pub max_tokens: u32,
    pub editor_max_tokens: u32,
    pub timeout_ms: u64,
    /// Send the rollout seed in the request body. When false the seed is
    /// only recorded in the rollout.
    pub forward_seed: bool,
    pub answer_marker: String,
    /// Upper bound on the rendered history in editor prompts, in characters.
    pub max_prompt_chars: usize,
    pub max_in_flight: usize,
    /// Token-bucket refill rate; 0 disables rate limiting.
    pub requests_per_second: f64,
    pub burst: u32,
    /// JSON-lines file of `{"id", "task", "answer"}` objects.
    pub tasks: Option<PathBuf>,
    /// Skill directory copied into every instance's bank. Without one each
    /// bank holds a single empty skill (the no-skill baseline).
    pub skill_dir: Option<PathBuf>,
    pub cassette_mode: CassetteMode,
    pub cassette_dir: Option<PathBuf>,
}

impl Default for LlmConfig {
    fn default() -> Self {
        Self {
            task_model: "gpt-4o-mini".into(),
            editor_model: "qwen3-4b".into(),
            temperature: 0.7,
            editor_temperature: 0.7,
            max_tokens: 1024,
            editor_max_tokens: 1024,
            timeout_ms: 60_000,
            forward_seed: true,
            answer_marker: "FINAL ANSWER:".into(),
            max_prompt_chars: 8_000,
            max_in_flight: 4,
            requests_per_second: 0.0,
            burst: 4,
            tasks: None,
            skill_dir: None,
            cassette_mode: CassetteMode::Off,
            cassette_dir: None,
        }
    }
}

impl LlmConfig {
    pub fn violations(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if !(self.temperature >= 0.0) || !(self.editor_temperature >= 0.0) {
            errs.push("temperature: must be ≥ 0".to_string());
        }
        if self.max_in_flight == 0 {
            errs.push("max_in_flight: ≥ 1 required (got 0)".to_string());
        }
        if !(self.requests_per_second >= 0.0) {
            errs.push(format!(
                "requests_per_second: ≥ 0 required (got {})",
                self.requests_per_second
            ));
        }
        if self.burst == 0 {
            errs.push("burst: ≥ 1 required (got 0)".to_string());
        }
        if self.answer_marker.trim().is_empty() {
            errs.push("answer_marker: must be nonempty".to_string());
        }
        if self.cassette_mode != CassetteMode::Off && self.cassette_dir.is_none() {
            errs.push(format!("cassette_dir: required when cassette_mode is {:?}", self.cassette_mode).to_lowercase());
        }
        errs
    }
}

/// Where requests go.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Endpoint {
    pub base_url: String,
    pub api_key: Option<String>,
}

impl Endpoint {
    /// Read `SKILLR1_BASE_URL` and (optionally) `SKILLR1_API_KEY`.
    pub fn from_env() -> Result<Self, String> {
        let base_url = env::var(BASE_URL_VAR)
            .ok()
            .filter(|s| !s.trim().is_empty())
            .ok_or_else(|| format!("{BASE_URL_VAR} is not set"))?;
        Ok(Self {
            base_url,
            api_key: env::var(API_KEY_VAR).ok().filter(|s| !s.is_empty()),
        })
    }

    pub fn completions_url(&self) -> String {
        format!("{}/chat/completions", self.base_url.trim_end_matches('/'))
    }
}
