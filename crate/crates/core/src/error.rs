use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("invalid configuration:\n{}", .0.join("\n"))]
    Config(Vec<String>),

    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: String, got: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("{path}:{line}: {message}")]
    SkillFile { path: String, line: usize, message: String },

    #[error(
        "generation {generation} of instance {instance} has no behavior log-probability; \
         record it when the skill is sampled"
    )]
    MissingBehaviorLogprob { instance: String, generation: u32 },

    #[error("port failure at instance {instance}, generation {generation}{}: {message}",
        .rollout.map(|r| format!(", rollout {r}")).unwrap_or_default())]
    Port {
        instance: String,
        generation: u32,
        rollout: Option<usize>,
        message: String,
    },

    #[error("non-finite gradient at update {update} (episode {episode}, instance {instance})")]
    NonFiniteGradient {
        update: usize,
        episode: u64,
        instance: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
