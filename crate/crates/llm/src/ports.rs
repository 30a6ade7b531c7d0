use skillr1_core::env::{Generated, PortError, SkillGenerator, TaskModel};
use skillr1_core::{EvolutionHistory, Payload, RolloutContent, Skill, TaskInstance};

use crate::client::ChatClient;
use crate::config::LlmConfig;
use crate::prompt::{editor_messages, task_messages};
use crate::wire::ChatRequest;

fn task_text(instance: &TaskInstance) -> Result<&str, PortError> {
    match &instance.payload {
        Payload::Text { task, .. } => Ok(task),
        Payload::Target { .. } => Err(PortError::fatal(format!("instance {} has no text task", instance.id))),
    }
}

/// Frozen task-solving model behind a chat endpoint.
#[derive(Clone)]
pub struct LlmTaskModel {
    client: ChatClient,
    cfg: LlmConfig,
}

impl LlmTaskModel {
    pub fn new(client: ChatClient, cfg: LlmConfig) -> Self {
        Self { client, cfg }
    }

    pub fn request(&self, instance: &TaskInstance, skill: &Skill, seed: u64) -> Result<ChatRequest, PortError> {
        Ok(ChatRequest {
            model: self.cfg.task_model.clone(),
            messages: task_messages(task_text(instance)?, skill.text.as_deref(), &self.cfg.answer_marker),
            temperature: self.cfg.temperature,
            max_tokens: self.cfg.max_tokens,
            seed: self.cfg.forward_seed.then_some(seed),
        })
    }
}

impl TaskModel for LlmTaskModel {
    fn rollout(&self, instance: &TaskInstance, skill: &Skill, seed: u64) -> Result<RolloutContent, PortError> {
        let req = self.request(instance, skill, seed)?;
        self.client.complete("task", &req).map(RolloutContent::Text)
    }
}

/// Frozen text editor: the completion becomes the next skill's text. No
/// log-probabilities are requested or recorded.
#[derive(Clone)]
pub struct LlmSkillEditor {
    client: ChatClient,
    cfg: LlmConfig,
}

impl LlmSkillEditor {
    pub fn new(client: ChatClient, cfg: LlmConfig) -> Self {
        Self { client, cfg }
    }

    pub fn request(
        &self,
        instance: &TaskInstance,
        history: &EvolutionHistory,
        seed: u64,
    ) -> Result<ChatRequest, PortError> {
        Ok(ChatRequest {
            model: self.cfg.editor_model.clone(),
            messages: editor_messages(task_text(instance)?, history, self.cfg.max_prompt_chars),
            temperature: self.cfg.editor_temperature,
            max_tokens: self.cfg.editor_max_tokens,
            seed: self.cfg.forward_seed.then_some(seed),
        })
    }
}

impl SkillGenerator for LlmSkillEditor {
    fn generate(
        &self,
        instance: &TaskInstance,
        history: &EvolutionHistory,
        child_id: String,
        seed: u64,
    ) -> Result<Generated, PortError> {
        let req = self.request(instance, history, seed)?;
        let text = self.client.complete("editor", &req)?;
        let mut skill = history.last().skill.child(child_id);
        skill.text = Some(text);
        Ok(Generated { skill, logprob: None })
    }
}
