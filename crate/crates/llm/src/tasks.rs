//! Text task instances and their skill banks.

use std::fs;
use std::path::Path;

use serde::Deserialize;
use skillr1_core::env::load_skill_bank;
use skillr1_core::{Error, Payload, Result, Skill, SkillBank, TaskInstance};

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TaskLine {
    id: String,
    task: String,
    answer: Option<String>,
}

/// Parse a JSON-lines task file; blank lines are skipped.
pub fn parse_tasks(text: &str, origin: &str) -> Result<Vec<TaskInstance>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let t: TaskLine = serde_json::from_str(line).map_err(|e| Error::SkillFile {
            path: origin.to_string(),
            line: i + 1,
            message: format!("malformed task: {e}"),
        })?;
        out.push(TaskInstance {
            skill_bank_ref: format!("bank/{}", t.id),
            id: t.id,
            payload: Payload::Text {
                task: t.task,
                answer: t.answer,
            },
        });
    }
    if out.is_empty() {
        return Err(Error::Precondition(format!("{origin}: no tasks")));
    }
    Ok(out)
}

pub fn load_tasks(path: &Path) -> Result<Vec<TaskInstance>> {
    parse_tasks(&fs::read_to_string(path)?, &path.display().to_string())
}

/// Pair each instance with a bank loaded from `skill_dir`, or with a single
/// empty skill when there is no directory.
pub fn attach_banks(instances: Vec<TaskInstance>, skill_dir: Option<&Path>) -> Result<Vec<(TaskInstance, SkillBank)>> {
    instances
        .into_iter()
        .map(|inst| {
            let bank = match skill_dir {
                Some(dir) => load_skill_bank(dir, &inst.id)?,
                None => SkillBank::new(
                    inst.id.clone(),
                    vec![Skill::seed_text(format!("{}/no-skill", inst.id), "")],
                )?,
            };
            Ok((inst, bank))
        })
        .collect()
}
