//! Prompt templates.
//!
//! Task prompt:
//!
//! ```text
//! [system] Solve the task. End your reply with a line that starts with `<marker>` followed by your answer.
//! [user]   ## Skill            <- omitted entirely when the skill text is empty
//!          <skill text>
//!
//!          ## Task
//!          <task>
//! ```
//!
//! Editor prompt: the task, then the history rendered oldest to newest, one
//! block per generation with every rollout tagged by its reward. When the
//! rendering exceeds the character budget the oldest blocks are dropped and a
//! marker line notes how many; the newest block is always kept whole.

use std::fmt::Write as _;

use skillr1_core::metrics::fmt_real;
use skillr1_core::{EvolutionHistory, GenerationRecord, RolloutContent};

use crate::wire::ChatMessage;

pub const EDITOR_SYSTEM: &str = "You are a skill editor. You improve reusable procedural instructions for a \
task-solving agent, based on how attempts that followed them were scored.";

pub fn task_system(marker: &str) -> String {
    format!("Solve the task. End your reply with a line that starts with `{marker}` followed by your answer.")
}

pub fn task_messages(task: &str, skill_text: Option<&str>, marker: &str) -> Vec<ChatMessage> {
    let mut user = String::new();
    if let Some(skill) = skill_text.filter(|s| !s.trim().is_empty()) {
        let _ = write!(user, "## Skill\n{}\n\n", skill.trim_end());
    }
    let _ = write!(user, "## Task\n{}", task.trim_end());
    vec![ChatMessage::system(task_system(marker)), ChatMessage::user(user)]
}

fn render_record(record: &GenerationRecord) -> String {
    let skill = record
        .skill
        .text
        .as_deref()
        .filter(|s| !s.trim().is_empty())
        .unwrap_or("(empty)");
    let mut out = format!(
        "### Generation {}\nSkill:\n{}\nRollouts (mean reward {}):",
        record.generation,
        skill.trim_end(),
        fmt_real(record.mean_reward)
    );
    for r in &record.rollouts {
        let content = match &r.content {
            RolloutContent::Text(t) => t.trim_end().to_string(),
            RolloutContent::Bits(b) => b.to_string(),
        };
        match &r.error {
            Some(e) => {
                let _ = write!(
                    out,
                    "\n- Rollout {} [reward {}, failed: {e}]",
                    r.index,
                    fmt_real(r.reward)
                );
            }
            None => {
                let _ = write!(
                    out,
                    "\n- Rollout {} [reward {}]:\n{content}",
                    r.index,
                    fmt_real(r.reward)
                );
            }
        }
    }
    out
}

/// History rendering bounded by `max_chars` (except that the newest block is
/// never cut).
pub fn render_history(history: &EvolutionHistory, max_chars: usize) -> String {
    let blocks: Vec<String> = history.records().iter().map(render_record).collect();
    let joined_len =
        |bs: &[String]| bs.iter().map(|b| b.chars().count()).sum::<usize>() + 2 * bs.len().saturating_sub(1);
    let mut start = 0;
    while start + 1 < blocks.len() && joined_len(&blocks[start..]) + marker(start).chars().count() > max_chars {
        start += 1;
    }
    let mut out = marker(start);
    out.push_str(&blocks[start..].join("\n\n"));
    out
}

fn marker(dropped: usize) -> String {
    match dropped {
        0 => String::new(),
        1 => "[1 earlier generation truncated]\n\n".to_string(),
        n => format!("[{n} earlier generations truncated]\n\n"),
    }
}

pub fn editor_messages(task: &str, history: &EvolutionHistory, max_chars: usize) -> Vec<ChatMessage> {
    let user = format!(
        "## Task\n{}\n\n## Evolution history\n{}\n\n## Instructions\nRevise the skill used in generation {} so that \
more attempts succeed. Reply with the complete revised skill text and nothing else.",
        task.trim_end(),
        render_history(history, max_chars),
        history.current_generation()
    );
    vec![ChatMessage::system(EDITOR_SYSTEM), ChatMessage::user(user)]
}

#[cfg(test)]
mod tests {
    use skillr1_core::{GenerationRecord, Rollout, Skill};

    use super::*;

    fn record(g: u32, text: &str, outcomes: &[(&str, f64)]) -> GenerationRecord {
        let mut skill = Skill::seed_text(format!("s{g}"), text);
        skill.generation = g;
        let rollouts = outcomes
            .iter()
            .enumerate()
            .map(|(i, (c, r))| Rollout {
                index: i + 1,
                content: RolloutContent::Text(c.to_string()),
                reward: *r,
                seed: i as u64,
                error: None,
            })
            .collect();
        GenerationRecord::new(skill, rollouts, None).unwrap()
    }

    fn history(n: u32) -> EvolutionHistory {
        let mut h = EvolutionHistory::new(
            "i",
            record(0, "be careful", &[("FINAL ANSWER: Paris", 1.0), ("no idea", 0.0)]),
        )
        .unwrap();
        for g in 1..n {
            h.push(record(
                g,
                &format!("revision {g} ").repeat(20),
                &[("a", 0.0), ("b", 1.0)],
            ))
            .unwrap();
        }
        h
    }

    #[test]
    fn empty_skill_omits_section() {
        let m = task_messages("Capital of France?", Some("  "), "FINAL ANSWER:");
        assert_eq!(m[1].content, "## Task\nCapital of France?");
        let m = task_messages("Capital of France?", None, "FINAL ANSWER:");
        assert!(!m[1].content.contains("## Skill"));
        let m = task_messages("Capital of France?", Some("Think first."), "FINAL ANSWER:");
        assert_eq!(m[1].content, "## Skill\nThink first.\n\n## Task\nCapital of France?");
        assert!(m[0].content.contains("`FINAL ANSWER:`"));
    }

    #[test]
    fn rollouts_are_tagged_with_rewards() {
        let text = render_history(&history(1), 10_000);
        assert_eq!(
            text,
            "### Generation 0\nSkill:\nbe careful\nRollouts (mean reward 0.5):\n- Rollout 1 [reward 1.0]:\n\
FINAL ANSWER: Paris\n- Rollout 2 [reward 0.0]:\nno idea"
        );
    }

    #[test]
    fn truncation_drops_oldest_and_keeps_newest() {
        let h = history(6);
        let full = render_history(&h, usize::MAX);
        let cut = render_history(&h, full.chars().count() / 2);
        assert!(cut.starts_with('['));
        assert!(cut.chars().count() <= full.chars().count() / 2);
        let newest = render_record(h.last());
        assert!(cut.ends_with(&newest));
        assert!(!cut.contains("### Generation 0"));

        let tiny = render_history(&h, 10);
        assert_eq!(tiny, format!("[5 earlier generations truncated]\n\n{newest}"));
    }

    #[test]
    fn failed_rollouts_are_annotated() {
        let mut rec = record(0, "x", &[("", 0.0), ("y", 1.0)]);
        rec.rollouts[0].error = Some("timed out".into());
        assert!(render_record(&rec).contains("- Rollout 1 [reward 0.0, failed: timed out]"));
    }
}
