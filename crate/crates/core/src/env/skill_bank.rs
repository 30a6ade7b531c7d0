//! Directory-of-files skill banks.
//!
//! Each file holds one skill: a front-matter header with at least `name` and
//! `description`, then the body. The header is either fenced by `---` lines
//! or written bare at the top of the file and closed by the first blank line.
//! Indented lines continue the previous header value.

use std::path::Path;

use crate::error::{Error, Result};
use crate::types::{Skill, SkillBank};

/// Load every regular, non-hidden file in `dir` (sorted by file name) as a
/// generation-0 skill.
pub fn load_skill_bank(dir: &Path, instance_id: &str) -> Result<SkillBank> {
    let mut paths = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let entry = entry?;
        let hidden = entry.file_name().to_string_lossy().starts_with('.');
        if entry.file_type()?.is_file() && !hidden {
            paths.push(entry.path());
        }
    }
    paths.sort();
    let mut skills: Vec<Skill> = Vec::with_capacity(paths.len());
    for path in &paths {
        let text = std::fs::read_to_string(path)?;
        let skill = parse_skill_file(&text, &path.display().to_string())?;
        if skills.iter().any(|s| s.id == skill.id) {
            return Err(Error::SkillFile {
                path: path.display().to_string(),
                line: 1,
                message: format!("duplicate skill name {:?}", skill.id),
            });
        }
        skills.push(skill);
    }
    SkillBank::new(instance_id, skills)
}

pub fn parse_skill_file(text: &str, origin: &str) -> Result<Skill> {
    let err = |line: usize, message: String| Error::SkillFile {
        path: origin.to_string(),
        line,
        message,
    };
    let lines: Vec<&str> = text.split_inclusive('\n').collect();
    let fenced = lines.first().is_some_and(|l| l.trim_end() == "---");

    let (header_range, body_start) = if fenced {
        let close = lines
            .iter()
            .skip(1)
            .position(|l| l.trim_end() == "---")
            .ok_or_else(|| err(1, "unterminated front-matter block".into()))?
            + 1;
        (1..close, close + 1)
    } else {
        let end = lines.iter().position(|l| l.trim().is_empty()).unwrap_or(lines.len());
        (0..end, (end + 1).min(lines.len()))
    };

    let mut fields: Vec<(String, String)> = Vec::new();
    for i in header_range {
        let raw = lines[i].trim_end_matches(['\n', '\r']);
        if raw.trim().is_empty() {
            continue;
        }
        if raw.starts_with([' ', '\t']) {
            let Some((_, value)) = fields.last_mut() else {
                return Err(err(i + 1, "continuation line before any header field".into()));
            };
            if !value.is_empty() {
                value.push(' ');
            }
            value.push_str(raw.trim());
            continue;
        }
        let Some((key, value)) = raw.split_once(':') else {
            return Err(err(i + 1, format!("expected `key: value`, found {raw:?}")));
        };
        let key = key.trim();
        if key.is_empty() || key.contains(char::is_whitespace) {
            return Err(err(i + 1, format!("invalid header key {key:?}")));
        }
        fields.push((key.to_string(), value.trim().to_string()));
    }

    let field = |name: &str| fields.iter().find(|(k, _)| k == name).map(|(_, v)| v.clone());
    let name = field("name")
        .filter(|n| !n.is_empty())
        .ok_or_else(|| err(1, "front matter has no `name`".into()))?;
    let description = field("description").ok_or_else(|| err(1, "front matter has no `description`".into()))?;
    let body: String = lines[body_start..].concat();

    let mut skill = Skill::seed_text(name, body);
    skill.description = Some(description);
    Ok(skill)
}
