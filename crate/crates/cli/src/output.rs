use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use skillr1_core::events::{Event, EventSink, JsonlSink};

use crate::UsageError;

/// Create `dir`, refusing to reuse a non-empty one unless `force` is set.
pub fn prepare(dir: &Path, force: bool) -> Result<PathBuf> {
    if dir.exists() {
        let non_empty = fs::read_dir(dir)
            .with_context(|| format!("cannot read output directory {}", dir.display()))?
            .next()
            .is_some();
        if non_empty && !force {
            return Err(UsageError(format!(
                "output directory {} is not empty; pass --force to overwrite",
                dir.display()
            ))
            .into());
        }
    }
    fs::create_dir_all(dir).with_context(|| format!("cannot create output directory {}", dir.display()))?;
    Ok(dir.to_path_buf())
}

pub fn write(dir: &Path, name: &str, text: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))
}

/// Event log that also prints a one-line summary per update.
pub struct Console {
    pub log: JsonlSink,
    pub total_updates: usize,
}

impl EventSink for Console {
    fn emit(&self, event: &Event) {
        self.log.emit(event);
        if let Event::Update(m) = event {
            let rewards: Vec<String> = m
                .generation_rewards
                .iter()
                .enumerate()
                .map(|(g, r)| format!("g{g} {r:.3}"))
                .collect();
            let mut out = std::io::stdout().lock();
            let _ = writeln!(
                out,
                "update {:>4}/{}  surrogate {:+.4}  kl {:.6}  J {:.4}  {}",
                m.update + 1,
                self.total_updates,
                m.surrogate,
                m.mean_kl,
                m.objective,
                rewards.join(" ")
            );
        }
    }
}
