//! Metrics tables and run comparison.
//!
//! The generation table is CSV with header `generation,mean_reward,accuracy`.
//! Mean reward uses the shortest exact decimal form (always with a fractional
//! part); accuracy is printed with three decimals.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationMetrics {
    pub generation: u32,
    pub mean_reward: f64,
    /// Fraction of episodes with at least one rewarded rollout.
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UpdateMetrics {
    pub update: usize,
    pub surrogate: f64,
    pub mean_kl: f64,
    pub grad_max_abs: f64,
    /// Mean reward of each generation over the update's episodes.
    pub generation_rewards: Vec<f64>,
    pub objective: f64,
}

/// Shortest round-trip decimal, with `.0` appended to integral values.
pub fn fmt_real(x: f64) -> String {
    let s = format!("{x}");
    if s.contains(['.', 'e', 'N', 'i']) {
        s
    } else {
        format!("{s}.0")
    }
}

pub const GENERATION_HEADER: &str = "generation,mean_reward,accuracy";

pub fn format_generation_row(m: &GenerationMetrics) -> String {
    format!("{},{},{:.3}", m.generation, fmt_real(m.mean_reward), m.accuracy)
}

pub fn format_generation_table(rows: &[GenerationMetrics]) -> String {
    let mut out = String::from(GENERATION_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format_generation_row(r));
        out.push('\n');
    }
    out
}

pub fn parse_generation_table(text: &str) -> Result<Vec<GenerationMetrics>> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    match lines.next() {
        Some(h) if h.trim() == GENERATION_HEADER => {}
        other => {
            return Err(Error::Parse(format!(
                "expected header {GENERATION_HEADER:?}, found {other:?}"
            )))
        }
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let bad = || Error::Parse(format!("row {}: malformed {line:?}", i + 1));
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            let [g, r, a] = cols[..] else {
                return Err(bad());
            };
            Ok(GenerationMetrics {
                generation: g.parse().map_err(|_| bad())?,
                mean_reward: r.parse().map_err(|_| bad())?,
                accuracy: a.parse().map_err(|_| bad())?,
            })
        })
        .collect()
}

pub fn format_update_table(rows: &[UpdateMetrics]) -> String {
    let gens = rows.first().map_or(0, |r| r.generation_rewards.len());
    let mut out = String::from("update,surrogate,mean_kl,grad_max_abs,objective");
    for g in 0..gens {
        let _ = write!(out, ",reward_g{g}");
    }
    out.push('\n');
    for r in rows {
        let _ = write!(
            out,
            "{},{},{},{},{}",
            r.update,
            fmt_real(r.surrogate),
            fmt_real(r.mean_kl),
            fmt_real(r.grad_max_abs),
            fmt_real(r.objective)
        );
        for x in &r.generation_rewards {
            let _ = write!(out, ",{}", fmt_real(*x));
        }
        out.push('\n');
    }
    out
}

/// A named generation table.
#[derive(Clone, Debug)]
pub struct Run {
    pub label: String,
    pub rows: Vec<GenerationMetrics>,
}

/// Per-generation deltas of every run against the first, plus a
/// final-generation summary.
pub fn compare_runs(runs: &[Run]) -> Result<String> {
    let [base, rest @ ..] = runs else {
        return Err(Error::Precondition("nothing to compare".into()));
    };
    if rest.is_empty() {
        return Err(Error::Precondition("compare needs at least two runs".into()));
    }
    for r in rest {
        if r.rows.len() != base.rows.len() {
            return Err(Error::Precondition(format!(
                "generation count mismatch: {} has {}, {} has {}",
                base.label,
                base.rows.len(),
                r.label,
                r.rows.len()
            )));
        }
        if let Some((a, b)) = base
            .rows
            .iter()
            .zip(&r.rows)
            .find(|(a, b)| a.generation != b.generation)
        {
            return Err(Error::Precondition(format!(
                "generation index mismatch: {} vs {}",
                a.generation, b.generation
            )));
        }
    }

    let mut out = String::from("generation");
    for r in runs {
        let _ = write!(out, ",{}_reward", r.label);
    }
    for r in rest {
        let _ = write!(
            out,
            ",delta_reward_{}_vs_{},delta_accuracy_{}_vs_{}",
            base.label, r.label, base.label, r.label
        );
    }
    out.push('\n');
    for (i, row) in base.rows.iter().enumerate() {
        let _ = write!(out, "{}", row.generation);
        for r in runs {
            let _ = write!(out, ",{:.4}", r.rows[i].mean_reward);
        }
        for r in rest {
            let _ = write!(
                out,
                ",{:+.4},{:+.4}",
                row.mean_reward - r.rows[i].mean_reward,
                row.accuracy - r.rows[i].accuracy
            );
        }
        out.push('\n');
    }

    out.push_str("\nfinal generation summary\n");
    for r in runs {
        let last = r.rows.last().expect("tables are nonempty");
        let _ = writeln!(
            out,
            "{:<12} reward {:.4}  accuracy {:.1}%",
            r.label,
            last.mean_reward,
            100.0 * last.accuracy
        );
    }
    let base_last = base.rows.last().expect("tables are nonempty");
    for r in rest {
        let last = r.rows.last().expect("tables are nonempty");
        let _ = writeln!(
            out,
            "{} - {}: reward {:+.4}, accuracy {:+.1} pts",
            base.label,
            r.label,
            base_last.mean_reward - last.mean_reward,
            100.0 * (base_last.accuracy - last.accuracy)
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(g: u32, r: f64, a: f64) -> GenerationMetrics {
        GenerationMetrics {
            generation: g,
            mean_reward: r,
            accuracy: a,
        }
    }

    #[test]
    fn row_format() {
        assert_eq!(format_generation_row(&row(5, 0.44, 0.5)), "5,0.44,0.500");
        assert_eq!(format_generation_row(&row(1, 1.0, 1.0)), "1,1.0,1.000");
        assert_eq!(format_generation_row(&row(0, 0.0, 0.0)), "0,0.0,0.000");
    }

    #[test]
    fn accuracy_aggregation() {
        let acc = 69.0 / 165.0;
        assert_eq!(format!("{:.1}%", 100.0 * acc), "41.8%");
        assert_eq!(format_generation_row(&row(3, 0.25, acc)), "3,0.25,0.418");
    }

    #[test]
    fn table_round_trip() {
        let rows = vec![row(0, 0.0625, 0.25), row(1, 0.1875, 0.5)];
        assert_eq!(parse_generation_table(&format_generation_table(&rows)).unwrap(), rows);
        assert!(parse_generation_table("g,r,a\n").is_err());
        assert!(parse_generation_table("generation,mean_reward,accuracy\n1,2\n").is_err());
    }

    #[test]
    fn self_comparison_is_zero() {
        let rows = vec![row(0, 0.1, 0.2), row(1, 0.3, 0.4)];
        let report = compare_runs(&[
            Run {
                label: "a".into(),
                rows: rows.clone(),
            },
            Run {
                label: "b".into(),
                rows,
            },
        ])
        .unwrap();
        let deltas: Vec<&str> = report
            .lines()
            .skip(1)
            .take(2)
            .flat_map(|l| l.split(',').skip(3))
            .collect();
        assert_eq!(deltas, ["+0.0000"; 4]);
    }

    #[test]
    fn final_delta() {
        let report = compare_runs(&[
            Run {
                label: "trained".into(),
                rows: vec![row(5, 0.44, 0.5)],
            },
            Run {
                label: "inference".into(),
                rows: vec![row(5, 0.37, 0.463)],
            },
        ])
        .unwrap();
        assert!(report.contains("trained - inference: reward +0.0700"), "{report}");
    }

    #[test]
    fn mismatched_generations() {
        let err = compare_runs(&[
            Run {
                label: "a".into(),
                rows: vec![row(0, 0.1, 0.2)],
            },
            Run {
                label: "b".into(),
                rows: vec![row(0, 0.1, 0.2), row(1, 0.1, 0.2)],
            },
        ]);
        assert!(err.is_err());
    }
}
