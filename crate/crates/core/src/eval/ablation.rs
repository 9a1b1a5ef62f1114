use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::report::{evaluate, EvalMode};
use crate::corpus::{ClaimRecord, EvidenceSnippet, LabelScheme, SNIPPET_SLOTS};
use crate::error::{Error, Result};
use crate::probes::{InputRegime, Probe};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Direction {
    /// Remove ranks 1..=k.
    TopDown,
    /// Remove ranks 11-k..=10.
    BottomUp,
}

impl Direction {
    pub const ALL: [Direction; 2] = [Direction::TopDown, Direction::BottomUp];

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::TopDown => "top_down",
            Direction::BottomUp => "bottom_up",
        }
    }

    /// Whether rank `rank` (1-based) is removed at step `k`.
    pub fn removes(self, rank: usize, k: usize) -> bool {
        match self {
            Direction::TopDown => rank <= k,
            Direction::BottomUp => rank > SNIPPET_SLOTS - k.min(SNIPPET_SLOTS),
        }
    }
}

impl FromStr for Direction {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "top_down" | "topdown" | "top" => Ok(Direction::TopDown),
            "bottom_up" | "bottomup" | "bottom" => Ok(Direction::BottomUp),
            other => Err(Error::Config(format!("unknown ablation direction '{other}'"))),
        }
    }
}

/// Replaces the `k` snippets removed in `direction` with padded slots.
/// Surviving snippets keep their ranks.
pub fn ablate_record(record: &ClaimRecord, direction: Direction, k: usize) -> ClaimRecord {
    let mut r = record.clone();
    for s in &mut r.snippets {
        if direction.removes(s.rank as usize, k) {
            *s = EvidenceSnippet::pad(s.rank);
        }
    }
    r
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationCurve {
    pub probe: String,
    pub direction: Direction,
    /// `(k, macro F1)` for k = 0..=10.
    pub points: Vec<(usize, f64)>,
}

impl AblationCurve {
    /// Trapezoidal area under macro F1 over k.
    pub fn area(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| 0.5 * (w[0].1 + w[1].1) * (w[1].0 - w[0].0) as f64)
            .sum()
    }
}

/// Macro F1 of `probe` on `records` with 0..=10 snippets removed. The probe
/// is not retrained; removal happens at evaluation time.
pub fn ablation_curve(
    probe: &Probe,
    records: &[ClaimRecord],
    corpus_scheme: &LabelScheme,
    direction: Direction,
) -> Result<AblationCurve> {
    if probe.regime == InputRegime::ClaimOnly {
        return Err(Error::Config(format!(
            "{} sees no evidence, so evidence ablation is undefined",
            probe.name()
        )));
    }
    let points = (0..=SNIPPET_SLOTS)
        .map(|k| {
            let ablated: Vec<ClaimRecord> = if k == 0 {
                records.to_vec()
            } else {
                records.iter().map(|r| ablate_record(r, direction, k)).collect()
            };
            let rep = evaluate(probe, &ablated, corpus_scheme, "ablation", EvalMode::Within)?;
            Ok((k, rep.macro_f1))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AblationCurve {
        probe: probe.name(),
        direction,
        points,
    })
}

pub const ABLATION_HEADER: &str = "probe,direction,k,macro_f1";

pub fn ablation_csv(curves: &[AblationCurve]) -> String {
    let mut out = String::from(ABLATION_HEADER);
    out.push('\n');
    for c in curves {
        for (k, f) in &c.points {
            let _ = writeln!(out, "{},{},{},{:.6}", c.probe, c.direction.as_str(), k, f);
        }
    }
    out
}
