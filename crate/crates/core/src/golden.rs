//! Golden timeline files and timeline comparison.
//!
//! ```text
//! # comment
//! 1|Sector2|MOTION_DETECTED|REQUEST_ATTENTION(Sector2, Motion)
//! @exclude Sector2|FIRE_CONFIRMATION|TRIGGER_SUPPRESSORS(Sector2)
//! ```
//!
//! `@exclude` lines only matter in strict mode: each one removes the first
//! still-unremoved actual entry with that agent, trigger and action before
//! the sequences are compared.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::model::{Action, AgentId, Tick, TimelineEntry, TriggerCode};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("golden line {line}: {message}")]
pub struct GoldenError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CompareMode {
    Strict,
    Subsequence,
}

impl FromStr for CompareMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "strict" => Ok(CompareMode::Strict),
            "subsequence" => Ok(CompareMode::Subsequence),
            other => Err(format!("unknown compare mode `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Golden {
    pub rows: Vec<TimelineEntry>,
    pub excludes: Vec<TimelineEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Match,
    Mismatch {
        step: u32,
        expected: Option<TimelineEntry>,
        actual: Option<TimelineEntry>,
    },
}

impl Verdict {
    pub fn is_match(&self) -> bool {
        matches!(self, Verdict::Match)
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Match => f.write_str("match"),
            Verdict::Mismatch { step, expected, actual } => {
                let show = |e: &Option<TimelineEntry>| e.as_ref().map_or("<none>".to_string(), |e| e.to_string());
                writeln!(f, "first divergence at step {step}")?;
                writeln!(f, "- expected: {}", show(expected))?;
                write!(f, "+ actual:   {}", show(actual))
            }
        }
    }
}

fn parse_row(fields: &[&str], step: u32, line: usize) -> Result<TimelineEntry, GoldenError> {
    let err = |message: String| GoldenError { line, message };
    let agent = AgentId::new(fields[0].trim()).map_err(|e| err(e.to_string()))?;
    let trigger = TriggerCode::from_str(fields[1].trim()).map_err(|e| err(e.to_string()))?;
    let action = Action::from_str(fields[2].trim()).map_err(|e| err(e.to_string()))?;
    let mut entry = TimelineEntry::new(Tick::ZERO, agent, trigger, action);
    entry.step = step;
    Ok(entry)
}

pub fn parse_golden(text: &str) -> Result<Golden, GoldenError> {
    let mut golden = Golden::default();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let l = raw.trim();
        if l.is_empty() || l.starts_with('#') {
            continue;
        }
        if let Some(rest) = l.strip_prefix("@exclude") {
            let fields: Vec<&str> = rest.trim().split('|').collect();
            if fields.len() != 3 {
                return Err(GoldenError { line, message: "expected `@exclude agent|TRIGGER|ACTION`".into() });
            }
            golden.excludes.push(parse_row(&fields, 0, line)?);
            continue;
        }
        let fields: Vec<&str> = l.split('|').collect();
        if fields.len() != 4 {
            return Err(GoldenError { line, message: "expected `step|agent|TRIGGER|ACTION`".into() });
        }
        let step: u32 = fields[0]
            .trim()
            .parse()
            .map_err(|_| GoldenError { line, message: format!("bad step `{}`", fields[0]) })?;
        let expected = golden.rows.len() as u32 + 1;
        if step != expected {
            return Err(GoldenError { line, message: format!("step {step} out of sequence, expected {expected}") });
        }
        golden.rows.push(parse_row(&fields[1..], step, line)?);
    }
    Ok(golden)
}

/// Compare an actual timeline against a golden.
pub fn compare_timeline(actual: &[TimelineEntry], golden: &Golden, mode: CompareMode) -> Verdict {
    match mode {
        CompareMode::Strict => compare_strict(actual, golden),
        CompareMode::Subsequence => compare_subsequence(actual, golden),
    }
}

fn compare_strict(actual: &[TimelineEntry], golden: &Golden) -> Verdict {
    let agents: BTreeSet<&AgentId> = golden.rows.iter().map(|r| &r.agent).collect();
    let mut filtered: Vec<&TimelineEntry> = actual
        .iter()
        .filter(|e| e.is_comparable() && agents.contains(&e.agent))
        .collect();
    for ex in &golden.excludes {
        if let Some(pos) = filtered.iter().position(|e| e.same_row(ex)) {
            filtered.remove(pos);
        }
    }
    let n = filtered.len().max(golden.rows.len());
    for i in 0..n {
        let exp = golden.rows.get(i);
        let act = filtered.get(i).copied();
        let same = matches!((exp, act), (Some(e), Some(a)) if e.same_row(a));
        if !same {
            return Verdict::Mismatch {
                step: i as u32 + 1,
                expected: exp.cloned(),
                actual: act.map(|a| renumber(a, i as u32 + 1)),
            };
        }
    }
    Verdict::Match
}

fn renumber(e: &TimelineEntry, step: u32) -> TimelineEntry {
    let mut e = e.clone();
    e.step = step;
    e
}

fn compare_subsequence(actual: &[TimelineEntry], golden: &Golden) -> Verdict {
    let mut cursor = 0;
    for row in &golden.rows {
        match actual[cursor..].iter().position(|e| e.same_row(row)) {
            Some(off) => cursor += off + 1,
            None => {
                let next = actual[cursor..].iter().find(|e| e.is_comparable());
                return Verdict::Mismatch {
                    step: row.step,
                    expected: Some(row.clone()),
                    actual: next.map(|a| renumber(a, row.step)),
                };
            }
        }
    }
    Verdict::Match
}
