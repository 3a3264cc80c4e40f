//! Local explanations per question and global if-then rules mined from them.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::eval::PairedOutcome;
use crate::kind::PerturbationKind;
use crate::perturb::{SubstitutionRecord, TraceStep};
use crate::wordnet::{display_lemma, WordNetGraph};

#[derive(Debug, thiserror::Error)]
pub enum ExplainError {
    #[error("outcome for question {0:?} has no substitution record")]
    JoinMismatch(String),
    #[error("invalid mining parameters: {0}")]
    InvalidParams(String),
    #[error("failed to write report to {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("failed to encode report: {0}")]
    Encode(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalExplanation {
    pub question_id: String,
    pub kind: PerturbationKind,
    pub concept: String,
    pub replacement: Option<String>,
    pub answer: String,
    pub answer_counterfactual: String,
    pub changed: bool,
    /// Grouping concept used for rule mining.
    pub anchor: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Verdict {
    StableUnderPerturbation,
    VolatileUnderPerturbation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GlobalRule {
    pub kind: PerturbationKind,
    pub anchor: String,
    pub support: usize,
    pub change_count: usize,
    pub change_rate: f64,
    pub verdict: Verdict,
    pub exemplar_ids: Vec<String>,
}

impl GlobalRule {
    pub fn summary_line(&self) -> String {
        let outcome = match self.verdict {
            Verdict::StableUnderPerturbation => "stays",
            Verdict::VolatileUnderPerturbation => "changes",
        };
        format!(
            "IF {} perturbs {} THEN answer {} (rate {:.2}, support {})",
            self.kind, self.anchor, outcome, self.change_rate, self.support
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MiningParams {
    pub min_support: usize,
    pub stable_threshold: f64,
    pub volatile_threshold: f64,
}

impl Default for MiningParams {
    fn default() -> Self {
        MiningParams {
            min_support: 5,
            stable_threshold: 0.2,
            volatile_threshold: 0.8,
        }
    }
}

impl MiningParams {
    pub fn validate(&self) -> Result<(), ExplainError> {
        let unit = 0.0..=1.0;
        if self.min_support < 1 {
            return Err(ExplainError::InvalidParams("min_support must be at least 1".into()));
        }
        if !unit.contains(&self.stable_threshold) || !unit.contains(&self.volatile_threshold) {
            return Err(ExplainError::InvalidParams("thresholds must lie in [0, 1]".into()));
        }
        if self.stable_threshold >= self.volatile_threshold {
            return Err(ExplainError::InvalidParams(
                "stable_threshold must be below volatile_threshold".into(),
            ));
        }
        Ok(())
    }
}

/// Joins outcomes with their substitution records.
///
/// Color kinds are anchored on the original color, WordNet kinds on the base
/// form of the original word.
pub fn collect_locals(
    outcomes: &[PairedOutcome],
    records: &[SubstitutionRecord],
) -> Result<Vec<LocalExplanation>, ExplainError> {
    let by_id: HashMap<(&str, PerturbationKind), &SubstitutionRecord> = records
        .iter()
        .map(|r| ((r.question_id.as_str(), r.kind), r))
        .collect();
    outcomes
        .iter()
        .map(|o| {
            let record = by_id
                .get(&(o.question_id.as_str(), o.kind))
                .ok_or_else(|| ExplainError::JoinMismatch(o.question_id.clone()))?;
            let anchor = if o.kind.is_color() {
                record.original_word.to_lowercase()
            } else {
                display_lemma(&record.original_lemma)
            };
            Ok(LocalExplanation {
                question_id: o.question_id.clone(),
                kind: o.kind,
                concept: record.original_word.clone(),
                replacement: record.replacement.clone(),
                answer: o.answer_original.clone(),
                answer_counterfactual: o.answer_counterfactual.clone(),
                changed: o.changed,
                anchor,
            })
        })
        .collect()
}

/// Re-anchors WordNet-kind locals on the first lemma of the original word's
/// first immediate hypernym, grouping concept families such as clothing items.
///
/// Locals whose record carries no synset trace keep their anchor.
pub fn anchor_by_hypernym(
    locals: &[LocalExplanation],
    records: &[SubstitutionRecord],
    graph: &WordNetGraph,
) -> Vec<LocalExplanation> {
    let by_id: HashMap<(&str, PerturbationKind), &SubstitutionRecord> = records
        .iter()
        .map(|r| ((r.question_id.as_str(), r.kind), r))
        .collect();
    locals
        .iter()
        .map(|local| {
            let mut local = local.clone();
            if local.kind.is_color() {
                return local;
            }
            let sense = by_id
                .get(&(local.question_id.as_str(), local.kind))
                .and_then(|r| match r.relation_trace.first() {
                    Some(TraceStep::Synset(id)) => Some(*id),
                    _ => None,
                })
                .or_else(|| {
                    graph
                        .lookup(&local.anchor, crate::wordnet::PartOfSpeech::Noun)
                        .first()
                        .copied()
                });
            let parent_lemma = sense
                .and_then(|s| graph.hypernyms(s).ok())
                .and_then(|h| h.first().copied())
                .and_then(|p| graph.synset(p).ok())
                .and_then(|p| p.lemmas.first().cloned());
            if let Some(lemma) = parent_lemma {
                local.anchor = display_lemma(&lemma);
            }
            local
        })
        .collect()
}

/// Groups locals by `(kind, anchor)` and keeps the groups whose change rate
/// clears a threshold. Ordered by support descending, then anchor, then kind.
pub fn mine_rules(
    locals: &[LocalExplanation],
    params: &MiningParams,
) -> Result<Vec<GlobalRule>, ExplainError> {
    params.validate()?;
    let mut groups: BTreeMap<(PerturbationKind, &str), Vec<&LocalExplanation>> = BTreeMap::new();
    for local in locals {
        groups
            .entry((local.kind, local.anchor.as_str()))
            .or_default()
            .push(local);
    }

    let mut rules: Vec<GlobalRule> = groups
        .into_iter()
        .filter(|(_, members)| members.len() >= params.min_support)
        .filter_map(|((kind, anchor), members)| {
            let support = members.len();
            let change_count = members.iter().filter(|l| l.changed).count();
            let change_rate = change_count as f64 / support as f64;
            let verdict = if change_rate <= params.stable_threshold {
                Verdict::StableUnderPerturbation
            } else if change_rate >= params.volatile_threshold {
                Verdict::VolatileUnderPerturbation
            } else {
                return None;
            };
            Some(GlobalRule {
                kind,
                anchor: anchor.to_owned(),
                support,
                change_count,
                change_rate,
                verdict,
                exemplar_ids: members.iter().map(|l| l.question_id.clone()).collect(),
            })
        })
        .collect();
    rules.sort_by(|a, b| {
        b.support
            .cmp(&a.support)
            .then_with(|| a.anchor.cmp(&b.anchor))
            .then_with(|| a.kind.cmp(&b.kind))
    });
    Ok(rules)
}

/// Machine-readable rule report (`rules.json`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleReport {
    pub params: MiningParams,
    pub rules: Vec<GlobalRule>,
    pub locals: Vec<LocalExplanation>,
}

pub fn render_summary(report: &RuleReport) -> String {
    let mut out = String::from("# Global rules\n\n");
    if report.rules.is_empty() {
        out.push_str("No rules met the support and rate thresholds.\n");
    }
    let mut by_kind: BTreeMap<PerturbationKind, Vec<&GlobalRule>> = BTreeMap::new();
    for rule in &report.rules {
        by_kind.entry(rule.kind).or_default().push(rule);
    }
    for (kind, rules) in by_kind {
        let _ = writeln!(out, "## {kind} ({})\n", kind.expected_reaction());
        for rule in rules {
            let _ = writeln!(out, "- {}", rule.summary_line());
        }
        out.push('\n');
    }
    let _ = writeln!(
        out,
        "{} local explanations; min support {}, stable <= {}, volatile >= {}.",
        report.locals.len(),
        report.params.min_support,
        report.params.stable_threshold,
        report.params.volatile_threshold
    );
    out
}

/// Writes `rules.json` and `summary.md` into `out_dir`.
pub fn render_report(report: &RuleReport, out_dir: &Path) -> Result<(), ExplainError> {
    let io = |path: &Path| {
        let path = path.display().to_string();
        move |source| ExplainError::Io { path, source }
    };
    std::fs::create_dir_all(out_dir).map_err(io(out_dir))?;
    let json_path = out_dir.join("rules.json");
    let mut json = serde_json::to_string_pretty(report)?;
    json.push('\n');
    std::fs::write(&json_path, json).map_err(io(&json_path))?;
    let summary_path = out_dir.join("summary.md");
    std::fs::write(&summary_path, render_summary(report)).map_err(io(&summary_path))?;
    Ok(())
}
