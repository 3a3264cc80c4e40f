//! Answer scoring and original-vs-counterfactual accuracy comparison.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::kind::PerturbationKind;
use crate::model::{ModelError, VqaResponse};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("no ground-truth answers to compare against")]
    NoGroundTruth,
    #[error("cannot compute accuracy over zero records")]
    EmptyRecords,
    #[error("counterfactual record {0:?} has no original record")]
    UnmatchedQuestion(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorrectnessRule {
    /// Correct iff the answer equals any ground truth.
    ExactAny,
    /// `min(1, matches / 3)` over the annotator answers.
    VqaSoft,
}

impl FromStr for CorrectnessRule {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "exact-any" => Ok(CorrectnessRule::ExactAny),
            "vqa-soft" => Ok(CorrectnessRule::VqaSoft),
            other => Err(format!("unknown correctness rule {other:?}")),
        }
    }
}

const NUMBER_WORDS: &[(&str, &str)] = &[
    ("zero", "0"),
    ("one", "1"),
    ("two", "2"),
    ("three", "3"),
    ("four", "4"),
    ("five", "5"),
    ("six", "6"),
    ("seven", "7"),
    ("eight", "8"),
    ("nine", "9"),
    ("ten", "10"),
];

/// Case-folds, strips punctuation (keeping decimal points), drops articles,
/// maps number words up to ten to digits and collapses whitespace.
pub fn normalize_answer(raw: &str) -> String {
    let lower = raw.to_lowercase();
    let chars: Vec<char> = lower.chars().collect();
    let mut cleaned = String::with_capacity(lower.len());
    for (i, &c) in chars.iter().enumerate() {
        if !c.is_ascii_punctuation() {
            cleaned.push(c);
            continue;
        }
        let between_digits = i > 0
            && chars[i - 1].is_ascii_digit()
            && chars.get(i + 1).is_some_and(|n| n.is_ascii_digit());
        match c {
            '.' | ',' if between_digits => cleaned.push(c),
            '-' | '/' => cleaned.push(' '),
            _ => {}
        }
    }
    cleaned
        .split_whitespace()
        .filter(|w| !matches!(*w, "a" | "an" | "the"))
        .map(|w| {
            NUMBER_WORDS
                .iter()
                .find(|(word, _)| *word == w)
                .map_or(w, |(_, digit)| digit)
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Correctness score in `[0, 1]`; ExactAny only yields 0 or 1.
pub fn score(
    normalized: &str,
    ground_truths: &[String],
    rule: CorrectnessRule,
) -> Result<f64, EvalError> {
    if ground_truths.is_empty() {
        return Err(EvalError::NoGroundTruth);
    }
    let matches = ground_truths.iter().filter(|g| *g == normalized).count();
    Ok(match rule {
        CorrectnessRule::ExactAny => {
            if matches > 0 {
                1.0
            } else {
                0.0
            }
        }
        CorrectnessRule::VqaSoft => (matches as f64 / 3.0).min(1.0),
    })
}

pub fn is_correct(
    normalized: &str,
    ground_truths: &[String],
    rule: CorrectnessRule,
) -> Result<bool, EvalError> {
    score(normalized, ground_truths, rule).map(|s| s >= 1.0)
}

/// Which question an answer belongs to. Text form: `original` or a kind name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Variant {
    Original,
    Counterfactual(PerturbationKind),
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Variant::Original => f.write_str("original"),
            Variant::Counterfactual(k) => k.fmt(f),
        }
    }
}

impl TryFrom<String> for Variant {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        if s == "original" {
            Ok(Variant::Original)
        } else {
            s.parse().map(Variant::Counterfactual)
        }
    }
}

impl From<Variant> for String {
    fn from(v: Variant) -> String {
        v.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerRecord {
    pub question_id: String,
    pub variant: Variant,
    pub question: String,
    /// `None` when the model call failed.
    pub raw_answer: Option<String>,
    pub normalized_answer: String,
    pub ground_truths: Vec<String>,
    pub score: f64,
    pub correct: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ModelError>,
}

impl AnswerRecord {
    /// Scores a model response. Ground truths are normalized here.
    pub fn score_response(
        question_id: &str,
        variant: Variant,
        question: &str,
        response: Result<&VqaResponse, &ModelError>,
        ground_truths: &[String],
        rule: CorrectnessRule,
    ) -> Result<AnswerRecord, EvalError> {
        let ground_truths: Vec<String> = ground_truths.iter().map(|g| normalize_answer(g)).collect();
        let (raw_answer, error) = match response {
            Ok(r) => (Some(r.answer.clone()), None),
            Err(e) => (None, Some(e.clone())),
        };
        let normalized_answer = raw_answer.as_deref().map(normalize_answer).unwrap_or_default();
        let score = match error {
            None => score(&normalized_answer, &ground_truths, rule)?,
            Some(_) if ground_truths.is_empty() => return Err(EvalError::NoGroundTruth),
            Some(_) => 0.0,
        };
        Ok(AnswerRecord {
            question_id: question_id.to_owned(),
            variant,
            question: question.to_owned(),
            raw_answer,
            normalized_answer,
            ground_truths,
            score,
            correct: score >= 1.0,
            error,
        })
    }

    pub fn failed(&self) -> bool {
        self.error.is_some()
    }
}

/// Mean correctness score.
pub fn compute_accuracy<'a>(
    records: impl IntoIterator<Item = &'a AnswerRecord>,
) -> Result<f64, EvalError> {
    let (sum, n) = records
        .into_iter()
        .fold((0.0, 0usize), |(s, n), r| (s + r.score, n + 1));
    if n == 0 {
        Err(EvalError::EmptyRecords)
    } else {
        Ok(sum / n as f64)
    }
}

/// `100 * (acc - acc_star) / acc`; undefined when `acc` is zero.
pub fn relative_reduction(acc_q: f64, acc_star_q: f64) -> Option<f64> {
    (acc_q > 0.0).then(|| 100.0 * (acc_q - acc_star_q) / acc_q)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairedOutcome {
    pub question_id: String,
    pub kind: PerturbationKind,
    pub answer_original: String,
    pub answer_counterfactual: String,
    pub changed: bool,
    pub correct_original: bool,
    pub correct_counterfactual: bool,
}

pub fn answers_changed(a: &str, b: &str) -> bool {
    normalize_answer(a) != normalize_answer(b)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub kind: PerturbationKind,
    /// Questions with a usable original and counterfactual answer.
    pub n_questions: usize,
    pub acc_q: f64,
    pub acc_star_q: f64,
    pub relative_reduction_pct: Option<f64>,
    pub n_changed: usize,
    /// Pairs dropped because a model call failed.
    pub n_failed: usize,
}

/// Pairs counterfactual answers with the original answers to the same questions.
///
/// Only questions that have a counterfactual take part, so `acc_q` is the
/// original accuracy on that subset. Pairs where either call failed are
/// counted in `n_failed` and excluded from both accuracies.
pub fn compare_runs(
    kind: PerturbationKind,
    original_records: &[AnswerRecord],
    cf_records: &[AnswerRecord],
) -> Result<(Vec<PairedOutcome>, AccuracyReport), EvalError> {
    let originals: HashMap<&str, &AnswerRecord> = original_records
        .iter()
        .map(|r| (r.question_id.as_str(), r))
        .collect();
    let mut outcomes = Vec::with_capacity(cf_records.len());
    let mut used_originals = Vec::with_capacity(cf_records.len());
    let mut used_cfs = Vec::with_capacity(cf_records.len());
    let mut n_failed = 0;

    for cf in cf_records {
        let original = originals
            .get(cf.question_id.as_str())
            .ok_or_else(|| EvalError::UnmatchedQuestion(cf.question_id.clone()))?;
        if original.failed() || cf.failed() {
            n_failed += 1;
            continue;
        }
        outcomes.push(PairedOutcome {
            question_id: cf.question_id.clone(),
            kind,
            answer_original: original.normalized_answer.clone(),
            answer_counterfactual: cf.normalized_answer.clone(),
            changed: original.normalized_answer != cf.normalized_answer,
            correct_original: original.correct,
            correct_counterfactual: cf.correct,
        });
        used_originals.push(*original);
        used_cfs.push(cf);
    }

    let acc_q = compute_accuracy(used_originals.iter().copied())?;
    let acc_star_q = compute_accuracy(used_cfs.iter().copied())?;
    let report = AccuracyReport {
        kind,
        n_questions: outcomes.len(),
        acc_q,
        acc_star_q,
        relative_reduction_pct: relative_reduction(acc_q, acc_star_q),
        n_changed: outcomes.iter().filter(|o| o.changed).count(),
        n_failed,
    };
    Ok((outcomes, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gts(items: &[&str]) -> Vec<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn normalizes_answers() {
        assert_eq!(normalize_answer("A Dog."), "dog");
        assert_eq!(normalize_answer("black and white"), "black and white");
        assert_eq!(normalize_answer("Six"), "6");
        assert_eq!(normalize_answer("  the   red-ish  car!! "), "red ish car");
        assert_eq!(normalize_answer("2.5"), "2.5");
        assert_eq!(normalize_answer("yes."), "yes");
        assert_eq!(normalize_answer(""), "");
    }

    #[test]
    fn exact_any_and_soft_scores() {
        assert!(is_correct("dog", &gts(&["dog"]), CorrectnessRule::ExactAny).unwrap());
        assert!(!is_correct("cat", &gts(&["dog"]), CorrectnessRule::ExactAny).unwrap());
        let ten = gts(&["dog", "dog", "cat", "cat", "cat", "cat", "cat", "cat", "cat", "cat"]);
        let s = score("dog", &ten, CorrectnessRule::VqaSoft).unwrap();
        assert!((s - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(score("cat", &ten, CorrectnessRule::VqaSoft).unwrap(), 1.0);
        assert_eq!(score("x", &[], CorrectnessRule::ExactAny), Err(EvalError::NoGroundTruth));
    }

    fn record(id: &str, variant: Variant, answer: &str, truth: &str) -> AnswerRecord {
        let response = VqaResponse {
            answer: answer.into(),
            confidence: None,
            latency_ms: 0,
        };
        AnswerRecord::score_response(
            id,
            variant,
            "q",
            Ok(&response),
            &[truth.to_owned()],
            CorrectnessRule::ExactAny,
        )
        .unwrap()
    }

    #[test]
    fn accuracy_is_the_mean_score() {
        let records: Vec<_> = (0..10)
            .map(|i| record(&i.to_string(), Variant::Original, if i < 7 { "yes" } else { "no" }, "yes"))
            .collect();
        assert!((compute_accuracy(&records).unwrap() - 0.7).abs() < 1e-12);
        assert_eq!(compute_accuracy(&records[..7]).unwrap(), 1.0);
        assert_eq!(compute_accuracy(&[]), Err(EvalError::EmptyRecords));
    }

    #[test]
    fn reduction_matches_printed_rows() {
        let r = relative_reduction(0.768, 0.641).unwrap();
        assert!((r - 16.5).abs() < 0.1, "{r}");
        assert_eq!(relative_reduction(0.5, 0.5), Some(0.0));
        assert_eq!(relative_reduction(0.0, 0.0), None);
    }

    #[test]
    fn compare_runs_pairs_and_counts_changes() {
        let kind = PerturbationKind::SynonymVerb;
        let cfv = Variant::Counterfactual(kind);
        let originals = vec![
            record("a", Variant::Original, "yes", "yes"),
            record("b", Variant::Original, "2", "2"),
            record("c", Variant::Original, "red", "blue"),
        ];
        let cfs = vec![record("a", cfv, "Yes.", "yes"), record("b", cfv, "three", "2")];
        let (outcomes, report) = compare_runs(kind, &originals, &cfs).unwrap();
        assert_eq!(outcomes.len(), 2);
        assert!(!outcomes[0].changed);
        assert!(outcomes[1].changed);
        assert_eq!(report.acc_q, 1.0);
        assert_eq!(report.acc_star_q, 0.5);
        assert_eq!(report.relative_reduction_pct, Some(50.0));
        assert_eq!(report.n_changed, 1);

        let stray = vec![record("z", cfv, "yes", "yes")];
        assert_eq!(
            compare_runs(kind, &originals, &stray).unwrap_err(),
            EvalError::UnmatchedQuestion("z".into())
        );
    }

    #[test]
    fn failed_calls_are_excluded_from_pairs() {
        let kind = PerturbationKind::HypernymNoun;
        let originals = vec![
            record("a", Variant::Original, "yes", "yes"),
            record("b", Variant::Original, "no", "yes"),
        ];
        let failed = AnswerRecord::score_response(
            "a",
            Variant::Counterfactual(kind),
            "q",
            Err(&ModelError::Timeout),
            &["yes".to_owned()],
            CorrectnessRule::ExactAny,
        )
        .unwrap();
        assert!(failed.failed() && !failed.correct);
        let cfs = vec![failed, record("b", Variant::Counterfactual(kind), "no", "yes")];
        let (outcomes, report) = compare_runs(kind, &originals, &cfs).unwrap();
        assert_eq!(outcomes.len(), 1);
        assert_eq!(report.n_failed, 1);
        assert_eq!(report.acc_q, 0.0);
        assert_eq!(report.relative_reduction_pct, None);
    }

    #[test]
    fn variants_round_trip_as_text() {
        let v = Variant::Counterfactual(PerturbationKind::DeletionNoun);
        assert_eq!(serde_json::to_string(&v).unwrap(), "\"deletion-noun\"");
        assert_eq!(serde_json::from_str::<Variant>("\"original\"").unwrap(), Variant::Original);
    }
}
