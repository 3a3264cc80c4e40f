//! Counterfactual question generation.
//!
//! Each kind edits exactly one token of a question: a color is swapped for its
//! nearest or farthest palette neighbour, a verb or adjective for a synonym, a
//! noun for its hypernym, hyponym or sibling, or a noun is deleted outright.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::color::{ColorScopes, ColorTable};
use crate::dataset::Dataset;
use crate::kind::PerturbationKind;
use crate::lingproc::{eligible_targets, tag_candidates, tokenize, Stoplist, TokenizedQuestion};
use crate::wordnet::{
    display_lemma, index_key, PartOfSpeech, SynsetId, WordNetGraph, HYPERNYM, HYPONYM,
    INSTANCE_HYPERNYM, INSTANCE_HYPONYM, SIMILAR_TO,
};

/// Read-only knowledge the perturber draws replacements from.
#[derive(Debug, Clone, Copy)]
pub struct KnowledgeBases<'a> {
    pub wordnet: &'a WordNetGraph,
    pub colors: &'a ColorTable,
    pub scopes: &'a ColorScopes,
    pub stoplist: &'a Stoplist,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceStep {
    Synset(SynsetId),
    Color(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubstitutionRecord {
    pub question_id: String,
    pub kind: PerturbationKind,
    pub token_index: usize,
    pub original_word: String,
    /// Base form of the original word used for knowledge-base lookups.
    pub original_lemma: String,
    /// `None` for deletions.
    pub replacement: Option<String>,
    pub relation_trace: Vec<TraceStep>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CounterfactualQuestion {
    pub question_id: String,
    pub kind: PerturbationKind,
    pub text: String,
    pub record: SubstitutionRecord,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkipReason {
    NoTarget,
    NoReplacement,
}

/// A replacement for one target token and the relation path that licenses it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Candidate {
    pub replacement: Option<String>,
    pub trace: Vec<TraceStep>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkipStats {
    pub no_target: usize,
    pub no_replacement: usize,
    /// `(question_id, reason)` in dataset order.
    pub skipped: Vec<(String, SkipReason)>,
}

impl SkipStats {
    pub fn total(&self) -> usize {
        self.no_target + self.no_replacement
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PerturbedSet {
    pub questions: Vec<CounterfactualQuestion>,
    pub skips: SkipStats,
}

/// Per-question seed, independent of dataset order.
pub fn question_seed(seed: u64, question_id: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(question_id.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

/// Base form used for lookups; the word itself when WordNet has no entry.
fn base_form(graph: &WordNetGraph, word: &str, pos: Option<PartOfSpeech>) -> String {
    pos.and_then(|p| graph.lemmatize(word, p).into_iter().next())
        .unwrap_or_else(|| index_key(word))
}

fn differs(lemma: &str, surface: &str, base: &str) -> bool {
    let key = index_key(lemma);
    !key.is_empty() && key != index_key(surface) && key != index_key(base)
}

/// Every replacement the kind allows for token `index`, in preference order.
///
/// For WordNet kinds the first entry is the one [`perturb_question`] applies.
/// For color kinds the list holds every palette candidate in the kind's scope.
pub fn candidates(
    tq: &TokenizedQuestion,
    index: usize,
    kind: PerturbationKind,
    kbs: &KnowledgeBases<'_>,
) -> Vec<Candidate> {
    let Some(token) = tq.tokens.get(index) else {
        return Vec::new();
    };
    let surface = token.lower.as_str();
    let graph = kbs.wordnet;
    let base = base_form(graph, surface, kind.target_pos());

    let relatives = |select: &dyn Fn(SynsetId) -> Vec<Vec<SynsetId>>| -> Vec<Candidate> {
        let Some(&sense) = graph.lookup(&base, PartOfSpeech::Noun).first() else {
            return Vec::new();
        };
        let mut out = Vec::new();
        for path in select(sense) {
            let last = *path.last().expect("non-empty path");
            let Ok(target) = graph.synset(last) else { continue };
            for lemma in &target.lemmas {
                if differs(lemma, surface, &base) {
                    let mut trace = vec![TraceStep::Synset(sense)];
                    trace.extend(path.iter().copied().map(TraceStep::Synset));
                    out.push(Candidate {
                        replacement: Some(display_lemma(lemma).to_lowercase()),
                        trace,
                    });
                }
            }
        }
        out
    };

    match kind {
        PerturbationKind::ColorMaximal(scope) | PerturbationKind::ColorMinimal(scope) => kbs
            .colors
            .candidate_names(surface, kbs.scopes.get(scope))
            .into_iter()
            .map(|name| Candidate {
                replacement: Some(name.clone()),
                trace: vec![TraceStep::Color(surface.to_owned()), TraceStep::Color(name)],
            })
            .collect(),
        PerturbationKind::SynonymAdjective | PerturbationKind::SynonymVerb => {
            let pos = kind.target_pos().expect("synonym kinds have a POS");
            graph
                .synonym_candidates(&base, pos)
                .unwrap_or_default()
                .into_iter()
                .filter(|c| differs(&c.lemma, surface, &base))
                .map(|c| Candidate {
                    replacement: Some(display_lemma(&c.lemma).to_lowercase()),
                    trace: c.trace.into_iter().map(TraceStep::Synset).collect(),
                })
                .collect()
        }
        PerturbationKind::HypernymNoun => relatives(&|s| {
            graph
                .hypernyms(s)
                .unwrap_or_default()
                .into_iter()
                .map(|h| vec![h])
                .collect()
        }),
        PerturbationKind::HyponymNoun => relatives(&|s| {
            graph
                .hyponyms(s)
                .unwrap_or_default()
                .into_iter()
                .map(|h| vec![h])
                .collect()
        }),
        PerturbationKind::SiblingNoun => relatives(&|s| {
            graph
                .siblings_with_parent(s)
                .unwrap_or_default()
                .into_iter()
                .map(|(parent, sibling)| vec![parent, sibling])
                .collect()
        }),
        PerturbationKind::DeletionNoun => vec![Candidate {
            replacement: None,
            trace: Vec::new(),
        }],
    }
}

/// The replacement the kind applies at token `index`, if any.
pub fn choose(
    tq: &TokenizedQuestion,
    index: usize,
    kind: PerturbationKind,
    kbs: &KnowledgeBases<'_>,
) -> Option<Candidate> {
    match kind {
        PerturbationKind::ColorMaximal(scope) | PerturbationKind::ColorMinimal(scope) => {
            let original = &tq.tokens.get(index)?.lower;
            let pool = kbs.scopes.get(scope);
            let picked = match kind {
                PerturbationKind::ColorMaximal(_) => kbs.colors.maximal_substitute(original, pool),
                _ => kbs.colors.minimal_substitute(original, pool),
            }
            .ok()?;
            Some(Candidate {
                replacement: Some(picked.name.clone()),
                trace: vec![
                    TraceStep::Color(original.clone()),
                    TraceStep::Color(picked.name.clone()),
                ],
            })
        }
        _ => candidates(tq, index, kind, kbs).into_iter().next(),
    }
}

fn capitalize_first(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

/// Rewrites `tq.source` with token `index` replaced, or removed when `replacement` is `None`.
pub fn apply_edit(tq: &TokenizedQuestion, index: usize, replacement: Option<&str>) -> String {
    let (start, end) = tq.tokens[index].span;
    let sentence_initial = index == 0;
    let left = &tq.source[..start];
    let right = &tq.source[end..];
    match replacement {
        Some(word) => {
            let word = word.to_lowercase();
            let word = if sentence_initial {
                capitalize_first(&word)
            } else {
                word
            };
            format!("{left}{word}{right}")
        }
        None => {
            let right = if left.is_empty() || left.ends_with(char::is_whitespace) {
                right.trim_start()
            } else {
                right
            };
            let left = if right.is_empty() { left.trim_end() } else { left };
            let joined = format!("{left}{right}");
            if sentence_initial {
                capitalize_first(&joined)
            } else {
                joined
            }
        }
    }
}

/// Perturbs one tagged question.
///
/// The target is drawn uniformly (seeded) from the eligible tokens that admit
/// a replacement.
pub fn perturb_question(
    question_id: &str,
    tq: &TokenizedQuestion,
    kind: PerturbationKind,
    kbs: &KnowledgeBases<'_>,
    seed: u64,
) -> Result<CounterfactualQuestion, SkipReason> {
    let eligible = eligible_targets(tq, kind, kbs.colors);
    if eligible.is_empty() {
        return Err(SkipReason::NoTarget);
    }
    let feasible: Vec<(usize, Candidate)> = eligible
        .into_iter()
        .filter_map(|i| choose(tq, i, kind, kbs).map(|c| (i, c)))
        .collect();
    if feasible.is_empty() {
        return Err(SkipReason::NoReplacement);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (index, candidate) = feasible[rng.gen_range(0..feasible.len())].clone();

    let token = &tq.tokens[index];
    let text = apply_edit(tq, index, candidate.replacement.as_deref());
    let original_lemma = match kind.target_pos() {
        None => token.lower.clone(),
        pos => base_form(kbs.wordnet, &token.lower, pos),
    };
    Ok(CounterfactualQuestion {
        question_id: question_id.to_owned(),
        kind,
        text,
        record: SubstitutionRecord {
            question_id: question_id.to_owned(),
            kind,
            token_index: index,
            original_word: token.surface.clone(),
            original_lemma,
            replacement: candidate.replacement,
            relation_trace: candidate.trace,
        },
        seed,
    })
}

/// Tokenizes, tags and perturbs a raw question.
pub fn perturb_text(
    question_id: &str,
    text: &str,
    kind: PerturbationKind,
    kbs: &KnowledgeBases<'_>,
    seed: u64,
) -> Result<CounterfactualQuestion, SkipReason> {
    let tq = tokenize(text).map_err(|_| SkipReason::NoTarget)?;
    let tagged = tag_candidates(&tq, kbs.wordnet, kbs.stoplist);
    perturb_question(question_id, &tagged, kind, kbs, seed)
}

/// Perturbs every question of `dataset` with one kind; output keeps dataset order.
pub fn perturb_set(
    dataset: &Dataset,
    kind: PerturbationKind,
    kbs: &KnowledgeBases<'_>,
    seed: u64,
) -> PerturbedSet {
    let results: Vec<_> = dataset
        .questions
        .par_iter()
        .map(|q| {
            let qseed = question_seed(seed, &q.id);
            (q.id.clone(), perturb_text(&q.id, &q.text, kind, kbs, qseed))
        })
        .collect();

    let mut set = PerturbedSet::default();
    for (id, result) in results {
        match result {
            Ok(cf) => set.questions.push(cf),
            Err(reason) => {
                match reason {
                    SkipReason::NoTarget => set.skips.no_target += 1,
                    SkipReason::NoReplacement => set.skips.no_replacement += 1,
                }
                set.skips.skipped.push((id, reason));
            }
        }
    }
    set
}

#[derive(Debug, thiserror::Error)]
#[error("substitution for question {question_id:?} does not validate: {message}")]
pub struct ProvenanceError {
    pub question_id: String,
    pub message: String,
}

/// Re-checks every edge in a record's relation trace against the knowledge bases.
pub fn validate_record(
    record: &SubstitutionRecord,
    kbs: &KnowledgeBases<'_>,
) -> Result<(), ProvenanceError> {
    let fail = |message: String| ProvenanceError {
        question_id: record.question_id.clone(),
        message,
    };
    let graph = kbs.wordnet;
    let synsets: Option<Vec<SynsetId>> = record
        .relation_trace
        .iter()
        .map(|s| match s {
            TraceStep::Synset(id) => Some(*id),
            TraceStep::Color(_) => None,
        })
        .collect();
    let replacement = record.replacement.as_deref();
    let contains = |id: SynsetId, word: &str| graph.synset(id).is_ok_and(|s| s.has_lemma(word));

    if record.kind == PerturbationKind::DeletionNoun {
        return match (replacement, record.relation_trace.is_empty()) {
            (None, true) => Ok(()),
            _ => Err(fail("deletion must have no replacement and no trace".into())),
        };
    }
    let y = replacement.ok_or_else(|| fail("missing replacement".into()))?;
    if index_key(y) == index_key(&record.original_word) {
        return Err(fail("replacement equals the original word".into()));
    }

    if let Some(scope) = record.kind.scope() {
        let [TraceStep::Color(x), TraceStep::Color(traced_y)] = record.relation_trace.as_slice()
        else {
            return Err(fail("color trace must name the original and the replacement".into()));
        };
        if *x != record.original_word.to_lowercase() || traced_y != y {
            return Err(fail("color trace does not match the record".into()));
        }
        let pool = kbs.scopes.get(scope);
        let expected = match record.kind {
            PerturbationKind::ColorMaximal(_) => kbs.colors.maximal_substitute(x, pool),
            _ => kbs.colors.minimal_substitute(x, pool),
        }
        .map_err(|e| fail(e.to_string()))?;
        return if expected.name == y {
            Ok(())
        } else {
            Err(fail(format!("expected {}, found {y}", expected.name)))
        };
    }

    let synsets = synsets.ok_or_else(|| fail("WordNet trace holds a color step".into()))?;
    let pos = record.kind.target_pos().expect("WordNet kinds have a POS");
    if synsets.iter().any(|s| s.pos != pos.file_pos() || !graph.contains(*s)) {
        return Err(fail("trace leaves the targeted part of speech".into()));
    }
    let x = record.original_lemma.as_str();
    let ok = match (record.kind, synsets.as_slice()) {
        (PerturbationKind::SynonymAdjective | PerturbationKind::SynonymVerb, [shared]) => {
            contains(*shared, x) && contains(*shared, y)
        }
        (PerturbationKind::SynonymAdjective, [sense, similar]) => {
            contains(*sense, x)
                && graph.has_edge(*sense, *similar, &[SIMILAR_TO])
                && contains(*similar, y)
        }
        (PerturbationKind::HypernymNoun, [sense, parent]) => {
            contains(*sense, x)
                && graph.has_edge(*sense, *parent, &[HYPERNYM, INSTANCE_HYPERNYM])
                && contains(*parent, y)
        }
        (PerturbationKind::HyponymNoun, [sense, child]) => {
            contains(*sense, x)
                && graph.has_edge(*sense, *child, &[HYPONYM, INSTANCE_HYPONYM])
                && contains(*child, y)
        }
        (PerturbationKind::SiblingNoun, [sense, parent, sibling]) => {
            sense != sibling
                && contains(*sense, x)
                && graph.has_edge(*sense, *parent, &[HYPERNYM, INSTANCE_HYPERNYM])
                && graph.has_edge(*parent, *sibling, &[HYPONYM, INSTANCE_HYPONYM])
                && contains(*sibling, y)
        }
        _ => false,
    };
    if ok {
        Ok(())
    } else {
        Err(fail(format!(
            "trace {:?} does not relate {x:?} to {y:?}",
            record.relation_trace
        )))
    }
}
