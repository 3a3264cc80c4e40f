//! Question tokenization and perturbation-target selection.

use std::collections::{BTreeSet, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::color::ColorTable;
use crate::kind::PerturbationKind;
use crate::wordnet::{PartOfSpeech, WordNetGraph};

pub const BUNDLED_STOPLIST: &str = include_str!("../data/stoplist.txt");

const TERMINAL_PUNCTUATION: &[char] = &['?', '!', '.', ','];

const DETERMINERS: &[&str] = &[
    "a", "an", "the", "this", "that", "these", "those", "some", "any", "each", "every", "no",
    "another", "my", "your", "his", "her", "its", "our", "their", "many", "several", "both",
    "all", "few", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten",
];

const AUXILIARIES: &[&str] = &[
    "am", "is", "are", "was", "were", "be", "been", "being", "do", "does", "did", "have", "has",
    "had", "can", "could", "will", "would", "shall", "should", "may", "might", "must",
];

const BE_FORMS: &[&str] = &["am", "is", "are", "was", "were", "be", "been", "being"];

const SUBJECT_PRONOUNS: &[&str] = &["i", "you", "he", "she", "it", "we", "they"];

#[derive(Debug, thiserror::Error)]
pub enum LingError {
    #[error("question text is empty")]
    EmptyText,
    #[error("failed to read stoplist {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub surface: String,
    pub lower: String,
    /// Byte range of `surface` in the source text.
    pub span: (usize, usize),
    pub pos_candidates: BTreeSet<PartOfSpeech>,
    /// POS the token is treated as when choosing perturbation targets.
    pub priority: Option<PartOfSpeech>,
}

impl Token {
    pub fn is_punctuation(&self) -> bool {
        self.surface.chars().all(|c| c.is_ascii_punctuation())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizedQuestion {
    pub source: String,
    pub tokens: Vec<Token>,
}

impl TokenizedQuestion {
    /// Text between tokens: `tokens.len() + 1` entries, leading and trailing included.
    pub fn separators(&self) -> Vec<&str> {
        let mut out = Vec::with_capacity(self.tokens.len() + 1);
        let mut cursor = 0;
        for t in &self.tokens {
            out.push(&self.source[cursor..t.span.0]);
            cursor = t.span.1;
        }
        out.push(&self.source[cursor..]);
        out
    }

    pub fn reconstruct(&self) -> String {
        let seps = self.separators();
        let mut out = String::with_capacity(self.source.len());
        for (sep, token) in seps.iter().zip(&self.tokens) {
            out.push_str(sep);
            out.push_str(&token.surface);
        }
        out.push_str(seps[self.tokens.len()]);
        out
    }

    pub fn words(&self) -> impl Iterator<Item = &Token> {
        self.tokens.iter().filter(|t| !t.is_punctuation())
    }
}

/// Splits on whitespace and peels trailing `?!.,` characters into their own tokens.
pub fn tokenize(text: &str) -> Result<TokenizedQuestion, LingError> {
    if text.trim().is_empty() {
        return Err(LingError::EmptyText);
    }
    let mut tokens = Vec::new();
    let mut push = |start: usize, end: usize| {
        let surface = &text[start..end];
        tokens.push(Token {
            surface: surface.to_owned(),
            lower: surface.to_lowercase(),
            span: (start, end),
            pos_candidates: BTreeSet::new(),
            priority: None,
        });
    };

    let mut chunk_start = None;
    let bytes_with_end = text.char_indices().chain(std::iter::once((text.len(), ' ')));
    for (i, c) in bytes_with_end {
        match (c.is_whitespace(), chunk_start) {
            (false, None) => chunk_start = Some(i),
            (true, Some(start)) => {
                let chunk = &text[start..i];
                let body = chunk.trim_end_matches(TERMINAL_PUNCTUATION);
                let body_end = start + body.len();
                if !body.is_empty() {
                    push(start, body_end);
                }
                for (j, p) in text[body_end..i].char_indices() {
                    push(body_end + j, body_end + j + p.len_utf8());
                }
                chunk_start = None;
            }
            _ => {}
        }
    }
    Ok(TokenizedQuestion {
        source: text.to_owned(),
        tokens,
    })
}

/// Words that never receive POS candidates.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Stoplist {
    words: HashSet<String>,
}

impl Stoplist {
    /// One word per line; `#` starts a comment line.
    pub fn parse(text: &str) -> Stoplist {
        let words = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_lowercase)
            .collect();
        Stoplist { words }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Stoplist, LingError> {
        let path = path.as_ref();
        std::fs::read_to_string(path)
            .map(|t| Stoplist::parse(&t))
            .map_err(|source| LingError::Io {
                path: path.display().to_string(),
                source,
            })
    }

    pub fn bundled() -> Stoplist {
        Stoplist::parse(BUNDLED_STOPLIST)
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(&word.to_lowercase())
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

/// Fills `pos_candidates` from WordNet and resolves a priority POS per token.
///
/// Priority rules, first match wins:
/// 1. inside a determiner-led chain, a token followed by another content word
///    is an adjective if it can be one; the chain's last token is a noun;
/// 2. after `to`, or after an auxiliary (possibly with an inverted subject
///    pronoun between, as in "do you see"), a verb; after a form of "be" an
///    adjective is preferred unless the token is an `-ing` verb form;
/// 3. after a bare subject pronoun, a verb;
/// 4. an `-ing` verb form right after a noun is a verb;
/// 5. in a question opened by a form of "be", a final word right after a noun
///    is a predicate adjective if it can be one;
/// 6. otherwise noun, then verb, then adjective.
pub fn tag_candidates(
    tq: &TokenizedQuestion,
    graph: &WordNetGraph,
    stoplist: &Stoplist,
) -> TokenizedQuestion {
    let mut out = tq.clone();
    for token in &mut out.tokens {
        token.pos_candidates.clear();
        token.priority = None;
        if token.is_punctuation() || stoplist.contains(&token.lower) {
            continue;
        }
        for pos in PartOfSpeech::FILE_POS {
            if !graph.lemmatize(&token.lower, pos).is_empty() {
                token.pos_candidates.insert(pos);
            }
        }
    }

    let lowers: Vec<String> = out.tokens.iter().map(|t| t.lower.clone()).collect();
    let content: Vec<bool> = out.tokens.iter().map(|t| !t.pos_candidates.is_empty()).collect();
    let is = |list: &[&str], i: usize| list.contains(&lowers[i].as_str());
    let last_word = out.tokens.iter().rposition(|t| !t.is_punctuation());
    let be_question = !lowers.is_empty() && is(BE_FORMS, 0);

    let mut in_chain = false;
    for i in 0..out.tokens.len() {
        if is(DETERMINERS, i) {
            in_chain = true;
            continue;
        }
        if !content[i] {
            in_chain = false;
            continue;
        }
        let cands = out.tokens[i].pos_candidates.clone();
        let has = |p: PartOfSpeech| cands.contains(&p);
        let ing_verb = lowers[i].ends_with("ing") && has(PartOfSpeech::Verb);
        let default = default_priority(&cands);

        let governing_aux = match i {
            0 => None,
            _ if is(AUXILIARIES, i - 1) => Some(i - 1),
            1 => None,
            _ if is(SUBJECT_PRONOUNS, i - 1) && is(AUXILIARIES, i - 2) => Some(i - 2),
            _ => None,
        };

        let priority = if in_chain {
            let next_is_content = content.get(i + 1).copied().unwrap_or(false);
            if next_is_content && has(PartOfSpeech::Adjective) {
                Some(PartOfSpeech::Adjective)
            } else {
                in_chain = false;
                if has(PartOfSpeech::Noun) {
                    Some(PartOfSpeech::Noun)
                } else {
                    default
                }
            }
        } else if i > 0 && lowers[i - 1] == "to" {
            verb_or(has(PartOfSpeech::Verb), default)
        } else if let Some(aux) = governing_aux {
            if is(BE_FORMS, aux) && has(PartOfSpeech::Adjective) && !ing_verb {
                Some(PartOfSpeech::Adjective)
            } else {
                verb_or(has(PartOfSpeech::Verb), default)
            }
        } else if i > 0 && is(SUBJECT_PRONOUNS, i - 1) {
            verb_or(has(PartOfSpeech::Verb), default)
        } else if i > 0 && ing_verb && out.tokens[i - 1].priority == Some(PartOfSpeech::Noun) {
            Some(PartOfSpeech::Verb)
        } else if i > 0
            && be_question
            && last_word == Some(i)
            && out.tokens[i - 1].priority == Some(PartOfSpeech::Noun)
            && has(PartOfSpeech::Adjective)
        {
            Some(PartOfSpeech::Adjective)
        } else {
            default
        };
        out.tokens[i].priority = priority;
    }
    out
}

fn verb_or(has_verb: bool, default: Option<PartOfSpeech>) -> Option<PartOfSpeech> {
    if has_verb {
        Some(PartOfSpeech::Verb)
    } else {
        default
    }
}

fn default_priority(cands: &BTreeSet<PartOfSpeech>) -> Option<PartOfSpeech> {
    [
        PartOfSpeech::Noun,
        PartOfSpeech::Verb,
        PartOfSpeech::Adjective,
        PartOfSpeech::Adverb,
    ]
    .into_iter()
    .find(|p| cands.contains(p))
}

/// Token indices a kind may perturb, in increasing order.
///
/// Color kinds target palette color names. WordNet kinds target tokens whose
/// priority POS matches the kind, never color names.
pub fn eligible_targets(
    tq: &TokenizedQuestion,
    kind: PerturbationKind,
    colors: &ColorTable,
) -> Vec<usize> {
    tq.tokens
        .iter()
        .enumerate()
        .filter(|(_, t)| {
            if t.is_punctuation() {
                return false;
            }
            let is_color = colors.contains(&t.lower);
            match kind.target_pos() {
                None => is_color,
                Some(pos) => !is_color && t.priority == Some(pos),
            }
        })
        .map(|(i, _)| i)
        .collect()
}
