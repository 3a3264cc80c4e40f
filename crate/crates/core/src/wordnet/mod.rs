//! In-memory WordNet lexical graph loaded from the plain-text database files.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

mod morphy;
mod parse;

pub use parse::load;

pub const HYPERNYM: &str = "@";
pub const INSTANCE_HYPERNYM: &str = "@i";
pub const HYPONYM: &str = "~";
pub const INSTANCE_HYPONYM: &str = "~i";
pub const SIMILAR_TO: &str = "&";

#[derive(Debug, thiserror::Error)]
pub enum WordNetError {
    #[error("missing WordNet file {0}")]
    MissingFile(PathBuf),
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}:{line}: malformed line: {message}")]
    Malformed {
        file: String,
        line: usize,
        message: String,
    },
    #[error("{file}:{line}: dangling reference to synset {target}")]
    DanglingPointer {
        file: String,
        line: usize,
        target: SynsetId,
    },
    #[error("unknown synset {0}")]
    UnknownSynset(SynsetId),
    #[error("synonyms are only defined for verbs and adjectives, got {0}")]
    UnsupportedPos(PartOfSpeech),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PartOfSpeech {
    Noun,
    Verb,
    Adjective,
    AdjectiveSatellite,
    Adverb,
}

impl PartOfSpeech {
    /// The four POS that own a database file. Satellites live in the adjective files.
    pub const FILE_POS: [PartOfSpeech; 4] = [
        PartOfSpeech::Noun,
        PartOfSpeech::Verb,
        PartOfSpeech::Adjective,
        PartOfSpeech::Adverb,
    ];

    pub fn from_char(c: char) -> Option<Self> {
        match c {
            'n' => Some(PartOfSpeech::Noun),
            'v' => Some(PartOfSpeech::Verb),
            'a' => Some(PartOfSpeech::Adjective),
            's' => Some(PartOfSpeech::AdjectiveSatellite),
            'r' => Some(PartOfSpeech::Adverb),
            _ => None,
        }
    }

    pub fn as_char(self) -> char {
        match self {
            PartOfSpeech::Noun => 'n',
            PartOfSpeech::Verb => 'v',
            PartOfSpeech::Adjective => 'a',
            PartOfSpeech::AdjectiveSatellite => 's',
            PartOfSpeech::Adverb => 'r',
        }
    }

    /// Collapses satellites onto the adjective file they are stored in.
    pub fn file_pos(self) -> Self {
        match self {
            PartOfSpeech::AdjectiveSatellite => PartOfSpeech::Adjective,
            other => other,
        }
    }

    pub(crate) fn file_suffix(self) -> &'static str {
        match self.file_pos() {
            PartOfSpeech::Noun => "noun",
            PartOfSpeech::Verb => "verb",
            PartOfSpeech::Adjective | PartOfSpeech::AdjectiveSatellite => "adj",
            PartOfSpeech::Adverb => "adv",
        }
    }
}

impl fmt::Display for PartOfSpeech {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            PartOfSpeech::Noun => "noun",
            PartOfSpeech::Verb => "verb",
            PartOfSpeech::Adjective => "adjective",
            PartOfSpeech::AdjectiveSatellite => "adjective satellite",
            PartOfSpeech::Adverb => "adverb",
        };
        f.write_str(name)
    }
}

/// Identifies a synset by the data file it lives in and its byte offset there.
///
/// `pos` is always a file POS: satellite synsets carry [`PartOfSpeech::Adjective`].
/// Rendered as `02084071-n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SynsetId {
    pub pos: PartOfSpeech,
    pub offset: u64,
}

impl SynsetId {
    pub fn new(pos: PartOfSpeech, offset: u64) -> Self {
        SynsetId {
            pos: pos.file_pos(),
            offset,
        }
    }
}

impl fmt::Display for SynsetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:08}-{}", self.offset, self.pos.as_char())
    }
}

impl FromStr for SynsetId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (offset, pos) = s
            .split_once('-')
            .ok_or_else(|| format!("synset id {s:?} is not of the form OFFSET-POS"))?;
        let offset = offset
            .parse()
            .map_err(|_| format!("bad offset in synset id {s:?}"))?;
        let mut chars = pos.chars();
        let pos = match (chars.next(), chars.next()) {
            (Some(c), None) => PartOfSpeech::from_char(c),
            _ => None,
        }
        .ok_or_else(|| format!("bad POS in synset id {s:?}"))?;
        Ok(SynsetId::new(pos, offset))
    }
}

impl Serialize for SynsetId {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SynsetId {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pointer {
    pub symbol: String,
    pub target: SynsetId,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Synset {
    pub id: SynsetId,
    /// `Adjective` or `AdjectiveSatellite` for adjective-file synsets.
    pub synset_type: PartOfSpeech,
    /// Lemmas in file order, underscores intact, adjective markers stripped.
    pub lemmas: Vec<String>,
    pub pointers: Vec<Pointer>,
    pub gloss: String,
}

impl Synset {
    pub fn targets<'a>(&'a self, symbols: &'a [&'a str]) -> impl Iterator<Item = SynsetId> + 'a {
        self.pointers
            .iter()
            .filter(move |p| symbols.contains(&p.symbol.as_str()))
            .map(|p| p.target)
    }

    /// True if any lemma matches `word` under case folding and `_`/space equivalence.
    pub fn has_lemma(&self, word: &str) -> bool {
        let key = index_key(word);
        self.lemmas.iter().any(|l| index_key(l) == key)
    }
}

/// Case-folds and maps spaces to underscores, the form used in the index files.
pub fn index_key(word: &str) -> String {
    word.trim().to_lowercase().replace(' ', "_")
}

/// Renders a lemma for insertion into running text.
pub fn display_lemma(lemma: &str) -> String {
    lemma.replace('_', " ")
}

/// A synonym together with the synsets that license it.
///
/// `trace` is `[shared]` when the lemma co-occurs with the word, or
/// `[word_sense, similar]` when it was reached through a similar-to link.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynonymCandidate {
    pub lemma: String,
    pub trace: Vec<SynsetId>,
}

#[derive(Debug, Default)]
pub struct WordNetGraph {
    pub(crate) index: HashMap<PartOfSpeech, HashMap<String, Vec<SynsetId>>>,
    pub(crate) synsets: HashMap<SynsetId, Synset>,
    pub(crate) exceptions: HashMap<PartOfSpeech, HashMap<String, Vec<String>>>,
}

impl WordNetGraph {
    pub fn synset(&self, id: SynsetId) -> Result<&Synset, WordNetError> {
        self.synsets.get(&id).ok_or(WordNetError::UnknownSynset(id))
    }

    pub fn contains(&self, id: SynsetId) -> bool {
        self.synsets.contains_key(&id)
    }

    pub fn synset_count(&self) -> usize {
        self.synsets.len()
    }

    /// All synset ids of one file POS, sorted by offset.
    pub fn synset_ids(&self, pos: PartOfSpeech) -> Vec<SynsetId> {
        let pos = pos.file_pos();
        let mut ids: Vec<_> = self.synsets.keys().filter(|id| id.pos == pos).copied().collect();
        ids.sort();
        ids
    }

    /// Indexed words of one file POS, in no particular order.
    pub fn words(&self, pos: PartOfSpeech) -> impl Iterator<Item = &str> {
        self.index
            .get(&pos.file_pos())
            .into_iter()
            .flat_map(|m| m.keys().map(String::as_str))
    }

    /// Sense-ordered synsets for `word`; empty when the word is not indexed.
    pub fn lookup(&self, word: &str, pos: PartOfSpeech) -> &[SynsetId] {
        self.index
            .get(&pos.file_pos())
            .and_then(|m| m.get(&index_key(word)))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn exceptions(&self, word: &str, pos: PartOfSpeech) -> &[String] {
        self.exceptions
            .get(&pos.file_pos())
            .and_then(|m| m.get(&index_key(word)))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn lemmatize(&self, word: &str, pos: PartOfSpeech) -> Vec<String> {
        morphy::base_forms(self, word, pos)
    }

    pub fn hypernyms(&self, id: SynsetId) -> Result<Vec<SynsetId>, WordNetError> {
        Ok(self
            .synset(id)?
            .targets(&[HYPERNYM, INSTANCE_HYPERNYM])
            .collect())
    }

    pub fn hyponyms(&self, id: SynsetId) -> Result<Vec<SynsetId>, WordNetError> {
        Ok(self
            .synset(id)?
            .targets(&[HYPONYM, INSTANCE_HYPONYM])
            .collect())
    }

    /// Synsets sharing an immediate parent with `id`, first-seen order, `id` excluded.
    pub fn siblings(&self, id: SynsetId) -> Result<Vec<SynsetId>, WordNetError> {
        Ok(self
            .siblings_with_parent(id)?
            .into_iter()
            .map(|(_, sibling)| sibling)
            .collect())
    }

    /// Like [`siblings`](Self::siblings) but pairs each sibling with the first
    /// parent through which it was reached.
    pub fn siblings_with_parent(
        &self,
        id: SynsetId,
    ) -> Result<Vec<(SynsetId, SynsetId)>, WordNetError> {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for parent in self.hypernyms(id)? {
            for child in self.hyponyms(parent)? {
                if child != id && seen.insert(child) {
                    out.push((parent, child));
                }
            }
        }
        Ok(out)
    }

    /// Synonyms of `word` for verbs and adjectives, lemma strings with spaces.
    pub fn synonyms(&self, word: &str, pos: PartOfSpeech) -> Result<Vec<String>, WordNetError> {
        Ok(self
            .synonym_candidates(word, pos)?
            .into_iter()
            .map(|c| display_lemma(&c.lemma))
            .collect())
    }

    /// Synonym candidates with provenance.
    ///
    /// Lemmas sharing a synset with `word` come first, following sense order and
    /// in-synset lemma order. For adjectives these are followed by the lemmas of
    /// synsets in the same similar-to cluster (head/satellite), again in sense
    /// order, which is how WordNet itself reports adjective synonymy.
    pub fn synonym_candidates(
        &self,
        word: &str,
        pos: PartOfSpeech,
    ) -> Result<Vec<SynonymCandidate>, WordNetError> {
        let pos = match pos.file_pos() {
            p @ (PartOfSpeech::Verb | PartOfSpeech::Adjective) => p,
            _ => return Err(WordNetError::UnsupportedPos(pos)),
        };
        let key = index_key(word);
        let senses = self.lookup(&key, pos);
        let mut seen: HashSet<String> = HashSet::new();
        seen.insert(key.clone());
        let mut out = Vec::new();

        for &sense in senses {
            for lemma in &self.synset(sense)?.lemmas {
                if seen.insert(index_key(lemma)) {
                    out.push(SynonymCandidate {
                        lemma: lemma.clone(),
                        trace: vec![sense],
                    });
                }
            }
        }
        if pos == PartOfSpeech::Adjective {
            for &sense in senses {
                for similar in self.synset(sense)?.targets(&[SIMILAR_TO]) {
                    for lemma in &self.synset(similar)?.lemmas {
                        if seen.insert(index_key(lemma)) {
                            out.push(SynonymCandidate {
                                lemma: lemma.clone(),
                                trace: vec![sense, similar],
                            });
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    /// True when `to` is the target of a pointer from `from` with one of `symbols`.
    pub fn has_edge(&self, from: SynsetId, to: SynsetId, symbols: &[&str]) -> bool {
        self.synsets
            .get(&from)
            .is_some_and(|s| s.targets(symbols).any(|t| t == to))
    }
}
