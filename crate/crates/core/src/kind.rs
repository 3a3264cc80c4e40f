use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::color::CandidateScope;
use crate::wordnet::PartOfSpeech;

/// The perturbation experiments. Color kinds carry the candidate scope.
///
/// Text form: `color-maximal-common`, `synonym-verb`, `deletion-noun`, ...
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum PerturbationKind {
    ColorMaximal(CandidateScope),
    ColorMinimal(CandidateScope),
    SynonymAdjective,
    SynonymVerb,
    HypernymNoun,
    HyponymNoun,
    SiblingNoun,
    DeletionNoun,
}

impl PerturbationKind {
    pub const ALL: [PerturbationKind; 10] = [
        PerturbationKind::ColorMaximal(CandidateScope::Common),
        PerturbationKind::ColorMaximal(CandidateScope::Uncommon),
        PerturbationKind::ColorMinimal(CandidateScope::Common),
        PerturbationKind::ColorMinimal(CandidateScope::Uncommon),
        PerturbationKind::SynonymAdjective,
        PerturbationKind::SynonymVerb,
        PerturbationKind::HypernymNoun,
        PerturbationKind::HyponymNoun,
        PerturbationKind::SiblingNoun,
        PerturbationKind::DeletionNoun,
    ];

    pub fn is_color(self) -> bool {
        matches!(
            self,
            PerturbationKind::ColorMaximal(_) | PerturbationKind::ColorMinimal(_)
        )
    }

    /// POS a WordNet kind targets; `None` for color kinds.
    pub fn target_pos(self) -> Option<PartOfSpeech> {
        match self {
            PerturbationKind::ColorMaximal(_) | PerturbationKind::ColorMinimal(_) => None,
            PerturbationKind::SynonymAdjective => Some(PartOfSpeech::Adjective),
            PerturbationKind::SynonymVerb => Some(PartOfSpeech::Verb),
            PerturbationKind::HypernymNoun
            | PerturbationKind::HyponymNoun
            | PerturbationKind::SiblingNoun
            | PerturbationKind::DeletionNoun => Some(PartOfSpeech::Noun),
        }
    }

    pub fn scope(self) -> Option<CandidateScope> {
        match self {
            PerturbationKind::ColorMaximal(s) | PerturbationKind::ColorMinimal(s) => Some(s),
            _ => None,
        }
    }

    /// Kind name without the color scope, e.g. `color-maximal`.
    pub fn family(self) -> &'static str {
        match self {
            PerturbationKind::ColorMaximal(_) => "color-maximal",
            PerturbationKind::ColorMinimal(_) => "color-minimal",
            PerturbationKind::SynonymAdjective => "synonym-adjective",
            PerturbationKind::SynonymVerb => "synonym-verb",
            PerturbationKind::HypernymNoun => "hypernym-noun",
            PerturbationKind::HyponymNoun => "hyponym-noun",
            PerturbationKind::SiblingNoun => "sibling-noun",
            PerturbationKind::DeletionNoun => "deletion-noun",
        }
    }

    /// How a model that reasons about the edit is expected to react.
    pub fn expected_reaction(self) -> &'static str {
        match self {
            PerturbationKind::ColorMaximal(_) => "answer expected to change",
            PerturbationKind::ColorMinimal(_) => "answer expected to stay",
            PerturbationKind::SynonymAdjective | PerturbationKind::SynonymVerb => {
                "answer expected to stay"
            }
            PerturbationKind::HypernymNoun => "answer expected to stay",
            PerturbationKind::HyponymNoun => "answer may specialise",
            PerturbationKind::SiblingNoun => "reaction depends on the sibling pair",
            PerturbationKind::DeletionNoun => "answer expected to degrade",
        }
    }
}

impl fmt::Display for PerturbationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.scope() {
            Some(scope) => write!(f, "{}-{}", self.family(), scope),
            None => f.write_str(self.family()),
        }
    }
}

impl FromStr for PerturbationKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PerturbationKind::ALL
            .into_iter()
            .find(|k| k.to_string() == s)
            .ok_or_else(|| {
                let known: Vec<String> =
                    PerturbationKind::ALL.iter().map(ToString::to_string).collect();
                format!("unknown perturbation kind {s:?} (expected one of {})", known.join(", "))
            })
    }
}

impl TryFrom<String> for PerturbationKind {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<PerturbationKind> for String {
    fn from(k: PerturbationKind) -> String {
        k.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_form_round_trips() {
        for k in PerturbationKind::ALL {
            assert_eq!(k.to_string().parse::<PerturbationKind>().unwrap(), k);
        }
        assert_eq!(
            PerturbationKind::ColorMaximal(CandidateScope::Uncommon).to_string(),
            "color-maximal-uncommon"
        );
        assert!("color-maximal".parse::<PerturbationKind>().is_err());
        let json = serde_json::to_string(&PerturbationKind::SiblingNoun).unwrap();
        assert_eq!(json, "\"sibling-noun\"");
    }
}
