//! Base-form lookup following WordNet's morphy: exception lists first, then a
//! single pass of suffix-detachment rules.

use super::{index_key, PartOfSpeech, WordNetGraph};

const NOUN_RULES: &[(&str, &str)] = &[
    ("s", ""),
    ("ses", "s"),
    ("xes", "x"),
    ("zes", "z"),
    ("ches", "ch"),
    ("shes", "sh"),
    ("men", "man"),
    ("ies", "y"),
];

const VERB_RULES: &[(&str, &str)] = &[
    ("s", ""),
    ("ies", "y"),
    ("es", "e"),
    ("es", ""),
    ("ed", "e"),
    ("ed", ""),
    ("ing", "e"),
    ("ing", ""),
];

const ADJECTIVE_RULES: &[(&str, &str)] = &[("er", ""), ("est", ""), ("er", "e"), ("est", "e")];

fn rules(pos: PartOfSpeech) -> &'static [(&'static str, &'static str)] {
    match pos.file_pos() {
        PartOfSpeech::Noun => NOUN_RULES,
        PartOfSpeech::Verb => VERB_RULES,
        PartOfSpeech::Adjective => ADJECTIVE_RULES,
        _ => &[],
    }
}

pub(super) fn base_forms(graph: &WordNetGraph, word: &str, pos: PartOfSpeech) -> Vec<String> {
    let word = index_key(word);
    if word.is_empty() {
        return Vec::new();
    }
    let mut out: Vec<String> = Vec::new();
    let mut push = |form: &str| {
        if !graph.lookup(form, pos).is_empty() && !out.iter().any(|f| f == form) {
            out.push(form.to_owned());
        }
    };

    push(&word);
    let exceptions = graph.exceptions(&word, pos);
    for base in exceptions {
        push(base);
    }
    if !exceptions.is_empty() {
        return out;
    }
    for (suffix, replacement) in rules(pos) {
        if let Some(stem) = word.strip_suffix(suffix) {
            if !stem.is_empty() {
                push(&format!("{stem}{replacement}"));
            }
        }
    }
    out
}
