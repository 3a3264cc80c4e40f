use std::collections::HashMap;
use std::path::{Path, PathBuf};

use super::{PartOfSpeech, Pointer, Synset, SynsetId, WordNetError, WordNetGraph};

/// Where a synset or reference was read from, for error reporting.
type Origin = (String, usize);

/// Loads a WordNet 3.x database directory (`index.*`, `data.*`, `*.exc`).
pub fn load(dir: impl AsRef<Path>) -> Result<WordNetGraph, WordNetError> {
    let dir = dir.as_ref();
    let mut graph = WordNetGraph::default();
    let mut origins: HashMap<SynsetId, Origin> = HashMap::new();

    for pos in PartOfSpeech::FILE_POS {
        let name = format!("data.{}", pos.file_suffix());
        let text = read(&dir.join(&name))?;
        for (line_no, line) in content_lines(&text) {
            let synset = parse_data_line(line, pos).map_err(|message| WordNetError::Malformed {
                file: name.clone(),
                line: line_no,
                message,
            })?;
            origins.insert(synset.id, (name.clone(), line_no));
            graph.synsets.insert(synset.id, synset);
        }
    }

    for pos in PartOfSpeech::FILE_POS {
        let name = format!("index.{}", pos.file_suffix());
        let text = read(&dir.join(&name))?;
        let entries = graph.index.entry(pos).or_default();
        for (line_no, line) in content_lines(&text) {
            let (lemma, ids) =
                parse_index_line(line, pos).map_err(|message| WordNetError::Malformed {
                    file: name.clone(),
                    line: line_no,
                    message,
                })?;
            if let Some(&missing) = ids.iter().find(|id| !graph.synsets.contains_key(id)) {
                return Err(WordNetError::DanglingPointer {
                    file: name,
                    line: line_no,
                    target: missing,
                });
            }
            entries.insert(lemma, ids);
        }
    }

    for pos in PartOfSpeech::FILE_POS {
        let name = format!("{}.exc", pos.file_suffix());
        let text = read(&dir.join(&name))?;
        let entries = graph.exceptions.entry(pos).or_default();
        for (line_no, line) in content_lines(&text) {
            let mut fields = line.split_whitespace();
            let inflected = fields.next().ok_or_else(|| WordNetError::Malformed {
                file: name.clone(),
                line: line_no,
                message: "empty exception entry".into(),
            })?;
            let bases: Vec<String> = fields.map(str::to_owned).collect();
            if bases.is_empty() {
                return Err(WordNetError::Malformed {
                    file: name,
                    line: line_no,
                    message: format!("exception {inflected:?} has no base form"),
                });
            }
            entries.entry(inflected.to_owned()).or_default().extend(bases);
        }
    }

    let mut ids: Vec<SynsetId> = graph.synsets.keys().copied().collect();
    ids.sort();
    for id in ids {
        let synset = &graph.synsets[&id];
        if let Some(p) = synset
            .pointers
            .iter()
            .find(|p| !graph.synsets.contains_key(&p.target))
        {
            let (file, line) = origins.remove(&id).unwrap_or_default();
            return Err(WordNetError::DanglingPointer {
                file,
                line,
                target: p.target,
            });
        }
    }

    Ok(graph)
}

fn read(path: &PathBuf) -> Result<String, WordNetError> {
    match std::fs::read_to_string(path) {
        Ok(text) => Ok(text),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            Err(WordNetError::MissingFile(path.clone()))
        }
        Err(source) => Err(WordNetError::Io {
            path: path.clone(),
            source,
        }),
    }
}

/// Non-header, non-blank lines with 1-based line numbers. License header lines
/// start with two spaces.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.starts_with("  ") && !l.trim().is_empty())
}

fn next_field<'a>(fields: &mut impl Iterator<Item = &'a str>, what: &str) -> Result<&'a str, String> {
    fields.next().ok_or_else(|| format!("missing {what}"))
}

fn parse_offset(s: &str) -> Result<u64, String> {
    if s.len() != 8 || !s.bytes().all(|b| b.is_ascii_digit()) {
        return Err(format!("bad synset offset {s:?}"));
    }
    s.parse().map_err(|_| format!("bad synset offset {s:?}"))
}

fn parse_pos(s: &str) -> Result<PartOfSpeech, String> {
    let mut chars = s.chars();
    match (chars.next(), chars.next()) {
        (Some(c), None) => PartOfSpeech::from_char(c),
        _ => None,
    }
    .ok_or_else(|| format!("bad part of speech {s:?}"))
}

fn strip_adjective_marker(word: &str) -> &str {
    for marker in ["(a)", "(p)", "(ip)"] {
        if let Some(stripped) = word.strip_suffix(marker) {
            return stripped;
        }
    }
    word
}

pub(super) fn parse_data_line(line: &str, file_pos: PartOfSpeech) -> Result<Synset, String> {
    let (head, gloss) = match line.split_once(" | ") {
        Some((head, gloss)) => (head, gloss.trim_end()),
        None => (line.trim_end().trim_end_matches('|'), ""),
    };
    let mut fields = head.split_whitespace();

    let offset = parse_offset(next_field(&mut fields, "synset offset")?)?;
    next_field(&mut fields, "lexicographer file number")?;
    let synset_type = parse_pos(next_field(&mut fields, "synset type")?)?;
    if synset_type.file_pos() != file_pos {
        return Err(format!(
            "synset type {} does not belong in the {} file",
            synset_type.as_char(),
            file_pos.file_suffix()
        ));
    }

    let word_count = next_field(&mut fields, "word count")?;
    let word_count =
        usize::from_str_radix(word_count, 16).map_err(|_| format!("bad word count {word_count:?}"))?;
    if word_count == 0 {
        return Err("synset has no lemmas".into());
    }
    let mut lemmas = Vec::with_capacity(word_count);
    for _ in 0..word_count {
        let word = next_field(&mut fields, "lemma")?;
        next_field(&mut fields, "lex id")?;
        lemmas.push(strip_adjective_marker(word).to_owned());
    }

    let pointer_count = next_field(&mut fields, "pointer count")?;
    let pointer_count: usize = pointer_count
        .parse()
        .map_err(|_| format!("bad pointer count {pointer_count:?}"))?;
    let mut pointers = Vec::with_capacity(pointer_count);
    for _ in 0..pointer_count {
        let symbol = next_field(&mut fields, "pointer symbol")?;
        let target = parse_offset(next_field(&mut fields, "pointer offset")?)?;
        let pos = parse_pos(next_field(&mut fields, "pointer POS")?)?;
        let source_target = next_field(&mut fields, "pointer source/target")?;
        if source_target.len() != 4 || !source_target.bytes().all(|b| b.is_ascii_hexdigit()) {
            return Err(format!("bad pointer source/target {source_target:?}"));
        }
        pointers.push(Pointer {
            symbol: symbol.to_owned(),
            target: SynsetId::new(pos, target),
        });
    }
    // verb frames follow; not needed

    Ok(Synset {
        id: SynsetId::new(file_pos, offset),
        synset_type,
        lemmas,
        pointers,
        gloss: gloss.to_owned(),
    })
}

pub(super) fn parse_index_line(
    line: &str,
    file_pos: PartOfSpeech,
) -> Result<(String, Vec<SynsetId>), String> {
    let mut fields = line.split_whitespace();
    let lemma = next_field(&mut fields, "lemma")?;
    let pos = parse_pos(next_field(&mut fields, "part of speech")?)?;
    if pos.file_pos() != file_pos {
        return Err(format!("entry for {} in the {} index", pos, file_pos.file_suffix()));
    }
    let count = |s: &str| s.parse::<usize>().map_err(|_| format!("bad count {s:?}"));
    let synset_count = count(next_field(&mut fields, "synset count")?)?;
    let pointer_count = count(next_field(&mut fields, "pointer count")?)?;
    for _ in 0..pointer_count {
        next_field(&mut fields, "pointer symbol")?;
    }
    next_field(&mut fields, "sense count")?;
    next_field(&mut fields, "tagged sense count")?;
    let ids = (0..synset_count)
        .map(|_| {
            next_field(&mut fields, "synset offset")
                .and_then(parse_offset)
                .map(|o| SynsetId::new(file_pos, o))
        })
        .collect::<Result<Vec<_>, _>>()?;
    if fields.next().is_some() {
        return Err("trailing fields after synset offsets".into());
    }
    Ok((lemma.to_lowercase(), ids))
}
