//! Question/answer dataset loaders.
//!
//! Three on-disk formats are understood: the public VQA-v2 question and
//! annotation files, Visual Genome `question_answers.json`, and a
//! line-delimited toy format:
//!
//! ```text
//! {"id": "q1", "image_id": "img1", "image_locator": "images/1.jpg", "question": "Is it red?", "answers": ["yes"]}
//! ```

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::lingproc::tokenize;
use crate::model::ImageRef;

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: does not match the expected schema: {message}")]
    Schema { path: String, message: String },
    #[error("{path}:{line}: {message}")]
    MalformedLine {
        path: String,
        line: usize,
        message: String,
    },
    #[error("question {0:?} has no matching annotation")]
    Unjoinable(String),
    #[error("duplicate question id {0:?}")]
    DuplicateId(String),
    #[error("question {0:?} has no ground-truth answers")]
    NoAnswers(String),
    #[error("question {0:?} has empty text")]
    EmptyQuestion(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Question {
    pub id: String,
    pub image: ImageRef,
    pub text: String,
    pub ground_truths: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub questions: Vec<Question>,
}

impl Dataset {
    /// Builds a dataset, enforcing unique ids, non-empty text and at least one answer.
    pub fn new(name: impl Into<String>, questions: Vec<Question>) -> Result<Dataset, DatasetError> {
        let mut seen = HashSet::new();
        for q in &questions {
            if !seen.insert(q.id.as_str()) {
                return Err(DatasetError::DuplicateId(q.id.clone()));
            }
            if q.text.trim().is_empty() {
                return Err(DatasetError::EmptyQuestion(q.id.clone()));
            }
            if q.ground_truths.is_empty() {
                return Err(DatasetError::NoAnswers(q.id.clone()));
            }
        }
        Ok(Dataset {
            name: name.into(),
            questions,
        })
    }

    pub fn len(&self) -> usize {
        self.questions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.questions.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Question> {
        self.questions.iter().find(|q| q.id == id)
    }
}

fn read(path: &Path) -> Result<String, DatasetError> {
    std::fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn parse_json<T: for<'de> Deserialize<'de>>(path: &Path, text: &str) -> Result<T, DatasetError> {
    serde_json::from_str(text).map_err(|e| DatasetError::Schema {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

fn dataset_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into())
}

/// Numeric or string identifiers, as found across dataset releases.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum Id {
    Num(u64),
    Str(String),
}

impl Id {
    fn into_string(self) -> String {
        match self {
            Id::Num(n) => n.to_string(),
            Id::Str(s) => s,
        }
    }
}

#[derive(Debug, Deserialize)]
struct Vqa2Questions {
    questions: Vec<Vqa2Question>,
}

#[derive(Debug, Deserialize)]
struct Vqa2Question {
    question_id: Id,
    image_id: Id,
    question: String,
}

#[derive(Debug, Deserialize)]
struct Vqa2Annotations {
    annotations: Vec<Vqa2Annotation>,
}

#[derive(Debug, Deserialize)]
struct Vqa2Annotation {
    question_id: Id,
    answers: Vec<Vqa2Answer>,
}

#[derive(Debug, Deserialize)]
struct Vqa2Answer {
    answer: String,
}

/// Joins VQA-v2 questions with their annotations, keeping every annotator answer.
pub fn load_vqa2(
    questions_file: impl AsRef<Path>,
    annotations_file: impl AsRef<Path>,
) -> Result<Dataset, DatasetError> {
    let (qpath, apath) = (questions_file.as_ref(), annotations_file.as_ref());
    let questions: Vqa2Questions = parse_json(qpath, &read(qpath)?)?;
    let annotations: Vqa2Annotations = parse_json(apath, &read(apath)?)?;

    let mut answers: HashMap<String, Vec<String>> = annotations
        .annotations
        .into_iter()
        .map(|a| {
            (
                a.question_id.into_string(),
                a.answers.into_iter().map(|x| x.answer).collect(),
            )
        })
        .collect();

    let questions = questions
        .questions
        .into_iter()
        .map(|q| {
            let id = q.question_id.into_string();
            let ground_truths = answers
                .remove(&id)
                .ok_or_else(|| DatasetError::Unjoinable(id.clone()))?;
            Ok(Question {
                image: ImageRef {
                    image_id: q.image_id.into_string(),
                    locator: None,
                },
                id,
                text: q.question,
                ground_truths,
            })
        })
        .collect::<Result<Vec<_>, DatasetError>>()?;
    Dataset::new(dataset_name(qpath), questions)
}

#[derive(Debug, Deserialize)]
struct VgImage {
    #[serde(default)]
    id: Option<Id>,
    qas: Vec<VgQa>,
}

#[derive(Debug, Deserialize)]
struct VgQa {
    qa_id: Id,
    #[serde(default)]
    image_id: Option<Id>,
    question: String,
    answer: String,
}

/// Loads Visual Genome `question_answers.json`: one ground truth per question.
pub fn load_vg(qa_file: impl AsRef<Path>) -> Result<Dataset, DatasetError> {
    let path = qa_file.as_ref();
    let images: Vec<VgImage> = parse_json(path, &read(path)?)?;
    let mut questions = Vec::new();
    for image in images {
        let image_id = image.id.map(Id::into_string);
        for qa in image.qas {
            let image_id = qa
                .image_id
                .map(Id::into_string)
                .or_else(|| image_id.clone())
                .ok_or_else(|| DatasetError::Schema {
                    path: path.display().to_string(),
                    message: "qa entry without an image id".into(),
                })?;
            questions.push(Question {
                id: qa.qa_id.into_string(),
                image: ImageRef {
                    image_id,
                    locator: None,
                },
                text: qa.question,
                ground_truths: vec![qa.answer],
            });
        }
    }
    Dataset::new(dataset_name(path), questions)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ToyLine {
    id: String,
    image_id: String,
    #[serde(default)]
    image_locator: Option<String>,
    question: String,
    answers: Vec<String>,
}

/// Loads the line-delimited toy format. Blank lines are skipped.
pub fn load_toy(path: impl AsRef<Path>) -> Result<Dataset, DatasetError> {
    let path = path.as_ref();
    let text = read(path)?;
    let mut questions = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |message: String| DatasetError::MalformedLine {
            path: path.display().to_string(),
            line: i + 1,
            message,
        };
        let row: ToyLine = serde_json::from_str(line).map_err(|e| malformed(e.to_string()))?;
        questions.push(Question {
            id: row.id,
            image: ImageRef {
                image_id: row.image_id,
                locator: row.image_locator,
            },
            text: row.question,
            ground_truths: row.answers,
        });
    }
    Dataset::new(dataset_name(path), questions)
}

/// Case-folded word counts over all questions; punctuation tokens are not counted.
pub fn vocabulary(dataset: &Dataset) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    for q in &dataset.questions {
        if let Ok(tq) = tokenize(&q.text) {
            for t in tq.words() {
                *counts.entry(t.lower.clone()).or_insert(0) += 1;
            }
        }
    }
    counts
}
