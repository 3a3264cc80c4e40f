//! The three pipeline stages and their on-disk artifacts.
//!
//! Layout under the output directory:
//! `perturbations/<kind>.jsonl`, `perturbations/skips.json`,
//! `records/original.jsonl`, `records/<kind>.jsonl`,
//! `report/accuracy.json`, `report/accuracy.md`, `report/rules.json`, `report/summary.md`.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::num::NonZeroUsize;
use std::path::{Path, PathBuf};

use cfprobe_core::color::{CandidateScope, ColorScopes, ColorTable};
use cfprobe_core::dataset::{self, Dataset};
use cfprobe_core::eval::{compare_runs, AccuracyReport, AnswerRecord, CorrectnessRule, Variant};
use cfprobe_core::explain::{
    anchor_by_hypernym, collect_locals, mine_rules, render_report, LocalExplanation, RuleReport,
};
use cfprobe_core::kind::PerturbationKind;
use cfprobe_core::lingproc::Stoplist;
use cfprobe_core::model::{
    answer_batch, Endpoint, HttpModel, HttpModelConfig, MockModel, ModelEndpoint, VqaRequest,
};
use cfprobe_core::perturb::{perturb_set, CounterfactualQuestion, KnowledgeBases, SkipStats, SubstitutionRecord};
use cfprobe_core::wordnet::{self, WordNetGraph};
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::config::{AnchorMode, DatasetFormat, EndpointSpec, ExperimentConfig};
use crate::error::CliError;

pub fn perturbations_dir(out: &Path) -> PathBuf {
    out.join("perturbations")
}

pub fn records_dir(out: &Path) -> PathBuf {
    out.join("records")
}

pub fn report_dir(out: &Path) -> PathBuf {
    out.join("report")
}

pub fn load_dataset(cfg: &ExperimentConfig) -> Result<Dataset, CliError> {
    let loaded = match cfg.dataset_format {
        DatasetFormat::Toy => dataset::load_toy(&cfg.questions),
        DatasetFormat::Vg => dataset::load_vg(&cfg.questions),
        DatasetFormat::Vqa2 => {
            let annotations = cfg.annotations.as_ref().expect("validated: vqa2 has annotations");
            dataset::load_vqa2(&cfg.questions, annotations)
        }
    };
    loaded.map_err(|e| CliError::Input(e.to_string()))
}

pub fn load_wordnet(cfg: &ExperimentConfig) -> Result<WordNetGraph, CliError> {
    wordnet::load(&cfg.wordnet_dir).map_err(|e| CliError::Input(e.to_string()))
}

/// Knowledge bases owned for the duration of a command.
pub struct Resources {
    pub dataset: Dataset,
    pub wordnet: WordNetGraph,
    pub colors: ColorTable,
    pub scopes: ColorScopes,
    pub stoplist: Stoplist,
}

impl Resources {
    pub fn load(cfg: &ExperimentConfig) -> Result<Resources, CliError> {
        let dataset = load_dataset(cfg)?;
        let wordnet = load_wordnet(cfg)?;
        let colors = match &cfg.colors {
            Some(path) => ColorTable::load(path, cfg.color_metric).map_err(|e| CliError::Input(e.to_string()))?,
            None => ColorTable::bundled(cfg.color_metric),
        };
        let vocabulary = dataset::vocabulary(&dataset);
        let scopes = colors.build_scopes(vocabulary.keys().map(String::as_str));
        let stoplist = match &cfg.stoplist {
            Some(path) => Stoplist::load(path).map_err(|e| CliError::Input(e.to_string()))?,
            None => Stoplist::bundled(),
        };
        Ok(Resources {
            dataset,
            wordnet,
            colors,
            scopes,
            stoplist,
        })
    }

    pub fn kbs(&self) -> KnowledgeBases<'_> {
        KnowledgeBases {
            wordnet: &self.wordnet,
            colors: &self.colors,
            scopes: &self.scopes,
            stoplist: &self.stoplist,
        }
    }
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path).map_err(CliError::io(path))
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), CliError> {
    let mut text = String::new();
    for item in items {
        text.push_str(&serde_json::to_string(item).expect("artifact types serialize"));
        text.push('\n');
    }
    std::fs::write(path, text).map_err(CliError::io(path))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("artifact types serialize");
    text.push('\n');
    std::fs::write(path, text).map_err(CliError::io(path))
}

fn read_jsonl<T: DeserializeOwned>(path: &Path, hint: &str) -> Result<Vec<T>, CliError> {
    let text = match std::fs::read_to_string(path) {
        Ok(text) => text,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(CliError::Input(format!("missing {} ({hint})", path.display())))
        }
        Err(e) => return Err(CliError::io(path)(e)),
    };
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map_err(|e| CliError::Input(format!("{}:{}: {e}", path.display(), i + 1)))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KindSkips {
    pub generated: usize,
    #[serde(flatten)]
    pub stats: SkipStats,
}

/// `perturbations/skips.json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SkipFile {
    pub seed: u64,
    pub questions: usize,
    pub kinds: BTreeMap<PerturbationKind, KindSkips>,
}

pub struct PerturbOutput {
    pub resources: Resources,
    pub sets: Vec<(PerturbationKind, Vec<CounterfactualQuestion>)>,
    pub skips: SkipFile,
}

/// Generates and writes counterfactuals for every configured kind.
pub fn cmd_perturb(cfg: &ExperimentConfig) -> Result<PerturbOutput, CliError> {
    let resources = Resources::load(cfg)?;
    let dir = perturbations_dir(&cfg.out);
    create_dir(&dir)?;
    let mut sets = Vec::with_capacity(cfg.kinds.len());
    let mut skips = SkipFile {
        seed: cfg.seed,
        questions: resources.dataset.len(),
        kinds: BTreeMap::new(),
    };
    for &kind in &cfg.kinds {
        let set = perturb_set(&resources.dataset, kind, &resources.kbs(), cfg.seed);
        tracing::info!(
            %kind,
            generated = set.questions.len(),
            skipped = set.skips.total(),
            "perturbed"
        );
        write_jsonl(&dir.join(format!("{kind}.jsonl")), &set.questions)?;
        skips.kinds.insert(
            kind,
            KindSkips {
                generated: set.questions.len(),
                stats: set.skips,
            },
        );
        sets.push((kind, set.questions));
    }
    write_json(&dir.join("skips.json"), &skips)?;
    Ok(PerturbOutput {
        resources,
        sets,
        skips,
    })
}

pub fn build_endpoint(spec: &EndpointSpec) -> Result<Endpoint, CliError> {
    match spec {
        EndpointSpec::Mock { table } => MockModel::load(table)
            .map(Endpoint::Mock)
            .map_err(|e| CliError::Input(e.to_string())),
        EndpointSpec::Http {
            url,
            timeout,
            retries,
            backoff,
        } => HttpModel::new(HttpModelConfig {
            base_url: url.clone(),
            timeout: *timeout,
            max_retries: *retries,
            backoff: *backoff,
        })
        .map(Endpoint::Http)
        .map_err(|e| CliError::Endpoint(e.to_string())),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunSummary {
    pub requests: usize,
    pub failed: usize,
}

/// Checks the endpoint, regenerates counterfactuals and asks the model every question.
pub async fn cmd_run(cfg: &ExperimentConfig) -> Result<RunSummary, CliError> {
    let endpoint = build_endpoint(cfg.endpoint()?)?;
    endpoint
        .health()
        .await
        .map_err(|e| CliError::Endpoint(format!("health check failed: {e}")))?;

    let PerturbOutput { resources, sets, .. } = cmd_perturb(cfg)?;
    let dataset = &resources.dataset;
    let by_id: HashMap<&str, usize> = dataset
        .questions
        .iter()
        .enumerate()
        .map(|(i, q)| (q.id.as_str(), i))
        .collect();

    // (question index, variant, text) in output order: originals, then kinds in config order.
    let mut jobs: Vec<(usize, Variant, String)> = dataset
        .questions
        .iter()
        .enumerate()
        .map(|(i, q)| (i, Variant::Original, q.text.clone()))
        .collect();
    for (kind, cfs) in &sets {
        for cf in cfs {
            jobs.push((by_id[cf.question_id.as_str()], Variant::Counterfactual(*kind), cf.text.clone()));
        }
    }
    let requests: Vec<VqaRequest> = jobs
        .iter()
        .map(|(i, _, text)| VqaRequest {
            image: dataset.questions[*i].image.clone(),
            question: text.clone(),
        })
        .collect();
    let parallelism = NonZeroUsize::new(cfg.parallelism).expect("validated: parallelism >= 1");
    let responses = answer_batch(&endpoint, &requests, parallelism).await;

    let mut grouped: BTreeMap<String, Vec<AnswerRecord>> = BTreeMap::new();
    let mut failed = 0;
    for ((i, variant, text), response) in jobs.iter().zip(&responses) {
        let q = &dataset.questions[*i];
        if let Err(e) = response {
            failed += 1;
            tracing::warn!(question = %q.id, %variant, error = %e, "model call failed");
        }
        let record = AnswerRecord::score_response(
            &q.id,
            *variant,
            text,
            response.as_ref(),
            &q.ground_truths,
            cfg.correctness,
        )
        .map_err(|e| CliError::Input(format!("question {}: {e}", q.id)))?;
        grouped.entry(variant.to_string()).or_default().push(record);
    }

    let dir = records_dir(&cfg.out);
    create_dir(&dir)?;
    write_jsonl(&dir.join("original.jsonl"), grouped.get("original").map_or(&[][..], Vec::as_slice))?;
    for (kind, _) in &sets {
        let name = kind.to_string();
        write_jsonl(&dir.join(format!("{name}.jsonl")), grouped.get(&name).map_or(&[][..], Vec::as_slice))?;
    }
    tracing::info!(requests = requests.len(), failed, "run complete");
    Ok(RunSummary {
        requests: requests.len(),
        failed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OmittedKind {
    pub kind: PerturbationKind,
    pub reason: String,
}

/// `report/accuracy.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AccuracyFile {
    pub correctness: CorrectnessRule,
    pub seed: u64,
    pub reports: Vec<AccuracyReport>,
    pub omitted: Vec<OmittedKind>,
}

pub struct ReportOutput {
    pub accuracy: AccuracyFile,
    pub rules: RuleReport,
}

/// Scores the recorded answers and mines rules from them.
pub fn cmd_report(cfg: &ExperimentConfig) -> Result<ReportOutput, CliError> {
    let records = records_dir(&cfg.out);
    let hint = "run `cfprobe run` first";
    let originals: Vec<AnswerRecord> = read_jsonl(&records.join("original.jsonl"), hint)?;

    let mut reports = Vec::new();
    let mut omitted = Vec::new();
    let mut locals: Vec<LocalExplanation> = Vec::new();
    let mut substitutions: Vec<SubstitutionRecord> = Vec::new();
    for &kind in &cfg.kinds {
        let cf_records: Vec<AnswerRecord> = read_jsonl(&records.join(format!("{kind}.jsonl")), hint)?;
        if cf_records.is_empty() {
            omitted.push(OmittedKind {
                kind,
                reason: "no counterfactual questions were generated".into(),
            });
            continue;
        }
        let cfs: Vec<CounterfactualQuestion> = read_jsonl(
            &perturbations_dir(&cfg.out).join(format!("{kind}.jsonl")),
            "run `cfprobe perturb` first",
        )?;
        let (outcomes, report) = match compare_runs(kind, &originals, &cf_records) {
            Ok(pair) => pair,
            Err(cfprobe_core::eval::EvalError::EmptyRecords) => {
                omitted.push(OmittedKind {
                    kind,
                    reason: "every model call for this kind failed".into(),
                });
                continue;
            }
            Err(e) => return Err(CliError::Input(format!("{kind}: {e}"))),
        };
        let kind_records: Vec<SubstitutionRecord> = cfs.into_iter().map(|c| c.record).collect();
        locals.extend(
            collect_locals(&outcomes, &kind_records).map_err(|e| CliError::Input(format!("{kind}: {e}")))?,
        );
        substitutions.extend(kind_records);
        reports.push(report);
    }

    if cfg.mining.anchor == AnchorMode::Hypernym {
        let graph = load_wordnet(cfg)?;
        locals = anchor_by_hypernym(&locals, &substitutions, &graph);
    }
    let params = cfg.mining.params();
    let rules = mine_rules(&locals, &params).map_err(|e| CliError::Config(e.to_string()))?;
    let rule_report = RuleReport {
        params,
        rules,
        locals,
    };
    let accuracy = AccuracyFile {
        correctness: cfg.correctness,
        seed: cfg.seed,
        reports,
        omitted,
    };

    let dir = report_dir(&cfg.out);
    create_dir(&dir)?;
    write_json(&dir.join("accuracy.json"), &accuracy)?;
    let md = dir.join("accuracy.md");
    std::fs::write(&md, render_accuracy(&accuracy)).map_err(CliError::io(&md))?;
    render_report(&rule_report, &dir).map_err(|e| CliError::Input(e.to_string()))?;
    Ok(ReportOutput {
        accuracy,
        rules: rule_report,
    })
}

fn pct(x: f64) -> String {
    format!("{:.1}", 100.0 * x)
}

fn reduction(r: &AccuracyReport) -> String {
    r.relative_reduction_pct.map_or_else(|| "n/a".to_owned(), |v| format!("{v:.1}"))
}

/// Markdown accuracy tables: one row per kind, plus a common/uncommon color split.
pub fn render_accuracy(file: &AccuracyFile) -> String {
    let mut out = String::from("# Accuracy\n\n");
    let _ = writeln!(out, "Correctness rule: {}. Seed: {}.\n", rule_name(file.correctness), file.seed);
    out.push_str("| Kind | N | acc_Q (%) | acc*_Q (%) | Reduction (%) | Changed | Failed |\n");
    out.push_str("|---|---:|---:|---:|---:|---:|---:|\n");
    for r in &file.reports {
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} | {} | {} |",
            r.kind,
            r.n_questions,
            pct(r.acc_q),
            pct(r.acc_star_q),
            reduction(r),
            r.n_changed,
            r.n_failed
        );
    }

    let find = |kind| file.reports.iter().find(|r| r.kind == kind);
    let color_rows: Vec<_> = [
        ("Color Maximal", PerturbationKind::ColorMaximal as fn(CandidateScope) -> PerturbationKind),
        ("Color Minimal", PerturbationKind::ColorMinimal),
    ]
    .into_iter()
    .filter_map(|(label, make)| {
        let common = find(make(CandidateScope::Common));
        let uncommon = find(make(CandidateScope::Uncommon));
        (common.is_some() || uncommon.is_some()).then_some((label, common, uncommon))
    })
    .collect();
    if !color_rows.is_empty() {
        out.push_str("\n## Colors\n\n");
        out.push_str("| Experiment | acc_Q common (%) | acc*_Q common (%) | acc_Q uncommon (%) | acc*_Q uncommon (%) |\n");
        out.push_str("|---|---:|---:|---:|---:|\n");
        let cell = |r: Option<&AccuracyReport>, f: fn(&AccuracyReport) -> f64| {
            r.map_or_else(|| "n/a".to_owned(), |r| pct(f(r)))
        };
        for (label, common, uncommon) in color_rows {
            let _ = writeln!(
                out,
                "| {label} | {} | {} | {} | {} |",
                cell(common, |r| r.acc_q),
                cell(common, |r| r.acc_star_q),
                cell(uncommon, |r| r.acc_q),
                cell(uncommon, |r| r.acc_star_q)
            );
        }
    }

    if !file.omitted.is_empty() {
        out.push_str("\n## Omitted kinds\n\n");
        for o in &file.omitted {
            let _ = writeln!(out, "- {}: {}", o.kind, o.reason);
        }
    }
    out
}

fn rule_name(rule: CorrectnessRule) -> &'static str {
    match rule {
        CorrectnessRule::ExactAny => "exact-any",
        CorrectnessRule::VqaSoft => "vqa-soft",
    }
}
