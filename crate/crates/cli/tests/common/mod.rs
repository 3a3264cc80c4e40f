#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cfprobe::config::{ExperimentConfig, FileConfig, Overrides};

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn config_path() -> PathBuf {
    fixtures().join("config.toml")
}

pub fn wordnet_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/wordnet-3.0")
}

/// The toy experiment config, writing under `out`.
pub fn toy_config(out: &Path, overrides: Overrides) -> ExperimentConfig {
    let file = FileConfig::load(&config_path()).unwrap();
    ExperimentConfig::build(
        file,
        Overrides {
            out: Some(out.to_owned()),
            ..overrides
        },
    )
    .unwrap()
}

pub fn cfprobe(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cfprobe"))
        .args(args)
        .env_remove("CFPROBE_ENDPOINT_URL")
        .env("RUST_LOG", "error")
        .output()
        .unwrap()
}

pub fn exit_code(out: &Output) -> i32 {
    out.status.code().expect("process exited by signal")
}

/// Every file under `dir`, keyed by path relative to `dir`.
pub fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut files = BTreeMap::new();
    let mut stack = vec![dir.to_owned()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let bytes = std::fs::read(&path).unwrap();
                files.insert(path.strip_prefix(dir).unwrap().to_owned(), bytes);
            }
        }
    }
    files
}

/// Hand-computed toy outcomes: (kind, n, acc_q, acc*_q, reduction %, changed).
pub const TOY_EXPECTED: [(&str, usize, f64, f64, f64, usize); 10] = [
    ("color-maximal-common", 6, 5.0 / 6.0, 0.5, 40.0, 4),
    ("color-maximal-uncommon", 6, 5.0 / 6.0, 0.0, 100.0, 6),
    ("color-minimal-common", 6, 5.0 / 6.0, 5.0 / 6.0, 0.0, 0),
    ("color-minimal-uncommon", 6, 5.0 / 6.0, 0.0, 100.0, 6),
    ("synonym-adjective", 3, 2.0 / 3.0, 1.0, -50.0, 1),
    ("synonym-verb", 4, 1.0, 0.5, 50.0, 2),
    ("hypernym-noun", 11, 10.0 / 11.0, 10.0 / 11.0, 0.0, 0),
    ("hyponym-noun", 10, 0.9, 0.7, 200.0 / 9.0, 2),
    ("sibling-noun", 11, 10.0 / 11.0, 0.0, 100.0, 11),
    ("deletion-noun", 11, 10.0 / 11.0, 1.0 / 11.0, 90.0, 10),
];

pub const TOY_RULES: [&str; 7] = [
    "IF hypernym-noun perturbs dog THEN answer stays (rate 0.00, support 2)",
    "IF hyponym-noun perturbs dog THEN answer changes (rate 1.00, support 2)",
    "IF sibling-noun perturbs dog THEN answer changes (rate 1.00, support 2)",
    "IF color-maximal-common perturbs white THEN answer stays (rate 0.00, support 2)",
    "IF color-maximal-uncommon perturbs white THEN answer changes (rate 1.00, support 2)",
    "IF color-minimal-common perturbs white THEN answer stays (rate 0.00, support 2)",
    "IF color-minimal-uncommon perturbs white THEN answer changes (rate 1.00, support 2)",
];

/// Differences between a report and [`TOY_EXPECTED`] / [`TOY_RULES`]; empty when they agree.
pub fn toy_mismatches(report: &cfprobe::pipeline::ReportOutput) -> Vec<String> {
    let mut bad = Vec::new();
    let reports = &report.accuracy.reports;
    if reports.len() != TOY_EXPECTED.len() {
        bad.push(format!("{} kinds reported", reports.len()));
    }
    for (r, &(kind, n, acc, acc_star, red, changed)) in reports.iter().zip(&TOY_EXPECTED) {
        let close = |a: f64, b: f64| (a - b).abs() < 1e-9;
        let ok = r.kind.to_string() == kind
            && r.n_questions == n
            && close(r.acc_q, acc)
            && close(r.acc_star_q, acc_star)
            && r.relative_reduction_pct.is_some_and(|v| close(v, red))
            && r.n_changed == changed
            && r.n_failed == 0;
        if !ok {
            bad.push(format!("{kind}: got {r:?}"));
        }
    }
    let lines: Vec<String> = report.rules.rules.iter().map(|r| r.summary_line()).collect();
    if lines != TOY_RULES {
        bad.push(format!("rules: {lines:#?}"));
    }
    bad
}
