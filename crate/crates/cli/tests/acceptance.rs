//! One PASS/FAIL line per acceptance criterion; runs without the libtest harness
//! so the lines always reach stdout.
//!
//! Criteria listed in [`KNOWN_RED`] are expected to fail with exactly the
//! recorded message; every other criterion must pass.

mod common;

use std::collections::{BTreeSet, HashMap, HashSet};
use std::num::NonZeroUsize;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::extract::State;
use axum::routing::{get, post};
use axum::{Json, Router};
use cfprobe::config::Overrides;
use cfprobe::pipeline;
use cfprobe_core::color::{CandidateScope, ColorMetric, ColorScopes, ColorTable, NamedColor, Rgb};
use cfprobe_core::eval::{normalize_answer, relative_reduction};
use cfprobe_core::explain::{mine_rules, LocalExplanation, MiningParams, Verdict};
use cfprobe_core::lingproc::{eligible_targets, tag_candidates, tokenize, Stoplist};
use cfprobe_core::model::{answer_batch, HttpModel, HttpModelConfig, ImageRef, VqaRequest};
use cfprobe_core::perturb::{candidates, perturb_question, perturb_text, validate_record, KnowledgeBases};
use cfprobe_core::wordnet::{index_key, load, PartOfSpeech, SynsetId, WordNetGraph};
use cfprobe_core::PerturbationKind;
use common::{snapshot, toy_config, toy_mismatches, wordnet_dir};
use proptest::strategy::Strategy;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

type Check = Result<(), String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($msg)+));
        }
    };
}

/// (criterion, exact failure message).
const KNOWN_RED: &[(&str, &str)] = &[(
    "reference-question-outputs",
    "hyponym-noun: \"labrador\" is not a candidate",
)];

struct Kbs {
    graph: WordNetGraph,
    colors: ColorTable,
    scopes: ColorScopes,
    stoplist: Stoplist,
}

impl Kbs {
    fn load() -> Kbs {
        let graph = load(wordnet_dir()).expect("bundled WordNet loads");
        let colors = ColorTable::bundled(ColorMetric::EuclideanRgb);
        let names: Vec<String> = colors.entries().iter().map(|c| c.name.clone()).collect();
        let scopes = colors.build_scopes(names.iter().map(String::as_str));
        Kbs {
            graph,
            colors,
            scopes,
            stoplist: Stoplist::bundled(),
        }
    }

    fn get(&self) -> KnowledgeBases<'_> {
        KnowledgeBases {
            wordnet: &self.graph,
            colors: &self.colors,
            scopes: &self.scopes,
            stoplist: &self.stoplist,
        }
    }
}

fn timed(limit: Option<Duration>, f: impl FnOnce() -> Check) -> (Check, Duration) {
    let start = Instant::now();
    let mut result = f();
    let elapsed = start.elapsed();
    if let (Ok(()), Some(limit)) = (&result, limit) {
        if elapsed > limit {
            result = Err(format!("took {elapsed:.2?}, limit {limit:?}"));
        }
    }
    (result, elapsed)
}

const TABLE_QUESTION: &str = "Do you see the white small dog?";

fn reference_question(kbs: &Kbs) -> Check {
    use PerturbationKind::*;
    let k = kbs.get();
    let tq = tag_candidates(&tokenize(TABLE_QUESTION).unwrap(), k.wordnet, k.stoplist);
    let common = CandidateScope::Common;
    let reference: [(PerturbationKind, Option<&str>); 8] = [
        (ColorMaximal(common), Some("black")),
        (ColorMinimal(common), Some("beige")),
        (SynonymAdjective, Some("tiny")),
        (SynonymVerb, Some("watch")),
        (HypernymNoun, Some("canine")),
        (HyponymNoun, Some("labrador")),
        (SiblingNoun, Some("wolf")),
        (DeletionNoun, None),
    ];
    let mut failures = Vec::new();
    for (kind, word) in reference {
        let cf = perturb_question("t1", &tq, kind, &k, 7).map_err(|e| format!("{kind}: skipped ({e:?})"))?;
        validate_record(&cf.record, &k).map_err(|e| format!("{kind}: {e}"))?;
        let pool: Vec<Option<String>> = eligible_targets(&tq, kind, k.colors)
            .into_iter()
            .flat_map(|i| candidates(&tq, i, kind, &k))
            .map(|c| c.replacement)
            .collect();
        if !pool.contains(&word.map(str::to_owned)) {
            failures.push(format!("{kind}: {:?} is not a candidate", word.unwrap_or("<deletion>")));
        }
        if kind == DeletionNoun && cf.record.original_word != "dog" {
            failures.push(format!("deletion removed {:?}", cf.record.original_word));
        }
    }
    if failures.is_empty() {
        Ok(())
    } else {
        Err(failures.join("; "))
    }
}

/// `(symbol, target offset)` noun pointers of every noun synset, parsed straight from `data.noun`.
fn raw_noun_pointers() -> HashMap<u64, Vec<(String, u64)>> {
    let text = std::fs::read_to_string(wordnet_dir().join("data.noun")).unwrap();
    let mut out = HashMap::new();
    for line in text.lines().filter(|l| !l.starts_with("  ")) {
        let head = line.split(" | ").next().unwrap();
        let f: Vec<&str> = head.split_whitespace().collect();
        let offset: u64 = f[0].parse().unwrap();
        let w_cnt = usize::from_str_radix(f[3], 16).unwrap();
        let p_at = 4 + 2 * w_cnt;
        let p_cnt: usize = f[p_at].parse().unwrap();
        let ptrs = (0..p_cnt)
            .map(|k| &f[p_at + 1 + 4 * k..p_at + 5 + 4 * k])
            .filter(|p| p[2] == "n")
            .map(|p| (p[0].to_owned(), p[1].parse().unwrap()))
            .collect();
        out.insert(offset, ptrs);
    }
    out
}

fn relation_oracle(graph: &WordNetGraph) -> Check {
    let raw = raw_noun_pointers();
    let follow = |off: u64, syms: &[&str]| -> Vec<u64> {
        raw[&off]
            .iter()
            .filter(|(s, _)| syms.contains(&s.as_str()))
            .map(|(_, t)| *t)
            .collect()
    };
    let offsets = |ids: Vec<SynsetId>| ids.into_iter().map(|i| i.offset).collect::<Vec<_>>();
    let mut keys: Vec<u64> = raw.keys().copied().collect();
    keys.sort();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut agree = 0;
    for &off in keys.choose_multiple(&mut rng, 100) {
        let s = SynsetId::new(PartOfSpeech::Noun, off);
        let hyper = follow(off, &["@", "@i"]);
        let mut seen = HashSet::new();
        let siblings: Vec<u64> = hyper
            .iter()
            .flat_map(|h| follow(*h, &["~", "~i"]))
            .filter(|c| *c != off && seen.insert(*c))
            .collect();
        let got = (
            offsets(graph.hypernyms(s).map_err(|e| e.to_string())?),
            offsets(graph.hyponyms(s).map_err(|e| e.to_string())?),
            offsets(graph.siblings(s).map_err(|e| e.to_string())?),
        );
        ensure!(got == (hyper, follow(off, &["~", "~i"]), siblings), "{s}: graph disagrees with the scan");
        agree += 1;
    }
    ensure!(agree == 100, "{agree}/100 agree");
    Ok(())
}

/// sRGB (D65) to L*a*b*, independent of the library.
fn oracle_lab(c: Rgb) -> (f64, f64, f64) {
    let lin = |v: u8| {
        let s = f64::from(v) / 255.0;
        if s > 0.04045 { ((s + 0.055) / 1.055).powf(2.4) } else { s / 12.92 }
    };
    let (r, g, b) = (lin(c.0), lin(c.1), lin(c.2));
    let x = (r * 0.4124564 + g * 0.3575761 + b * 0.1804375) / 0.95047;
    let y = r * 0.2126729 + g * 0.7151522 + b * 0.0721750;
    let z = (r * 0.0193339 + g * 0.1191920 + b * 0.9503041) / 1.08883;
    let f = |t: f64| {
        if t > 216.0 / 24389.0 { t.powf(1.0 / 3.0) } else { (24389.0 / 27.0 * t + 16.0) / 116.0 }
    };
    (116.0 * f(y) - 16.0, 500.0 * (f(x) - f(y)), 200.0 * (f(y) - f(z)))
}

fn oracle_distance(a: Rgb, b: Rgb, metric: ColorMetric) -> f64 {
    match metric {
        ColorMetric::EuclideanRgb => {
            let d = |x: u8, y: u8| (f64::from(x) - f64::from(y)).powi(2);
            (d(a.0, b.0) + d(a.1, b.1) + d(a.2, b.2)).sqrt()
        }
        ColorMetric::DeltaE76Lab => {
            let (l1, a1, b1) = oracle_lab(a);
            let (l2, a2, b2) = oracle_lab(b);
            ((l1 - l2).powi(2) + (a1 - a2).powi(2) + (b1 - b2).powi(2)).sqrt()
        }
    }
}

fn color_correctness() -> Check {
    for metric in [ColorMetric::EuclideanRgb, ColorMetric::DeltaE76Lab] {
        let t = ColorTable::bundled(metric);
        let d = |x: &str, y: &str| t.distance(t.get(x).unwrap(), t.get(y).unwrap());
        ensure!(d("violet", "orchid") < d("violet", "deepskyblue"), "{metric}: violet ordering");

        let pool: BTreeSet<String> = t.entries().iter().map(|c| c.name.clone()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let originals: Vec<&NamedColor> = t.entries().choose_multiple(&mut rng, 20).collect();
        for x in originals {
            let mut scored: Vec<(f64, &str)> = t
                .entries()
                .iter()
                .filter(|c| c.rgb != x.rgb)
                .map(|c| (oracle_distance(x.rgb, c.rgb, metric), c.name.as_str()))
                .collect();
            scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(b.1)));
            let far = scored.last().unwrap().0;
            let farthest = scored.iter().find(|(d, _)| (*d - far).abs() < 1e-9).unwrap().1;
            let lo = t.minimal_substitute(&x.name, &pool).map_err(|e| e.to_string())?;
            let hi = t.maximal_substitute(&x.name, &pool).map_err(|e| e.to_string())?;
            ensure!(lo.name == scored[0].1, "{metric} {}: minimal {} != {}", x.name, lo.name, scored[0].1);
            ensure!(hi.name == farthest, "{metric} {}: maximal {} != {farthest}", x.name, hi.name);
        }
    }
    Ok(())
}

fn end_to_end(rt: &tokio::runtime::Runtime) -> Check {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let mut timings = Vec::new();
    for dir in &dirs {
        let cfg = toy_config(dir.path(), Overrides::default());
        let start = Instant::now();
        rt.block_on(pipeline::cmd_run(&cfg)).map_err(|e| e.to_string())?;
        let report = pipeline::cmd_report(&cfg).map_err(|e| e.to_string())?;
        timings.push(start.elapsed());
        let bad = toy_mismatches(&report);
        ensure!(bad.is_empty(), "{}", bad.join("; "));
    }
    ensure!(snapshot(dirs[0].path()) == snapshot(dirs[1].path()), "reruns are not byte-identical");
    let slowest = timings.iter().max().unwrap();
    ensure!(*slowest < Duration::from_secs(5), "a run took {slowest:.2?}");
    Ok(())
}

fn reduction_formula() -> Check {
    let rows = [
        ("Synonym Verbs", 76.8, 64.1, 16.5),
        ("Hypernym VG", 54.6, 41.5, 24.0),
        ("Sibling", 76.9, 54.0, 29.8),
    ];
    for (name, acc, acc_star, expected) in rows {
        let got = relative_reduction(acc, acc_star).ok_or(format!("{name}: undefined"))?;
        ensure!((got - expected).abs() <= 0.1, "{name}: {got:.3} vs {expected}");
    }
    Ok(())
}

fn planted(kind: PerturbationKind, anchor: &str, n: usize, changed: usize) -> Vec<LocalExplanation> {
    (0..n)
        .map(|i| LocalExplanation {
            question_id: format!("{anchor}{i:02}"),
            kind,
            concept: anchor.into(),
            replacement: Some("black".into()),
            answer: "yes".into(),
            answer_counterfactual: if i < changed { "no".into() } else { "yes".into() },
            changed: i < changed,
            anchor: anchor.into(),
        })
        .collect()
}

fn rule_mining() -> Check {
    let max = PerturbationKind::ColorMaximal(CandidateScope::Common);
    let mut locals = planted(max, "gray", 6, 0);
    locals.extend(planted(max, "green", 5, 5));
    locals.extend(planted(max, "pink", 4, 0));
    locals.extend(planted(PerturbationKind::SynonymVerb, "hold", 6, 3));
    let rules = mine_rules(&locals, &MiningParams::default()).map_err(|e| e.to_string())?;
    let got: Vec<_> = rules
        .iter()
        .map(|r| (r.kind, r.anchor.as_str(), r.support, r.change_rate, r.verdict))
        .collect();
    let expected = vec![
        (max, "gray", 6, 0.0, Verdict::StableUnderPerturbation),
        (max, "green", 5, 1.0, Verdict::VolatileUnderPerturbation),
    ];
    ensure!(got == expected, "{got:?}");
    Ok(())
}

const NOUNS: &[&str] = &[
    "dog", "cat", "car", "shirt", "table", "man", "woman", "boy", "horse", "tree", "bus",
    "plate", "carrot", "banana", "dogs", "cars", "giraffes", "umbrella", "kite", "pizza",
];
const ADJECTIVES: &[&str] = &["small", "big", "old", "happy", "large", "wooden", "tall", "empty"];
const COLORS: &[&str] = &["white", "red", "blue", "green", "gray", "orange", "pink", "brown"];
const VERBS: &[&str] = &["see", "eat", "hold", "wear", "ride", "play", "carry", "watch"];

fn question_case() -> impl Strategy<Value = (String, PerturbationKind, u64)> {
    use proptest::prelude::*;
    let n = prop::sample::select(NOUNS);
    let text = (n.clone(), n, prop::sample::select(ADJECTIVES), prop::sample::select(COLORS))
        .prop_flat_map(|(n1, n2, a, c)| {
            (prop::sample::select(VERBS), 0..5usize).prop_map(move |(v, t)| match t {
                0 => format!("Do you see the {c} {a} {n1}?"),
                1 => format!("What color is the {n1}?"),
                2 => format!("Does the {n1} {v} the {c} {n2}?"),
                3 => format!("Is the {a} {n1} next to the {n2}?"),
                _ => format!("{n1} on the {c} {n2}"),
            })
        });
    (text, prop::sample::select(PerturbationKind::ALL.to_vec()), any::<u64>())
}

fn runner(cases: u32) -> TestRunner {
    TestRunner::new_with_rng(
        Config {
            cases,
            failure_persistence: None,
            ..Config::default()
        },
        TestRng::deterministic_rng(RngAlgorithm::ChaCha),
    )
}

fn words(text: &str) -> Vec<String> {
    tokenize(text).unwrap().tokens.into_iter().map(|t| t.lower).collect()
}

fn exactly_one_edit(kbs: &Kbs) -> Check {
    let k = kbs.get();
    runner(300)
        .run(&question_case(), |(text, kind, seed)| {
            if let Ok(cf) = perturb_text("p", &text, kind, &k, seed) {
                let r = &cf.record;
                let mut expected = words(&text);
                match &r.replacement {
                    Some(y) => drop(expected.splice(r.token_index..=r.token_index, words(y))),
                    None => drop(expected.remove(r.token_index)),
                }
                proptest::prop_assert_eq!(words(&cf.text), expected);
            }
            Ok(())
        })
        .map_err(|e| e.to_string())
}

fn pos_feasibility(kbs: &Kbs) -> Check {
    let k = kbs.get();
    runner(300)
        .run(&question_case(), |(text, kind, seed)| {
            if let Ok(cf) = perturb_text("p", &text, kind, &k, seed) {
                let r = &cf.record;
                proptest::prop_assert!(validate_record(r, &k).is_ok(), "{:?}", r);
                match kind.target_pos() {
                    None => proptest::prop_assert!(k.colors.contains(&r.original_word.to_lowercase())),
                    Some(pos) => {
                        proptest::prop_assert!(!k.wordnet.lookup(&r.original_lemma, pos).is_empty());
                        if let Some(y) = &r.replacement {
                            proptest::prop_assert_ne!(index_key(y), index_key(&r.original_lemma));
                        }
                    }
                }
            }
            Ok(())
        })
        .map_err(|e| e.to_string())
}

fn seeded_determinism(kbs: &Kbs) -> Check {
    let k = kbs.get();
    runner(300)
        .run(&question_case(), |(text, kind, seed)| {
            proptest::prop_assert_eq!(
                perturb_text("p", &text, kind, &k, seed),
                perturb_text("p", &text, kind, &k, seed)
            );
            Ok(())
        })
        .map_err(|e| e.to_string())
}

fn normalization_idempotence() -> Check {
    runner(500)
        .run(&"\\PC{0,30}", |raw| {
            let once = normalize_answer(&raw);
            proptest::prop_assert_eq!(normalize_answer(&once), once);
            Ok(())
        })
        .map_err(|e| e.to_string())
}

#[derive(Default)]
struct Counter {
    in_flight: AtomicUsize,
    peak: AtomicUsize,
}

async fn echo(State(c): State<Arc<Counter>>, Json(body): Json<Value>) -> Json<Value> {
    let now = c.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
    c.peak.fetch_max(now, Ordering::SeqCst);
    tokio::time::sleep(Duration::from_millis(10)).await;
    c.in_flight.fetch_sub(1, Ordering::SeqCst);
    Json(json!({"answer": body["question"]}))
}

fn batch_order_and_bound(rt: &tokio::runtime::Runtime) -> Check {
    rt.block_on(async {
        for parallelism in [1usize, 3] {
            let counter = Arc::new(Counter::default());
            let app = Router::new()
                .route("/answer", post(echo))
                .route("/health", get(|| async { Json(json!({"status": "ok"})) }))
                .with_state(counter.clone());
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
            let url = format!("http://{}", listener.local_addr().unwrap());
            tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });

            let model = HttpModel::new(HttpModelConfig::new(&url)).map_err(|e| e.to_string())?;
            let requests: Vec<VqaRequest> = (0..20)
                .map(|i| VqaRequest {
                    image: ImageRef { image_id: format!("img{i}"), locator: None },
                    question: format!("question {i}"),
                })
                .collect();
            let out = answer_batch(&model, &requests, NonZeroUsize::new(parallelism).unwrap()).await;
            for (i, r) in out.iter().enumerate() {
                let answer = &r.as_ref().map_err(|e| e.to_string())?.answer;
                ensure!(*answer == format!("question {i}"), "slot {i} holds {answer:?}");
            }
            let peak = counter.peak.load(Ordering::SeqCst);
            ensure!(peak <= parallelism, "peak {peak} with parallelism {parallelism}");
        }
        Ok(())
    })
}

fn main() {
    let rt = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(4)
        .enable_all()
        .build()
        .unwrap();
    let kbs = Kbs::load();
    let secs = |s| Some(Duration::from_secs(s));
    let results: Vec<(&str, (Check, Duration))> = vec![
        ("reference-question-outputs", timed(secs(5), || reference_question(&kbs))),
        ("relation-oracle-equivalence", timed(secs(10), || relation_oracle(&kbs.graph))),
        ("color-correctness", timed(None, color_correctness)),
        ("end-to-end-mock-run", timed(None, || end_to_end(&rt))),
        ("reduction-formula", timed(None, reduction_formula)),
        ("rule-mining", timed(None, rule_mining)),
        ("invariant-exactly-one-edit", timed(None, || exactly_one_edit(&kbs))),
        ("invariant-pos-feasibility", timed(None, || pos_feasibility(&kbs))),
        ("invariant-seeded-determinism", timed(None, || seeded_determinism(&kbs))),
        ("invariant-normalization-idempotence", timed(None, normalization_idempotence)),
        ("invariant-batch-order-and-parallelism", timed(None, || batch_order_and_bound(&rt))),
    ];

    let known: HashMap<&str, &str> = KNOWN_RED.iter().copied().collect();
    let mut unexpected = Vec::new();
    for (name, (result, elapsed)) in &results {
        match result {
            Ok(()) => println!("PASS {name} ({elapsed:.2?})"),
            Err(why) => println!("FAIL {name} ({elapsed:.2?}): {why}"),
        }
        match (result, known.get(name)) {
            (Ok(()), None) => {}
            (Err(why), Some(expected)) if why == expected => {}
            (Ok(()), Some(_)) => unexpected.push(format!("{name} now passes; drop it from KNOWN_RED")),
            (Err(why), _) => unexpected.push(format!("{name}: {why}")),
        }
    }
    let passed = results.iter().filter(|(_, (r, _))| r.is_ok()).count();
    println!("{passed}/{} criteria pass; {} known red", results.len(), KNOWN_RED.len());
    if !unexpected.is_empty() {
        eprintln!("unexpected acceptance results: {unexpected:#?}");
        std::process::exit(1);
    }
}
