#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::OnceLock;

use cfprobe_core::color::{ColorMetric, ColorScopes, ColorTable};
use cfprobe_core::lingproc::Stoplist;
use cfprobe_core::perturb::KnowledgeBases;
use cfprobe_core::wordnet::{load, WordNetGraph};

pub fn wordnet_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/wordnet-3.0")
}

pub fn graph() -> &'static WordNetGraph {
    static GRAPH: OnceLock<WordNetGraph> = OnceLock::new();
    GRAPH.get_or_init(|| load(wordnet_dir()).expect("bundled WordNet loads"))
}

pub struct Fixture {
    pub colors: ColorTable,
    pub scopes: ColorScopes,
    pub stoplist: Stoplist,
}

/// Every palette color is in the common scope.
pub fn fixture() -> &'static Fixture {
    static FIXTURE: OnceLock<Fixture> = OnceLock::new();
    FIXTURE.get_or_init(|| {
        let colors = ColorTable::bundled(ColorMetric::EuclideanRgb);
        let names: Vec<String> = colors.entries().iter().map(|c| c.name.clone()).collect();
        let scopes = colors.build_scopes(names.iter().map(String::as_str));
        Fixture {
            colors,
            scopes,
            stoplist: Stoplist::bundled(),
        }
    })
}

pub fn kbs() -> KnowledgeBases<'static> {
    let f = fixture();
    KnowledgeBases {
        wordnet: graph(),
        colors: &f.colors,
        scopes: &f.scopes,
        stoplist: &f.stoplist,
    }
}
