//! Named-color palette and the color relatedness queries built on it.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// CSS4 named colors as shipped with common plotting libraries.
pub const BUNDLED_PALETTE: &str = include_str!("../data/css4_colors.csv");

#[derive(Debug, thiserror::Error)]
pub enum ColorError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: malformed entry {text:?}")]
    MalformedLine { line: usize, text: String },
    #[error("line {line}: malformed hex color {hex:?}")]
    MalformedHex { line: usize, hex: String },
    #[error("line {line}: duplicate color name {name:?}")]
    DuplicateName { line: usize, name: String },
    #[error("unknown color {0:?}")]
    UnknownColor(String),
    #[error("no substitute candidates for {0:?}")]
    NoCandidates(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rgb(pub u8, pub u8, pub u8);

impl Rgb {
    pub fn from_hex(hex: &str) -> Option<Rgb> {
        let digits = hex.strip_prefix('#')?;
        if digits.len() != 6 || !digits.bytes().all(|b| b.is_ascii_hexdigit()) {
            return None;
        }
        let channel = |i: usize| u8::from_str_radix(&digits[i..i + 2], 16).ok();
        Some(Rgb(channel(0)?, channel(2)?, channel(4)?))
    }

    pub fn to_hex(self) -> String {
        format!("#{:02X}{:02X}{:02X}", self.0, self.1, self.2)
    }

    /// CIE L*a*b* under D65 via linearized sRGB.
    pub fn to_lab(self) -> [f64; 3] {
        fn linear(c: u8) -> f64 {
            let c = c as f64 / 255.0;
            if c <= 0.04045 {
                c / 12.92
            } else {
                ((c + 0.055) / 1.055).powf(2.4)
            }
        }
        fn f(t: f64) -> f64 {
            const DELTA: f64 = 6.0 / 29.0;
            if t > DELTA * DELTA * DELTA {
                t.cbrt()
            } else {
                t / (3.0 * DELTA * DELTA) + 4.0 / 29.0
            }
        }
        let (r, g, b) = (linear(self.0), linear(self.1), linear(self.2));
        let x = 0.4124564 * r + 0.3575761 * g + 0.1804375 * b;
        let y = 0.2126729 * r + 0.7151522 * g + 0.0721750 * b;
        let z = 0.0193339 * r + 0.1191920 * g + 0.9503041 * b;
        let (fx, fy, fz) = (f(x / 0.95047), f(y / 1.0), f(z / 1.08883));
        [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NamedColor {
    pub name: String,
    pub rgb: Rgb,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ColorMetric {
    #[default]
    EuclideanRgb,
    DeltaE76Lab,
}

impl fmt::Display for ColorMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ColorMetric::EuclideanRgb => "euclidean-rgb",
            ColorMetric::DeltaE76Lab => "delta-e76-lab",
        })
    }
}

impl FromStr for ColorMetric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "euclidean-rgb" => Ok(ColorMetric::EuclideanRgb),
            "delta-e76-lab" => Ok(ColorMetric::DeltaE76Lab),
            other => Err(format!("unknown color metric {other:?}")),
        }
    }
}

pub fn distance(a: &NamedColor, b: &NamedColor, metric: ColorMetric) -> f64 {
    fn euclid(a: [f64; 3], b: [f64; 3]) -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    }
    match metric {
        ColorMetric::EuclideanRgb => {
            let v = |c: Rgb| [c.0 as f64, c.1 as f64, c.2 as f64];
            euclid(v(a.rgb), v(b.rgb))
        }
        ColorMetric::DeltaE76Lab => euclid(a.rgb.to_lab(), b.rgb.to_lab()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CandidateScope {
    /// Colors that occur in the dataset's question vocabulary.
    Common,
    /// Palette colors absent from the dataset's question vocabulary.
    Uncommon,
}

impl fmt::Display for CandidateScope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CandidateScope::Common => "common",
            CandidateScope::Uncommon => "uncommon",
        })
    }
}

/// Partition of the palette names by dataset vocabulary membership.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColorScopes {
    pub common: BTreeSet<String>,
    pub uncommon: BTreeSet<String>,
}

impl ColorScopes {
    pub fn get(&self, scope: CandidateScope) -> &BTreeSet<String> {
        match scope {
            CandidateScope::Common => &self.common,
            CandidateScope::Uncommon => &self.uncommon,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ColorTable {
    entries: Vec<NamedColor>,
    metric: ColorMetric,
}

impl ColorTable {
    /// Parses `name,#RRGGBB` lines. Blank lines are ignored; names are lowercased.
    pub fn parse(text: &str, metric: ColorMetric) -> Result<ColorTable, ColorError> {
        let mut entries = Vec::new();
        let mut seen = HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() {
                continue;
            }
            let (name, hex) = trimmed.split_once(',').ok_or_else(|| ColorError::MalformedLine {
                line,
                text: raw.to_owned(),
            })?;
            let name = name.trim().to_lowercase();
            if name.is_empty() {
                return Err(ColorError::MalformedLine {
                    line,
                    text: raw.to_owned(),
                });
            }
            let hex = hex.trim();
            let rgb = Rgb::from_hex(hex).ok_or_else(|| ColorError::MalformedHex {
                line,
                hex: hex.to_owned(),
            })?;
            if !seen.insert(name.clone()) {
                return Err(ColorError::DuplicateName { line, name });
            }
            entries.push(NamedColor { name, rgb });
        }
        Ok(ColorTable { entries, metric })
    }

    pub fn load(path: impl AsRef<Path>, metric: ColorMetric) -> Result<ColorTable, ColorError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ColorError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text, metric)
    }

    pub fn bundled(metric: ColorMetric) -> ColorTable {
        Self::parse(BUNDLED_PALETTE, metric).expect("bundled palette is well-formed")
    }

    pub fn entries(&self) -> &[NamedColor] {
        &self.entries
    }

    pub fn metric(&self) -> ColorMetric {
        self.metric
    }

    pub fn with_metric(mut self, metric: ColorMetric) -> ColorTable {
        self.metric = metric;
        self
    }

    pub fn get(&self, name: &str) -> Option<&NamedColor> {
        let name = name.to_lowercase();
        self.entries.iter().find(|c| c.name == name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.get(name).is_some()
    }

    pub fn distance(&self, a: &NamedColor, b: &NamedColor) -> f64 {
        distance(a, b, self.metric)
    }

    pub fn build_scopes<'a, I>(&self, vocabulary: I) -> ColorScopes
    where
        I: IntoIterator<Item = &'a str>,
    {
        let vocabulary: HashSet<String> = vocabulary.into_iter().map(str::to_lowercase).collect();
        let mut scopes = ColorScopes::default();
        for c in &self.entries {
            if vocabulary.contains(&c.name) {
                scopes.common.insert(c.name.clone());
            } else {
                scopes.uncommon.insert(c.name.clone());
            }
        }
        scopes
    }

    /// Candidates from `pool` other than `original` and its same-RGB aliases.
    fn candidates<'a, 'p>(
        &'a self,
        original: &'a NamedColor,
        pool: &'p BTreeSet<String>,
    ) -> impl Iterator<Item = (&'a NamedColor, f64)> + use<'a, 'p> {
        self.entries
            .iter()
            .filter(move |c| pool.contains(&c.name))
            .filter(move |c| c.name != original.name && c.rgb != original.rgb)
            .map(move |c| (c, self.distance(original, c)))
    }

    fn pick(
        &self,
        original: &str,
        pool: &BTreeSet<String>,
        farthest: bool,
    ) -> Result<&NamedColor, ColorError> {
        let original = self
            .get(original)
            .ok_or_else(|| ColorError::UnknownColor(original.to_owned()))?;
        let mut best: Option<(&NamedColor, f64)> = None;
        for (c, d) in self.candidates(original, pool) {
            let better = match best {
                None => true,
                Some((b, bd)) => {
                    let ord = if farthest { bd.total_cmp(&d) } else { d.total_cmp(&bd) };
                    ord.is_lt() || (ord.is_eq() && c.name < b.name)
                }
            };
            if better {
                best = Some((c, d));
            }
        }
        best.map(|(c, _)| c)
            .ok_or_else(|| ColorError::NoCandidates(original.name.clone()))
    }

    /// Least distant candidate in `pool`; ties go to the lexicographically smaller name.
    pub fn minimal_substitute(
        &self,
        original: &str,
        pool: &BTreeSet<String>,
    ) -> Result<&NamedColor, ColorError> {
        self.pick(original, pool, false)
    }

    /// Most distant candidate in `pool`; ties go to the lexicographically smaller name.
    pub fn maximal_substitute(
        &self,
        original: &str,
        pool: &BTreeSet<String>,
    ) -> Result<&NamedColor, ColorError> {
        self.pick(original, pool, true)
    }

    /// Names in `pool` eligible to replace `original`.
    pub fn candidate_names(&self, original: &str, pool: &BTreeSet<String>) -> Vec<String> {
        match self.get(original) {
            Some(o) => self.candidates(o, pool).map(|(c, _)| c.name.clone()).collect(),
            None => Vec::new(),
        }
    }
}
