//! Labeled base-embedding corpora: taxonomy, on-disk format, single-label
//! filtering and stratified splitting.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::alloc::largest_remainder;
use crate::rng;
use crate::{Error, Result};

pub const CORPUS_FORMAT: &str = "emoretrofit-corpus-v1";

/// The 27 go_emotions categories plus neutral.
pub const GO_EMOTIONS: [&str; 28] = [
    "admiration",
    "amusement",
    "anger",
    "annoyance",
    "approval",
    "caring",
    "confusion",
    "curiosity",
    "desire",
    "disappointment",
    "disapproval",
    "disgust",
    "embarrassment",
    "excitement",
    "fear",
    "gratitude",
    "grief",
    "joy",
    "love",
    "nervousness",
    "optimism",
    "pride",
    "realization",
    "relief",
    "remorse",
    "sadness",
    "surprise",
    "neutral",
];

/// Ordered label set. A label's index is its position in the list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct EmotionTaxonomy {
    labels: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl EmotionTaxonomy {
    pub fn new(labels: Vec<String>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::Config("taxonomy has no labels".into()));
        }
        let mut index = HashMap::with_capacity(labels.len());
        for (i, l) in labels.iter().enumerate() {
            if l.is_empty() {
                return Err(Error::Config("taxonomy contains an empty label".into()));
            }
            if index.insert(l.clone(), i).is_some() {
                return Err(Error::Config(format!("duplicate taxonomy label {l:?}")));
            }
        }
        Ok(Self { labels, index })
    }

    pub fn go_emotions() -> Self {
        Self::new(GO_EMOTIONS.iter().map(|s| s.to_string()).collect())
            .expect("built-in taxonomy is valid")
    }

    /// `class_0`, `class_1`, ... for synthetic corpora.
    pub fn numbered(n: usize) -> Result<Self> {
        Self::new((0..n).map(|i| format!("class_{i}")).collect())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn name(&self, index: usize) -> &str {
        &self.labels[index]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }
}

impl Default for EmotionTaxonomy {
    fn default() -> Self {
        Self::go_emotions()
    }
}

impl TryFrom<Vec<String>> for EmotionTaxonomy {
    type Error = Error;
    fn try_from(v: Vec<String>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<EmotionTaxonomy> for Vec<String> {
    fn from(t: EmotionTaxonomy) -> Self {
        t.labels
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];
}

impl std::str::FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Config(format!("unknown split {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub id: String,
    pub text: Option<String>,
    pub label: usize,
    pub base: Vec<f64>,
    pub split: Option<Split>,
}

/// An immutable, validated set of labeled base embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    records: Vec<Record>,
    d_base: usize,
    taxonomy: EmotionTaxonomy,
    meta: Option<serde_json::Value>,
}

impl Corpus {
    pub fn new(taxonomy: EmotionTaxonomy, d_base: usize, records: Vec<Record>) -> Result<Self> {
        if d_base == 0 {
            return Err(Error::Config("d_base must be positive".into()));
        }
        for r in &records {
            validate_record(r, d_base, &taxonomy)?;
        }
        Ok(Self {
            records,
            d_base,
            taxonomy,
            meta: None,
        })
    }

    pub fn with_meta(mut self, meta: serde_json::Value) -> Self {
        self.meta = Some(meta);
        self
    }

    pub fn meta(&self) -> Option<&serde_json::Value> {
        self.meta.as_ref()
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn record(&self, i: usize) -> &Record {
        &self.records[i]
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn d_base(&self) -> usize {
        self.d_base
    }

    pub fn taxonomy(&self) -> &EmotionTaxonomy {
        &self.taxonomy
    }

    pub fn num_classes(&self) -> usize {
        self.taxonomy.len()
    }

    /// True when every record carries a split tag.
    pub fn is_split(&self) -> bool {
        !self.records.is_empty() && self.records.iter().all(|r| r.split.is_some())
    }

    pub fn indices_in(&self, split: Split) -> Vec<usize> {
        self.records
            .iter()
            .enumerate()
            .filter(|(_, r)| r.split == Some(split))
            .map(|(i, _)| i)
            .collect()
    }

    /// Per-class record counts over `indices`.
    pub fn class_counts(&self, indices: &[usize]) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes()];
        for &i in indices {
            counts[self.records[i].label] += 1;
        }
        counts
    }

    /// Record indices grouped by class, in corpus order.
    pub fn by_class(&self, indices: &[usize]) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); self.num_classes()];
        for &i in indices {
            groups[self.records[i].label].push(i);
        }
        groups
    }

    /// A new corpus holding the given records (in the given order).
    pub fn subset(&self, indices: &[usize]) -> Corpus {
        Corpus {
            records: indices.iter().map(|&i| self.records[i].clone()).collect(),
            d_base: self.d_base,
            taxonomy: self.taxonomy.clone(),
            meta: self.meta.clone(),
        }
    }

    pub fn with_splits(mut self, tags: &[Split]) -> Corpus {
        assert_eq!(tags.len(), self.records.len());
        for (r, &t) in self.records.iter_mut().zip(tags) {
            r.split = Some(t);
        }
        self
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_to(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        let header = Header {
            format_version: CORPUS_FORMAT.to_string(),
            d_base: Some(self.d_base),
            taxonomy: Some(self.taxonomy.clone()),
            meta: self.meta.clone(),
        };
        serde_json::to_writer(&mut *w, &header)?;
        w.write_all(b"\n")?;
        for r in &self.records {
            let line = RecordLine {
                id: r.id.clone(),
                label: self.taxonomy.name(r.label).to_string(),
                base: r.base.clone(),
                split: r.split,
                text: r.text.clone(),
            };
            serde_json::to_writer(&mut *w, &line)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

fn validate_record(r: &Record, d_base: usize, taxonomy: &EmotionTaxonomy) -> Result<()> {
    if r.base.len() != d_base {
        return Err(Error::DimensionMismatch {
            id: r.id.clone(),
            expected: d_base,
            found: r.base.len(),
        });
    }
    if r.label >= taxonomy.len() {
        return Err(Error::UnknownLabel(format!("#{}", r.label)));
    }
    if r.base.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { id: r.id.clone() });
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format_version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    d_base: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    taxonomy: Option<EmotionTaxonomy>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    meta: Option<serde_json::Value>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RecordLine {
    id: String,
    label: String,
    base: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    split: Option<Split>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    text: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLine {
    id: String,
    labels: Vec<String>,
    base: Vec<f64>,
    #[serde(default)]
    split: Option<Split>,
    #[serde(default)]
    text: Option<String>,
}

/// A record that may carry several labels (e.g. a raw multi-annotator export).
#[derive(Debug, Clone, PartialEq)]
pub struct RawRecord {
    pub id: String,
    pub text: Option<String>,
    pub labels: Vec<usize>,
    pub base: Vec<f64>,
    pub split: Option<Split>,
}

struct Lines<R> {
    inner: std::io::Lines<R>,
    line: usize,
}

impl<R: BufRead> Lines<R> {
    /// Next non-blank line with its 1-based number.
    fn next_line(&mut self) -> Result<Option<(usize, String)>> {
        for l in self.inner.by_ref() {
            self.line += 1;
            let l = l.map_err(|e| Error::Malformed {
                line: self.line,
                message: e.to_string(),
            })?;
            if !l.trim().is_empty() {
                return Ok(Some((self.line, l)));
            }
        }
        Ok(None)
    }
}

fn parse_line<T: serde::de::DeserializeOwned>(line: usize, text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Malformed {
        line,
        message: e.to_string(),
    })
}

fn read_header<R: BufRead>(lines: &mut Lines<R>) -> Result<(Header, EmotionTaxonomy)> {
    let (n, text) = lines.next_line()?.ok_or(Error::Malformed {
        line: 1,
        message: "missing header line".into(),
    })?;
    let header: Header = parse_line(n, &text)?;
    if header.format_version != CORPUS_FORMAT {
        return Err(Error::Version {
            expected: CORPUS_FORMAT.into(),
            found: header.format_version,
        });
    }
    let taxonomy = header.taxonomy.clone().unwrap_or_default();
    Ok((header, taxonomy))
}

fn resolve_dim(header: Option<usize>, expected: Option<usize>) -> Result<Option<usize>> {
    match (header, expected) {
        (Some(h), Some(e)) if h != e => Err(Error::DimensionMismatch {
            id: "<header>".into(),
            expected: e,
            found: h,
        }),
        (h, e) => Ok(e.or(h)),
    }
}

fn lookup(taxonomy: &EmotionTaxonomy, name: &str) -> Result<usize> {
    taxonomy
        .index_of(name)
        .ok_or_else(|| Error::UnknownLabel(name.to_string()))
}

/// Parses a corpus from a reader. Without `expected_dim` or a header
/// `d_base`, the dimension is taken from the first record.
pub fn read_corpus(reader: impl BufRead, expected_dim: Option<usize>) -> Result<Corpus> {
    let mut lines = Lines {
        inner: reader.lines(),
        line: 0,
    };
    let (header, taxonomy) = read_header(&mut lines)?;
    let mut d_base = resolve_dim(header.d_base, expected_dim)?;
    let mut records = Vec::new();
    while let Some((n, text)) = lines.next_line()? {
        let rl: RecordLine = parse_line(n, &text)?;
        let dim = *d_base.get_or_insert(rl.base.len());
        let record = Record {
            label: lookup(&taxonomy, &rl.label)?,
            id: rl.id,
            text: rl.text,
            base: rl.base,
            split: rl.split,
        };
        validate_record(&record, dim, &taxonomy)?;
        records.push(record);
    }
    let d_base = d_base.ok_or_else(|| Error::Empty("corpus has no records".into()))?;
    let mut corpus = Corpus::new(taxonomy, d_base, records)?;
    corpus.meta = header.meta;
    Ok(corpus)
}

pub fn load_corpus(path: &Path, expected_dim: Option<usize>) -> Result<Corpus> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_corpus(BufReader::new(file), expected_dim)
}

/// Parses a multi-label export: same header, records carry `labels: [..]`.
pub fn read_raw_records(
    reader: impl BufRead,
) -> Result<(EmotionTaxonomy, Option<usize>, Vec<RawRecord>)> {
    let mut lines = Lines {
        inner: reader.lines(),
        line: 0,
    };
    let (header, taxonomy) = read_header(&mut lines)?;
    let mut out = Vec::new();
    while let Some((n, text)) = lines.next_line()? {
        let rl: RawLine = parse_line(n, &text)?;
        let labels = rl
            .labels
            .iter()
            .map(|l| lookup(&taxonomy, l))
            .collect::<Result<Vec<_>>>()?;
        out.push(RawRecord {
            id: rl.id,
            text: rl.text,
            labels,
            base: rl.base,
            split: rl.split,
        });
    }
    Ok((taxonomy, header.d_base, out))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FilterReport {
    pub input: usize,
    pub kept: usize,
}

/// Keeps exactly the records annotated with one distinct label.
pub fn filter_single_label(
    taxonomy: EmotionTaxonomy,
    d_base: Option<usize>,
    raw: Vec<RawRecord>,
) -> Result<(Corpus, FilterReport)> {
    let input = raw.len();
    let kept: Vec<Record> = raw
        .into_iter()
        .filter_map(|r| {
            let distinct: HashSet<usize> = r.labels.iter().copied().collect();
            (distinct.len() == 1).then(|| Record {
                id: r.id,
                text: r.text,
                label: r.labels[0],
                base: r.base,
                split: r.split,
            })
        })
        .collect();
    if kept.is_empty() {
        return Err(Error::Empty(format!(
            "no single-label records among {input} inputs"
        )));
    }
    let d_base = d_base.unwrap_or(kept[0].base.len());
    let report = FilterReport {
        input,
        kept: kept.len(),
    };
    log::info!("single-label filter kept {} of {}", report.kept, report.input);
    Ok((Corpus::new(taxonomy, d_base, kept)?, report))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitWarning {
    pub label: String,
    pub count: usize,
}

/// Stratified per-class split with largest-remainder rounding.
///
/// A fully tagged corpus is returned unchanged. A class too small for every
/// split part to receive at least one record goes entirely to train and
/// produces a warning.
pub fn split(
    corpus: &Corpus,
    fractions: (f64, f64, f64),
    seed: u64,
) -> Result<(Corpus, Vec<SplitWarning>)> {
    let f = [fractions.0, fractions.1, fractions.2];
    if f.iter().any(|&x| !(x > 0.0)) || (f.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "split fractions must be positive and sum to 1, got {f:?}"
        )));
    }
    if corpus.is_split() {
        return Ok((corpus.clone(), Vec::new()));
    }
    if corpus.records.iter().any(|r| r.split.is_some()) {
        return Err(Error::Config(
            "corpus is partially tagged with splits".into(),
        ));
    }
    let weights: Vec<usize> = f.iter().map(|x| (x * 1e9).round() as usize).collect();
    let all: Vec<usize> = (0..corpus.len()).collect();
    let mut tags = vec![Split::Train; corpus.len()];
    let mut warnings = Vec::new();
    for (class, mut members) in corpus.by_class(&all).into_iter().enumerate() {
        if members.is_empty() {
            continue;
        }
        let counts = largest_remainder(members.len(), &weights);
        if counts.contains(&0) {
            let label = corpus.taxonomy.name(class).to_string();
            log::warn!(
                "class {label:?} has {} records, too few to populate every split; all assigned to train",
                members.len()
            );
            warnings.push(SplitWarning {
                label,
                count: members.len(),
            });
            continue;
        }
        members.shuffle(&mut rng::stream(seed, rng::DOMAIN_SPLIT, class as u64));
        let mut it = members.into_iter();
        for (part, &count) in Split::ALL.iter().zip(&counts) {
            for idx in it.by_ref().take(count) {
                tags[idx] = *part;
            }
        }
    }
    Ok((corpus.clone().with_splits(&tags), warnings))
}
