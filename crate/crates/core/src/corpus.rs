//! Corpora, stratified splits, labeled regimes and alternating batches.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seed;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("label space needs at least 2 categories, got {0}")]
    TooFewCategories(usize),
    #[error("invalid category name {0:?} (empty or duplicated)")]
    BadCategory(String),
    #[error("missing column {0:?}")]
    MissingColumn(&'static str),
    #[error("row {row}: label {label:?} is not in the label space")]
    UnknownLabel { row: usize, label: String },
    #[error("row {row}: empty text")]
    EmptyText { row: usize },
    #[error("row {row}: malformed row: {reason}")]
    Malformed { row: usize, reason: String },
    #[error("fraction {name} = {value} out of range")]
    BadFraction { name: &'static str, value: f64 },
    #[error("class {class:?} has {have} examples, needs at least {need}")]
    ClassTooSmall {
        class: String,
        have: usize,
        need: usize,
    },
    #[error("example {0} has no label")]
    Unlabeled(u64),
    #[error("labels_per_class must be positive")]
    ZeroLabelsPerClass,
    #[error("batch sizes must be positive")]
    ZeroBatchSize,
    #[error("{0} pool is empty")]
    EmptyPool(&'static str),
    #[error("manifest references unknown id {0}")]
    UnknownId(u64),
    #[error("duplicate id {0}")]
    DuplicateId(u64),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = CorpusError> = std::result::Result<T, E>;

/// Ordered category names; a category's index is its position.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct LabelSpace {
    names: Vec<String>,
}

impl LabelSpace {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Result<Self> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.len() < 2 {
            return Err(CorpusError::TooFewCategories(names.len()));
        }
        let mut seen = HashSet::new();
        for n in &names {
            if n.trim().is_empty() || !seen.insert(n.as_str()) {
                return Err(CorpusError::BadCategory(n.clone()));
            }
        }
        Ok(Self { names })
    }

    /// `positive, neutral, negative`.
    pub fn sentiment3() -> Self {
        Self::new(["positive", "neutral", "negative"]).expect("valid label space")
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, index: usize) -> &str {
        &self.names[index]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

impl TryFrom<Vec<String>> for LabelSpace {
    type Error = CorpusError;

    fn try_from(names: Vec<String>) -> Result<Self> {
        Self::new(names)
    }
}

impl From<LabelSpace> for Vec<String> {
    fn from(ls: LabelSpace) -> Self {
        ls.names
    }
}

/// One text item. Labels of examples moved into an unlabeled pool are kept
/// but hidden: [`Example::label`] returns `None` for them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Example {
    id: u64,
    text: String,
    label: Option<usize>,
    hidden: bool,
}

impl Example {
    pub fn new(id: u64, text: impl Into<String>, label: Option<usize>) -> Self {
        Self {
            id,
            text: text.into(),
            label,
            hidden: false,
        }
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    /// The label visible to training code.
    pub fn label(&self) -> Option<usize> {
        if self.hidden {
            None
        } else {
            self.label
        }
    }

    pub fn is_hidden(&self) -> bool {
        self.hidden
    }

    /// Gold label including hidden ones. Only pseudo-label diagnostics may
    /// call this.
    pub fn diagnostic_label(&self) -> Option<usize> {
        self.label
    }

    fn hide(mut self) -> Self {
        self.hidden = true;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    examples: Vec<Example>,
    label_space: LabelSpace,
}

impl Dataset {
    pub fn new(examples: Vec<Example>, label_space: LabelSpace) -> Result<Self> {
        let mut ids = HashSet::with_capacity(examples.len());
        for ex in &examples {
            if !ids.insert(ex.id) {
                return Err(CorpusError::DuplicateId(ex.id));
            }
            if ex.text.trim().is_empty() {
                return Err(CorpusError::EmptyText { row: ex.id as usize });
            }
            if let Some(l) = ex.label {
                if l >= label_space.len() {
                    return Err(CorpusError::UnknownLabel {
                        row: ex.id as usize,
                        label: l.to_string(),
                    });
                }
            }
        }
        Ok(Self {
            examples,
            label_space,
        })
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn label_space(&self) -> &LabelSpace {
        &self.label_space
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn ids(&self) -> Vec<u64> {
        self.examples.iter().map(Example::id).collect()
    }

    pub fn texts(&self) -> impl Iterator<Item = &str> {
        self.examples.iter().map(Example::text)
    }

    /// Visible labels; fails on any unlabeled or hidden example.
    pub fn labels(&self) -> Result<Vec<usize>> {
        self.examples
            .iter()
            .map(|e| e.label().ok_or(CorpusError::Unlabeled(e.id)))
            .collect()
    }

    /// Examples whose id is in `ids`, in dataset order.
    pub fn subset(&self, ids: &[u64]) -> Result<Dataset> {
        let wanted: HashSet<u64> = ids.iter().copied().collect();
        if wanted.len() != ids.len() {
            let mut seen = HashSet::new();
            let dup = ids.iter().find(|id| !seen.insert(**id)).copied();
            return Err(CorpusError::DuplicateId(dup.unwrap_or_default()));
        }
        let examples: Vec<Example> = self
            .examples
            .iter()
            .filter(|e| wanted.contains(&e.id))
            .cloned()
            .collect();
        if examples.len() != ids.len() {
            let have: HashSet<u64> = examples.iter().map(|e| e.id).collect();
            let missing = ids.iter().find(|id| !have.contains(id)).copied();
            return Err(CorpusError::UnknownId(missing.unwrap_or_default()));
        }
        Ok(Dataset {
            examples,
            label_space: self.label_space.clone(),
        })
    }

    /// The same examples with every label hidden.
    pub fn hidden(&self) -> Dataset {
        Dataset {
            examples: self.examples.iter().cloned().map(Example::hide).collect(),
            label_space: self.label_space.clone(),
        }
    }

    /// Per-class member indices (into `examples`), in class order.
    fn members_by_class(&self) -> Result<Vec<Vec<usize>>> {
        let mut by_class = vec![Vec::new(); self.label_space.len()];
        for (i, ex) in self.examples.iter().enumerate() {
            let l = ex.label().ok_or(CorpusError::Unlabeled(ex.id))?;
            by_class[l].push(i);
        }
        Ok(by_class)
    }

    fn pick(&self, mut idx: Vec<usize>) -> Dataset {
        idx.sort_unstable();
        Dataset {
            examples: idx.into_iter().map(|i| self.examples[i].clone()).collect(),
            label_space: self.label_space.clone(),
        }
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.label_space.len()];
        for ex in &self.examples {
            if let Some(l) = ex.diagnostic_label() {
                counts[l] += 1;
            }
        }
        counts
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Tsv,
    Jsonl,
}

impl Format {
    /// Guesses the format from a file extension.
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()? {
            "csv" => Some(Self::Csv),
            "tsv" => Some(Self::Tsv),
            "jsonl" | "ndjson" => Some(Self::Jsonl),
            _ => None,
        }
    }
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Self::Csv),
            "tsv" => Ok(Self::Tsv),
            "jsonl" => Ok(Self::Jsonl),
            other => Err(format!("unknown format {other:?} (expected csv, tsv or jsonl)")),
        }
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Csv => "csv",
            Self::Tsv => "tsv",
            Self::Jsonl => "jsonl",
        })
    }
}

pub fn load_dataset(path: &Path, format: Format, label_space: &LabelSpace) -> Result<Dataset> {
    let file = File::open(path)?;
    read_dataset(BufReader::new(file), format, label_space)
}

/// Parses a corpus with `text` and `label` fields. Row numbers in errors are
/// 1-based and count data rows only.
pub fn read_dataset<R: Read>(
    reader: R,
    format: Format,
    label_space: &LabelSpace,
) -> Result<Dataset> {
    let rows = match format {
        Format::Csv => read_delimited(reader, b',')?,
        Format::Tsv => read_delimited(reader, b'\t')?,
        Format::Jsonl => read_jsonl(reader)?,
    };
    let mut examples = Vec::with_capacity(rows.len());
    for (i, (text, label)) in rows.into_iter().enumerate() {
        let row = i + 1;
        if text.trim().is_empty() {
            return Err(CorpusError::EmptyText { row });
        }
        let label_idx = label_space
            .index_of(label.trim())
            .ok_or(CorpusError::UnknownLabel { row, label })?;
        examples.push(Example::new(i as u64, text, Some(label_idx)));
    }
    Dataset::new(examples, label_space.clone())
}

fn read_delimited<R: Read>(reader: R, delimiter: u8) -> Result<Vec<(String, String)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(true)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| CorpusError::Malformed {
            row: 0,
            reason: e.to_string(),
        })?
        .clone();
    let col = |name: &'static str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or(CorpusError::MissingColumn(name))
    };
    let (text_col, label_col) = (col("text")?, col("label")?);
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| CorpusError::Malformed {
            row: i + 1,
            reason: e.to_string(),
        })?;
        let get = |c: usize| {
            rec.get(c).map(str::to_owned).ok_or_else(|| CorpusError::Malformed {
                row: i + 1,
                reason: format!("expected at least {} fields, got {}", c + 1, rec.len()),
            })
        };
        rows.push((get(text_col)?, get(label_col)?));
    }
    Ok(rows)
}

fn read_jsonl<R: Read>(reader: R) -> Result<Vec<(String, String)>> {
    #[derive(Deserialize)]
    struct Row {
        text: Option<String>,
        label: Option<String>,
    }
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row = rows.len() + 1;
        let r: Row = serde_json::from_str(&line).map_err(|e| CorpusError::Malformed {
            row,
            reason: format!("line {}: {e}", i + 1),
        })?;
        let text = r.text.ok_or(CorpusError::MissingColumn("text"))?;
        let label = r.label.ok_or(CorpusError::MissingColumn("label"))?;
        rows.push((text, label));
    }
    Ok(rows)
}

fn check_fraction(name: &'static str, value: f64, lo_inclusive: bool) -> Result<()> {
    let lo_ok = if lo_inclusive { value >= 0.0 } else { value > 0.0 };
    if lo_ok && value < 1.0 {
        Ok(())
    } else {
        Err(CorpusError::BadFraction { name, value })
    }
}

/// Per class, shuffles members under `seed` and moves `floor(frac * n)` of
/// them out. Returns (kept, moved) member indices.
fn stratified_take(
    by_class: &[Vec<usize>],
    frac: f64,
    seed: u64,
) -> (Vec<usize>, Vec<usize>) {
    let (mut kept, mut moved) = (Vec::new(), Vec::new());
    for (c, members) in by_class.iter().enumerate() {
        let mut members = members.clone();
        members.shuffle(&mut seed::rng(seed::derive(seed, c as u64)));
        let n_out = (frac * members.len() as f64).floor() as usize;
        moved.extend_from_slice(&members[..n_out]);
        kept.extend_from_slice(&members[n_out..]);
    }
    (kept, moved)
}

/// Stratified train/validation/test split. The test share of each class is
/// `floor(test_frac * class size)`; validation is carved from what remains
/// with the same rule. Output datasets keep the input order.
pub fn split_train_val_test(
    d: &Dataset,
    test_frac: f64,
    val_frac: f64,
    seed: u64,
) -> Result<(Dataset, Dataset, Dataset)> {
    check_fraction("test_frac", test_frac, false)?;
    check_fraction("val_frac", val_frac, true)?;
    let by_class = d.members_by_class()?;
    let need = if val_frac > 0.0 { 2 } else { 1 };
    for (c, members) in by_class.iter().enumerate() {
        if members.len() < need {
            return Err(CorpusError::ClassTooSmall {
                class: d.label_space.name(c).to_owned(),
                have: members.len(),
                need,
            });
        }
    }
    let (train_idx, test_idx) = stratified_take(&by_class, test_frac, seed::derive(seed, 1));
    let keep: HashSet<usize> = train_idx.iter().copied().collect();
    let train_by_class: Vec<Vec<usize>> = by_class
        .iter()
        .map(|m| m.iter().copied().filter(|i| keep.contains(i)).collect())
        .collect();
    let (train_idx, val_idx) =
        stratified_take(&train_by_class, val_frac, seed::derive(seed, 2));
    Ok((d.pick(train_idx), d.pick(val_idx), d.pick(test_idx)))
}

/// How many labeled examples each class gets in a training regime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegimeSpec {
    pub labels_per_class: usize,
    pub seed: u64,
}

/// Samples `labels_per_class` examples per class without replacement as the
/// labeled set; the rest becomes the unlabeled pool with hidden labels.
pub fn make_regime(train: &Dataset, spec: RegimeSpec) -> Result<(Dataset, Dataset)> {
    if spec.labels_per_class == 0 {
        return Err(CorpusError::ZeroLabelsPerClass);
    }
    let by_class = train.members_by_class()?;
    let mut labeled = Vec::new();
    let mut unlabeled = Vec::new();
    for (c, members) in by_class.iter().enumerate() {
        if members.len() < spec.labels_per_class {
            return Err(CorpusError::ClassTooSmall {
                class: train.label_space.name(c).to_owned(),
                have: members.len(),
                need: spec.labels_per_class,
            });
        }
        let mut members = members.clone();
        members.shuffle(&mut seed::rng(seed::derive(spec.seed, c as u64)));
        labeled.extend_from_slice(&members[..spec.labels_per_class]);
        unlabeled.extend_from_slice(&members[spec.labels_per_class..]);
    }
    Ok((train.pick(labeled), train.pick(unlabeled).hidden()))
}

/// One optimizer step's worth of data.
#[derive(Debug, Clone)]
pub struct Batch<'a> {
    pub labeled: Vec<(&'a Example, usize)>,
    pub unlabeled: Vec<&'a Example>,
}

/// One epoch: a shuffled pass over the unlabeled pool in chunks of `B_u`,
/// each paired with `B_l` labeled examples drawn from a cycling,
/// reshuffled-on-wrap order over the labeled set.
pub struct BatchIter<'a> {
    labeled: &'a [Example],
    labels: Vec<usize>,
    unlabeled_order: Vec<usize>,
    unlabeled: &'a [Example],
    labeled_order: Vec<usize>,
    labeled_pos: usize,
    labeled_rng: rand_chacha::ChaCha8Rng,
    b_l: usize,
    b_u: usize,
    cursor: usize,
}

pub fn batch_iterator<'a>(
    labeled: &'a Dataset,
    unlabeled: &'a Dataset,
    b_l: usize,
    b_u: usize,
    epoch_seed: u64,
) -> Result<BatchIter<'a>> {
    if b_l == 0 || b_u == 0 {
        return Err(CorpusError::ZeroBatchSize);
    }
    if labeled.is_empty() {
        return Err(CorpusError::EmptyPool("labeled"));
    }
    if unlabeled.is_empty() {
        return Err(CorpusError::EmptyPool("unlabeled"));
    }
    let labels = labeled.labels()?;
    let mut unlabeled_order: Vec<usize> = (0..unlabeled.len()).collect();
    unlabeled_order.shuffle(&mut seed::rng(seed::derive(epoch_seed, 1)));
    let mut labeled_rng = seed::rng(seed::derive(epoch_seed, 2));
    let mut labeled_order: Vec<usize> = (0..labeled.len()).collect();
    labeled_order.shuffle(&mut labeled_rng);
    Ok(BatchIter {
        labeled: labeled.examples(),
        labels,
        unlabeled_order,
        unlabeled: unlabeled.examples(),
        labeled_order,
        labeled_pos: 0,
        labeled_rng,
        b_l,
        b_u,
        cursor: 0,
    })
}

impl<'a> BatchIter<'a> {
    pub fn batches_per_epoch(&self) -> usize {
        self.unlabeled.len().div_ceil(self.b_u)
    }

    fn next_labeled(&mut self) -> (&'a Example, usize) {
        if self.labeled_pos == self.labeled_order.len() {
            self.labeled_order.shuffle(&mut self.labeled_rng);
            self.labeled_pos = 0;
        }
        let i = self.labeled_order[self.labeled_pos];
        self.labeled_pos += 1;
        (&self.labeled[i], self.labels[i])
    }
}

impl<'a> Iterator for BatchIter<'a> {
    type Item = Batch<'a>;

    fn next(&mut self) -> Option<Batch<'a>> {
        if self.cursor >= self.unlabeled_order.len() {
            return None;
        }
        let end = (self.cursor + self.b_u).min(self.unlabeled_order.len());
        let unlabeled = self.unlabeled_order[self.cursor..end]
            .iter()
            .map(|&i| &self.unlabeled[i])
            .collect();
        self.cursor = end;
        let labeled = (0..self.b_l).map(|_| self.next_labeled()).collect();
        Some(Batch { labeled, unlabeled })
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestLine {
    id: u64,
}

/// Writes one `{"id": n}` line per example.
pub fn write_id_manifest(path: &Path, d: &Dataset) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for id in d.ids() {
        serde_json::to_writer(&mut w, &ManifestLine { id })?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_id_manifest(path: &Path) -> Result<Vec<u64>> {
    let reader = BufReader::new(File::open(path)?);
    let mut ids = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let m: ManifestLine = serde_json::from_str(&line).map_err(|e| CorpusError::Malformed {
            row: i + 1,
            reason: e.to_string(),
        })?;
        ids.push(m.id);
    }
    Ok(ids)
}

/// Per-class example counts keyed by category name, for logs.
pub fn class_histogram(d: &Dataset) -> BTreeMap<String, usize> {
    d.class_counts()
        .into_iter()
        .enumerate()
        .map(|(c, n)| (d.label_space.name(c).to_owned(), n))
        .collect()
}
