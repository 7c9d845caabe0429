//! Config files, run manifests and the batch commands behind the `scr`
//! binary.
//!
//! Every command reads a [`RunConfig`] and writes deterministically named
//! files under its `out_dir`:
//!
//! | command   | outputs |
//! |-----------|---------|
//! | `prepare` | `splits/{train,val,test,regime}.jsonl`, `prepare.json` |
//! | `augment` | the candidate cache (`cache.jsonl` unless configured) |
//! | `train`   | `model.ckpt`, `epoch_log.csv`, `vocab.tsv`, `train.json` |
//! | `eval`    | `metrics_<split>.csv`, `confusion_<split>.csv` |
//! | `report`  | `trend.csv`, `tokens_<class>.csv`, `tokens_strong_<ee/ce>.csv` |
//!
//! `prepare.json` records the SHA-256 of the input corpus. Later commands
//! recompute it and refuse to run on a modified file unless forced.

use std::collections::{BTreeMap, HashSet};
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::augmentor::{
    AugmentCache, AugmentationRecord, AugmentError, AugmenterConfig, CandidateSource, MockSource,
    PromptTemplate, Strategy, SynonymLexicon, MOCK_MODEL_ID,
};
use crate::corpus::{
    self, load_dataset, make_regime, read_id_manifest, split_train_val_test, write_id_manifest,
    CorpusError, Dataset, Format, LabelSpace, RegimeSpec,
};
use crate::encoder::{load_checkpoint, save_checkpoint, EncoderError, ModelDims, ModelParams, Vocab};
use crate::metrics::{token_frequency_report, write_token_report_csv, MetricsError};
use crate::seed::{self, stream};
use crate::trainer::{
    evaluate, fit_with, read_epoch_log, CandidateTable, EpochLog, TrainConfig, TrainData,
    TrainError, TrainStrategy, EPOCH_LOG_HEADER,
};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config {path}: {reason}")]
    Config { path: PathBuf, reason: String },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("{what} not found: {path}")]
    Missing { what: &'static str, path: PathBuf },
    #[error(
        "input {path} changed since prepare (sha256 {expected} -> {actual}); rerun prepare or pass --force"
    )]
    DigestMismatch {
        path: PathBuf,
        expected: String,
        actual: String,
    },
    #[error("{0} is empty")]
    EmptyLog(PathBuf),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Augment(#[from] AugmentError),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_owned(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Labeled corpus with `text` and `label` fields.
    pub input: Option<PathBuf>,
    /// Guessed from the input extension when absent.
    pub format: Option<Format>,
    pub labels: LabelSpace,
    pub test_frac: f64,
    /// Share of the remaining training data held out for early stopping.
    pub val_frac: f64,
    /// Synonym lexicon for weak views and the offline mock; builtin if absent.
    pub lexicon: Option<PathBuf>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            input: None,
            format: None,
            labels: LabelSpace::sentiment3(),
            test_frac: 0.2,
            val_frac: 0.1,
            lexicon: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegimeConfig {
    pub labels_per_class: usize,
}

impl Default for RegimeConfig {
    fn default() -> Self {
        Self { labels_per_class: 200 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PromptConfig {
    pub ee: Option<PathBuf>,
    pub ce: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub embed: usize,
    pub hidden: usize,
    pub max_vocab: usize,
    pub min_freq: u64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            embed: 64,
            hidden: 128,
            max_vocab: 50_000,
            min_freq: 1,
        }
    }
}

/// One experiment. Relative paths in a config file resolve against the
/// file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub out_dir: PathBuf,
    /// Candidate cache; `<out_dir>/cache.jsonl` when absent.
    pub cache: Option<PathBuf>,
    /// Use the deterministic offline rewriter instead of the LLM.
    pub offline_mock: bool,
    pub data: DataConfig,
    pub regime: RegimeConfig,
    pub augment: AugmenterConfig,
    pub prompts: PromptConfig,
    pub encoder: EncoderConfig,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            out_dir: PathBuf::from("run"),
            cache: None,
            offline_mock: false,
            data: DataConfig::default(),
            regime: RegimeConfig::default(),
            augment: AugmenterConfig::default(),
            prompts: PromptConfig::default(),
            encoder: EncoderConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let src = fs::read_to_string(path).map_err(io_err(path))?;
        let mut cfg: Self = toml::from_str(&src).map_err(|e| CliError::Config {
            path: path.to_owned(),
            reason: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config is representable as TOML")
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.out_dir);
        for p in [
            &mut self.cache,
            &mut self.data.input,
            &mut self.data.lexicon,
            &mut self.prompts.ee,
            &mut self.prompts.ce,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
    }

    /// Checks values and that every referenced auxiliary file exists.
    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.augment.validate()?;
        if self.regime.labels_per_class == 0 {
            return Err(CliError::Invalid("regime.labels_per_class must be at least 1".into()));
        }
        if self.encoder.embed == 0 || self.encoder.hidden == 0 || self.encoder.max_vocab < 2 {
            return Err(CliError::Invalid(
                "encoder.embed and encoder.hidden must be positive, encoder.max_vocab at least 2".into(),
            ));
        }
        let files = [
            ("lexicon", &self.data.lexicon),
            ("ee prompt", &self.prompts.ee),
            ("ce prompt", &self.prompts.ce),
        ];
        for (what, p) in files {
            if let Some(p) = p {
                if !p.is_file() {
                    return Err(CliError::Missing { what, path: p.clone() });
                }
            }
        }
        Ok(())
    }

    pub fn cache_path(&self) -> PathBuf {
        self.cache.clone().unwrap_or_else(|| self.out_dir.join("cache.jsonl"))
    }

    pub fn splits_dir(&self) -> PathBuf {
        self.out_dir.join("splits")
    }

    pub fn lexicon(&self) -> Result<SynonymLexicon> {
        Ok(match &self.data.lexicon {
            Some(p) => SynonymLexicon::load(p)?,
            None => SynonymLexicon::builtin(),
        })
    }

    /// Model id the cache is keyed under for this run.
    pub fn source_model_id(&self) -> &str {
        if self.offline_mock {
            MOCK_MODEL_ID
        } else {
            &self.augment.model_id
        }
    }

    pub fn mock_source(&self) -> Result<MockSource> {
        Ok(MockSource::new(
            self.lexicon()?,
            seed::derive(self.train.master_seed, stream::MOCK),
        ))
    }

    pub fn prompt_templates(&self) -> Result<Vec<PromptTemplate>> {
        let mut out = Vec::new();
        for (s, p) in [(Strategy::Ee, &self.prompts.ee), (Strategy::Ce, &self.prompts.ce)] {
            if let Some(p) = p {
                out.push(PromptTemplate::load(s, p)?);
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256: String,
}

impl FileDigest {
    pub fn of(path: &Path) -> Result<Self> {
        Ok(Self {
            path: path.to_owned(),
            sha256: sha256_file(path)?,
        })
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// What a command ran with and what it produced.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub code_version: String,
    pub config: RunConfig,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: BTreeMap<String, FileDigest>,
    pub outputs: BTreeMap<String, FileDigest>,
    pub started_at: DateTime<Utc>,
    pub finished_at: DateTime<Utc>,
    #[serde(default)]
    pub summary: serde_json::Value,
}

impl RunManifest {
    fn begin(command: &str, cfg: &RunConfig) -> Self {
        let master = cfg.train.master_seed;
        let seeds = [
            ("master", master),
            ("split", seed::derive(master, stream::SPLIT)),
            ("regime", seed::derive(master, stream::REGIME)),
            ("init", seed::derive(master, stream::INIT)),
            ("mock", seed::derive(master, stream::MOCK)),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_owned(), v))
        .collect();
        let now = Utc::now();
        Self {
            command: command.to_owned(),
            code_version: env!("CARGO_PKG_VERSION").to_owned(),
            config: cfg.clone(),
            seeds,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            started_at: now,
            finished_at: now,
            summary: serde_json::Value::Null,
        }
    }

    fn finish(mut self, path: &Path) -> Result<Self> {
        self.finished_at = Utc::now();
        let mut w = BufWriter::new(File::create(path).map_err(io_err(path))?);
        serde_json::to_writer_pretty(&mut w, &self)?;
        w.write_all(b"\n").and_then(|_| w.flush()).map_err(io_err(path))?;
        Ok(self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.is_file() {
            return Err(CliError::Missing {
                what: "manifest",
                path: path.to_owned(),
            });
        }
        let src = fs::read_to_string(path).map_err(io_err(path))?;
        Ok(serde_json::from_str(&src)?)
    }
}

fn create_dir(p: &Path) -> Result<()> {
    fs::create_dir_all(p).map_err(io_err(p))
}

fn input_format(cfg: &RunConfig, input: &Path) -> Result<Format> {
    cfg.data.format.or_else(|| Format::from_path(input)).ok_or_else(|| {
        CliError::Invalid(format!(
            "cannot infer the format of {}; set data.format",
            input.display()
        ))
    })
}

const SPLITS: [&str; 4] = ["train", "val", "test", "regime"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PrepareSummary {
    pub train: usize,
    pub val: usize,
    pub test: usize,
    pub labeled: usize,
    pub unlabeled: usize,
    pub labeled_per_class: BTreeMap<String, usize>,
}

/// Splits the corpus and samples the labeled regime. Refuses to overwrite a
/// previous preparation of a different input unless `force`.
pub fn cmd_prepare(cfg: &RunConfig, force: bool) -> Result<PrepareSummary> {
    cfg.validate()?;
    let input = cfg
        .data
        .input
        .clone()
        .ok_or_else(|| CliError::Invalid("no input corpus (data.input or --input)".into()))?;
    if !input.is_file() {
        return Err(CliError::Missing {
            what: "input corpus",
            path: input,
        });
    }
    let manifest_path = cfg.out_dir.join("prepare.json");
    let digest = FileDigest::of(&input)?;
    if !force && manifest_path.is_file() {
        let old = RunManifest::load(&manifest_path)?;
        if let Some(prev) = old.inputs.get("corpus") {
            if prev.sha256 != digest.sha256 {
                return Err(CliError::DigestMismatch {
                    path: input,
                    expected: prev.sha256.clone(),
                    actual: digest.sha256,
                });
            }
        }
    }
    let mut manifest = RunManifest::begin("prepare", cfg);
    let format = input_format(cfg, &input)?;
    let data = load_dataset(&input, format, &cfg.data.labels)?;
    let master = cfg.train.master_seed;
    let (train, val, test) = split_train_val_test(
        &data,
        cfg.data.test_frac,
        cfg.data.val_frac,
        seed::derive(master, stream::SPLIT),
    )?;
    let (labeled, unlabeled) = make_regime(
        &train,
        RegimeSpec {
            labels_per_class: cfg.regime.labels_per_class,
            seed: seed::derive(master, stream::REGIME),
        },
    )?;
    let dir = cfg.splits_dir();
    create_dir(&dir)?;
    for (name, d) in SPLITS.iter().zip([&train, &val, &test, &labeled]) {
        let p = dir.join(format!("{name}.jsonl"));
        write_id_manifest(&p, d)?;
        manifest.outputs.insert((*name).to_owned(), FileDigest::of(&p)?);
    }
    manifest.inputs.insert("corpus".into(), digest);
    let summary = PrepareSummary {
        train: train.len(),
        val: val.len(),
        test: test.len(),
        labeled: labeled.len(),
        unlabeled: unlabeled.len(),
        labeled_per_class: corpus::class_histogram(&labeled),
    };
    manifest.summary = serde_json::to_value(&summary)?;
    manifest.finish(&manifest_path)?;
    Ok(summary)
}

/// The splits of a prepared run, reloaded from the corpus and id manifests.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub manifest: RunManifest,
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
    pub labeled: Dataset,
    /// Labels hidden.
    pub unlabeled: Dataset,
}

impl Prepared {
    pub fn load(out_dir: &Path, force: bool) -> Result<Self> {
        let manifest = RunManifest::load(&out_dir.join("prepare.json"))?;
        let corpus = manifest
            .inputs
            .get("corpus")
            .ok_or_else(|| CliError::Invalid("prepare.json lists no corpus".into()))?;
        let input = &corpus.path;
        if !input.is_file() {
            return Err(CliError::Missing {
                what: "input corpus",
                path: input.clone(),
            });
        }
        let actual = sha256_file(input)?;
        if actual != corpus.sha256 && !force {
            return Err(CliError::DigestMismatch {
                path: input.clone(),
                expected: corpus.sha256.clone(),
                actual,
            });
        }
        let cfg = &manifest.config;
        let data = load_dataset(input, input_format(cfg, input)?, &cfg.data.labels)?;
        let dir = out_dir.join("splits");
        let read = |name: &str| -> Result<Dataset> {
            let p = dir.join(format!("{name}.jsonl"));
            if !p.is_file() {
                return Err(CliError::Missing {
                    what: "split manifest",
                    path: p,
                });
            }
            Ok(data.subset(&read_id_manifest(&p)?)?)
        };
        let (train, val, test, labeled) = (read("train")?, read("val")?, read("test")?, read("regime")?);
        let in_regime: HashSet<u64> = labeled.ids().into_iter().collect();
        let rest: Vec<u64> = train.ids().into_iter().filter(|id| !in_regime.contains(id)).collect();
        let unlabeled = train.subset(&rest)?.hidden();
        Ok(Self {
            manifest,
            train,
            val,
            test,
            labeled,
            unlabeled,
        })
    }

    pub fn split(&self, name: &str) -> Result<&Dataset> {
        match name {
            "train" => Ok(&self.train),
            "val" => Ok(&self.val),
            "test" => Ok(&self.test),
            "labeled" | "regime" => Ok(&self.labeled),
            other => Err(CliError::Invalid(format!(
                "unknown split {other:?} (expected train, val, test or labeled)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct AugmentSummary {
    /// Distinct unlabeled texts.
    pub texts: usize,
    pub fetched: usize,
    pub cached: usize,
}

/// Fills the cache with `k` candidates for every unlabeled text, using up to
/// `concurrency` worker threads. Records are appended as soon as they arrive,
/// so a failed run keeps everything fetched before the failure.
pub fn cmd_augment(
    cfg: &RunConfig,
    strategy: Strategy,
    source: &dyn CandidateSource,
    concurrency: usize,
    force: bool,
    progress: &(dyn Fn(usize, usize) + Sync),
) -> Result<AugmentSummary> {
    cfg.validate()?;
    let prepared = Prepared::load(&cfg.out_dir, force)?;
    let cache_path = cfg.cache_path();
    if let Some(dir) = cache_path.parent() {
        create_dir(dir)?;
    }
    let cache = AugmentCache::open(&cache_path)?;
    let k = cfg.augment.k;

    let mut seen = HashSet::new();
    let texts: Vec<&str> = prepared
        .unlabeled
        .texts()
        .filter(|t| seen.insert(crate::augmentor::normalize_text(t)))
        .collect();
    let (todo, cached): (Vec<&str>, Vec<&str>) = texts
        .iter()
        .partition(|t| cache.lookup(t, strategy, source.model_id(), k).is_none());

    let cache = Mutex::new(cache);
    let next = AtomicUsize::new(0);
    let done = AtomicUsize::new(0);
    let failed = AtomicBool::new(false);
    let first_error: Mutex<Option<AugmentError>> = Mutex::new(None);
    let workers = concurrency.clamp(1, todo.len().max(1));
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| {
                while !failed.load(Ordering::SeqCst) {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    let Some(text) = todo.get(i) else { break };
                    // Texts are distinct, so fetching outside the lock is race free.
                    let res = source.fetch(text, strategy, k).and_then(|cands| {
                        let mut c = cache.lock().expect("cache lock");
                        let rec = AugmentationRecord::new(
                            text,
                            strategy,
                            source.model_id(),
                            cands,
                            Utc::now(),
                        );
                        c.append(rec)
                    });
                    match res {
                        Ok(()) => progress(done.fetch_add(1, Ordering::SeqCst) + 1, todo.len()),
                        Err(e) => {
                            failed.store(true, Ordering::SeqCst);
                            first_error.lock().expect("error lock").get_or_insert(e);
                        }
                    }
                }
            });
        }
    });
    if let Some(e) = first_error.into_inner().expect("error lock") {
        return Err(e.into());
    }
    Ok(AugmentSummary {
        texts: texts.len(),
        fetched: todo.len(),
        cached: cached.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainSummary {
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_val_acc: f64,
    pub stopped_early: bool,
    pub checkpoint: PathBuf,
}

/// Trains from the prepared splits and writes the best checkpoint, the
/// per-epoch log (streamed while training), the vocabulary and `train.json`.
pub fn cmd_train(cfg: &RunConfig, force: bool) -> Result<TrainSummary> {
    cfg.validate()?;
    let prepared = Prepared::load(&cfg.out_dir, force)?;
    let mut manifest = RunManifest::begin("train", cfg);
    manifest.inputs.insert(
        "corpus".into(),
        prepared.manifest.inputs["corpus"].clone(),
    );
    let lexicon = cfg.lexicon()?;
    let table = match cfg.train.strategy.augment() {
        Some(strategy) => {
            let path = cfg.cache_path();
            if !path.is_file() {
                return Err(CliError::Missing {
                    what: "augmentation cache (run `augment` first)",
                    path,
                });
            }
            let cache = AugmentCache::open(&path)?;
            manifest.inputs.insert("cache".into(), FileDigest::of(&path)?);
            Some(CandidateTable::from_cache(
                &cache,
                &prepared.unlabeled,
                strategy,
                cfg.source_model_id(),
                cfg.augment.k,
            )?)
        }
        None => None,
    };
    let vocab = Vocab::build(
        prepared.labeled.texts().chain(prepared.unlabeled.texts()),
        cfg.encoder.max_vocab,
        cfg.encoder.min_freq,
    );
    let dims = ModelDims {
        vocab: vocab.len(),
        embed: cfg.encoder.embed,
        hidden: cfg.encoder.hidden,
        classes: cfg.data.labels.len(),
    };
    let init = ModelParams::<f32>::init(dims, seed::derive(cfg.train.master_seed, stream::INIT))?;
    let data = TrainData {
        labeled: &prepared.labeled,
        unlabeled: &prepared.unlabeled,
        val: &prepared.val,
        vocab: &vocab,
        lexicon: &lexicon,
        candidates: table.as_ref(),
    };

    let out = &cfg.out_dir;
    let log_path = out.join("epoch_log.csv");
    let mut log = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(File::create(&log_path).map_err(io_err(&log_path))?);
    log.write_record(EPOCH_LOG_HEADER.split(','))
        .map_err(TrainError::from)?;
    let mut log_err = None;
    let res = fit_with(init, &data, &cfg.train, &mut |row: &EpochLog| {
        if log_err.is_none() {
            log_err = log.serialize(row).and_then(|_| Ok(log.flush()?)).err();
        }
    })?;
    if let Some(e) = log_err {
        return Err(TrainError::from(e).into());
    }
    drop(log);

    let ckpt = out.join("model.ckpt");
    save_checkpoint(&res.best, &vocab, &ckpt)?;
    let vocab_path = out.join("vocab.tsv");
    fs::write(&vocab_path, vocab.to_tsv()).map_err(io_err(&vocab_path))?;
    for (name, p) in [("checkpoint", &ckpt), ("epoch_log", &log_path), ("vocab", &vocab_path)] {
        manifest.outputs.insert(name.into(), FileDigest::of(p)?);
    }
    let summary = TrainSummary {
        epochs_run: res.log.len(),
        best_epoch: res.best_epoch,
        best_val_acc: res.best_val_acc,
        stopped_early: res.stopped_early,
        checkpoint: ckpt,
    };
    manifest.summary = serde_json::to_value(&summary)?;
    manifest.finish(&out.join("train.json"))?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalSummary {
    pub split: String,
    pub examples: usize,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub metrics_csv: PathBuf,
    pub confusion_csv: PathBuf,
}

/// Scores a checkpoint on one prepared split and writes
/// `metrics_<split>.csv` and `confusion_<split>.csv` into `out_dir`.
pub fn cmd_eval(out_dir: &Path, checkpoint: &Path, split: &str, force: bool) -> Result<EvalSummary> {
    let prepared = Prepared::load(out_dir, force)?;
    if !checkpoint.is_file() {
        return Err(CliError::Missing {
            what: "checkpoint",
            path: checkpoint.to_owned(),
        });
    }
    let data = prepared.split(split)?;
    let (params, vocab) = load_checkpoint(checkpoint)?;
    let m = evaluate(&params, data, &vocab)?;
    let labels = data.label_space();
    let metrics_csv = out_dir.join(format!("metrics_{split}.csv"));
    let confusion_csv = out_dir.join(format!("confusion_{split}.csv"));
    m.write_csv(File::create(&metrics_csv).map_err(io_err(&metrics_csv))?, labels)?;
    m.write_confusion_csv(File::create(&confusion_csv).map_err(io_err(&confusion_csv))?, labels)?;
    Ok(EvalSummary {
        split: split.to_owned(),
        examples: data.len(),
        accuracy: m.accuracy,
        macro_f1: m.macro_f1,
        metrics_csv,
        confusion_csv,
    })
}

/// Columns of `trend.csv`.
pub const TREND_HEADER: [&str; 5] = ["epoch", "train_acc", "val_acc", "pseudo_acc", "L"];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportSummary {
    pub epochs: usize,
    pub files: Vec<PathBuf>,
}

/// Top tokens per report table.
pub const REPORT_TOP_N: usize = 50;

/// Writes the accuracy trend table from `epoch_log.csv` and, when the run
/// was prepared in `log_dir`, token-frequency tables for the training texts
/// of each class and for the cached strong views of each strategy.
pub fn cmd_report(log_dir: &Path) -> Result<ReportSummary> {
    let log_path = log_dir.join("epoch_log.csv");
    if !log_path.is_file() {
        return Err(CliError::Missing {
            what: "epoch log",
            path: log_path,
        });
    }
    let rows = read_epoch_log(File::open(&log_path).map_err(io_err(&log_path))?)?;
    if rows.is_empty() {
        return Err(CliError::EmptyLog(log_path));
    }
    let mut files = Vec::new();
    let trend = log_dir.join("trend.csv");
    {
        let mut w = csv::Writer::from_writer(File::create(&trend).map_err(io_err(&trend))?);
        let mut write = || -> csv::Result<()> {
            w.write_record(TREND_HEADER)?;
            for r in &rows {
                let pseudo = r.pseudo_acc.map(|p| p.to_string()).unwrap_or_default();
                w.write_record([
                    r.epoch.to_string(),
                    r.train_acc.to_string(),
                    r.val_acc.to_string(),
                    pseudo,
                    r.l.to_string(),
                ])?;
            }
            w.flush()?;
            Ok(())
        };
        write().map_err(MetricsError::from)?;
    }
    files.push(trend);

    if log_dir.join("prepare.json").is_file() {
        let prepared = Prepared::load(log_dir, true)?;
        let labels = prepared.train.label_space().clone();
        let gold = prepared.train.labels()?;
        for (c, name) in labels.names().iter().enumerate() {
            let texts = prepared
                .train
                .examples()
                .iter()
                .zip(&gold)
                .filter(|(_, &g)| g == c)
                .map(|(e, _)| e.text());
            let p = log_dir.join(format!("tokens_{}.csv", file_stem(name)));
            write_report(&p, &token_frequency_report(texts, REPORT_TOP_N))?;
            files.push(p);
        }
        let cfg = &prepared.manifest.config;
        let cache_path = cfg.cache_path();
        if cache_path.is_file() {
            let cache = AugmentCache::open(&cache_path)?;
            for s in [Strategy::Ee, Strategy::Ce] {
                let texts: Vec<&str> = cache
                    .records()
                    .filter(|r| r.strategy == s)
                    .flat_map(|r| r.candidates.iter().map(String::as_str))
                    .collect();
                if texts.is_empty() {
                    continue;
                }
                let p = log_dir.join(format!("tokens_strong_{s}.csv"));
                write_report(&p, &token_frequency_report(texts, REPORT_TOP_N))?;
                files.push(p);
            }
        }
    }
    Ok(ReportSummary {
        epochs: rows.len(),
        files,
    })
}

fn write_report(path: &Path, report: &[(String, u64)]) -> Result<()> {
    write_token_report_csv(File::create(path).map_err(io_err(path))?, report)?;
    Ok(())
}

/// Class names made safe for file names.
fn file_stem(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c.to_ascii_lowercase() } else { '_' })
        .collect()
}

/// Maps `--strategy` to the training strategy used for cache lookups.
pub fn augment_strategy(s: TrainStrategy) -> Result<Strategy> {
    s.augment()
        .ok_or_else(|| CliError::Invalid("augment needs --strategy ee or ce".into()))
}
