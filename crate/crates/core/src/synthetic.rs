//! Template-generated three-class corpora with known structure.
//!
//! Every sentence carries one or two class markers inside class-neutral
//! filler (company names, periods, reporting items). The synonym lexicon maps each
//! marker to the next few markers of its own class, so lexicon-driven
//! rewrites preserve the label while exposing markers a small labeled set
//! may never show. That is the situation where consistency training on
//! unlabeled text pays off.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::augmentor::{MockSource, SynonymLexicon};
use crate::corpus::{Dataset, Example, LabelSpace};
use crate::encoder::{ModelDims, ModelParams, Vocab};
use crate::seed::{self, stream};
use crate::trainer::{
    evaluate, fit, CandidateTable, EpochLog, TrainConfig, TrainError, TrainData, TrainStrategy,
};

pub const POSITIVE_MARKERS: [&str; 40] = [
    "surged", "rallied", "soared", "climbed", "jumped", "gained", "rose", "advanced",
    "strengthened", "improved", "beat", "exceeded", "outperformed", "expanded", "boosted",
    "accelerated", "rebounded", "recovered", "upgraded", "doubled", "profitable", "robust",
    "record", "strong", "bullish", "upbeat", "optimistic", "thriving", "booming", "lucrative",
    "stellar", "solid", "healthy", "buoyant", "favorable", "impressive", "upside", "windfall",
    "breakthrough", "growth",
];

pub const NEUTRAL_MARKERS: [&str; 40] = [
    "held", "remained", "maintained", "kept", "stood", "continued", "announced", "reported",
    "published", "filed", "released", "listed", "stated", "noted", "confirmed", "appointed",
    "named", "planned", "unchanged", "steady", "flat", "stable", "routine", "annual",
    "quarterly", "regular", "standard", "customary", "neutral", "ordinary", "periodic",
    "expected", "scheduled", "unaltered", "level", "consistent", "procedural", "ongoing",
    "interim", "pending",
];

pub const NEGATIVE_MARKERS: [&str; 40] = [
    "plunged", "slumped", "tumbled", "fell", "dropped", "declined", "sank", "slid", "weakened",
    "worsened", "missed", "lagged", "underperformed", "shrank", "cut", "slowed", "collapsed",
    "crashed", "downgraded", "halved", "unprofitable", "weak", "bearish", "gloomy",
    "pessimistic", "struggling", "ailing", "costly", "dismal", "poor", "fragile", "sluggish",
    "adverse", "disappointing", "downside", "writedown", "default", "bankruptcy", "layoffs",
    "losses",
];

const ENTITIES: [&str; 4] = ["Acme", "Borealis", "Cobalt", "Dunmore"];

const PERIODS: [&str; 2] = ["the third quarter", "the fiscal year"];

const ITEMS: [&str; 3] = ["outlook", "revenue", "guidance"];

const DETS: [&str; 4] = ["the", "this", "its", "their"];

/// Marker lists in label-space order (positive, neutral, negative).
pub fn markers() -> [&'static [&'static str]; 3] {
    [&POSITIVE_MARKERS, &NEUTRAL_MARKERS, &NEGATIVE_MARKERS]
}

/// Each marker maps to the next `width` markers of its class, cyclically.
pub fn ring_lexicon(markers_per_class: usize, width: usize) -> SynonymLexicon {
    let mut lex = SynonymLexicon::empty();
    for list in markers() {
        let list = &list[..markers_per_class.min(list.len())];
        let n = list.len();
        for (i, m) in list.iter().enumerate() {
            let syns: Vec<&str> = (1..=width.min(n - 1)).map(|j| list[(i + j) % n]).collect();
            lex.insert(m, &syns).expect("markers are distinct");
        }
    }
    lex
}

/// Knobs of the generator.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub labeled_per_class: usize,
    pub unlabeled: usize,
    pub val: usize,
    pub test: usize,
    /// Markers used per class, at most 40.
    pub markers_per_class: usize,
    /// Share of sentences with two markers instead of one.
    pub two_marker_rate: f64,
    /// Synonyms per marker in the ring lexicon.
    pub lexicon_width: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            labeled_per_class: 30,
            unlabeled: 3000,
            val: 300,
            test: 600,
            markers_per_class: 40,
            two_marker_rate: 0.25,
            lexicon_width: 3,
            seed: 0,
        }
    }
}

pub struct SyntheticCorpus {
    pub labeled: Dataset,
    /// Labels are hidden; `Example::diagnostic_label` still reports them.
    pub unlabeled: Dataset,
    pub val: Dataset,
    pub test: Dataset,
    pub lexicon: SynonymLexicon,
}

fn pick<'a>(rng: &mut ChaCha8Rng, xs: &[&'a str]) -> &'a str {
    xs.choose(rng).copied().expect("non-empty list")
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

/// One sentence of class `class`; with probability `two_marker_rate` it
/// carries two markers, otherwise one.
pub fn sentence(rng: &mut ChaCha8Rng, class: usize, markers_per_class: usize, two_marker_rate: f64) -> String {
    let list = &markers()[class][..markers_per_class.clamp(1, 40)];
    let m1 = pick(rng, list);
    let m2 = pick(rng, list);
    let e = pick(rng, &ENTITIES);
    let det = pick(rng, &DETS);
    let item = pick(rng, &ITEMS);
    if rng.gen_bool(two_marker_rate.clamp(0.0, 1.0)) {
        match rng.gen_range(0..2) {
            0 => format!("{e} {m1} {det} {item} as sales were {m2}."),
            _ => format!("{} board expects {det} {item} to be {m1} and {m2}.", capitalize(pick(rng, &DETS))),
        }
    } else {
        match rng.gen_range(0..4) {
            0 => format!("{} {e} {m1} in {}.", capitalize(det), pick(rng, &PERIODS)),
            1 => format!("{e} said {det} results {m1}."),
            2 => format!("Shares of {e} {m1} after {det} report."),
            _ => format!("{e} called {det} {item} {m1}."),
        }
    }
}

/// `n` examples with classes cycling 0,1,2,... and ids from `first_id`.
fn block(rng: &mut ChaCha8Rng, n: usize, first_id: u64, spec: &SyntheticSpec) -> Vec<Example> {
    (0..n)
        .map(|i| {
            let c = i % 3;
            let text = sentence(rng, c, spec.markers_per_class, spec.two_marker_rate);
            Example::new(first_id + i as u64, text, Some(c))
        })
        .collect()
}

/// A flat labeled corpus of `n` sentences, e.g. to write out as CSV.
pub fn flat_corpus(n: usize, spec: &SyntheticSpec) -> Dataset {
    let mut rng = seed::rng(seed::derive(spec.seed, stream::SYNTHETIC));
    Dataset::new(block(&mut rng, n, 0, spec), LabelSpace::sentiment3())
        .expect("generated ids are unique")
}

/// Writes `text,label` rows, revealing hidden labels. Used to feed generated
/// corpora to the command-line pipeline.
pub fn write_csv<W: std::io::Write>(w: W, d: &Dataset) -> csv::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["text", "label"])?;
    let labels = d.label_space();
    for e in d.examples() {
        let y = e.diagnostic_label().expect("generated examples carry labels");
        wtr.write_record([e.text(), labels.name(y)])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn generate(spec: &SyntheticSpec) -> SyntheticCorpus {
    let master = seed::derive(spec.seed, stream::SYNTHETIC);
    let mut next = 0u64;
    let mut part = |n: usize, sub: u64| {
        let mut rng = seed::rng(seed::derive(master, sub));
        let ex = block(&mut rng, n, next, spec);
        next += n as u64;
        Dataset::new(ex, LabelSpace::sentiment3()).expect("generated ids are unique")
    };
    let labeled = part(3 * spec.labeled_per_class, 1);
    let unlabeled = part(spec.unlabeled, 2).hidden();
    let val = part(spec.val, 3);
    let test = part(spec.test, 4);
    SyntheticCorpus {
        labeled,
        unlabeled,
        val,
        test,
        lexicon: ring_lexicon(spec.markers_per_class, spec.lexicon_width),
    }
}

/// Training variants of the ablation: labeled data only, plus the
/// consistency loss, plus consistency and re-assembly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    Baseline,
    Consist,
    Full,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Baseline, Variant::Consist, Variant::Full];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Baseline => "baseline",
            Variant::Consist => "+consist",
            Variant::Full => "+consist+reassemble",
        }
    }

    /// `base` with the strategy and loss switches of this variant.
    pub fn apply(self, base: &TrainConfig, strategy: TrainStrategy) -> TrainConfig {
        let mut cfg = base.clone();
        match self {
            Variant::Baseline => cfg.strategy = TrainStrategy::None,
            Variant::Consist => {
                cfg.strategy = strategy;
                cfg.consistency = true;
                cfg.reassemble = false;
            }
            Variant::Full => {
                cfg.strategy = strategy;
                cfg.consistency = true;
                cfg.reassemble = true;
            }
        }
        cfg
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub variant: Variant,
    pub master_seed: u64,
    pub test_accuracy: f64,
    pub test_macro_f1: f64,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub log: Vec<EpochLog>,
}

/// Trains one variant on `corpus` with mock strong views and evaluates the
/// best-validation checkpoint on the test split.
pub fn run_variant(
    corpus: &SyntheticCorpus,
    variant: Variant,
    base: &TrainConfig,
    dims_embed: usize,
    dims_hidden: usize,
) -> Result<RunOutcome, TrainError> {
    let master = base.master_seed;
    let vocab = Vocab::build(corpus.labeled.texts().chain(corpus.unlabeled.texts()), 50_000, 1);
    let cfg = variant.apply(base, TrainStrategy::Ee);
    let table = match cfg.strategy.augment() {
        Some(s) => Some(CandidateTable::from_source(
            &corpus.unlabeled,
            s,
            5,
            &MockSource::new(corpus.lexicon.clone(), seed::derive(master, stream::MOCK)),
        )?),
        None => None,
    };
    let dims = ModelDims {
        vocab: vocab.len(),
        embed: dims_embed,
        hidden: dims_hidden,
        classes: 3,
    };
    let init = ModelParams::<f32>::init(dims, seed::derive(master, stream::INIT))?;
    let data = TrainData {
        labeled: &corpus.labeled,
        unlabeled: &corpus.unlabeled,
        val: &corpus.val,
        vocab: &vocab,
        lexicon: &corpus.lexicon,
        candidates: table.as_ref(),
    };
    let res = fit(init, &data, &cfg)?;
    let m = evaluate(&res.best, &corpus.test, &vocab)?;
    Ok(RunOutcome {
        variant,
        master_seed: master,
        test_accuracy: m.accuracy,
        test_macro_f1: m.macro_f1,
        best_epoch: res.best_epoch,
        epochs_run: res.log.len(),
        log: res.log,
    })
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}
