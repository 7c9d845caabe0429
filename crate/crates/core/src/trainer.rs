//! Optimization loop: AdamW, alternating labeled/unlabeled batches, early
//! stopping on validation accuracy.

use std::collections::HashMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::augmentor::{
    select_index, weak_augment, AugmentCache, AugmentError, CandidateSource, Strategy,
    SynonymLexicon,
};
use crate::corpus::{batch_iterator, CorpusError, Dataset};
use crate::encoder::{
    backward_into, forward_trace, softmax, tokenize, EncoderError, ForwardTrace, ModelParams,
    Scalar, Vocab,
};
use crate::metrics::{MetricsBundle, MetricsError, PseudoLabelTally};
use crate::objectives::{
    classify_row, consistency_loss, pseudo_label, shrink_loss, supervised_loss, total_loss,
    BranchLoss, LossKind, MaskStats, ObjectiveError, RowGate, UnlabeledBatchOutputs,
};
use crate::seed::{self, stream};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("non-finite gradient in tensor `{tensor}` at optimizer step {step}")]
    NonFiniteGradient { tensor: &'static str, step: u64 },
    #[error("non-finite loss {value} at epoch {epoch}")]
    NonFiniteLoss { epoch: usize, value: f64 },
    #[error("no cached {strategy} candidates for unlabeled example {id}; run augment first")]
    CacheMiss { id: u64, strategy: Strategy },
    #[error("strategy {0} needs a candidate table")]
    MissingCandidates(Strategy),
    #[error("validation split is empty")]
    EmptyValidation,
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Augment(#[from] AugmentError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = TrainError> = std::result::Result<T, E>;

/// Which strong views feed the unlabeled losses; `None` trains on labeled
/// data only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TrainStrategy {
    #[default]
    None,
    Ee,
    Ce,
}

impl TrainStrategy {
    pub fn augment(self) -> Option<Strategy> {
        match self {
            Self::None => None,
            Self::Ee => Some(Strategy::Ee),
            Self::Ce => Some(Strategy::Ce),
        }
    }
}

impl std::str::FromStr for TrainStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(Self::None),
            "ee" => Ok(Self::Ee),
            "ce" => Ok(Self::Ce),
            other => Err(format!("unknown strategy {other:?} (expected none, ee or ce)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamW {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamW {
    fn default() -> Self {
        Self {
            lr: 1e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub tau: f64,
    pub batch_labeled: usize,
    pub batch_unlabeled: usize,
    pub lr: f64,
    pub betas: (f64, f64),
    pub eps: f64,
    pub weight_decay: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub loss_kind: LossKind,
    pub master_seed: u64,
    pub strategy: TrainStrategy,
    /// Thresholded consistency loss on confident rows.
    pub consistency: bool,
    /// Shrunk-space loss on low-confidence rows.
    pub reassemble: bool,
    /// Synonym replacement probability of the weak view.
    pub weak_p: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let opt = AdamW::default();
        Self {
            tau: 0.98,
            batch_labeled: 8,
            batch_unlabeled: 8,
            lr: opt.lr,
            betas: (opt.beta1, opt.beta2),
            eps: opt.eps,
            weight_decay: opt.weight_decay,
            max_epochs: 1000,
            patience: 10,
            loss_kind: LossKind::Ce,
            master_seed: 0,
            strategy: TrainStrategy::None,
            consistency: true,
            reassemble: true,
            weak_p: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(TrainError::Config(msg));
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad(format!("tau must be in (0, 1], got {}", self.tau));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        if self.patience == 0 || self.max_epochs == 0 {
            return bad("patience and max_epochs must be at least 1".into());
        }
        if self.batch_labeled == 0 || self.batch_unlabeled == 0 {
            return bad("batch sizes must be at least 1".into());
        }
        let (b1, b2) = self.betas;
        if !((0.0..1.0).contains(&b1) && (0.0..1.0).contains(&b2)) {
            return bad(format!("betas must be in [0, 1), got ({b1}, {b2})"));
        }
        if !(self.eps > 0.0) || !(self.weight_decay >= 0.0) {
            return bad("eps must be positive and weight_decay non-negative".into());
        }
        if !(0.0..=1.0).contains(&self.weak_p) {
            return bad(format!("weak_p must be in [0, 1], got {}", self.weak_p));
        }
        self.loss_kind.validate()?;
        Ok(())
    }

    pub fn adamw(&self) -> AdamW {
        AdamW {
            lr: self.lr,
            beta1: self.betas.0,
            beta2: self.betas.1,
            eps: self.eps,
            weight_decay: self.weight_decay,
        }
    }
}

/// First and second moments shaped like the parameters, plus the step count.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState<F = f32> {
    pub m: ModelParams<F>,
    pub v: ModelParams<F>,
    pub t: u64,
}

impl<F: Scalar> OptimizerState<F> {
    pub fn new(params: &ModelParams<F>) -> Self {
        Self {
            m: ModelParams::zeros(params.dims()),
            v: ModelParams::zeros(params.dims()),
            t: 0,
        }
    }
}

/// One AdamW update of a flat tensor at step `t` (1-based), decoupled weight
/// decay: `θ ← θ − lr·(m̂/(√v̂ + eps) + wd·θ)`.
pub fn adamw_update<F: Scalar>(
    theta: &mut [F],
    grad: &[F],
    m: &mut [F],
    v: &mut [F],
    t: u64,
    hp: &AdamW,
) {
    let f = |x: f64| F::from_f64(x).expect("finite hyperparameter");
    let (b1, b2) = (f(hp.beta1), f(hp.beta2));
    let c1 = f(1.0 - hp.beta1.powi(t as i32));
    let c2 = f(1.0 - hp.beta2.powi(t as i32));
    let (lr, eps, wd) = (f(hp.lr), f(hp.eps), f(hp.weight_decay));
    let one = F::one();
    for i in 0..theta.len() {
        let g = grad[i];
        m[i] = b1 * m[i] + (one - b1) * g;
        v[i] = b2 * v[i] + (one - b2) * g * g;
        let m_hat = m[i] / c1;
        let v_hat = v[i] / c2;
        theta[i] = theta[i] - lr * (m_hat / (v_hat.sqrt() + eps) + wd * theta[i]);
    }
}

/// Applies one optimizer step to every tensor. Rejects non-finite gradients
/// before touching any state.
pub fn adamw_step<F: Scalar>(
    params: &mut ModelParams<F>,
    grads: &ModelParams<F>,
    state: &mut OptimizerState<F>,
    hp: &AdamW,
) -> Result<()> {
    params.same_shape(grads)?;
    params.same_shape(&state.m)?;
    params.same_shape(&state.v)?;
    if let Some(tensor) = grads.first_non_finite() {
        return Err(TrainError::NonFiniteGradient {
            tensor,
            step: state.t + 1,
        });
    }
    state.t += 1;
    let t = state.t;
    let OptimizerState { m, v, .. } = state;
    for (((_, theta), (_, g)), ((_, m), (_, v))) in params
        .tensors_mut()
        .into_iter()
        .zip(grads.tensors())
        .zip(m.tensors_mut().into_iter().zip(v.tensors_mut()))
    {
        adamw_update(theta, g, m, v, t, hp);
    }
    Ok(())
}

/// Candidate rewrites per unlabeled example id.
#[derive(Debug, Clone)]
pub struct CandidateTable {
    strategy: Strategy,
    by_id: HashMap<u64, Vec<String>>,
}

impl CandidateTable {
    /// Looks up every unlabeled text in the cache; the first miss is an error.
    pub fn from_cache(
        cache: &AugmentCache,
        unlabeled: &Dataset,
        strategy: Strategy,
        model_id: &str,
        k: usize,
    ) -> Result<Self> {
        let mut by_id = HashMap::with_capacity(unlabeled.len());
        for ex in unlabeled.examples() {
            let rec = cache
                .lookup(ex.text(), strategy, model_id, k)
                .ok_or(TrainError::CacheMiss { id: ex.id(), strategy })?;
            by_id.insert(ex.id(), rec.candidates.clone());
        }
        Ok(Self { strategy, by_id })
    }

    /// Fetches candidates directly, without a cache file.
    pub fn from_source(
        unlabeled: &Dataset,
        strategy: Strategy,
        k: usize,
        source: &dyn CandidateSource,
    ) -> Result<Self> {
        let mut by_id = HashMap::with_capacity(unlabeled.len());
        for ex in unlabeled.examples() {
            by_id.insert(ex.id(), source.fetch(ex.text(), strategy, k)?);
        }
        Ok(Self { strategy, by_id })
    }

    pub fn strategy(&self) -> Strategy {
        self.strategy
    }

    pub fn get(&self, id: u64) -> Option<&[String]> {
        self.by_id.get(&id).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.by_id.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_id.is_empty()
    }
}

/// Everything one epoch reads.
#[derive(Clone, Copy)]
pub struct TrainData<'a> {
    pub labeled: &'a Dataset,
    pub unlabeled: &'a Dataset,
    pub val: &'a Dataset,
    pub vocab: &'a Vocab,
    pub lexicon: &'a SynonymLexicon,
    pub candidates: Option<&'a CandidateTable>,
}

/// One row of the per-epoch log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    #[serde(rename = "L_sup")]
    pub l_sup: f64,
    #[serde(rename = "L_con")]
    pub l_con: f64,
    #[serde(rename = "L_sh")]
    pub l_sh: f64,
    #[serde(rename = "L")]
    pub l: f64,
    pub train_acc: f64,
    pub val_acc: f64,
    /// `None` when no row passed the confidence gate or the pool has no
    /// diagnostic labels.
    pub pseudo_acc: Option<f64>,
    pub n_confident: usize,
    pub n_shrunk: usize,
    pub n_dropped: usize,
}

pub const EPOCH_LOG_HEADER: &str =
    "epoch,L_sup,L_con,L_sh,L,train_acc,val_acc,pseudo_acc,n_confident,n_shrunk,n_dropped";

impl EpochLog {
    pub fn mask_stats(&self) -> MaskStats {
        MaskStats {
            n_confident: self.n_confident,
            n_shrunk: self.n_shrunk,
            n_dropped: self.n_dropped,
        }
    }
}

pub fn write_epoch_log<W: Write>(w: W, logs: &[EpochLog]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    if logs.is_empty() {
        wtr.write_record(EPOCH_LOG_HEADER.split(','))?;
    }
    for l in logs {
        wtr.serialize(l)?;
    }
    wtr.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_epoch_log<R: Read>(r: R) -> Result<Vec<EpochLog>> {
    let mut rdr = csv::Reader::from_reader(r);
    Ok(rdr.deserialize().collect::<std::result::Result<_, _>>()?)
}

/// Tensors and losses of one batch, exposed to observers for replay checks.
#[derive(Debug, Clone)]
pub struct BatchRecord {
    pub labeled_logits: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub unlabeled: Option<UnlabeledBatchOutputs>,
    pub l_sup: f64,
    pub l_con: f64,
    pub l_sh: f64,
    pub l: f64,
}

fn to_f64<F: Scalar>(xs: &[F]) -> Vec<f64> {
    xs.iter().map(|x| x.to_f64().expect("finite")).collect()
}

fn from_f64<F: Scalar>(xs: &[f64]) -> Vec<F> {
    xs.iter().map(|&x| F::from_f64(x).expect("finite")).collect()
}

/// Seed of the weak view of example `id` in `epoch`.
pub fn weak_seed(master: u64, epoch: usize, id: u64) -> u64 {
    seed::derive_path(master, &[stream::WEAK, epoch as u64, id])
}

/// Seed of the strong-view selection of example `id` in `epoch`.
pub fn select_seed(master: u64, epoch: usize, id: u64) -> u64 {
    seed::derive_path(master, &[stream::SELECT, epoch as u64, id])
}

/// One pass over the unlabeled pool; see [`train_epoch_observed`].
pub fn train_epoch<F: Scalar>(
    params: &mut ModelParams<F>,
    opt: &mut OptimizerState<F>,
    data: &TrainData,
    cfg: &TrainConfig,
    epoch: usize,
) -> Result<EpochLog> {
    train_epoch_observed(params, opt, data, cfg, epoch, &mut |_| {})
}

/// One pass over the unlabeled pool in `B_u` chunks, each paired with `B_l`
/// labeled examples. Per batch: forward the labeled texts verbatim, the weak
/// views and the selected strong views, backprop `L_sup + L_con + L_sh` into
/// one gradient buffer and take one AdamW step. Weak views never receive
/// gradient. `observe` sees every batch after its loss is computed.
pub fn train_epoch_observed<F: Scalar>(
    params: &mut ModelParams<F>,
    opt: &mut OptimizerState<F>,
    data: &TrainData,
    cfg: &TrainConfig,
    epoch: usize,
    observe: &mut dyn FnMut(&BatchRecord),
) -> Result<EpochLog> {
    cfg.validate()?;
    let strategy = cfg.strategy.augment();
    let candidates = match (strategy, data.candidates) {
        (None, _) => None,
        (Some(s), None) => return Err(TrainError::MissingCandidates(s)),
        (Some(_), Some(t)) => Some(t),
    };
    let master = cfg.master_seed;
    let epoch_seed = seed::derive_path(master, &[stream::EPOCH, epoch as u64]);
    let batches = batch_iterator(
        data.labeled,
        data.unlabeled,
        cfg.batch_labeled,
        cfg.batch_unlabeled,
        epoch_seed,
    )?;
    let hp = cfg.adamw();
    let mut grads = ModelParams::<F>::zeros(params.dims());
    let mut mask = MaskStats::default();
    let mut tally = PseudoLabelTally::default();
    let mut sums = [0.0f64; 4];
    let mut n_batches = 0usize;

    for batch in batches {
        grads.fill_zero();

        let mut labeled_logits = Vec::with_capacity(batch.labeled.len());
        let mut labeled_traces = Vec::with_capacity(batch.labeled.len());
        let mut labels = Vec::with_capacity(batch.labeled.len());
        for (ex, y) in &batch.labeled {
            let trace = forward_trace(params, &tokenize(ex.text(), data.vocab))?;
            labeled_logits.push(to_f64(&trace.logits));
            labeled_traces.push(trace);
            labels.push(*y);
        }
        let sup = supervised_loss(&labeled_logits, &labels, LossKind::Ce)?;
        backprop_rows(params, &labeled_traces, &sup, None, &mut grads)?;

        let (mut l_con, mut l_sh) = (0.0, 0.0);
        let mut unlabeled_out = None;
        match (strategy, candidates) {
            (Some(strategy), Some(table)) => {
                let mut weak_probs = Vec::with_capacity(batch.unlabeled.len());
                let mut strong_logits = Vec::with_capacity(batch.unlabeled.len());
                let mut strong_traces = Vec::with_capacity(batch.unlabeled.len());
                for ex in &batch.unlabeled {
                    let weak_text =
                        weak_augment(ex.text(), data.lexicon, cfg.weak_p, weak_seed(master, epoch, ex.id()));
                    let weak = forward_trace(params, &tokenize(&weak_text, data.vocab))?;
                    weak_probs.push(softmax(&to_f64(&weak.logits)));

                    let cands = table
                        .get(ex.id())
                        .ok_or(TrainError::CacheMiss { id: ex.id(), strategy })?;
                    let pick = select_index(cands.len(), select_seed(master, epoch, ex.id()))?;
                    let strong = forward_trace(params, &tokenize(&cands[pick], data.vocab))?;
                    strong_logits.push(to_f64(&strong.logits));
                    strong_traces.push(strong);
                }
                let out = UnlabeledBatchOutputs::new(weak_probs, strong_logits)?;
                let con = if cfg.consistency {
                    Some(consistency_loss(&out, cfg.tau, cfg.loss_kind)?)
                } else {
                    None
                };
                let sh = if cfg.reassemble {
                    Some(shrink_loss(&out, cfg.tau, cfg.loss_kind)?)
                } else {
                    None
                };
                l_con = con.as_ref().map_or(0.0, |b| b.value);
                l_sh = sh.as_ref().map_or(0.0, |b| b.value);
                if let Some(con) = &con {
                    backprop_rows(params, &strong_traces, con, sh.as_ref(), &mut grads)?;
                } else if let Some(sh) = &sh {
                    backprop_rows(params, &strong_traces, sh, None, &mut grads)?;
                }

                mask.add(&MaskStats::from_rows(&out.weak_probs, cfg.tau, cfg.reassemble));
                for (ex, row) in batch.unlabeled.iter().zip(&out.weak_probs) {
                    if classify_row(row, cfg.tau) == RowGate::Confident {
                        if let Some(gold) = ex.diagnostic_label() {
                            tally.record(pseudo_label(row).0, gold);
                        }
                    }
                }
                unlabeled_out = Some(out);
            }
            _ => mask.n_dropped += batch.unlabeled.len(),
        }

        let l = total_loss(sup.value, l_con, l_sh);
        if !l.is_finite() {
            return Err(TrainError::NonFiniteLoss { epoch, value: l });
        }
        observe(&BatchRecord {
            labeled_logits,
            labels,
            unlabeled: unlabeled_out,
            l_sup: sup.value,
            l_con,
            l_sh,
            l,
        });
        adamw_step(params, &grads, opt, &hp)?;
        for (s, v) in sums.iter_mut().zip([sup.value, l_con, l_sh, l]) {
            *s += v;
        }
        n_batches += 1;
    }

    let n = n_batches.max(1) as f64;
    let train_acc = evaluate(params, data.labeled, data.vocab)?.accuracy;
    let val_acc = if data.val.is_empty() {
        0.0
    } else {
        evaluate(params, data.val, data.vocab)?.accuracy
    };
    Ok(EpochLog {
        epoch,
        l_sup: sums[0] / n,
        l_con: sums[1] / n,
        l_sh: sums[2] / n,
        l: sums[3] / n,
        train_acc,
        val_acc,
        pseudo_acc: tally.accuracy(),
        n_confident: mask.n_confident,
        n_shrunk: mask.n_shrunk,
        n_dropped: mask.n_dropped,
    })
}

/// Backprops per-row logit gradients (`a` plus optional `b`) through the
/// matching traces.
fn backprop_rows<F: Scalar>(
    params: &ModelParams<F>,
    traces: &[ForwardTrace<F>],
    a: &BranchLoss,
    b: Option<&BranchLoss>,
    grads: &mut ModelParams<F>,
) -> Result<()> {
    for (i, trace) in traces.iter().enumerate() {
        let mut row = a.dlogits[i].clone();
        if let Some(b) = b {
            for (r, g) in row.iter_mut().zip(&b.dlogits[i]) {
                *r += g;
            }
        }
        if row.iter().all(|g| *g == 0.0) {
            continue;
        }
        backward_into(params, trace, &from_f64::<F>(&row), grads)?;
    }
    Ok(())
}

/// Predictions of every example, no augmentation.
pub fn predict_all<F: Scalar>(params: &ModelParams<F>, data: &Dataset, vocab: &Vocab) -> Result<Vec<usize>> {
    data.examples()
        .iter()
        .map(|ex| Ok(crate::encoder::predict(params, &tokenize(ex.text(), vocab))?))
        .collect()
}

/// Accuracy, macro-F1 and confusion matrix on a labeled dataset.
pub fn evaluate<F: Scalar>(params: &ModelParams<F>, data: &Dataset, vocab: &Vocab) -> Result<MetricsBundle> {
    let gold = data.labels()?;
    let pred = predict_all(params, data, vocab)?;
    Ok(MetricsBundle::compute(&pred, &gold, params.dims().classes)?)
}

/// Patience counter over a metric where larger is better. Ties do not count
/// as improvement.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopping {
    patience: usize,
    best: Option<f64>,
    best_epoch: Option<usize>,
    stale: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopSignal {
    Improved,
    Continue,
    Stop,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: None,
            best_epoch: None,
            stale: 0,
        }
    }

    pub fn observe(&mut self, epoch: usize, metric: f64) -> StopSignal {
        if self.best.is_none_or(|b| metric > b) {
            self.best = Some(metric);
            self.best_epoch = Some(epoch);
            self.stale = 0;
            return StopSignal::Improved;
        }
        self.stale += 1;
        if self.stale >= self.patience {
            StopSignal::Stop
        } else {
            StopSignal::Continue
        }
    }

    pub fn best(&self) -> Option<f64> {
        self.best
    }

    pub fn best_epoch(&self) -> Option<usize> {
        self.best_epoch
    }
}

#[derive(Debug, Clone)]
pub struct FitResult<F = f32> {
    /// Parameters after the best validation epoch.
    pub best: ModelParams<F>,
    pub best_epoch: usize,
    pub best_val_acc: f64,
    pub log: Vec<EpochLog>,
    pub stopped_early: bool,
}

pub fn fit<F: Scalar>(init: ModelParams<F>, data: &TrainData, cfg: &TrainConfig) -> Result<FitResult<F>> {
    fit_with(init, data, cfg, &mut |_| {})
}

/// Runs epochs `0..max_epochs` until validation accuracy has failed to
/// improve `patience` times in a row; `on_epoch` sees each log row as soon as
/// it is produced.
pub fn fit_with<F: Scalar>(
    init: ModelParams<F>,
    data: &TrainData,
    cfg: &TrainConfig,
    on_epoch: &mut dyn FnMut(&EpochLog),
) -> Result<FitResult<F>> {
    cfg.validate()?;
    if data.val.is_empty() {
        return Err(TrainError::EmptyValidation);
    }
    let mut params = init;
    let mut opt = OptimizerState::new(&params);
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut best = params.clone();
    let mut log = Vec::new();
    let mut stopped_early = false;
    for epoch in 0..cfg.max_epochs {
        let row = train_epoch(&mut params, &mut opt, data, cfg, epoch)?;
        on_epoch(&row);
        let signal = stopper.observe(epoch, row.val_acc);
        log.push(row);
        match signal {
            StopSignal::Improved => best.clone_from(&params),
            StopSignal::Continue => {}
            StopSignal::Stop => {
                stopped_early = true;
                break;
            }
        }
    }
    Ok(FitResult {
        best,
        best_epoch: stopper.best_epoch().unwrap_or(0),
        best_val_acc: stopper.best().unwrap_or(0.0),
        log,
        stopped_early,
    })
}
