//! Training losses.
//!
//! All losses take logits and return their value together with the gradient
//! with respect to those logits; the encoder turns logit gradients into
//! parameter gradients. Pseudo-labels, gates and retained class sets come
//! from the weak branch as plain numbers, so no gradient can reach that
//! branch.
//!
//! For an unlabeled batch of `B_u` rows with weak-view probabilities `w` and
//! strong-view logits `z`:
//!
//! ```text
//! L_con = 1/B_u Σ 1[max w ≥ τ]                                · loss(z, argmax w)
//! L_sh  = 1/B_u Σ 1[max w < τ] · 1[max w / (max w + min w) > τ] · loss(z|R, argmax ŵ)
//! L     = L_sup + L_con + L_sh
//! ```
//!
//! where `R` drops the rank-2 class of `w` and `ŵ` is `w` restricted to `R`
//! and renormalized. Restricting softmax probabilities to `R` and
//! renormalizing is the same as a softmax over the retained logits, which is
//! how the strong branch is handled here.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoder::{argmax, log_softmax};

#[derive(Debug, Error, PartialEq)]
pub enum ObjectiveError {
    #[error("target {target} out of range for {classes} classes")]
    TargetOutOfRange { target: usize, classes: usize },
    #[error("class re-assembly needs at least 3 classes, got {0}")]
    TooFewClasses(usize),
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("invalid loss parameters: {0}")]
    BadLossKind(String),
    #[error("invalid probability row: {0}")]
    BadRow(String),
}

pub type Result<T, E = ObjectiveError> = std::result::Result<T, E>;

fn default_focal_gamma() -> f64 {
    2.0
}
fn default_gamma_pos() -> f64 {
    0.0
}
fn default_gamma_neg() -> f64 {
    4.0
}
fn default_margin() -> f64 {
    0.05
}

/// Per-sample loss used inside the consistency terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LossKind {
    /// `-log p_t`
    #[default]
    Ce,
    /// `-(1 - p_t)^γ log p_t`
    Focal {
        #[serde(default = "default_focal_gamma")]
        gamma: f64,
    },
    /// One-vs-rest asymmetric loss with probability shifting on negatives:
    /// `-(1 - p_t)^γ⁺ log p_t - Σ_{c≠t} p_m^γ⁻ log(1 - p_m)`,
    /// `p_m = max(p_c - m, 0)`.
    Asymmetric {
        #[serde(default = "default_gamma_pos")]
        gamma_pos: f64,
        #[serde(default = "default_gamma_neg")]
        gamma_neg: f64,
        #[serde(default = "default_margin")]
        margin: f64,
    },
}

impl LossKind {
    pub fn focal() -> Self {
        Self::Focal {
            gamma: default_focal_gamma(),
        }
    }

    pub fn asymmetric() -> Self {
        Self::Asymmetric {
            gamma_pos: default_gamma_pos(),
            gamma_neg: default_gamma_neg(),
            margin: default_margin(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Ce => Ok(()),
            Self::Focal { gamma } if gamma.is_finite() && gamma >= 0.0 => Ok(()),
            Self::Asymmetric {
                gamma_pos,
                gamma_neg,
                margin,
            } if gamma_pos.is_finite()
                && gamma_pos >= 0.0
                && gamma_neg.is_finite()
                && gamma_neg >= 0.0
                && (0.0..1.0).contains(&margin) =>
            {
                Ok(())
            }
            other => Err(ObjectiveError::BadLossKind(format!("{other:?}"))),
        }
    }
}

/// A scalar loss and its gradient with respect to the logits.
#[derive(Debug, Clone, PartialEq)]
pub struct PointLoss {
    pub value: f64,
    pub dlogits: Vec<f64>,
}

/// `d/dz_t` scale of the focal-style positive term times `p_t`:
/// returns `(loss, p_t · dL/dp_t)`.
fn focal_positive(log_pt: f64, gamma: f64) -> (f64, f64) {
    let pt = log_pt.exp();
    let one_minus = -log_pt.exp_m1();
    if gamma == 0.0 {
        return (-log_pt, -1.0);
    }
    let modulator = one_minus.powf(gamma);
    let value = -modulator * log_pt;
    let curvature = if one_minus > 0.0 {
        gamma * one_minus.powf(gamma - 1.0) * pt * log_pt
    } else {
        0.0
    };
    (value, curvature - modulator)
}

/// Loss of one row against a hard target, with its logit gradient.
pub fn point_loss(logits: &[f64], target: usize, kind: LossKind) -> Result<PointLoss> {
    let c = logits.len();
    if target >= c {
        return Err(ObjectiveError::TargetOutOfRange { target, classes: c });
    }
    kind.validate()?;
    let log_p = log_softmax(logits);
    let p: Vec<f64> = log_p.iter().map(|l| l.exp()).collect();

    // s_c = p_c · dL/dp_c; through the softmax Jacobian dL/dz_j = s_j - p_j Σ s.
    let mut s = vec![0.0; c];
    let value = match kind {
        LossKind::Ce => {
            let mut g = p;
            g[target] -= 1.0;
            return Ok(PointLoss {
                value: -log_p[target],
                dlogits: g,
            });
        }
        LossKind::Focal { gamma } => {
            let (v, st) = focal_positive(log_p[target], gamma);
            s[target] = st;
            v
        }
        LossKind::Asymmetric {
            gamma_pos,
            gamma_neg,
            margin,
        } => {
            let (mut v, st) = focal_positive(log_p[target], gamma_pos);
            s[target] = st;
            for j in (0..c).filter(|&j| j != target) {
                let pm = (p[j] - margin).max(0.0);
                if pm <= 0.0 {
                    continue;
                }
                let log_rest = (-pm).ln_1p().max(f64::MIN_POSITIVE.ln());
                let pow = pm.powf(gamma_neg);
                v -= pow * log_rest;
                let d_pm = if gamma_neg == 0.0 {
                    0.0
                } else {
                    -gamma_neg * pm.powf(gamma_neg - 1.0) * log_rest
                } + pow / (1.0 - pm).max(f64::MIN_POSITIVE);
                s[j] = p[j] * d_pm;
            }
            v
        }
    };
    let total: f64 = s.iter().sum();
    let dlogits = (0..c).map(|j| s[j] - p[j] * total).collect();
    Ok(PointLoss { value, dlogits })
}

/// [`point_loss`] for a probability row, using `ln p` as logits.
pub fn point_loss_from_probs(probs: &[f64], target: usize, kind: LossKind) -> Result<PointLoss> {
    let logits: Vec<f64> = probs.iter().map(|p| p.ln()).collect();
    point_loss(&logits, target, kind)
}

/// Hard pseudo-label (argmax, smallest index on ties) and its confidence.
pub fn pseudo_label(weak_row: &[f64]) -> (usize, f64) {
    let i = argmax(weak_row);
    (i, weak_row[i])
}

/// Which unlabeled loss a row feeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RowGate {
    /// `max ≥ τ`: consistency loss.
    Confident,
    /// `max < τ` and the normalized confidence passes: re-assembly loss.
    Shrunk,
    Dropped,
}

pub fn classify_row(weak_row: &[f64], tau: f64) -> RowGate {
    let (_, conf) = pseudo_label(weak_row);
    if conf >= tau {
        RowGate::Confident
    } else if weak_row.len() >= 3 && shrink_gate(weak_row, tau) {
        RowGate::Shrunk
    } else {
        RowGate::Dropped
    }
}

/// Per-batch gate counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskStats {
    pub n_confident: usize,
    pub n_shrunk: usize,
    pub n_dropped: usize,
}

impl MaskStats {
    /// Counts gates over a batch. With `reassemble` off, rows that would be
    /// re-assembled are counted as dropped.
    pub fn from_rows(weak_probs: &[Vec<f64>], tau: f64, reassemble: bool) -> Self {
        let mut m = Self::default();
        for row in weak_probs {
            match classify_row(row, tau) {
                RowGate::Confident => m.n_confident += 1,
                RowGate::Shrunk if reassemble => m.n_shrunk += 1,
                _ => m.n_dropped += 1,
            }
        }
        m
    }

    pub fn total(&self) -> usize {
        self.n_confident + self.n_shrunk + self.n_dropped
    }

    pub fn add(&mut self, other: &MaskStats) {
        self.n_confident += other.n_confident;
        self.n_shrunk += other.n_shrunk;
        self.n_dropped += other.n_dropped;
    }
}

/// Weak-view probabilities and strong-view logits of one unlabeled batch.
#[derive(Debug, Clone, PartialEq)]
pub struct UnlabeledBatchOutputs {
    pub weak_probs: Vec<Vec<f64>>,
    pub strong_logits: Vec<Vec<f64>>,
}

impl UnlabeledBatchOutputs {
    pub fn new(weak_probs: Vec<Vec<f64>>, strong_logits: Vec<Vec<f64>>) -> Result<Self> {
        if weak_probs.len() != strong_logits.len() {
            return Err(ObjectiveError::LengthMismatch(format!(
                "{} weak rows vs {} strong rows",
                weak_probs.len(),
                strong_logits.len()
            )));
        }
        let c = weak_probs.first().map_or(0, Vec::len);
        for (i, (w, s)) in weak_probs.iter().zip(&strong_logits).enumerate() {
            if w.len() != c || s.len() != c {
                return Err(ObjectiveError::LengthMismatch(format!("row {i} width")));
            }
            let sum: f64 = w.iter().sum();
            if (sum - 1.0).abs() > 1e-6 || w.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(ObjectiveError::BadRow(format!("weak row {i} sums to {sum}")));
            }
        }
        Ok(Self {
            weak_probs,
            strong_logits,
        })
    }

    /// Builds the batch from strong probabilities (logits taken as `ln p`).
    pub fn from_probs(weak_probs: Vec<Vec<f64>>, strong_probs: Vec<Vec<f64>>) -> Result<Self> {
        let logits = strong_probs
            .iter()
            .map(|r| r.iter().map(|p| p.ln()).collect())
            .collect();
        Self::new(weak_probs, logits)
    }

    pub fn len(&self) -> usize {
        self.weak_probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weak_probs.is_empty()
    }

    pub fn classes(&self) -> usize {
        self.weak_probs.first().map_or(0, Vec::len)
    }
}

/// Batch loss with per-row strong-branch logit gradients (already divided
/// by the batch size) and the rows that contributed.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchLoss {
    pub value: f64,
    pub dlogits: Vec<Vec<f64>>,
    pub active: Vec<bool>,
    /// Pseudo-label of each active row, in full class indices.
    pub pseudo: Vec<Option<usize>>,
}

impl BranchLoss {
    fn zeros(rows: usize, classes: usize) -> Self {
        Self {
            value: 0.0,
            dlogits: vec![vec![0.0; classes]; rows],
            active: vec![false; rows],
            pseudo: vec![None; rows],
        }
    }

    pub fn active_count(&self) -> usize {
        self.active.iter().filter(|a| **a).count()
    }
}

/// Thresholded consistency loss: confident weak rows supply hard targets for
/// the strong rows; the mean runs over all rows.
pub fn consistency_loss(batch: &UnlabeledBatchOutputs, tau: f64, kind: LossKind) -> Result<BranchLoss> {
    let b = batch.len();
    let mut out = BranchLoss::zeros(b, batch.classes());
    if b == 0 {
        return Ok(out);
    }
    let scale = 1.0 / b as f64;
    for (i, (weak, strong)) in batch.weak_probs.iter().zip(&batch.strong_logits).enumerate() {
        let (label, conf) = pseudo_label(weak);
        if conf < tau {
            continue;
        }
        let pl = point_loss(strong, label, kind)?;
        out.value += pl.value * scale;
        out.dlogits[i] = pl.dlogits.iter().map(|g| g * scale).collect();
        out.active[i] = true;
        out.pseudo[i] = Some(label);
    }
    Ok(out)
}

/// Weak distribution over `C - 1` classes.
#[derive(Debug, Clone, PartialEq)]
pub struct ShrunkDistribution {
    /// Retained class indices in ascending order.
    pub retained: Vec<usize>,
    /// Renormalized probabilities aligned with `retained`.
    pub probs: Vec<f64>,
}

impl ShrunkDistribution {
    /// Pseudo-label as a full class index.
    pub fn pseudo_label(&self) -> usize {
        self.retained[argmax(&self.probs)]
    }

    /// Pseudo-label as a position within `retained`.
    pub fn pseudo_position(&self) -> usize {
        argmax(&self.probs)
    }
}

/// Removes the rank-2 class (ranks by descending probability, smallest index
/// first on ties) and renormalizes the rest. For three classes this keeps
/// exactly the top-1 and bottom-1 classes.
pub fn shrink_distribution(weak_row: &[f64]) -> Result<ShrunkDistribution> {
    let c = weak_row.len();
    if c < 3 {
        return Err(ObjectiveError::TooFewClasses(c));
    }
    let mut order: Vec<usize> = (0..c).collect();
    order.sort_by(|&a, &b| weak_row[b].total_cmp(&weak_row[a]).then(a.cmp(&b)));
    let removed = order[1];
    let retained: Vec<usize> = (0..c).filter(|&i| i != removed).collect();
    let sum: f64 = retained.iter().map(|&i| weak_row[i]).sum();
    let probs = retained.iter().map(|&i| weak_row[i] / sum).collect();
    Ok(ShrunkDistribution { retained, probs })
}

/// `max / (max + min) > τ`.
pub fn shrink_gate(weak_row: &[f64], tau: f64) -> bool {
    let max = weak_row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = weak_row.iter().copied().fold(f64::INFINITY, f64::min);
    max / (max + min) > tau
}

/// Re-assembly loss over low-confidence rows whose normalized confidence
/// passes the gate. The strong row is restricted to the weak row's retained
/// classes; its gradient is zero on the removed class.
pub fn shrink_loss(batch: &UnlabeledBatchOutputs, tau: f64, kind: LossKind) -> Result<BranchLoss> {
    let b = batch.len();
    let c = batch.classes();
    let mut out = BranchLoss::zeros(b, c);
    if b == 0 {
        return Ok(out);
    }
    if c < 3 {
        return Err(ObjectiveError::TooFewClasses(c));
    }
    let scale = 1.0 / b as f64;
    for (i, (weak, strong)) in batch.weak_probs.iter().zip(&batch.strong_logits).enumerate() {
        if classify_row(weak, tau) != RowGate::Shrunk {
            continue;
        }
        let shrunk = shrink_distribution(weak)?;
        let restricted: Vec<f64> = shrunk.retained.iter().map(|&j| strong[j]).collect();
        let pl = point_loss(&restricted, shrunk.pseudo_position(), kind)?;
        out.value += pl.value * scale;
        for (&j, g) in shrunk.retained.iter().zip(&pl.dlogits) {
            out.dlogits[i][j] = g * scale;
        }
        out.active[i] = true;
        out.pseudo[i] = Some(shrunk.pseudo_label());
    }
    Ok(out)
}

/// Mean loss over a labeled batch.
pub fn supervised_loss(logits: &[Vec<f64>], labels: &[usize], kind: LossKind) -> Result<BranchLoss> {
    if logits.len() != labels.len() {
        return Err(ObjectiveError::LengthMismatch(format!(
            "{} rows vs {} labels",
            logits.len(),
            labels.len()
        )));
    }
    let b = logits.len();
    let mut out = BranchLoss::zeros(b, logits.first().map_or(0, Vec::len));
    if b == 0 {
        return Ok(out);
    }
    let scale = 1.0 / b as f64;
    for (i, (row, &y)) in logits.iter().zip(labels).enumerate() {
        let pl = point_loss(row, y, kind)?;
        out.value += pl.value * scale;
        out.dlogits[i] = pl.dlogits.iter().map(|g| g * scale).collect();
        out.active[i] = true;
        out.pseudo[i] = Some(y);
    }
    Ok(out)
}

/// Unweighted sum of the three terms.
pub fn total_loss(sup: f64, con: f64, sh: f64) -> f64 {
    sup + con + sh
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn ln(p: &[f64]) -> Vec<f64> {
        p.iter().map(|x| x.ln()).collect()
    }

    #[test]
    fn ce_of_uniform_is_ln3() {
        let l = point_loss(&[0.0, 0.0, 0.0], 1, LossKind::Ce).unwrap();
        assert_relative_eq!(l.value, 3f64.ln(), epsilon = 1e-12);
        assert_relative_eq!(l.value, 1.098612, epsilon = 1e-6);
    }

    #[test]
    fn focal_hand_value() {
        let l = point_loss_from_probs(&[0.7, 0.2, 0.1], 0, LossKind::Focal { gamma: 2.0 }).unwrap();
        // (0.3)^2 * -ln(0.7) = 0.09 * 0.356675 = 0.032101
        assert_relative_eq!(l.value, 0.032101, epsilon = 1e-6);
    }

    #[test]
    fn target_out_of_range() {
        assert_eq!(
            point_loss(&[0.0, 0.0], 2, LossKind::Ce),
            Err(ObjectiveError::TargetOutOfRange { target: 2, classes: 2 })
        );
        assert!(point_loss(&[0.0, 0.0], 0, LossKind::Focal { gamma: -1.0 }).is_err());
        assert!(point_loss(
            &[0.0, 0.0],
            0,
            LossKind::Asymmetric { gamma_pos: 0.0, gamma_neg: 4.0, margin: 1.0 }
        )
        .is_err());
    }

    fn fd_check(kind: LossKind, logits: &[f64], target: usize) {
        let l = point_loss(logits, target, kind).unwrap();
        let eps = 1e-6;
        for j in 0..logits.len() {
            let mut up = logits.to_vec();
            up[j] += eps;
            let mut dn = logits.to_vec();
            dn[j] -= eps;
            let num = (point_loss(&up, target, kind).unwrap().value
                - point_loss(&dn, target, kind).unwrap().value)
                / (2.0 * eps);
            assert!(
                (num - l.dlogits[j]).abs() < 1e-6 * (1.0 + num.abs()),
                "{kind:?} j={j}: analytic {} numeric {num}",
                l.dlogits[j]
            );
        }
    }

    #[test]
    fn loss_gradients_match_finite_differences() {
        let cases: [(&[f64], usize); 4] = [
            (&[0.3, -1.2, 0.8], 0),
            (&[2.0, 0.1, -0.4, 1.1], 3),
            (&[-0.5, 0.5], 1),
            (&[4.0, -2.0, 0.0], 0),
        ];
        for (logits, t) in cases {
            for kind in [
                LossKind::Ce,
                LossKind::Focal { gamma: 0.5 },
                LossKind::focal(),
                LossKind::asymmetric(),
                LossKind::Asymmetric { gamma_pos: 1.0, gamma_neg: 2.0, margin: 0.0 },
            ] {
                fd_check(kind, logits, t);
            }
        }
    }

    #[test]
    fn pseudo_labels_and_ties() {
        assert_eq!(pseudo_label(&[0.1, 0.8, 0.1]), (1, 0.8));
        let (l, c) = pseudo_label(&[1.0 / 3.0; 3]);
        assert_eq!(l, 0);
        assert_relative_eq!(c, 1.0 / 3.0);
        assert_eq!(pseudo_label(&[0.5, 0.5, 0.0]), (0, 0.5));
    }

    #[test]
    fn consistency_gate_closed() {
        let batch = UnlabeledBatchOutputs::from_probs(
            vec![vec![0.5, 0.3, 0.2], vec![0.9, 0.05, 0.05]],
            vec![vec![0.2, 0.5, 0.3], vec![0.3, 0.3, 0.4]],
        )
        .unwrap();
        let l = consistency_loss(&batch, 0.98, LossKind::Ce).unwrap();
        assert_eq!(l.value, 0.0);
        assert!(l.dlogits.iter().flatten().all(|g| *g == 0.0));
    }

    #[test]
    fn consistency_perfect_strong_row_contributes_zero() {
        let batch = UnlabeledBatchOutputs::new(
            vec![vec![0.99, 0.005, 0.005]],
            vec![vec![0.0, f64::NEG_INFINITY, f64::NEG_INFINITY]],
        )
        .unwrap();
        let l = consistency_loss(&batch, 0.98, LossKind::Ce).unwrap();
        assert_eq!(l.value, 0.0);
        assert_eq!(l.active, [true]);
    }

    #[test]
    fn consistency_hand_value() {
        let batch = UnlabeledBatchOutputs::from_probs(
            vec![vec![0.99, 0.005, 0.005], vec![0.50, 0.30, 0.20]],
            vec![vec![0.6, 0.3, 0.1], vec![0.1, 0.1, 0.8]],
        )
        .unwrap();
        let l = consistency_loss(&batch, 0.98, LossKind::Ce).unwrap();
        assert_relative_eq!(l.value, -(0.6f64.ln()) / 2.0, epsilon = 1e-12);
        assert_relative_eq!(l.value, 0.255413, epsilon = 1e-6);
        assert_eq!(l.active, [true, false]);
        assert!(l.dlogits[1].iter().all(|g| *g == 0.0));
        assert_relative_eq!(l.dlogits[0][0], (0.6 - 1.0) / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn shrink_distribution_examples() {
        let s = shrink_distribution(&[0.5, 0.3, 0.2]).unwrap();
        assert_eq!(s.retained, [0, 2]);
        assert_relative_eq!(s.probs[0], 0.5 / 0.7, epsilon = 1e-12);
        assert_relative_eq!(s.probs[0], 0.7143, epsilon = 1e-4);
        assert_relative_eq!(s.probs[1], 0.2857, epsilon = 1e-4);

        let s = shrink_distribution(&[1.0, 0.0, 0.0]).unwrap();
        assert_eq!(s.retained, [0, 2]);
        assert_eq!(s.probs, [1.0, 0.0]);

        let s = shrink_distribution(&[0.50, 0.01, 0.49]).unwrap();
        assert_eq!(s.retained, [0, 1]);
        assert_relative_eq!(s.probs[0], 0.50 / 0.51, epsilon = 1e-12);
        assert_eq!(s.pseudo_label(), 0);

        assert_eq!(
            shrink_distribution(&[0.6, 0.4]),
            Err(ObjectiveError::TooFewClasses(2))
        );
    }

    #[test]
    fn shrink_gate_examples() {
        assert!(!shrink_gate(&[0.55, 0.40, 0.05], 0.98));
        assert!(shrink_gate(&[0.50, 0.49, 0.01], 0.98));
        assert!(!shrink_gate(&[1.0 / 3.0; 3], 0.51));
    }

    #[test]
    fn shrink_loss_examples() {
        let confident = UnlabeledBatchOutputs::from_probs(
            vec![vec![0.99, 0.0099, 0.0001]],
            vec![vec![0.2, 0.5, 0.3]],
        )
        .unwrap();
        assert_eq!(shrink_loss(&confident, 0.98, LossKind::Ce).unwrap().value, 0.0);

        let batch = UnlabeledBatchOutputs::from_probs(
            vec![vec![0.50, 0.49, 0.01]],
            vec![vec![0.2, 0.5, 0.3]],
        )
        .unwrap();
        let l = shrink_loss(&batch, 0.98, LossKind::Ce).unwrap();
        assert_relative_eq!(l.value, -(0.4f64.ln()), epsilon = 1e-12);
        assert_relative_eq!(l.value, 0.916291, epsilon = 1e-6);
        assert_eq!(l.pseudo, [Some(0)]);
        // softmax over retained logits (ln .2, ln .3) = (0.4, 0.6)
        assert_relative_eq!(l.dlogits[0][0], 0.4 - 1.0, epsilon = 1e-12);
        assert_eq!(l.dlogits[0][1], 0.0);
        assert_relative_eq!(l.dlogits[0][2], 0.6, epsilon = 1e-12);
    }

    #[test]
    fn supervised_examples() {
        let perfect = vec![vec![0.0, f64::NEG_INFINITY, f64::NEG_INFINITY]];
        assert_eq!(supervised_loss(&perfect, &[0], LossKind::Ce).unwrap().value, 0.0);
        let uniform = vec![vec![0.0; 3]; 4];
        assert_relative_eq!(
            supervised_loss(&uniform, &[0, 1, 2, 0], LossKind::Ce).unwrap().value,
            3f64.ln(),
            epsilon = 1e-12
        );
        let rows = vec![ln(&[0.7, 0.2, 0.1]), ln(&[0.1, 0.8, 0.1])];
        let l = supervised_loss(&rows, &[0, 2], LossKind::Ce).unwrap();
        assert_relative_eq!(l.value, 1.329630, epsilon = 1e-6);
        assert!(supervised_loss(&rows, &[0], LossKind::Ce).is_err());
    }

    #[test]
    fn total_is_plain_sum() {
        assert_relative_eq!(total_loss(1.0, 0.5, 0.2), 1.7, epsilon = 1e-15);
        assert_eq!(total_loss(0.8, 0.0, 0.0), 0.8);
    }

    #[test]
    fn mask_stats_respect_reassemble_flag() {
        let rows = vec![
            vec![0.99, 0.005, 0.005],
            vec![0.50, 0.49, 0.01],
            vec![0.4, 0.3, 0.3],
        ];
        let on = MaskStats::from_rows(&rows, 0.98, true);
        assert_eq!((on.n_confident, on.n_shrunk, on.n_dropped), (1, 1, 1));
        let off = MaskStats::from_rows(&rows, 0.98, false);
        assert_eq!((off.n_confident, off.n_shrunk, off.n_dropped), (1, 0, 2));
    }

    fn prob_row(c: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(0.0f64..1.0, c).prop_filter_map("positive mass", |v| {
            let s: f64 = v.iter().sum();
            (s > 1e-9).then(|| v.iter().map(|x| x / s).collect())
        })
    }

    proptest! {
        #[test]
        fn focal_zero_gamma_is_ce(logits in proptest::collection::vec(-5.0f64..5.0, 2..6), t in 0usize..6) {
            let t = t % logits.len();
            let ce = point_loss(&logits, t, LossKind::Ce).unwrap();
            let f = point_loss(&logits, t, LossKind::Focal { gamma: 0.0 }).unwrap();
            prop_assert!((ce.value - f.value).abs() < 1e-9);
            for (a, b) in ce.dlogits.iter().zip(&f.dlogits) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }

        #[test]
        fn losses_are_non_negative(logits in proptest::collection::vec(-8.0f64..8.0, 2..6), t in 0usize..6, g in 0.0f64..5.0) {
            let t = t % logits.len();
            for kind in [LossKind::Ce, LossKind::Focal { gamma: g }, LossKind::asymmetric()] {
                prop_assert!(point_loss(&logits, t, kind).unwrap().value >= 0.0);
            }
        }

        #[test]
        fn shrink_keeps_argmax(row in prop_oneof![prob_row(3), prob_row(4), prob_row(5)]) {
            let s = shrink_distribution(&row).unwrap();
            prop_assert_eq!(s.retained.len(), row.len() - 1);
            prop_assert!((s.probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            let top = argmax(&row);
            prop_assert!(s.retained.contains(&top));
            prop_assert_eq!(s.pseudo_label(), top);
        }

        #[test]
        fn shrink_gate_is_monotone(row in prob_row(3), t1 in 0.0f64..1.0, t2 in 0.0f64..1.0) {
            let (hi, lo) = if t1 >= t2 { (t1, t2) } else { (t2, t1) };
            if shrink_gate(&row, hi) {
                prop_assert!(shrink_gate(&row, lo));
            }
        }
    }
}
