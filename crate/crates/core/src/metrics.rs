//! Evaluation metrics and token-frequency reports.

use std::collections::{HashMap, HashSet};
use std::io::Write;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::LabelSpace;
use crate::encoder::words;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("length mismatch: {predicted} predictions vs {gold} gold labels")]
    LengthMismatch { predicted: usize, gold: usize },
    #[error("no samples")]
    Empty,
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = MetricsError> = std::result::Result<T, E>;

fn check_lengths(predicted: &[usize], gold: &[usize]) -> Result<()> {
    if predicted.len() != gold.len() {
        return Err(MetricsError::LengthMismatch {
            predicted: predicted.len(),
            gold: gold.len(),
        });
    }
    Ok(())
}

/// Rows are gold classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(predicted: &[usize], gold: &[usize], classes: usize) -> Result<Self> {
        check_lengths(predicted, gold)?;
        let mut counts = vec![0u64; classes * classes];
        for (&p, &g) in predicted.iter().zip(gold) {
            for label in [p, g] {
                if label >= classes {
                    return Err(MetricsError::LabelOutOfRange { label, classes });
                }
            }
            counts[g * classes + p] += 1;
        }
        Ok(Self { classes, counts })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn get(&self, gold: usize, predicted: usize) -> u64 {
        self.counts[gold * self.classes + predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes).map(|c| self.get(c, c)).sum()
    }

    pub fn true_positives(&self, c: usize) -> u64 {
        self.get(c, c)
    }

    pub fn false_positives(&self, c: usize) -> u64 {
        (0..self.classes).filter(|&g| g != c).map(|g| self.get(g, c)).sum()
    }

    pub fn false_negatives(&self, c: usize) -> u64 {
        (0..self.classes).filter(|&p| p != c).map(|p| self.get(c, p)).sum()
    }

    /// F1 of class `c`; every 0/0 along the way counts as 0.
    pub fn f1(&self, c: usize) -> f64 {
        let tp = self.true_positives(c) as f64;
        let fp = self.false_positives(c) as f64;
        let fn_ = self.false_negatives(c) as f64;
        let ratio = |n: f64, d: f64| if d == 0.0 { 0.0 } else { n / d };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        ratio(2.0 * precision * recall, precision + recall)
    }

    pub fn rows(&self) -> impl Iterator<Item = &[u64]> {
        self.counts.chunks(self.classes)
    }
}

pub fn accuracy(predicted: &[usize], gold: &[usize]) -> Result<f64> {
    check_lengths(predicted, gold)?;
    if gold.is_empty() {
        return Err(MetricsError::Empty);
    }
    let hits = predicted.iter().zip(gold).filter(|(p, g)| p == g).count();
    Ok(hits as f64 / gold.len() as f64)
}

/// Per-class F1 and their unweighted mean over all `classes`.
pub fn macro_f1(predicted: &[usize], gold: &[usize], classes: usize) -> Result<(Vec<f64>, f64)> {
    let cm = ConfusionMatrix::new(predicted, gold, classes)?;
    let per_class: Vec<f64> = (0..classes).map(|c| cm.f1(c)).collect();
    let mean = per_class.iter().sum::<f64>() / classes as f64;
    Ok((per_class, mean))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsBundle {
    pub accuracy: f64,
    pub per_class_f1: Vec<f64>,
    pub macro_f1: f64,
    pub confusion: ConfusionMatrix,
}

impl MetricsBundle {
    pub fn compute(predicted: &[usize], gold: &[usize], classes: usize) -> Result<Self> {
        let accuracy = accuracy(predicted, gold)?;
        let confusion = ConfusionMatrix::new(predicted, gold, classes)?;
        let (per_class_f1, macro_f1) = macro_f1(predicted, gold, classes)?;
        Ok(Self {
            accuracy,
            per_class_f1,
            macro_f1,
            confusion,
        })
    }

    /// `metric,value` rows: accuracy, macro_f1, then `f1_<class>`.
    pub fn write_csv<W: Write>(&self, w: W, labels: &LabelSpace) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["metric", "value"])?;
        wtr.write_record(["accuracy", &self.accuracy.to_string()])?;
        wtr.write_record(["macro_f1", &self.macro_f1.to_string()])?;
        for (c, f1) in self.per_class_f1.iter().enumerate() {
            wtr.write_record([format!("f1_{}", labels.name(c)), f1.to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// C×C grid with a `gold\predicted` header row.
    pub fn write_confusion_csv<W: Write>(&self, w: W, labels: &LabelSpace) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let mut header = vec!["gold\\predicted".to_owned()];
        header.extend(labels.names().iter().cloned());
        wtr.write_record(&header)?;
        for (g, row) in self.confusion.rows().enumerate() {
            let mut rec = vec![labels.name(g).to_owned()];
            rec.extend(row.iter().map(u64::to_string));
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Accuracy of pseudo-labels over the rows whose confidence gate fired, or
/// `None` when no row fired.
pub fn pseudo_label_accuracy(pseudo: &[usize], gated: &[bool], gold: &[usize]) -> Option<f64> {
    let mut tally = PseudoLabelTally::default();
    for ((&p, &g), &y) in pseudo.iter().zip(gated).zip(gold) {
        if g {
            tally.record(p, y);
        }
    }
    tally.accuracy()
}

/// Running pseudo-label hit counter.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PseudoLabelTally {
    pub correct: usize,
    pub total: usize,
}

impl PseudoLabelTally {
    pub fn record(&mut self, pseudo: usize, gold: usize) {
        self.total += 1;
        self.correct += usize::from(pseudo == gold);
    }

    pub fn accuracy(&self) -> Option<f64> {
        (self.total > 0).then(|| self.correct as f64 / self.total as f64)
    }
}

pub fn stopwords() -> &'static HashSet<&'static str> {
    static SET: OnceLock<HashSet<&'static str>> = OnceLock::new();
    SET.get_or_init(|| {
        include_str!("../assets/stopwords.txt")
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .collect()
    })
}

/// The `top_n` most frequent non-stopword tokens, ties in lexicographic
/// order. Tokens are split the same way as the encoder's tokenizer.
pub fn token_frequency_report<'a>(
    texts: impl IntoIterator<Item = &'a str>,
    top_n: usize,
) -> Vec<(String, u64)> {
    let stop = stopwords();
    let mut counts: HashMap<String, u64> = HashMap::new();
    for t in texts {
        for w in words(t) {
            if !stop.contains(w.as_str()) {
                *counts.entry(w).or_default() += 1;
            }
        }
    }
    let mut out: Vec<(String, u64)> = counts.into_iter().collect();
    out.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    out.truncate(top_n);
    out
}

pub fn write_token_report_csv<W: Write>(w: W, report: &[(String, u64)]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["token", "count"])?;
    for (t, c) in report {
        wtr.write_record([t.as_str(), &c.to_string()])?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn accuracy_cases() {
        assert_eq!(accuracy(&[0, 1, 2], &[0, 1, 2]).unwrap(), 1.0);
        assert_eq!(accuracy(&[1, 2, 0], &[0, 1, 2]).unwrap(), 0.0);
        assert_eq!(accuracy(&[0, 1, 2, 2], &[0, 1, 2, 0]).unwrap(), 0.75);
        assert!(matches!(accuracy(&[], &[]), Err(MetricsError::Empty)));
        assert!(matches!(
            accuracy(&[0], &[0, 1]),
            Err(MetricsError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn macro_f1_cases() {
        let (per, mean) = macro_f1(&[0, 1, 2], &[0, 1, 2], 3).unwrap();
        assert_eq!(per, [1.0, 1.0, 1.0]);
        assert_eq!(mean, 1.0);

        let (per, _) = macro_f1(&[0, 1], &[0, 1], 3).unwrap();
        assert_eq!(per[2], 0.0);

        let (per, mean) = macro_f1(&[0, 1, 1, 1], &[0, 0, 1, 2], 3).unwrap();
        assert_relative_eq!(per[0], 2.0 / 3.0, epsilon = 1e-12);
        assert_relative_eq!(per[1], 0.5, epsilon = 1e-12);
        assert_eq!(per[2], 0.0);
        assert_relative_eq!(mean, 0.3889, epsilon = 1e-4);
        assert!(macro_f1(&[3], &[0], 3).is_err());
    }

    #[test]
    fn confusion_layout() {
        let cm = ConfusionMatrix::new(&[0, 1, 1, 1], &[0, 0, 1, 2], 3).unwrap();
        assert_eq!(cm.get(0, 1), 1);
        assert_eq!(cm.get(2, 1), 1);
        assert_eq!(cm.trace(), 2);
        assert_eq!(cm.total(), 4);
        let b = MetricsBundle::compute(&[0, 1, 1, 1], &[0, 0, 1, 2], 3).unwrap();
        let mut out = Vec::new();
        b.write_confusion_csv(&mut out, &LabelSpace::sentiment3()).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "gold\\predicted,positive,neutral,negative\npositive,1,1,0\nneutral,0,1,0\nnegative,0,1,0\n"
        );
    }

    #[test]
    fn pseudo_label_accuracy_cases() {
        assert_eq!(pseudo_label_accuracy(&[0, 1], &[false, false], &[0, 1]), None);
        assert_eq!(pseudo_label_accuracy(&[0, 1], &[true, true], &[0, 1]), Some(1.0));
        assert_eq!(
            pseudo_label_accuracy(&[0, 1, 2, 2], &[true, false, true, false], &[0, 1, 1, 2]),
            Some(0.5)
        );
    }

    #[test]
    fn token_report_cases() {
        assert!(token_frequency_report(std::iter::empty(), 5).is_empty());
        assert_eq!(
            token_frequency_report(["gain gain loss"], 1),
            [("gain".to_string(), 2)]
        );
        assert_eq!(
            token_frequency_report(["The profit, the PROFIT and loss"], 10),
            [("profit".to_string(), 2), ("loss".to_string(), 1)]
        );
    }
}
