//! Weak and strong views of unlabeled text.
//!
//! Weak views come from probabilistic synonym replacement ([`weak_augment`]).
//! Strong views are LLM rewrites: a prompt is built for one of two
//! strategies ([`Strategy::Ee`] extracts entities and numbers and rebuilds
//! the sentence around them, [`Strategy::Ce`] asks for free paraphrases),
//! sent to an OpenAI-compatible endpoint, parsed into `k` candidates and
//! cached. At training time one candidate is drawn uniformly per epoch with
//! [`select_augmentation`].
//!
//! [`MockSource`] replaces the LLM with a deterministic offline rewrite so the
//! whole pipeline can run without network access.

mod cache;
mod client;
mod lexicon;
mod mock;
mod prompt;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cache::{get_or_fetch, normalize_text, record_key, AugmentCache, AugmentationRecord};
pub use client::{
    parse_candidates, query_llm, AugmenterConfig, CountingTransport, HttpResponse, LlmSource,
    Transport, UreqTransport, API_KEY_ENV,
};
pub use lexicon::{weak_augment, SynonymLexicon};
pub use mock::{mock_augment, MockSource, MOCK_MODEL_ID};
pub use prompt::{build_prompt, Prompt, PromptTemplate};

use crate::seed;

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("lexicon line {line}: {reason}")]
    Lexicon { line: usize, reason: String },
    #[error("prompt template: {0}")]
    Template(String),
    #[error("empty candidate list")]
    NoCandidates,
    #[error("missing credential: set {0}")]
    MissingCredential(&'static str),
    #[error("authentication rejected (HTTP {status}): {body}")]
    Auth { status: u16, body: String },
    #[error("transport failure after {attempts} attempt(s): {message}; last body: {body}")]
    Transport {
        attempts: usize,
        message: String,
        body: String,
    },
    #[error("malformed reply after {attempts} attempt(s): parsed {parsed} of {wanted} candidates; raw body: {body}")]
    MalformedReply {
        attempts: usize,
        parsed: usize,
        wanted: usize,
        body: String,
    },
    #[error("cache line {line}: {reason}")]
    CacheCorrupt { line: usize, reason: String },
    #[error("invalid augmenter config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = AugmentError> = std::result::Result<T, E>;

/// Prompting strategy for strong views.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    /// Entity-based enhancement.
    Ee,
    /// Concept-based enhancement.
    Ce,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Ee => "ee",
            Self::Ce => "ce",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "ee" => Ok(Self::Ee),
            "ce" => Ok(Self::Ce),
            other => Err(format!("unknown strategy {other:?} (expected ee or ce)")),
        }
    }
}

/// Anything that can produce `k` rewrites of a text.
pub trait CandidateSource: Send + Sync {
    fn model_id(&self) -> &str;

    fn fetch(&self, text: &str, strategy: Strategy, k: usize) -> Result<Vec<String>>;
}

/// Uniform choice among the candidates.
pub fn select_augmentation(candidates: &[String], rng_seed: u64) -> Result<&str> {
    Ok(&candidates[select_index(candidates.len(), rng_seed)?])
}

/// Index drawn by [`select_augmentation`] for `n` candidates.
pub fn select_index(n: usize, rng_seed: u64) -> Result<usize> {
    if n == 0 {
        return Err(AugmentError::NoCandidates);
    }
    Ok(seed::rng(rng_seed).gen_range(0..n))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_candidate_is_returned() {
        let c = vec!["only".to_string()];
        assert_eq!(select_augmentation(&c, 123).unwrap(), "only");
    }

    #[test]
    fn selection_is_deterministic() {
        let c: Vec<String> = (0..5).map(|i| format!("c{i}")).collect();
        for s in 0..50 {
            assert_eq!(
                select_augmentation(&c, s).unwrap(),
                select_augmentation(&c, s).unwrap()
            );
        }
    }

    #[test]
    fn selection_is_uniform() {
        let c: Vec<String> = (0..4).map(|i| format!("c{i}")).collect();
        let mut counts = [0usize; 4];
        for s in 0..10_000u64 {
            let pick = select_augmentation(&c, seed::derive(2024, s)).unwrap();
            counts[c.iter().position(|x| x == pick).unwrap()] += 1;
        }
        for n in counts {
            let f = n as f64 / 10_000.0;
            assert!((0.23..=0.27).contains(&f), "frequency {f}");
        }
    }

    #[test]
    fn empty_candidates_rejected() {
        assert!(matches!(
            select_augmentation(&[], 0),
            Err(AugmentError::NoCandidates)
        ));
    }

    #[test]
    fn strategy_parsing() {
        assert_eq!("EE".parse::<Strategy>().unwrap(), Strategy::Ee);
        assert_eq!("ce".parse::<Strategy>().unwrap(), Strategy::Ce);
        assert!("none".parse::<Strategy>().is_err());
    }
}
