//! Deterministic offline stand-in for the LLM.

use sha2::{Digest, Sha256};

use super::lexicon::{map_tokens, match_case, split_token, SynonymLexicon};
use super::{CandidateSource, Result, Strategy};
use crate::seed;

pub const MOCK_MODEL_ID: &str = "offline-mock";

/// Interchangeable determiners. Rotating among them never touches a
/// sentiment-bearing word.
const ROTATION: [&str; 10] = [
    "the", "a", "an", "this", "that", "these", "its", "their", "our", "some",
];

enum Slot<'a> {
    Lexicon(&'a [String]),
    Rotation(usize),
}

impl Slot<'_> {
    fn radix(&self) -> u64 {
        match self {
            Slot::Lexicon(syns) => syns.len() as u64,
            Slot::Rotation(_) => ROTATION.len() as u64,
        }
    }
}

fn text_hash(text: &str) -> u64 {
    let digest = Sha256::digest(text.as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

/// `k` label-preserving rewrites of `text`.
///
/// Every lexicon token is replaced by one of its synonyms and every rotation
/// determiner may be swapped for another; no token is ever removed. Each
/// candidate is one point of the mixed-radix space spanned by those choices
/// (lexicon tokens vary fastest), starting from a seed-dependent offset, so
/// the candidates are pairwise distinct whenever `k` does not exceed the
/// number of distinct rewrites.
pub fn mock_augment(text: &str, k: usize, seed: u64, lexicon: &SynonymLexicon) -> Vec<String> {
    let tokens: Vec<&str> = text.split_whitespace().collect();
    let mut lex_slots = Vec::new();
    let mut rot_slots = Vec::new();
    for (i, tok) in tokens.iter().enumerate() {
        let lower = split_token(tok).core.to_lowercase();
        if let Some(syns) = lexicon.get(&lower) {
            lex_slots.push((i, Slot::Lexicon(syns)));
        } else if let Some(r) = ROTATION.iter().position(|w| *w == lower) {
            rot_slots.push((i, Slot::Rotation(r)));
        }
    }
    let slots: Vec<(usize, Slot)> = lex_slots.into_iter().chain(rot_slots).collect();
    let space = slots
        .iter()
        .try_fold(1u64, |acc, (_, s)| acc.checked_mul(s.radix()))
        .unwrap_or(u64::MAX);
    let offset = seed::derive(seed, text_hash(text)) % space;

    (0..k as u64)
        .map(|j| {
            let mut v = (offset + j % space) % space;
            let mut digits = vec![None; tokens.len()];
            for (pos, slot) in &slots {
                let r = slot.radix();
                digits[*pos] = Some((v % r) as usize);
                v /= r;
            }
            map_tokens(text, |i, tok| {
                let d = digits.get(i).copied().flatten()?;
                let slot = &slots.iter().find(|(p, _)| *p == i)?.1;
                let parts = split_token(tok);
                let word = match slot {
                    Slot::Lexicon(syns) => syns[d].as_str(),
                    Slot::Rotation(r) => {
                        if d == 0 {
                            return None;
                        }
                        ROTATION[(r + d) % ROTATION.len()]
                    }
                };
                Some(format!("{}{}{}", parts.prefix, match_case(parts.core, word), parts.suffix))
            })
        })
        .collect()
}

/// [`CandidateSource`] backed by [`mock_augment`].
#[derive(Debug, Clone)]
pub struct MockSource {
    lexicon: SynonymLexicon,
    seed: u64,
}

impl MockSource {
    pub fn new(lexicon: SynonymLexicon, seed: u64) -> Self {
        Self { lexicon, seed }
    }
}

impl CandidateSource for MockSource {
    fn model_id(&self) -> &str {
        MOCK_MODEL_ID
    }

    fn fetch(&self, text: &str, strategy: Strategy, k: usize) -> Result<Vec<String>> {
        let stream = match strategy {
            Strategy::Ee => 1,
            Strategy::Ce => 2,
        };
        Ok(mock_augment(text, k, seed::derive(self.seed, stream), &self.lexicon))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lex() -> SynonymLexicon {
        SynonymLexicon::parse_tsv(
            "rose\tclimbed,increased,grew\nstrong\trobust,solid\nprofit\tearnings,income\n",
        )
        .unwrap()
    }

    #[test]
    fn no_eligible_tokens_is_identity() {
        assert_eq!(mock_augment("Nokia 2024 results", 1, 9, &lex()), ["Nokia 2024 results"]);
        assert_eq!(mock_augment("Nokia results", 3, 9, &lex()), vec!["Nokia results"; 3]);
    }

    #[test]
    fn deterministic() {
        let t = "The profit rose on strong demand";
        assert_eq!(mock_augment(t, 4, 1, &lex()), mock_augment(t, 4, 1, &lex()));
    }

    #[test]
    fn three_lexicon_hits_give_distinct_candidates() {
        // 6 tokens; rose, strong and profit are lexicon hits (3 * 2 * 2 = 12
        // rewrites), "on" and "demand" are not eligible.
        let t = "profit rose on strong demand today";
        for seed in 0..50 {
            let c = mock_augment(t, 3, seed, &lex());
            assert_eq!(c.len(), 3);
            assert!(c[0] != c[1] && c[1] != c[2] && c[0] != c[2], "{c:?}");
            for cand in &c {
                let toks: Vec<&str> = cand.split(' ').collect();
                assert_eq!(toks.len(), 6);
                assert!(["earnings", "income"].contains(&toks[0]));
                assert!(["climbed", "increased", "grew"].contains(&toks[1]));
                assert_eq!(&toks[2..3], ["on"]);
                assert!(["robust", "solid"].contains(&toks[3]));
                assert_eq!(&toks[4..], ["demand", "today"]);
            }
        }
    }

    #[test]
    fn rotation_keeps_markers_and_case() {
        let t = "The profit rose.";
        let c = mock_augment(t, 5, 3, &lex());
        for cand in &c {
            assert!(cand.ends_with('.'));
            let first = cand.split(' ').next().unwrap();
            assert!(first.chars().next().unwrap().is_uppercase(), "{cand}");
        }
        let uniq: std::collections::BTreeSet<_> = c.iter().collect();
        assert_eq!(uniq.len(), 5);
    }

    #[test]
    fn source_uses_strategy_streams() {
        let src = MockSource::new(lex(), 5);
        let t = "the profit rose and the strong quarter";
        let ee = src.fetch(t, Strategy::Ee, 4).unwrap();
        assert_eq!(ee, src.fetch(t, Strategy::Ee, 4).unwrap());
        assert_eq!(ee.len(), 4);
        assert_eq!(src.model_id(), MOCK_MODEL_ID);
    }
}
