use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::Rng;

use super::{AugmentError, Result};
use crate::seed;

const BUILTIN: &str = include_str!("../../assets/lexicon.tsv");

/// Lowercase token to synonym list.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SynonymLexicon {
    map: BTreeMap<String, Vec<String>>,
}

impl SynonymLexicon {
    pub fn empty() -> Self {
        Self::default()
    }

    /// The general-purpose lexicon shipped with the crate.
    pub fn builtin() -> Self {
        Self::parse_tsv(BUILTIN).expect("builtin lexicon is valid")
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse_tsv(&fs::read_to_string(path)?)
    }

    /// Parses `token<TAB>syn1,syn2,...` lines. Blank lines and lines starting
    /// with `#` are skipped.
    pub fn parse_tsv(src: &str) -> Result<Self> {
        let mut lex = Self::default();
        for (i, line) in src.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (token, syns) = line.split_once('\t').ok_or_else(|| AugmentError::Lexicon {
                line: i + 1,
                reason: "expected token<TAB>synonyms".into(),
            })?;
            let syns: Vec<&str> = syns.split(',').map(str::trim).collect();
            lex.insert(token.trim(), &syns)
                .map_err(|reason| AugmentError::Lexicon { line: i + 1, reason })?;
        }
        Ok(lex)
    }

    /// Adds or replaces an entry. Synonyms are lowercased and deduplicated;
    /// the token itself is dropped from its own list.
    pub fn insert(&mut self, token: &str, synonyms: &[&str]) -> std::result::Result<(), String> {
        let token = token.to_lowercase();
        if token.is_empty() || token.chars().any(char::is_whitespace) {
            return Err(format!("invalid token {token:?}"));
        }
        let mut list: Vec<String> = Vec::new();
        for s in synonyms {
            let s = s.to_lowercase();
            if s.is_empty() || s.chars().any(char::is_whitespace) {
                return Err(format!("invalid synonym {s:?} for {token:?}"));
            }
            if s != token && !list.contains(&s) {
                list.push(s);
            }
        }
        if list.is_empty() {
            return Err(format!("no synonyms for {token:?}"));
        }
        self.map.insert(token, list);
        Ok(())
    }

    pub fn get(&self, lower_token: &str) -> Option<&[String]> {
        self.map.get(lower_token).map(Vec::as_slice)
    }

    pub fn contains(&self, lower_token: &str) -> bool {
        self.map.contains_key(lower_token)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn to_tsv(&self) -> String {
        self.map
            .iter()
            .map(|(t, s)| format!("{t}\t{}\n", s.join(",")))
            .collect()
    }
}

/// A whitespace-delimited token split into leading punctuation, core and
/// trailing punctuation.
pub(crate) struct TokenParts<'a> {
    pub prefix: &'a str,
    pub core: &'a str,
    pub suffix: &'a str,
}

pub(crate) fn split_token(tok: &str) -> TokenParts<'_> {
    let start = tok
        .find(|c: char| !c.is_ascii_punctuation())
        .unwrap_or(tok.len());
    let end = tok
        .rfind(|c: char| !c.is_ascii_punctuation())
        .map(|i| i + tok[i..].chars().next().map_or(1, char::len_utf8))
        .unwrap_or(start);
    TokenParts {
        prefix: &tok[..start],
        core: &tok[start..end.max(start)],
        suffix: &tok[end.max(start)..],
    }
}

/// Copies the case of `original`'s first letter onto `replacement`.
pub(crate) fn match_case(original: &str, replacement: &str) -> String {
    let upper = original.chars().next().is_some_and(char::is_uppercase);
    if !upper {
        return replacement.to_owned();
    }
    let mut chars = replacement.chars();
    match chars.next() {
        Some(first) => first.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

/// Rewrites each whitespace token through `f`, keeping all whitespace as is.
pub(crate) fn map_tokens(text: &str, mut f: impl FnMut(usize, &str) -> Option<String>) -> String {
    let mut out = String::with_capacity(text.len() + 8);
    let mut idx = 0;
    let mut rest = text;
    while !rest.is_empty() {
        let ws_len = rest.len() - rest.trim_start().len();
        out.push_str(&rest[..ws_len]);
        rest = &rest[ws_len..];
        if rest.is_empty() {
            break;
        }
        let tok_len = rest.find(char::is_whitespace).unwrap_or(rest.len());
        let tok = &rest[..tok_len];
        match f(idx, tok) {
            Some(new) => out.push_str(&new),
            None => out.push_str(tok),
        }
        idx += 1;
        rest = &rest[tok_len..];
    }
    out
}

/// Replaces every lexicon token independently with probability `p` by a
/// uniformly chosen synonym. Punctuation around a token and the case of its
/// first letter survive the replacement; whitespace is untouched.
pub fn weak_augment(text: &str, lexicon: &SynonymLexicon, p: f64, rng_seed: u64) -> String {
    let p = p.clamp(0.0, 1.0);
    if lexicon.is_empty() || p == 0.0 {
        return text.to_owned();
    }
    let mut rng = seed::rng(rng_seed);
    map_tokens(text, |_, tok| {
        let parts = split_token(tok);
        let syns = lexicon.get(&parts.core.to_lowercase())?;
        if !rng.gen_bool(p) {
            return None;
        }
        let pick = &syns[rng.gen_range(0..syns.len())];
        Some(format!(
            "{}{}{}",
            parts.prefix,
            match_case(parts.core, pick),
            parts.suffix
        ))
    })
}
