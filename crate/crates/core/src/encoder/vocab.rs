use std::collections::HashMap;
use std::fmt::Write as _;

pub const UNK: &str = "<unk>";
pub const UNK_ID: usize = 0;

/// Lowercased maximal runs of alphanumeric characters. Whitespace and
/// punctuation both end a token and are dropped.
pub fn words(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Token table with the unknown token reserved at index 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    counts: Vec<u64>,
    index: HashMap<String, usize>,
}

impl Vocab {
    /// Builds a vocabulary from `(token, count)` entries in index order,
    /// starting after the reserved unknown token.
    pub fn from_entries(entries: impl IntoIterator<Item = (String, u64)>) -> Self {
        let mut tokens = vec![UNK.to_owned()];
        let mut counts = vec![0];
        for (t, c) in entries {
            tokens.push(t);
            counts.push(c);
        }
        let index = tokens.iter().enumerate().skip(1).map(|(i, t)| (t.clone(), i)).collect();
        Self { tokens, counts, index }
    }

    /// Tokens with frequency at least `min_freq`, most frequent first and
    /// ties in lexicographic order, truncated so the table including the
    /// unknown token holds at most `max_size` entries.
    pub fn build<'a>(texts: impl IntoIterator<Item = &'a str>, max_size: usize, min_freq: u64) -> Self {
        let mut freq: HashMap<String, u64> = HashMap::new();
        for t in texts {
            for w in words(t) {
                *freq.entry(w).or_default() += 1;
            }
        }
        let mut entries: Vec<(String, u64)> =
            freq.into_iter().filter(|(_, c)| *c >= min_freq.max(1)).collect();
        entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        entries.truncate(max_size.saturating_sub(1));
        Self::from_entries(entries)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn count(&self, id: usize) -> u64 {
        self.counts.get(id).copied().unwrap_or(0)
    }

    pub(crate) fn entries(&self) -> impl Iterator<Item = (&str, u64)> {
        self.tokens.iter().map(String::as_str).zip(self.counts.iter().copied())
    }

    /// `token<TAB>index<TAB>frequency` lines.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("token\tindex\tfrequency\n");
        for (i, (t, c)) in self.entries().enumerate() {
            let _ = writeln!(out, "{t}\t{i}\t{c}");
        }
        out
    }
}

/// Token ids of `text`; an empty result becomes a single unknown id.
pub fn tokenize(text: &str, vocab: &Vocab) -> Vec<usize> {
    let ids: Vec<usize> = words(text).iter().map(|w| vocab.id(w)).collect();
    if ids.is_empty() {
        vec![UNK_ID]
    } else {
        ids
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_and_orders() {
        let v = Vocab::build(["a a b"], 100, 1);
        assert_eq!(v.tokens(), [UNK, "a", "b"]);
        assert_eq!((v.count(1), v.count(2)), (2, 1));
    }

    #[test]
    fn min_freq_threshold() {
        let v = Vocab::build(["a a b"], 100, 3);
        assert_eq!(v.tokens(), [UNK]);
    }

    #[test]
    fn ties_are_lexicographic_and_size_capped() {
        let v = Vocab::build(["y x z x y z w"], 100, 1);
        assert_eq!(v.tokens(), [UNK, "x", "y", "z", "w"]);
        let v = Vocab::build(["y x z x y z w"], 3, 1);
        assert_eq!(v.tokens(), [UNK, "x", "y"]);
    }

    #[test]
    fn tokenize_normalizes() {
        let v = Vocab::build(["profit"], 10, 1);
        assert_eq!(tokenize("", &v), vec![UNK_ID]);
        assert_eq!(tokenize("  ?! ", &v), vec![UNK_ID]);
        assert_eq!(tokenize("Profit, profit!", &v), vec![1, 1]);
        assert_eq!(tokenize("loss deficit", &v), vec![UNK_ID, UNK_ID]);
        assert_eq!(words("Q3 revenue: $4.2M"), ["q3", "revenue", "4", "2m"]);
    }

    #[test]
    fn tsv_dump() {
        let v = Vocab::build(["b a b"], 10, 1);
        assert_eq!(v.to_tsv(), "token\tindex\tfrequency\n<unk>\t0\t0\nb\t1\t2\na\t2\t1\n");
    }
}
