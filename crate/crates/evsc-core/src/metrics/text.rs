//! Shared text normalization for the caption metrics: lowercase, drop
//! ASCII punctuation, split on whitespace.

use std::collections::BTreeMap;

/// Normalizes a phrase into scoring tokens.
pub fn tokenize(phrase: &str) -> Vec<String> {
    phrase
        .split_whitespace()
        .filter_map(|w| {
            let cleaned: String = w
                .chars()
                .filter(|c| !c.is_ascii_punctuation())
                .flat_map(|c| c.to_lowercase())
                .collect();
            if cleaned.is_empty() {
                None
            } else {
                Some(cleaned)
            }
        })
        .collect()
}

/// Counts the n-grams of one order in a token sequence. Keys are the
/// space-joined gram tokens (tokens never contain whitespace, so joined
/// keys are unambiguous).
pub fn ngram_counts(tokens: &[String], n: usize) -> BTreeMap<String, f64> {
    let mut counts = BTreeMap::new();
    if n == 0 || tokens.len() < n {
        return counts;
    }
    for window in tokens.windows(n) {
        *counts.entry(window.join(" ")).or_insert(0.0) += 1.0;
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenize_lowercases_and_strips_punctuation() {
        assert_eq!(tokenize("The RED block!"), vec!["the", "red", "block"]);
        assert_eq!(tokenize("a,b"), vec!["ab"]);
        assert_eq!(tokenize("  ...  "), Vec::<String>::new());
        assert_eq!(tokenize(""), Vec::<String>::new());
    }

    #[test]
    fn ngram_counts_cover_all_windows() {
        let toks: Vec<String> = ["a", "b", "a", "b"].iter().map(|s| s.to_string()).collect();
        let uni = ngram_counts(&toks, 1);
        assert_eq!(uni["a"], 2.0);
        assert_eq!(uni["b"], 2.0);
        let bi = ngram_counts(&toks, 2);
        assert_eq!(bi["a b"], 2.0);
        assert_eq!(bi["b a"], 1.0);
        let four = ngram_counts(&toks, 4);
        assert_eq!(four["a b a b"], 1.0);
        assert!(ngram_counts(&toks, 5).is_empty());
    }
}
