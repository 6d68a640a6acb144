//! Tokenization shared by landmark lookup, grounding, scoring and retrieval.

use std::collections::BTreeSet;

/// Function words, command verbs and spatial relations. None of these name
/// a thing in the scene, so they never contribute to tag overlap.
const STOPWORDS: &[&str] = &[
    "a", "about", "above", "ahead", "airstar", "an", "and", "any", "are", "at", "behind", "can",
    "could", "do", "does", "fly", "for", "from", "go", "guide", "have", "hey", "hi", "how", "i",
    "in", "is", "it", "me", "my", "near", "next", "of", "on", "please", "show", "tell", "that",
    "the", "there", "this", "to", "us", "was", "what", "when", "where", "which", "who", "why",
    "with", "you",
];

/// Lowercase alphanumeric tokens in order of appearance.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect()
}

pub fn is_stopword(token: &str) -> bool {
    STOPWORDS.binary_search(&token).is_ok()
}

/// Distinct content tokens: `tokenize` minus stopwords.
pub fn content_tokens(text: &str) -> BTreeSet<String> {
    tokenize(text).into_iter().filter(|t| !is_stopword(t)).collect()
}

/// Number of distinct content tokens of `query` that also occur in `tags`.
pub fn overlap<'a, I>(query: &BTreeSet<String>, tags: I) -> usize
where
    I: IntoIterator<Item = &'a str>,
{
    let tag_tokens: BTreeSet<String> = tags.into_iter().flat_map(tokenize).collect();
    query.intersection(&tag_tokens).count()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stopwords_are_sorted_for_binary_search() {
        let mut sorted = STOPWORDS.to_vec();
        sorted.sort_unstable();
        assert_eq!(sorted, STOPWORDS);
    }

    #[test]
    fn tokenizes_on_non_alphanumerics() {
        assert_eq!(
            tokenize("Hi AirStar, guide me to the badminton_court!"),
            vec!["hi", "airstar", "guide", "me", "to", "the", "badminton", "court"]
        );
    }

    #[test]
    fn content_tokens_drop_stopwords() {
        let toks = content_tokens("Fly ahead of the tree");
        assert_eq!(toks.into_iter().collect::<Vec<_>>(), vec!["tree"]);
    }

    #[test]
    fn overlap_counts_distinct_tokens() {
        let q = content_tokens("the court for badminton court");
        assert_eq!(overlap(&q, ["Badminton Court"]), 2);
        assert_eq!(overlap(&q, ["library"]), 0);
    }
}
