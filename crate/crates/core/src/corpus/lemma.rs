//! Lemmatization interface and the default rule-table lemmatizer.
//!
//! [`RuleLemmatizer`] lowercases each token, consults a small irregular-form
//! table, and otherwise applies the first matching suffix rule:
//!
//! | suffix                         | replacement | minimum stem |
//! |--------------------------------|-------------|--------------|
//! | `ies`                          | `y`         | 2            |
//! | `sses`                         | `ss`        | 1            |
//! | `ches`, `shes`, `xes`, `zes`   | drop `es`   | 1            |
//! | `ied`                          | `y`         | 2            |
//! | `ed`                           | drop        | 3            |
//! | `s` (not `ss`, `us`, `is`)     | drop        | 3            |
//!
//! `-ing` is never stripped, so nominal lemmas such as `meeting` are fixed
//! points.

use super::AnnotatedSentence;
use crate::error::{Error, Result};

/// Maps a token sequence to one lemma per token.
pub trait Lemmatizer {
    fn lemmatize(&self, tokens: &[String]) -> Vec<String>;
}

impl<F> Lemmatizer for F
where
    F: Fn(&[String]) -> Vec<String>,
{
    fn lemmatize(&self, tokens: &[String]) -> Vec<String> {
        self(tokens)
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct RuleLemmatizer;

const IRREGULAR: &[(&str, &str)] = &[
    ("am", "be"),
    ("are", "be"),
    ("ate", "eat"),
    ("bought", "buy"),
    ("came", "come"),
    ("children", "child"),
    ("did", "do"),
    ("does", "do"),
    ("gave", "give"),
    ("given", "give"),
    ("got", "get"),
    ("had", "have"),
    ("has", "have"),
    ("is", "be"),
    ("left", "leave"),
    ("made", "make"),
    ("men", "man"),
    ("met", "meet"),
    ("people", "person"),
    ("ran", "run"),
    ("said", "say"),
    ("saw", "see"),
    ("seen", "see"),
    ("sold", "sell"),
    ("told", "tell"),
    ("took", "take"),
    ("was", "be"),
    ("went", "go"),
    ("were", "be"),
    ("women", "woman"),
];

// (suffix, replacement, minimum stem length)
const SUFFIX_RULES: &[(&str, &str, usize)] = &[
    ("ies", "y", 2),
    ("sses", "ss", 1),
    ("ches", "ch", 1),
    ("shes", "sh", 1),
    ("xes", "x", 1),
    ("zes", "z", 1),
    ("ied", "y", 2),
    ("ed", "", 3),
];

impl RuleLemmatizer {
    pub fn lemma(&self, token: &str) -> String {
        let lower = token.to_lowercase();
        if let Ok(i) = IRREGULAR.binary_search_by(|(form, _)| form.cmp(&lower.as_str())) {
            return IRREGULAR[i].1.to_string();
        }
        for &(suffix, replacement, min_stem) in SUFFIX_RULES {
            if let Some(stem) = lower.strip_suffix(suffix) {
                if stem.chars().count() >= min_stem {
                    return format!("{stem}{replacement}");
                }
            }
        }
        if let Some(stem) = lower.strip_suffix('s') {
            let protected = ["ss", "us", "is"].iter().any(|p| lower.ends_with(p));
            if !protected && stem.chars().count() >= 3 {
                return stem.to_string();
            }
        }
        lower
    }
}

impl Lemmatizer for RuleLemmatizer {
    fn lemmatize(&self, tokens: &[String]) -> Vec<String> {
        tokens.iter().map(|t| self.lemma(t)).collect()
    }
}

/// Returns a copy of `sentence` with lemmas filled in by `lemmatizer`.
pub fn lemmatize(
    sentence: &AnnotatedSentence,
    lemmatizer: &dyn Lemmatizer,
) -> Result<AnnotatedSentence> {
    let lemmas = lemmatizer.lemmatize(&sentence.tokens);
    if lemmas.len() != sentence.tokens.len() {
        return Err(Error::LemmaCount {
            expected: sentence.tokens.len(),
            got: lemmas.len(),
        });
    }
    if let Some(index) = lemmas.iter().position(String::is_empty) {
        return Err(Error::EmptyLemma { index });
    }
    Ok(AnnotatedSentence {
        lemmas: Some(lemmas),
        ..sentence.clone()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sentence(tokens: &[&str]) -> AnnotatedSentence {
        AnnotatedSentence::new(tokens.iter().map(|t| t.to_string()).collect())
    }

    #[test]
    fn irregular_table_is_sorted_for_binary_search() {
        assert!(IRREGULAR.windows(2).all(|w| w[0].0 < w[1].0));
    }

    #[test]
    fn plural_noun_is_reduced() {
        let s = lemmatize(&sentence(&["Meetings"]), &RuleLemmatizer).unwrap();
        assert_eq!(s.lemmas.unwrap(), ["meeting"]);
    }

    #[test]
    fn lemmas_are_fixed_points() {
        for word in [
            "meeting", "walk", "give", "up", "class", "bus", "this", "red",
        ] {
            assert_eq!(RuleLemmatizer.lemma(word), word);
        }
    }

    #[test]
    fn suffix_rules() {
        let cases = [
            ("walked", "walk"),
            ("studies", "study"),
            ("studied", "study"),
            ("boxes", "box"),
            ("classes", "class"),
            ("Gave", "give"),
            ("cats", "cat"),
        ];
        for (token, lemma) in cases {
            assert_eq!(RuleLemmatizer.lemma(token), lemma, "{token}");
        }
    }

    #[test]
    fn custom_lemmatizer_errors() {
        let empty = |tokens: &[String]| vec![String::new(); tokens.len()];
        assert!(matches!(
            lemmatize(&sentence(&["a", "b"]), &empty),
            Err(Error::EmptyLemma { index: 0 })
        ));
        let short = |_: &[String]| vec!["x".to_string()];
        assert!(matches!(
            lemmatize(&sentence(&["a", "b"]), &short),
            Err(Error::LemmaCount {
                expected: 2,
                got: 1
            })
        ));
    }
}
