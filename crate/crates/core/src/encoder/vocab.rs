use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::AnnotatedSentence;

pub const UNKNOWN_TOKEN: &str = "<unk>";

/// Lowercased word vocabulary. Index 0 is the unknown-token fallback.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Builds the vocabulary in order of first appearance.
    pub fn from_corpus<'a>(sentences: impl IntoIterator<Item = &'a AnnotatedSentence>) -> Self {
        let mut words = vec![UNKNOWN_TOKEN.to_string()];
        let mut index = HashMap::from([(UNKNOWN_TOKEN.to_string(), 0)]);
        for sentence in sentences {
            for token in &sentence.tokens {
                let key = token.to_lowercase();
                if !index.contains_key(&key) {
                    index.insert(key.clone(), words.len());
                    words.push(key);
                }
            }
        }
        Vocabulary { words, index }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn lookup(&self, token: &str) -> usize {
        self.index.get(&token.to_lowercase()).copied().unwrap_or(0)
    }

    pub fn indices(&self, tokens: &[String]) -> Vec<usize> {
        tokens.iter().map(|t| self.lookup(t)).collect()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn digest(&self) -> String {
        let json = serde_json::to_string(&self.words).expect("vocabulary serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

impl From<Vec<String>> for Vocabulary {
    fn from(words: Vec<String>) -> Self {
        let index = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i))
            .collect();
        Vocabulary { words, index }
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.words
    }
}
