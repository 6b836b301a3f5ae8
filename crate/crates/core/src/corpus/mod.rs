//! Frame-semantic annotations: sentences, (possibly discontinuous)
//! predicates, frames and role fillers, plus the frame ontology, JSONL
//! interchange, lemmatization and synthetic fixture generation.

mod fixture;
mod io;
mod lemma;
mod ontology;

use std::ops::Add;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use fixture::{generate_fixture, FixtureOptions};
pub use io::{load_corpus, parse_corpus, read_corpus, save_corpus, write_corpus};
pub use lemma::{lemmatize, Lemmatizer, RuleLemmatizer};
pub use ontology::FrameOntology;

/// Closed token interval `[start, end]`, 0-based.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "[usize; 2]", into = "[usize; 2]")]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub const fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }

    /// Number of tokens covered. Only meaningful for valid spans.
    pub fn len(&self) -> usize {
        self.end + 1 - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end < self.start
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.start <= other.end && other.start <= self.end
    }

    pub fn validate(&self, sentence_len: usize) -> Result<()> {
        if self.end < self.start {
            return Err(Error::InvertedSpan { span: *self });
        }
        if self.end >= sentence_len {
            return Err(Error::SpanOutOfBounds {
                span: *self,
                len: sentence_len,
            });
        }
        Ok(())
    }
}

impl From<[usize; 2]> for Span {
    fn from([start, end]: [usize; 2]) -> Self {
        Span { start, end }
    }
}

impl From<Span> for [usize; 2] {
    fn from(s: Span) -> Self {
        [s.start, s.end]
    }
}

/// A frame-evoking target: one or more word spans, sorted by start.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Predicate {
    pub pieces: Vec<Span>,
}

impl Predicate {
    pub fn new(mut pieces: Vec<Span>) -> Self {
        pieces.sort();
        Predicate { pieces }
    }

    pub fn single(span: Span) -> Self {
        Predicate { pieces: vec![span] }
    }

    pub fn is_discontinuous(&self) -> bool {
        self.pieces.len() >= 2
    }

    pub fn validate(&self, sentence_len: usize) -> Result<()> {
        if self.pieces.is_empty() {
            return Err(Error::EmptyPredicate);
        }
        for piece in &self.pieces {
            piece.validate(sentence_len)?;
        }
        if self.pieces.windows(2).any(|w| w[0].end >= w[1].start) {
            return Err(Error::OverlappingPieces);
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoleAssignment {
    #[serde(rename = "name")]
    pub role_name: String,
    #[serde(rename = "span")]
    pub value: Span,
}

impl RoleAssignment {
    pub fn new(role_name: impl Into<String>, value: Span) -> Self {
        RoleAssignment {
            role_name: role_name.into(),
            value,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameTuple {
    pub predicate: Predicate,
    pub frame: String,
    #[serde(default)]
    pub roles: Vec<RoleAssignment>,
}

impl FrameTuple {
    pub fn new(predicate: Predicate, frame: impl Into<String>, roles: Vec<RoleAssignment>) -> Self {
        FrameTuple {
            predicate,
            frame: frame.into(),
            roles,
        }
    }

    pub fn validate(&self, sentence_len: usize, ontology: &FrameOntology) -> Result<()> {
        self.predicate.validate(sentence_len)?;
        let roles = ontology
            .roles_of(&self.frame)
            .ok_or_else(|| Error::UnknownFrame(self.frame.clone()))?;
        for role in &self.roles {
            if !roles.iter().any(|r| r == &role.role_name) {
                return Err(Error::UnknownRole {
                    frame: self.frame.clone(),
                    role: role.role_name.clone(),
                });
            }
            role.value.validate(sentence_len)?;
        }
        Ok(())
    }
}

/// A tokenized sentence with its gold (or predicted) frame tuples.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotatedSentence {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub tokens: Vec<String>,
    #[serde(default)]
    pub lemmas: Option<Vec<String>>,
    #[serde(default)]
    pub tuples: Vec<FrameTuple>,
}

impl AnnotatedSentence {
    pub fn new(tokens: Vec<String>) -> Self {
        AnnotatedSentence {
            id: None,
            tokens,
            lemmas: None,
            tuples: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Copy with the annotation removed, as a parser would receive it.
    pub fn stripped(&self) -> AnnotatedSentence {
        AnnotatedSentence {
            tuples: Vec::new(),
            ..self.clone()
        }
    }

    pub fn validate(&self, ontology: &FrameOntology) -> Result<()> {
        if self.tokens.is_empty() {
            return Err(Error::EmptySentence);
        }
        if let Some(index) = self.tokens.iter().position(String::is_empty) {
            return Err(Error::EmptyToken { index });
        }
        if let Some(lemmas) = &self.lemmas {
            if lemmas.len() != self.tokens.len() {
                return Err(Error::LemmaCount {
                    expected: self.tokens.len(),
                    got: lemmas.len(),
                });
            }
            if let Some(index) = lemmas.iter().position(String::is_empty) {
                return Err(Error::EmptyLemma { index });
            }
        }
        for tuple in &self.tuples {
            tuple.validate(self.tokens.len(), ontology)?;
        }
        Ok(())
    }
}

/// Sentence, predicate (tuple) and role counts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub sentences: usize,
    pub predicates: usize,
    pub roles: usize,
}

impl Add for CorpusStats {
    type Output = CorpusStats;

    fn add(self, rhs: Self) -> Self {
        CorpusStats {
            sentences: self.sentences + rhs.sentences,
            predicates: self.predicates + rhs.predicates,
            roles: self.roles + rhs.roles,
        }
    }
}

pub fn corpus_stats(sentences: &[AnnotatedSentence]) -> CorpusStats {
    sentences
        .iter()
        .map(|s| CorpusStats {
            sentences: 1,
            predicates: s.tuples.len(),
            roles: s.tuples.iter().map(|t| t.roles.len()).sum(),
        })
        .fold(CorpusStats::default(), Add::add)
}
