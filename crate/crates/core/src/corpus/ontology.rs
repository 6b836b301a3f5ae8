use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FrameEntry {
    roles: Vec<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OntologyFile {
    frames: BTreeMap<String, FrameEntry>,
    #[serde(default)]
    lexicon: BTreeMap<String, Vec<String>>,
}

/// Frame inventory, per-frame role lists, and the lexical-unit lexicon that
/// maps a (space-joined) lemma string to the frames it may evoke.
///
/// Frames are indexed in lexicographic order of their names; that order is
/// the tie-breaking order used during decoding.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FrameOntology {
    frames: Vec<String>,
    frame_index: HashMap<String, usize>,
    roles: Vec<Vec<String>>,
    lexicon: BTreeMap<String, BTreeSet<String>>,
}

impl FrameOntology {
    pub fn new(
        frames: impl IntoIterator<Item = (String, Vec<String>)>,
        lexicon: impl IntoIterator<Item = (String, Vec<String>)>,
    ) -> Result<Self> {
        let frames: BTreeMap<String, Vec<String>> = frames.into_iter().collect();
        let mut names = Vec::with_capacity(frames.len());
        let mut roles = Vec::with_capacity(frames.len());
        for (name, frame_roles) in frames {
            if frame_roles.is_empty() {
                return Err(Error::Ontology(format!("frame {name:?} has no roles")));
            }
            let unique: BTreeSet<&String> = frame_roles.iter().collect();
            if unique.len() != frame_roles.len() {
                return Err(Error::Ontology(format!(
                    "frame {name:?} lists a role twice"
                )));
            }
            names.push(name);
            roles.push(frame_roles);
        }
        if names.is_empty() {
            return Err(Error::Ontology("no frames defined".into()));
        }
        let frame_index: HashMap<String, usize> = names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), i))
            .collect();
        let mut lex: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for (key, evoked) in lexicon {
            for frame in &evoked {
                if !frame_index.contains_key(frame) {
                    return Err(Error::Ontology(format!(
                        "lexicon entry {key:?} refers to unknown frame {frame:?}"
                    )));
                }
            }
            lex.entry(key).or_default().extend(evoked);
        }
        Ok(FrameOntology {
            frames: names,
            frame_index,
            roles,
            lexicon: lex,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: OntologyFile = serde_json::from_str(text)?;
        Self::new(
            file.frames.into_iter().map(|(k, v)| (k, v.roles)),
            file.lexicon,
        )
    }

    pub fn to_json(&self) -> String {
        let file = OntologyFile {
            frames: self
                .frames
                .iter()
                .zip(&self.roles)
                .map(|(f, r)| (f.clone(), FrameEntry { roles: r.clone() }))
                .collect(),
            lexicon: self
                .lexicon
                .iter()
                .map(|(k, v)| (k.clone(), v.iter().cloned().collect()))
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("ontology serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json() + "\n").map_err(|e| Error::io(path, e))
    }

    /// SHA-256 of the canonical JSON form.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_json().as_bytes()))
    }

    pub fn frames(&self) -> &[String] {
        &self.frames
    }

    pub fn num_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn frame_index(&self, frame: &str) -> Option<usize> {
        self.frame_index.get(frame).copied()
    }

    pub fn contains_frame(&self, frame: &str) -> bool {
        self.frame_index.contains_key(frame)
    }

    pub fn roles_of(&self, frame: &str) -> Option<&[String]> {
        self.frame_index(frame).map(|i| self.roles[i].as_slice())
    }

    pub fn lexicon(&self) -> &BTreeMap<String, BTreeSet<String>> {
        &self.lexicon
    }

    pub fn lookup(&self, lemma_key: &str) -> Option<&BTreeSet<String>> {
        self.lexicon.get(lemma_key)
    }

    /// Deduplicated union of every frame's roles, sorted.
    pub fn role_labels(&self) -> Vec<String> {
        self.roles
            .iter()
            .flatten()
            .cloned()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }
}
