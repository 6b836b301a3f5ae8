use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{AnnotatedSentence, FrameOntology};
use crate::error::{Error, Result};

/// Reads and validates a JSONL corpus. Errors carry the 1-based line number.
pub fn load_corpus(
    path: impl AsRef<Path>,
    ontology: &FrameOntology,
) -> Result<Vec<AnnotatedSentence>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_corpus(BufReader::new(file), ontology)
}

pub fn read_corpus(
    reader: impl BufRead,
    ontology: &FrameOntology,
) -> Result<Vec<AnnotatedSentence>> {
    let mut sentences = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io("<corpus>", e).at_line(line_no))?;
        if line.trim().is_empty() {
            continue;
        }
        let sentence: AnnotatedSentence =
            serde_json::from_str(&line).map_err(|e| Error::Json(e).at_line(line_no))?;
        sentence
            .validate(ontology)
            .map_err(|e| e.at_line(line_no))?;
        sentences.push(sentence);
    }
    Ok(sentences)
}

pub fn parse_corpus(text: &str, ontology: &FrameOntology) -> Result<Vec<AnnotatedSentence>> {
    read_corpus(text.as_bytes(), ontology)
}

pub fn write_corpus(
    mut writer: impl Write,
    sentences: &[AnnotatedSentence],
) -> std::io::Result<()> {
    for s in sentences {
        serde_json::to_writer(&mut writer, s)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()
}

pub fn save_corpus(path: impl AsRef<Path>, sentences: &[AnnotatedSentence]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_corpus(BufWriter::new(file), sentences).map_err(|e| Error::io(path, e))
}
