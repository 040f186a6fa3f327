//! Line-oriented corpus files: UTF-8, one sentence per line.

use std::fs;
use std::path::Path;

use super::{Lang, Sentence};
use crate::error::{Error, Result};

/// Reads a file as lines; invalid UTF-8 is reported with its 1-based line number.
pub fn read_lines(path: &Path) -> Result<Vec<String>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    split_lines(&bytes)
}

pub fn split_lines(bytes: &[u8]) -> Result<Vec<String>> {
    let mut lines = Vec::new();
    if bytes.is_empty() {
        return Ok(lines);
    }
    let body = bytes.strip_suffix(b"\n").unwrap_or(bytes);
    for (i, raw) in body.split(|&b| b == b'\n').enumerate() {
        let raw = raw.strip_suffix(b"\r").unwrap_or(raw);
        let line = std::str::from_utf8(raw).map_err(|_| Error::InvalidUtf8 { line: i + 1 })?;
        lines.push(line.to_string());
    }
    Ok(lines)
}

/// Reads pre-tokenized sentences (whitespace-separated tokens).
pub fn read_sentences(path: &Path, lang: &Lang) -> Result<Vec<Sentence>> {
    Ok(read_lines(path)?
        .iter()
        .map(|l| Sentence::from_line(l, lang.clone()))
        .collect())
}

/// Reads a `source TAB target` file. Only the first two columns are used.
pub fn read_parallel_tsv(path: &Path, src: &Lang, tgt: &Lang) -> Result<Vec<(Sentence, Sentence)>> {
    read_lines(path)?
        .iter()
        .enumerate()
        .map(|(i, l)| {
            let mut cols = l.split('\t');
            match (cols.next(), cols.next()) {
                (Some(a), Some(b)) => Ok((Sentence::from_line(a, src.clone()), Sentence::from_line(b, tgt.clone()))),
                _ => Err(Error::format(path.display().to_string(), i + 1, "expected source TAB target")),
            }
        })
        .collect()
}

/// Reads two line-aligned files.
pub fn read_parallel_files(src_path: &Path, tgt_path: &Path, src: &Lang, tgt: &Lang) -> Result<Vec<(Sentence, Sentence)>> {
    let a = read_sentences(src_path, src)?;
    let b = read_sentences(tgt_path, tgt)?;
    if a.len() != b.len() {
        return Err(Error::format(
            tgt_path.display().to_string(),
            b.len().min(a.len()) + 1,
            format!("{} source lines but {} target lines", a.len(), b.len()),
        ));
    }
    Ok(a.into_iter().zip(b).collect())
}

pub fn sentences_to_text(sentences: &[Sentence]) -> String {
    let mut s = String::new();
    for sent in sentences {
        s.push_str(&sent.text());
        s.push('\n');
    }
    s
}
