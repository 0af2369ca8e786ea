use std::io::BufRead;
use std::path::Path;

use serde::Deserialize;

use crate::corpus::tokenize::{tokenize, truncate};
use crate::error::{Error, Result};

/// Head-truncation limits applied at load time (token counts).
#[derive(Debug, Clone, Copy)]
pub struct TruncationLimits {
    pub question: usize,
    pub answer: usize,
    pub summary: usize,
}

impl Default for TruncationLimits {
    fn default() -> Self {
        TruncationLimits { question: 60, answer: 400, summary: 100 }
    }
}

/// One candidate answer with its relevance label and optional reference
/// summary tokens.
#[derive(Debug, Clone)]
pub struct Candidate {
    pub answer_id: String,
    pub tokens: Vec<String>,
    pub label: u8,
    pub summary: Option<Vec<String>>,
}

/// One question with its labeled candidate pool.
#[derive(Debug, Clone)]
pub struct QAExample {
    pub question_id: String,
    pub question: Vec<String>,
    pub candidates: Vec<Candidate>,
}

impl QAExample {
    pub fn has_relevant(&self) -> bool {
        self.candidates.iter().any(|c| c.label == 1)
    }
}

#[derive(Deserialize)]
struct RawCandidate {
    answer_id: String,
    text: String,
    label: i64,
    #[serde(default)]
    summary: Option<String>,
}

#[derive(Deserialize)]
struct RawExample {
    question_id: String,
    question: String,
    candidates: Vec<RawCandidate>,
}

fn parse_line(line: &str, line_no: usize, limits: &TruncationLimits) -> Result<QAExample> {
    let raw: RawExample = serde_json::from_str(line)
        .map_err(|e| Error::data_at(line_no, format!("invalid record: {e}")))?;
    let mut question = tokenize(&raw.question);
    if question.is_empty() {
        return Err(Error::data_at(line_no, "question has no tokens"));
    }
    truncate(&mut question, limits.question);
    if raw.candidates.is_empty() {
        return Err(Error::data_at(line_no, "question has no candidates"));
    }
    let mut candidates = Vec::with_capacity(raw.candidates.len());
    for rc in raw.candidates {
        if rc.label != 0 && rc.label != 1 {
            return Err(Error::data_at(
                line_no,
                format!("label {} for answer {} is not 0 or 1", rc.label, rc.answer_id),
            ));
        }
        let mut tokens = tokenize(&rc.text);
        if tokens.is_empty() {
            return Err(Error::data_at(line_no, format!("answer {} has no tokens", rc.answer_id)));
        }
        truncate(&mut tokens, limits.answer);
        let summary = match rc.summary {
            Some(s) => {
                let mut st = tokenize(&s);
                truncate(&mut st, limits.summary);
                Some(st)
            }
            None => None,
        };
        candidates.push(Candidate {
            answer_id: rc.answer_id,
            tokens,
            label: rc.label as u8,
            summary,
        });
    }
    Ok(QAExample { question_id: raw.question_id, question, candidates })
}

/// Streaming JSONL reader; yields examples in file order. Blank lines are
/// skipped, malformed lines surface with their line numbers.
pub struct DatasetReader<R> {
    lines: std::io::Lines<R>,
    line_no: usize,
    limits: TruncationLimits,
}

impl<R: BufRead> Iterator for DatasetReader<R> {
    type Item = Result<QAExample>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            self.line_no += 1;
            match self.lines.next()? {
                Err(e) => return Some(Err(e.into())),
                Ok(line) if line.trim().is_empty() => continue,
                Ok(line) => return Some(parse_line(&line, self.line_no, &self.limits)),
            }
        }
    }
}

pub fn read_dataset<R: BufRead>(reader: R, limits: TruncationLimits) -> DatasetReader<R> {
    DatasetReader { lines: reader.lines(), line_no: 0, limits }
}

/// Load a full split into memory, failing on the first malformed line.
pub fn load_dataset(path: &Path, limits: TruncationLimits) -> Result<Vec<QAExample>> {
    let f = std::fs::File::open(path)
        .map_err(|e| Error::data(format!("cannot open {}: {e}", path.display())))?;
    read_dataset(std::io::BufReader::new(f), limits).collect()
}
