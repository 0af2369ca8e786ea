use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const START: usize = 2;
pub const STOP: usize = 3;

pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";
pub const START_TOKEN: &str = "<start>";
pub const STOP_TOKEN: &str = "<stop>";

const SPECIALS: [&str; 4] = [PAD_TOKEN, UNK_TOKEN, START_TOKEN, STOP_TOKEN];

/// Fixed-size token-id bijection with stable special ids 0..=3.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    tokens: Vec<String>,
    ids: HashMap<String, usize>,
}

impl Vocabulary {
    /// The `size - 4` most frequent tokens plus the 4 specials.
    /// Frequency ties break lexicographically; rebuilding from the same
    /// corpus yields the identical id assignment.
    pub fn build<I, T>(corpus: I, size: usize) -> Result<Vocabulary>
    where
        I: IntoIterator<Item = T>,
        T: AsRef<str>,
    {
        if size < 5 {
            return Err(Error::Config(format!("vocabulary size {size} < 5")));
        }
        let mut counts: HashMap<String, u64> = HashMap::new();
        let mut any = false;
        for tok in corpus {
            any = true;
            let t = tok.as_ref();
            if SPECIALS.contains(&t) {
                continue;
            }
            *counts.entry(t.to_string()).or_insert(0) += 1;
        }
        if !any {
            return Err(Error::data("empty corpus for vocabulary construction"));
        }
        let mut by_freq: Vec<(String, u64)> = counts.into_iter().collect();
        by_freq.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        by_freq.truncate(size - 4);

        let mut tokens: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        tokens.extend(by_freq.into_iter().map(|(t, _)| t));
        Ok(Vocabulary::from_tokens(tokens))
    }

    fn from_tokens(tokens: Vec<String>) -> Vocabulary {
        let ids = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Vocabulary { tokens, ids }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.ids.get(token).copied()
    }

    pub fn id_or_unk(&self, token: &str) -> usize {
        self.id(token).unwrap_or(UNK)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(|s| s.as_str())
    }

    pub fn contains(&self, token: &str) -> bool {
        self.ids.contains_key(token)
    }

    /// One token per line, line order = id order.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        for t in &self.tokens {
            writeln!(f, "{t}")?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Vocabulary> {
        let f = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut tokens = Vec::new();
        for (i, line) in f.lines().enumerate() {
            let line = line?;
            if line.is_empty() {
                return Err(Error::data_at(i + 1, "empty vocabulary line"));
            }
            tokens.push(line);
        }
        if tokens.len() < 5 || tokens[..4] != SPECIALS.map(String::from) {
            return Err(Error::data("vocabulary file must start with the 4 special tokens"));
        }
        Ok(Vocabulary::from_tokens(tokens))
    }
}

/// Per-example encoding for the copy mechanism: the base sequence maps
/// OOV tokens to UNK, the extended sequence gives each distinct OOV a
/// temporary id starting at |V|, in first-occurrence order.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedEncoding {
    pub base_ids: Vec<usize>,
    pub extended_ids: Vec<usize>,
    pub oov_tokens: Vec<String>,
}

impl ExtendedEncoding {
    pub fn oov_count(&self) -> usize {
        self.oov_tokens.len()
    }
}

pub fn encode_extended(tokens: &[String], vocab: &Vocabulary) -> ExtendedEncoding {
    let mut base_ids = Vec::with_capacity(tokens.len());
    let mut extended_ids = Vec::with_capacity(tokens.len());
    let mut oov_tokens: Vec<String> = Vec::new();
    for tok in tokens {
        match vocab.id(tok) {
            Some(id) => {
                base_ids.push(id);
                extended_ids.push(id);
            }
            None => {
                base_ids.push(UNK);
                let pos = match oov_tokens.iter().position(|t| t == tok) {
                    Some(p) => p,
                    None => {
                        oov_tokens.push(tok.clone());
                        oov_tokens.len() - 1
                    }
                };
                extended_ids.push(vocab.len() + pos);
            }
        }
    }
    ExtendedEncoding { base_ids, extended_ids, oov_tokens }
}

/// Map tokens into the extended-id space of a source encoding: vocab id
/// if in-vocabulary, the source's extended id if the token is one of its
/// OOVs, UNK otherwise. Used for summarization targets.
pub fn encode_target(tokens: &[String], vocab: &Vocabulary, source: &ExtendedEncoding) -> Vec<usize> {
    tokens
        .iter()
        .map(|tok| match vocab.id(tok) {
            Some(id) => id,
            None => match source.oov_tokens.iter().position(|t| t == tok) {
                Some(p) => vocab.len() + p,
                None => UNK,
            },
        })
        .collect()
}

/// Resolve an extended-id sequence back to token strings.
pub fn decode_extended(ids: &[usize], vocab: &Vocabulary, oov_tokens: &[String]) -> Vec<String> {
    ids.iter()
        .map(|&id| {
            if id < vocab.len() {
                vocab.token(id).expect("id within vocabulary").to_string()
            } else {
                oov_tokens[id - vocab.len()].clone()
            }
        })
        .collect()
}
