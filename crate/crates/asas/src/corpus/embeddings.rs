use std::io::BufRead;
use std::path::Path;

use rand_chacha::ChaCha8Rng;

use crate::corpus::vocab::Vocabulary;
use crate::error::{Error, Result};
use crate::numerics::{Scalar, Tensor};

pub const INIT_RANGE: f64 = 0.05;

/// `|V| x dim` embedding matrix plus the fraction of vocabulary tokens
/// found in the file.
#[derive(Debug)]
pub struct EmbeddingMatrix<S> {
    pub matrix: Tensor<S>,
    pub coverage: f64,
    pub matched: usize,
}

/// Random-uniform initialization in [-0.05, 0.05] for every row; used
/// when no embedding file is configured.
pub fn random_embeddings<S: Scalar>(
    vocab_len: usize,
    dim: usize,
    rng: &mut ChaCha8Rng,
) -> Tensor<S> {
    Tensor::uniform(vec![vocab_len, dim], -INIT_RANGE, INIT_RANGE, rng)
}

/// Parse a whitespace-delimited embedding file (`token v1 ... vN`).
/// Matched vocabulary rows are copied; unmatched rows stay at their
/// random initialization. The declared dimension is taken from the first
/// line and must match `expected_dim`.
pub fn load_embeddings<S: Scalar, R: BufRead>(
    reader: R,
    vocab: &Vocabulary,
    expected_dim: usize,
    rng: &mut ChaCha8Rng,
) -> Result<EmbeddingMatrix<S>> {
    let mut matrix = random_embeddings::<S>(vocab.len(), expected_dim, rng);
    let mut matched = vec![false; vocab.len()];
    let mut dim: Option<usize> = None;

    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let token = parts
            .next()
            .ok_or_else(|| Error::data_at(line_no, "embedding line with no token"))?;
        let values: Vec<f64> = parts
            .map(|p| {
                p.parse::<f64>()
                    .map_err(|e| Error::data_at(line_no, format!("bad embedding value: {e}")))
            })
            .collect::<Result<_>>()?;
        match dim {
            None => {
                if values.len() != expected_dim {
                    return Err(Error::data_at(
                        line_no,
                        format!("embedding dimension {} != configured {expected_dim}", values.len()),
                    ));
                }
                dim = Some(values.len());
            }
            Some(d) if values.len() != d => {
                return Err(Error::data_at(
                    line_no,
                    format!("inconsistent embedding dimension {} (expected {d})", values.len()),
                ));
            }
            _ => {}
        }
        if let Some(id) = vocab.id(token) {
            if !matched[id] {
                matched[id] = true;
                let row_start = id * expected_dim;
                for (j, v) in values.iter().enumerate() {
                    matrix.data_mut()[row_start + j] = S::c(*v);
                }
            }
        }
    }
    let matched_count = matched.iter().filter(|&&m| m).count();
    Ok(EmbeddingMatrix {
        matrix,
        coverage: matched_count as f64 / vocab.len() as f64,
        matched: matched_count,
    })
}

pub fn load_embeddings_file<S: Scalar>(
    path: &Path,
    vocab: &Vocabulary,
    expected_dim: usize,
    rng: &mut ChaCha8Rng,
) -> Result<EmbeddingMatrix<S>> {
    let f = std::fs::File::open(path)
        .map_err(|e| Error::data(format!("cannot open {}: {e}", path.display())))?;
    load_embeddings(std::io::BufReader::new(f), vocab, expected_dim, rng)
}
