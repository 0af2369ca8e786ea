use std::collections::HashMap;

use serde::Serialize;

/// Precision/recall/F1 for one ROUGE variant, each in [0,1].
#[derive(Debug, Clone, Copy, Default, Serialize, PartialEq)]
pub struct RougeScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl RougeScore {
    fn from_pr(precision: f64, recall: f64) -> RougeScore {
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        RougeScore { precision, recall, f1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RougeVariant {
    One,
    Two,
    L,
}

/// ROUGE for tokenized, lowercased sequences: clipped n-gram overlap for
/// ROUGE-1/2, longest common subsequence for ROUGE-L. No stemming.
/// Empty candidate or reference yields all-zero scores.
pub fn rouge(candidate: &[String], reference: &[String], variant: RougeVariant) -> RougeScore {
    match variant {
        RougeVariant::One => rouge_n(candidate, reference, 1),
        RougeVariant::Two => rouge_n(candidate, reference, 2),
        RougeVariant::L => rouge_l(candidate, reference),
    }
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut map = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *map.entry(w).or_insert(0) += 1;
        }
    }
    map
}

fn rouge_n(candidate: &[String], reference: &[String], n: usize) -> RougeScore {
    if candidate.len() < n || reference.len() < n {
        return RougeScore::default();
    }
    let cand = ngram_counts(candidate, n);
    let refs = ngram_counts(reference, n);
    let mut overlap = 0usize;
    for (gram, &c) in &cand {
        if let Some(&r) = refs.get(gram) {
            overlap += c.min(r);
        }
    }
    let cand_total = candidate.len() + 1 - n;
    let ref_total = reference.len() + 1 - n;
    RougeScore::from_pr(overlap as f64 / cand_total as f64, overlap as f64 / ref_total as f64)
}

fn lcs_len(a: &[String], b: &[String]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let m = b.len();
    let mut prev = vec![0usize; m + 1];
    let mut curr = vec![0usize; m + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            curr[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(curr[j]) };
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    prev[m]
}

fn rouge_l(candidate: &[String], reference: &[String]) -> RougeScore {
    if candidate.is_empty() || reference.is_empty() {
        return RougeScore::default();
    }
    let lcs = lcs_len(candidate, reference) as f64;
    RougeScore::from_pr(lcs / candidate.len() as f64, lcs / reference.len() as f64)
}

/// Mean ROUGE-1/2/L over candidate/reference pairs.
#[derive(Debug, Clone, Copy, Default, Serialize, PartialEq)]
pub struct RougeReport {
    pub rouge_1: RougeScore,
    pub rouge_2: RougeScore,
    pub rouge_l: RougeScore,
    pub pairs: usize,
}

pub fn rouge_corpus(pairs: &[(Vec<String>, Vec<String>)]) -> RougeReport {
    let mut report = RougeReport { pairs: pairs.len(), ..Default::default() };
    if pairs.is_empty() {
        return report;
    }
    let mut acc = [[0.0f64; 3]; 3];
    for (cand, reference) in pairs {
        for (vi, variant) in [RougeVariant::One, RougeVariant::Two, RougeVariant::L]
            .into_iter()
            .enumerate()
        {
            let s = rouge(cand, reference, variant);
            acc[vi][0] += s.precision;
            acc[vi][1] += s.recall;
            acc[vi][2] += s.f1;
        }
    }
    let n = pairs.len() as f64;
    let mk = |row: [f64; 3]| RougeScore {
        precision: row[0] / n,
        recall: row[1] / n,
        f1: row[2] / n,
    };
    report.rouge_1 = mk(acc[0]);
    report.rouge_2 = mk(acc[1]);
    report.rouge_l = mk(acc[2]);
    report
}
