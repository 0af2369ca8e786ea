use serde::Serialize;

use crate::error::{Error, Result};

/// One scored candidate inside a ranked list.
#[derive(Debug, Clone)]
pub struct RankedItem {
    pub answer_id: String,
    pub score: f64,
    pub label: u8,
    /// Token length of the answer, for the by-length analysis.
    pub answer_len: usize,
}

/// Candidates for one question, sorted by descending score with ties
/// broken by answer_id so runs are reproducible.
#[derive(Debug, Clone)]
pub struct RankedList {
    pub question_id: String,
    pub items: Vec<RankedItem>,
}

impl RankedList {
    pub fn new(question_id: String, mut items: Vec<RankedItem>) -> RankedList {
        assert!(!items.is_empty(), "ranked list without candidates");
        items.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.answer_id.cmp(&b.answer_id)));
        RankedList { question_id, items }
    }

    pub fn has_relevant(&self) -> bool {
        self.items.iter().any(|i| i.label == 1)
    }

    /// Length of the gold answer: among the highest-labeled candidates,
    /// the one with the lexicographically smallest answer_id.
    pub fn gold_answer_len(&self) -> Option<usize> {
        let max_label = self.items.iter().map(|i| i.label).max()?;
        if max_label == 0 {
            return None;
        }
        self.items
            .iter()
            .filter(|i| i.label == max_label)
            .min_by(|a, b| a.answer_id.cmp(&b.answer_id))
            .map(|i| i.answer_len)
    }
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct RankReport {
    pub map: f64,
    pub mrr: f64,
    pub p_at_1: f64,
    /// Questions that contributed to the averages.
    pub evaluated: usize,
    /// Questions skipped because no candidate is relevant.
    pub skipped_no_relevant: usize,
}

fn average_precision(labels: &[u8]) -> f64 {
    let mut hits = 0usize;
    let mut ap = 0.0;
    for (k, &l) in labels.iter().enumerate() {
        if l == 1 {
            hits += 1;
            ap += hits as f64 / (k + 1) as f64;
        }
    }
    ap / hits as f64
}

/// MAP, MRR and P@1 over ranked lists; lists without any relevant
/// candidate are skipped and counted separately.
pub fn rank_metrics(lists: &[RankedList]) -> Result<RankReport> {
    if lists.is_empty() {
        return Err(Error::data("no ranked lists to evaluate"));
    }
    let mut map = 0.0;
    let mut mrr = 0.0;
    let mut p1 = 0.0;
    let mut evaluated = 0usize;
    let mut skipped = 0usize;
    for list in lists {
        if !list.has_relevant() {
            skipped += 1;
            continue;
        }
        let labels: Vec<u8> = list.items.iter().map(|i| i.label).collect();
        map += average_precision(&labels);
        let first = labels.iter().position(|&l| l == 1).expect("relevant item present");
        mrr += 1.0 / (first + 1) as f64;
        if labels[0] == 1 {
            p1 += 1.0;
        }
        evaluated += 1;
    }
    if evaluated == 0 {
        return Err(Error::data("every ranked list lacks a relevant candidate"));
    }
    let n = evaluated as f64;
    Ok(RankReport { map: map / n, mrr: mrr / n, p_at_1: p1 / n, evaluated, skipped_no_relevant: skipped })
}

/// Bucket edges for the by-length analysis; an edge list `[a, b]` makes
/// buckets `<a`, `a..b`, `>=b`.
pub const DEFAULT_LENGTH_EDGES: [usize; 4] = [100, 200, 300, 400];

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct LengthBucket {
    pub range: String,
    pub count: usize,
    pub p_at_1: f64,
}

fn bucket_index(len: usize, edges: &[usize]) -> usize {
    edges.iter().position(|&e| len < e).unwrap_or(edges.len())
}

fn bucket_label(idx: usize, edges: &[usize]) -> String {
    if idx == 0 {
        format!("<{}", edges[0])
    } else if idx == edges.len() {
        format!(">={}", edges[edges.len() - 1])
    } else {
        format!("{}-{}", edges[idx - 1], edges[idx] - 1)
    }
}

/// P@1 per gold-answer-length bucket. Empty buckets are absent from the
/// result, not reported as zero.
pub fn accuracy_by_length(lists: &[RankedList], edges: &[usize]) -> Vec<LengthBucket> {
    assert!(!edges.is_empty() && edges.windows(2).all(|w| w[0] < w[1]), "edges must increase");
    let mut counts = vec![0usize; edges.len() + 1];
    let mut correct = vec![0usize; edges.len() + 1];
    for list in lists {
        let Some(len) = list.gold_answer_len() else { continue };
        let b = bucket_index(len, edges);
        counts[b] += 1;
        if list.items[0].label == 1 {
            correct[b] += 1;
        }
    }
    (0..=edges.len())
        .filter(|&b| counts[b] > 0)
        .map(|b| LengthBucket {
            range: bucket_label(b, edges),
            count: counts[b],
            p_at_1: correct[b] as f64 / counts[b] as f64,
        })
        .collect()
}
