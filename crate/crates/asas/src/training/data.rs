use crate::corpus::vocab::{encode_extended, encode_target, Vocabulary, START, STOP};
use crate::corpus::QAExample;
use crate::model::PairInput;

/// One question-answer pair ready for the model, with teacher-forcing
/// ids when a reference summary exists.
#[derive(Debug, Clone)]
pub struct TrainPair {
    pub question_id: String,
    pub answer_id: String,
    pub label: u8,
    pub input: PairInput,
    pub oov_tokens: Vec<String>,
    /// (decoder input ids starting with START, base vocabulary;
    ///  target ids ending with STOP, extended space). Equal lengths.
    pub reference: Option<(Vec<usize>, Vec<usize>)>,
    pub summary_tokens: Option<Vec<String>>,
    pub answer_len: usize,
}

impl TrainPair {
    /// Positive pairs with references drive the summarization losses.
    pub fn counts_for_summary_loss(&self) -> bool {
        self.label == 1 && self.reference.is_some()
    }
}

/// Encode every candidate of every question, preserving order.
/// `neg_per_question` caps the negatives kept per question (in candidate
/// order); positives are always kept.
pub fn prepare_pairs(
    examples: &[QAExample],
    vocab: &Vocabulary,
    neg_per_question: Option<usize>,
) -> Vec<TrainPair> {
    let mut out = Vec::new();
    for ex in examples {
        let q_base: Vec<usize> = ex.question.iter().map(|t| vocab.id_or_unk(t)).collect();
        let mut negatives = 0usize;
        for cand in &ex.candidates {
            if cand.label == 0 {
                negatives += 1;
                if let Some(cap) = neg_per_question {
                    if negatives > cap {
                        continue;
                    }
                }
            }
            let enc = encode_extended(&cand.tokens, vocab);
            let reference = cand.summary.as_ref().map(|sum| {
                let mut input_ids = Vec::with_capacity(sum.len() + 1);
                input_ids.push(START);
                input_ids.extend(sum.iter().map(|t| vocab.id_or_unk(t)));
                let mut target_ids = encode_target(sum, vocab, &enc);
                target_ids.push(STOP);
                (input_ids, target_ids)
            });
            out.push(TrainPair {
                question_id: ex.question_id.clone(),
                answer_id: cand.answer_id.clone(),
                label: cand.label,
                input: PairInput {
                    q_base: q_base.clone(),
                    a_base: enc.base_ids,
                    a_ext: enc.extended_ids,
                    n_oov: enc.oov_tokens.len(),
                },
                oov_tokens: enc.oov_tokens,
                reference,
                summary_tokens: cand.summary.clone(),
                answer_len: cand.tokens.len(),
            });
        }
    }
    out
}

/// Group prepared pairs by question, preserving first-seen order.
pub fn group_by_question(pairs: &[TrainPair]) -> Vec<(String, Vec<&TrainPair>)> {
    let mut order: Vec<String> = Vec::new();
    let mut groups: std::collections::HashMap<&str, Vec<&TrainPair>> =
        std::collections::HashMap::new();
    for p in pairs {
        if !groups.contains_key(p.question_id.as_str()) {
            order.push(p.question_id.clone());
        }
        groups.entry(p.question_id.as_str()).or_default().push(p);
    }
    order
        .into_iter()
        .map(|qid| {
            let v = groups.remove(qid.as_str()).expect("group recorded");
            (qid, v)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::dataset::{read_dataset, TruncationLimits};

    fn vocab_and_examples() -> (Vocabulary, Vec<QAExample>) {
        let data = r#"{"question_id":"q1","question":"how to patch a tire ?","candidates":[{"answer_id":"a1","text":"press the patch on the tire","label":1,"summary":"patch the tire"},{"answer_id":"a2","text":"boil the kettle gently","label":0},{"answer_id":"a3","text":"sand the rim xyzzy","label":0}]}"#;
        let examples: Vec<QAExample> =
            read_dataset(std::io::Cursor::new(data.to_string()), TruncationLimits::default())
                .collect::<crate::error::Result<_>>()
                .unwrap();
        let tokens: Vec<String> = examples
            .iter()
            .flat_map(|e| {
                e.question.iter().cloned().chain(e.candidates.iter().flat_map(|c| {
                    c.tokens.iter().cloned().chain(c.summary.iter().flatten().cloned())
                }))
            })
            .collect();
        // leave one answer token out of vocabulary
        let vocab =
            Vocabulary::build(tokens.iter().filter(|t| t.as_str() != "xyzzy"), 60).unwrap();
        (vocab, examples)
    }

    #[test]
    fn encodes_pairs_with_references_and_oovs() {
        let (vocab, examples) = vocab_and_examples();
        let pairs = prepare_pairs(&examples, &vocab, None);
        assert_eq!(pairs.len(), 3);
        let p1 = &pairs[0];
        assert!(p1.counts_for_summary_loss());
        let (inp, tgt) = p1.reference.as_ref().unwrap();
        assert_eq!(inp[0], START);
        assert_eq!(*tgt.last().unwrap(), STOP);
        assert_eq!(inp.len(), tgt.len());
        // "xyzzy" is OOV in a3 and gets the first extended id
        let p3 = &pairs[2];
        assert_eq!(p3.input.n_oov, 1);
        assert_eq!(*p3.input.a_ext.last().unwrap(), vocab.len());
        assert_eq!(p3.oov_tokens, vec!["xyzzy"]);
        assert!(!p3.counts_for_summary_loss());
    }

    #[test]
    fn negative_cap_keeps_positives() {
        let (vocab, examples) = vocab_and_examples();
        let pairs = prepare_pairs(&examples, &vocab, Some(1));
        assert_eq!(pairs.len(), 2);
        assert_eq!(pairs[0].label, 1);
        assert_eq!(pairs[1].answer_id, "a2");
    }

    #[test]
    fn grouping_preserves_order() {
        let (vocab, examples) = vocab_and_examples();
        let pairs = prepare_pairs(&examples, &vocab, None);
        let groups = group_by_question(&pairs);
        assert_eq!(groups.len(), 1);
        assert_eq!(groups[0].0, "q1");
        assert_eq!(groups[0].1.len(), 3);
    }
}
