//! Shared fixtures for integration tests: a templated synthetic corpus
//! in two surface styles (domains) with deterministic generation.

#![allow(dead_code)]

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use asas::corpus::{tokenize, Candidate, QAExample, Vocabulary};
use asas::rng::{stream_rng, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    Maintenance,
    Cooking,
}

struct Templates {
    verbs: &'static [&'static str],
    topics: &'static [&'static str],
    question: fn(&str, &str) -> String,
    answer: fn(&str, &str) -> String,
}

fn templates(domain: Domain) -> Templates {
    match domain {
        Domain::Maintenance => Templates {
            verbs: &["clean", "fix", "paint", "wrap", "plant", "store", "sharpen", "polish"],
            topics: &[
                "mirror", "window", "fence", "carpet", "guitar", "ladder", "kettle", "saddle",
                "helmet", "basket", "canvas", "shovel",
            ],
            question: |v, t| format!("how to {v} the {t} ?"),
            answer: |v, t| {
                format!(
                    "you should {v} the {t} with steady hands and then {v} the {t} again until the {t} looks ready"
                )
            },
        },
        Domain::Cooking => Templates {
            verbs: &["boil", "chill", "knead", "roast", "whisk", "strain"],
            topics: &["noodles", "butter", "dough", "pepper", "salmon", "batter", "syrup", "broth"],
            question: |v, t| format!("what is the best way to {v} some {t} ?"),
            answer: |v, t| {
                format!(
                    "begin slowly and {v} the {t} over low heat then leave the {t} to rest before you {v} the {t} once more"
                )
            },
        },
    }
}

fn summary_text(verb: &str, topic: &str) -> String {
    format!("{verb} the {topic}")
}

/// `n_questions` questions with one relevant candidate and
/// `negatives` distractors drawn from other topics. Deterministic in
/// `seed`. `offset` shifts the (verb, topic) enumeration so different
/// calls with the same domain produce disjoint combinations.
pub fn synth_examples(
    domain: Domain,
    n_questions: usize,
    negatives: usize,
    seed: u64,
    offset: usize,
) -> Vec<QAExample> {
    let t = templates(domain);
    let mut rng: ChaCha8Rng = stream_rng(seed, Stream::Synth);
    let mut out = Vec::with_capacity(n_questions);
    for qi in 0..n_questions {
        let combo = offset + qi;
        let verb = t.verbs[combo % t.verbs.len()];
        let topic = t.topics[(combo / t.verbs.len() + combo) % t.topics.len()];
        let question = (t.question)(verb, topic);

        let mut candidates = Vec::with_capacity(1 + negatives);
        candidates.push(Candidate {
            answer_id: format!("q{qi}_gold"),
            tokens: tokenize(&(t.answer)(verb, topic)),
            label: 1,
            summary: Some(tokenize(&summary_text(verb, topic))),
        });
        let mut used = vec![topic];
        for ni in 0..negatives {
            // a distractor about a different topic, sometimes a
            // different verb as well
            let mut alt_topic = topic;
            while used.contains(&alt_topic) {
                alt_topic = t.topics[rng.gen_range(0..t.topics.len())];
            }
            used.push(alt_topic);
            let alt_verb = if rng.gen_bool(0.5) {
                verb
            } else {
                t.verbs[rng.gen_range(0..t.verbs.len())]
            };
            candidates.push(Candidate {
                answer_id: format!("q{qi}_neg{ni}"),
                tokens: tokenize(&(t.answer)(alt_verb, alt_topic)),
                label: 0,
                summary: None,
            });
        }
        // candidate order should not encode the label
        candidates.shuffle(&mut rng);
        out.push(QAExample {
            question_id: format!("{domain:?}_q{qi}"),
            question: tokenize(&question),
            candidates,
        });
    }
    out
}

/// Vocabulary covering both domains (built from generously many
/// synthetic examples of each).
pub fn synth_vocab() -> Vocabulary {
    let mut tokens: Vec<String> = Vec::new();
    for domain in [Domain::Maintenance, Domain::Cooking] {
        for ex in synth_examples(domain, 96, 3, 1, 0) {
            tokens.extend(ex.question.iter().cloned());
            for c in &ex.candidates {
                tokens.extend(c.tokens.iter().cloned());
                if let Some(s) = &c.summary {
                    tokens.extend(s.iter().cloned());
                }
            }
        }
    }
    Vocabulary::build(tokens, 200).unwrap()
}

pub fn write_jsonl_dataset(path: &Path, examples: &[QAExample]) {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).unwrap());
    for ex in examples {
        let candidates: Vec<serde_json::Value> = ex
            .candidates
            .iter()
            .map(|c| {
                let mut v = serde_json::json!({
                    "answer_id": c.answer_id,
                    "text": c.tokens.join(" "),
                    "label": c.label,
                });
                if let Some(s) = &c.summary {
                    v["summary"] = serde_json::Value::String(s.join(" "));
                }
                v
            })
            .collect();
        let line = serde_json::json!({
            "question_id": ex.question_id,
            "question": ex.question.join(" "),
            "candidates": candidates,
        });
        writeln!(f, "{line}").unwrap();
    }
}

/// Small dims that train fast while leaving the architecture intact.
pub fn toy_dims(vocab: &Vocabulary) -> asas::model::ModelDims {
    asas::model::ModelDims { vocab: vocab.len(), emb: 24, hidden: 24 }
}
