//! The joint model: shared compare-aggregate Bi-LSTM encoder,
//! question-aware pointer-generator decoder, and co-attention ranking
//! head, glued together per question-answer pair.

pub mod alignment;
pub mod decoder;
pub mod encoder;
pub mod params;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub use alignment::{classify, coattention, project_question, AttentiveReps};
pub use decoder::{
    attention_step, beam_search, decode_context, decode_greedy, decode_step,
    decode_teacher_forced, generation_probability, initial_state, summary_state,
    vocab_distribution, DecodeContext, DecodeOptions, DecodeTrace, DecodedSummary, StepOut,
    StepState,
};
pub use encoder::{bilstm_encode, compare_gate, question_vector, EncodedSequence};
pub use params::{group_of, register_params, validate_groups, ModelDims, ModelParams, ParamVars, GROUPS};

use crate::numerics::{Scalar, Tape, Var};

/// Ids for one question-answer pair, ready for the tape.
#[derive(Debug, Clone)]
pub struct PairInput {
    /// Question tokens as base-vocabulary ids.
    pub q_base: Vec<usize>,
    /// Answer tokens as base-vocabulary ids (OOV mapped to UNK).
    pub a_base: Vec<usize>,
    /// Answer tokens in the extended-id space (OOVs get ids >= |V|).
    pub a_ext: Vec<usize>,
    /// Number of distinct answer OOV tokens.
    pub n_oov: usize,
}

impl PairInput {
    pub fn ext_total(&self, vocab: usize) -> usize {
        vocab + self.n_oov
    }
}

/// Training-time dropout: inverted masks over embeddings and encoder
/// outputs.
pub struct Dropout<'r> {
    pub rate: f64,
    pub rng: &'r mut ChaCha8Rng,
}

fn apply_dropout<S: Scalar>(tape: &mut Tape<S>, x: Var, d: &mut Dropout) -> Var {
    if d.rate <= 0.0 {
        return x;
    }
    let keep = 1.0 - d.rate;
    let scale = S::c(1.0 / keep);
    let n = tape.value(x).numel();
    let mask: Vec<S> = (0..n)
        .map(|_| if d.rng.gen::<f64>() < d.rate { S::zero() } else { scale })
        .collect();
    tape.mul_mask(x, mask)
}

/// Both sequences encoded plus everything the decoder and the alignment
/// head need from them.
pub struct EncodedPair {
    pub question: EncodedSequence,
    pub answer: EncodedSequence,
    pub o_q: Var,
    pub ctx: DecodeContext,
    /// Question rows projected to the co-attention width, [Lq, h].
    pub h_q_proj: Var,
}

pub fn encode_pair<S: Scalar>(
    tape: &mut Tape<S>,
    p: &ParamVars,
    input: &PairInput,
    mut dropout: Option<&mut Dropout>,
) -> EncodedPair {
    let mut w_q = tape.embed_rows(p.embeddings_table, &input.q_base);
    let mut w_a = tape.embed_rows(p.embeddings_table, &input.a_base);
    if let Some(d) = &mut dropout {
        w_q = apply_dropout(tape, w_q, d);
        w_a = apply_dropout(tape, w_a, d);
    }
    let g_q = compare_gate(tape, p, w_q);
    let g_a = compare_gate(tape, p, w_a);
    let mut enc_q = bilstm_encode(tape, p, g_q, input.q_base.len());
    let mut enc_a = bilstm_encode(tape, p, g_a, input.a_base.len());
    if let Some(d) = &mut dropout {
        enc_q.h = apply_dropout(tape, enc_q.h, d);
        enc_a.h = apply_dropout(tape, enc_a.h, d);
    }
    let o_q = question_vector(tape, enc_q.h, enc_q.len);
    let ctx = decode_context(tape, p, &enc_a, o_q);
    let h_q_proj = project_question(tape, p, enc_q.h);
    EncodedPair { question: enc_q, answer: enc_a, o_q, ctx, h_q_proj }
}

/// Where the summary representations come from: the reference (teacher
/// forcing) or the model's own greedy decode.
pub enum SummarySource<'a> {
    /// `input_ids` start with START and hold base ids; `target_ids` are
    /// extended ids ending with STOP. Same length.
    Reference { input_ids: &'a [usize], target_ids: &'a [usize] },
    Greedy(DecodeOptions),
}

/// Full forward pass for one pair: encode, decode, align, classify.
pub struct PairForward {
    /// (p_neg, p_pos) node.
    pub probs: Var,
    pub trace: DecodeTrace,
    pub reps: AttentiveReps,
    pub enc: EncodedPair,
}

impl PairForward {
    pub fn p_pos<S: Scalar>(&self, tape: &Tape<S>) -> f64 {
        tape.value(self.probs).data()[1].f64_value()
    }
}

pub fn forward_pair<S: Scalar>(
    tape: &mut Tape<S>,
    p: &ParamVars,
    input: &PairInput,
    source: SummarySource<'_>,
    dropout: Option<&mut Dropout>,
) -> PairForward {
    let enc = encode_pair(tape, p, input, dropout);
    let ext_total = input.ext_total(p.dims.vocab);
    let trace = match source {
        SummarySource::Reference { input_ids, target_ids } => {
            assert_eq!(input_ids.len(), target_ids.len(), "reference input/target length");
            decode_teacher_forced(tape, p, &enc.ctx, &enc.answer, input_ids, &input.a_ext, ext_total)
        }
        SummarySource::Greedy(opts) => {
            decode_greedy(tape, p, &enc.ctx, &enc.answer, &input.a_ext, ext_total, &opts)
        }
    };
    let reps = coattention(tape, p, enc.h_q_proj, trace.h_s_mat);
    let probs = classify(tape, p, &reps);
    PairForward { probs, trace, reps, enc }
}

/// Relevance score of one pair on a fresh tape (no gradients kept).
pub fn score_pair<S: Scalar>(
    params: &ModelParams<S>,
    input: &PairInput,
    opts: DecodeOptions,
) -> f64 {
    let mut tape = Tape::new();
    let pv = register_params(&mut tape, params);
    let fwd = forward_pair(&mut tape, &pv, input, SummarySource::Greedy(opts), None);
    fwd.p_pos(&tape)
}

/// Beam-search summary of one pair on a fresh tape.
pub fn summarize_pair<S: Scalar>(
    params: &ModelParams<S>,
    input: &PairInput,
    opts: DecodeOptions,
) -> DecodedSummary {
    let mut tape = Tape::new();
    let pv = register_params(&mut tape, params);
    let enc = encode_pair(&mut tape, &pv, input, None);
    let ext_total = input.ext_total(params.dims.vocab);
    beam_search(&mut tape, &pv, &enc.ctx, &enc.answer, &input.a_ext, ext_total, &opts)
}
