//! Question-aware attention decoding with coverage, the question-driven
//! pointer-generator distribution, and teacher-forced / beam-search
//! decoding loops.

use crate::corpus::vocab::{STOP, UNK};
use crate::model::encoder::EncodedSequence;
use crate::model::params::ParamVars;
use crate::numerics::{lstm_step, Scalar, Tape, Var};

/// Per-example decoding context, computed once and reused every step.
#[derive(Debug, Clone, Copy)]
pub struct DecodeContext {
    /// Encoded answer, [L, 2h].
    pub h_a: Var,
    /// Precomputed W_h H_a, [L, attn].
    enc_proj: Var,
    /// Precomputed W_q o_q, [attn].
    q_term: Var,
    /// Question summary vector, [2h].
    pub o_q: Var,
    pub src_len: usize,
}

/// Recurrent decode state carried between steps.
#[derive(Debug, Clone, Copy)]
pub struct StepState {
    pub s: Var,
    pub c: Var,
    /// Coverage: elementwise sum of all previous attention vectors.
    pub cov: Var,
}

/// Everything one decode step emits.
#[derive(Debug, Clone, Copy)]
pub struct StepOut {
    pub attn: Var,
    pub context: Var,
    pub h_s: Var,
    pub p_vocab: Var,
    pub p_gen: Var,
    /// Distribution over |V| + #source-OOVs.
    pub p_final: Var,
    /// Coverage as it entered this step (before adding `attn`).
    pub cov_before: Var,
    pub next: StepState,
}

/// Options shared by greedy and beam decoding.
#[derive(Debug, Clone, Copy)]
pub struct DecodeOptions {
    pub beam_size: usize,
    pub max_len: usize,
    /// Pin the generation probability (copy-only checks use 0.0).
    pub p_gen_override: Option<f64>,
}

impl Default for DecodeOptions {
    fn default() -> Self {
        DecodeOptions { beam_size: 4, max_len: 100, p_gen_override: None }
    }
}

/// A decoded summary in extended-id space with per-token provenance.
#[derive(Debug, Clone)]
pub struct DecodedSummary {
    /// Emitted tokens, STOP excluded.
    pub token_ids: Vec<usize>,
    /// Generation probability at each emission (STOP step excluded).
    pub p_gen: Vec<f64>,
    /// True where the emitted id is only reachable by copying (id >= |V|).
    pub copied: Vec<bool>,
    /// Sum of log-probabilities over emitted tokens plus the STOP step
    /// when the hypothesis finished.
    pub log_prob: f64,
    pub finished: bool,
}

/// Teacher-forced or greedy decode trace used by the losses and by the
/// question-answer alignment.
pub struct DecodeTrace {
    pub steps: Vec<StepOut>,
    /// Rows are the per-step summary representations h_s, [T, h].
    pub h_s_mat: Var,
    /// Greedy-mode only: the chosen extended ids (STOP excluded).
    pub greedy: Option<DecodedSummary>,
}

pub fn decode_context<S: Scalar>(
    tape: &mut Tape<S>,
    p: &ParamVars,
    enc_answer: &EncodedSequence,
    o_q: Var,
) -> DecodeContext {
    let enc_proj = tape.matmul_tb(enc_answer.h, p.attn_w_h);
    let q_term = tape.matvec(p.attn_w_q, o_q);
    DecodeContext { h_a: enc_answer.h, enc_proj, q_term, o_q, src_len: enc_answer.len }
}

/// Bridge from the answer encoder's final directional states to the
/// decoder's initial hidden and cell vectors.
pub fn initial_state<S: Scalar>(
    tape: &mut Tape<S>,
    p: &ParamVars,
    enc_answer: &EncodedSequence,
) -> StepState {
    let cat = tape.concat(&[enc_answer.final_fw, enc_answer.final_bw]);
    let sh = tape.matvec(p.bridge_w_h, cat);
    let s = tape.add(sh, p.bridge_b_h);
    let ch = tape.matvec(p.bridge_w_c, cat);
    let c = tape.add(ch, p.bridge_b_c);
    let cov = tape.zeros(vec![enc_answer.len]);
    StepState { s, c, cov }
}

/// Attention over source positions:
/// e_i = m . tanh(W_h h_i + W_s s + W_q o_q + w_c c_i + b),
/// attn = softmax(e), context = sum_i attn_i h_i.
pub fn attention_step<S: Scalar>(
    tape: &mut Tape<S>,
    p: &ParamVars,
    ctx: &DecodeContext,
    s: Var,
    cov: Var,
) -> (Var, Var) {
    assert!(ctx.src_len >= 1, "attention over an empty source");
    let s_term = tape.matvec(p.attn_w_s, s);
    let sq = tape.add(s_term, ctx.q_term);
    let sqb = tape.add(sq, p.attn_b);
    let pre = tape.add_row_broadcast(ctx.enc_proj, sqb);
    let cov_term = tape.scale_by_scalar(cov, p.ptr_w_c);
    let pre = tape.add_per_row_scalar(pre, cov_term);
    let th = tape.tanh(pre);
    let e = tape.matvec(th, p.attn_m);
    let attn = tape.softmax(e);
    let context = tape.weighted_sum_rows(ctx.h_a, attn);
    (attn, context)
}

/// h_s = W_1 [s : context] + b_1.
pub fn summary_state<S: Scalar>(tape: &mut Tape<S>, p: &ParamVars, s: Var, context: Var) -> Var {
    let cat = tape.concat(&[s, context]);
    let v = tape.matvec(p.proj_w_1, cat);
    tape.add(v, p.proj_b_1)
}

/// P_vocab = softmax(W_2 h_s + b_2).
pub fn vocab_distribution<S: Scalar>(tape: &mut Tape<S>, p: &ParamVars, h_s: Var) -> Var {
    let logits = tape.matvec(p.out_w_2, h_s);
    let logits = tape.add(logits, p.out_b_2);
    tape.softmax(logits)
}

/// p_gen = sigmoid(w_h . h_s + w_x . x + w_q . o_q + b_p).
pub fn generation_probability<S: Scalar>(
    tape: &mut Tape<S>,
    p: &ParamVars,
    h_s: Var,
    x: Var,
    o_q: Var,
) -> Var {
    let dh = tape.dot(p.ptr_w_h, h_s);
    let dx = tape.dot(p.ptr_w_x, x);
    let dq = tape.dot(p.ptr_w_q, o_q);
    let bp = tape.sum_vec(p.ptr_b_p);
    let one = S::one();
    let pre = tape.affine_scalars(&[(dh, one), (dx, one), (dq, one), (bp, one)]);
    tape.sigmoid(pre)
}

/// One full decoder step from the embedding of the previous token.
#[allow(clippy::too_many_arguments)]
pub fn decode_step<S: Scalar>(
    tape: &mut Tape<S>,
    p: &ParamVars,
    ctx: &DecodeContext,
    state: &StepState,
    x: Var,
    ext_ids: &[usize],
    ext_total: usize,
    p_gen_override: Option<f64>,
) -> StepOut {
    let dec_cell = p.dec_cell();
    let (s2, c2) = lstm_step(tape, &dec_cell, x, state.s, state.c);
    let (attn, context) = attention_step(tape, p, ctx, s2, state.cov);
    let h_s = summary_state(tape, p, s2, context);
    let p_vocab = vocab_distribution(tape, p, h_s);
    let p_gen = match p_gen_override {
        Some(v) => {
            let t = crate::numerics::Tensor::scalar(S::c(v));
            tape.leaf_owned(t)
        }
        None => generation_probability(tape, p, h_s, x, ctx.o_q),
    };
    let p_final = tape.pointer_mix(p_vocab, attn, p_gen, ext_ids, ext_total);
    let cov_next = tape.add(state.cov, attn);
    StepOut {
        attn,
        context,
        h_s,
        p_vocab,
        p_gen,
        p_final,
        cov_before: state.cov,
        next: StepState { s: s2, c: c2, cov: cov_next },
    }
}

/// Run the decoder with the reference as input. `input_ids` are
/// base-vocabulary ids beginning with START (reference OOVs already
/// mapped to UNK); one step runs per input token.
pub fn decode_teacher_forced<S: Scalar>(
    tape: &mut Tape<S>,
    p: &ParamVars,
    ctx: &DecodeContext,
    enc_answer: &EncodedSequence,
    input_ids: &[usize],
    ext_ids: &[usize],
    ext_total: usize,
) -> DecodeTrace {
    assert!(!input_ids.is_empty(), "teacher forcing needs a non-empty reference");
    let mut state = initial_state(tape, p, enc_answer);
    let mut steps = Vec::with_capacity(input_ids.len());
    for &tok in input_ids {
        let x = tape.embed_row(p.embeddings_table, tok);
        let out = decode_step(tape, p, ctx, &state, x, ext_ids, ext_total, None);
        state = out.next;
        steps.push(out);
    }
    let rows: Vec<Var> = steps.iter().map(|s| s.h_s).collect();
    let h_s_mat = tape.stack_rows(&rows);
    DecodeTrace { steps, h_s_mat, greedy: None }
}

/// Greedy decode (used to build summary representations for candidates
/// without references, and at ranking time). Emits at most `max_len`
/// tokens; UNK is never emitted. The step that chooses STOP still
/// contributes its h_s row, so the trace is never empty.
pub fn decode_greedy<S: Scalar>(
    tape: &mut Tape<S>,
    p: &ParamVars,
    ctx: &DecodeContext,
    enc_answer: &EncodedSequence,
    ext_ids: &[usize],
    ext_total: usize,
    opts: &DecodeOptions,
) -> DecodeTrace {
    let vocab = p.dims.vocab;
    let mut state = initial_state(tape, p, enc_answer);
    let mut steps = Vec::new();
    let mut summary = DecodedSummary {
        token_ids: Vec::new(),
        p_gen: Vec::new(),
        copied: Vec::new(),
        log_prob: 0.0,
        finished: false,
    };
    let mut prev_tok = crate::corpus::vocab::START;
    loop {
        let x = tape.embed_row(p.embeddings_table, prev_tok);
        let out = decode_step(tape, p, ctx, &state, x, ext_ids, ext_total, opts.p_gen_override);
        state = out.next;
        let dist = tape.value(out.p_final).data();
        let (tok, prob) = argmax_skipping_unk(dist);
        let p_gen_value = tape.scalar_value(out.p_gen).f64_value();
        steps.push(out);
        summary.log_prob += prob.f64_value().max(crate::numerics::tape::LOG_CLAMP).ln();
        if tok == STOP {
            summary.finished = true;
            break;
        }
        summary.p_gen.push(p_gen_value);
        summary.copied.push(tok >= vocab);
        summary.token_ids.push(tok);
        prev_tok = if tok < vocab { tok } else { UNK };
        if summary.token_ids.len() >= opts.max_len {
            break;
        }
    }
    let rows: Vec<Var> = steps.iter().map(|s| s.h_s).collect();
    let h_s_mat = tape.stack_rows(&rows);
    DecodeTrace { steps, h_s_mat, greedy: Some(summary) }
}

fn argmax_skipping_unk<S: Scalar>(dist: &[S]) -> (usize, S) {
    let mut best = None::<(usize, S)>;
    for (i, &v) in dist.iter().enumerate() {
        if i == UNK {
            continue;
        }
        match best {
            Some((_, b)) if v <= b => {}
            _ => best = Some((i, v)),
        }
    }
    best.expect("distribution with at least two entries")
}

#[derive(Clone)]
struct Hypothesis {
    tokens: Vec<usize>,
    p_gens: Vec<f64>,
    log_prob: f64,
    state: StepState,
}

impl Hypothesis {
    fn normalized(&self, extra_tokens: usize) -> f64 {
        let len = (self.tokens.len() + extra_tokens).max(1);
        self.log_prob / len as f64
    }
}

/// Length-normalized beam search over extended ids. Each step expands
/// every live hypothesis and keeps the `beam_size` best continuations
/// overall; a kept continuation that chose STOP moves to the finished
/// pool. Candidate ties break on (hypothesis index, token id), so the
/// search is deterministic, and with `beam_size == 1` the kept
/// continuation is always the argmax: exactly greedy decoding.
pub fn beam_search<S: Scalar>(
    tape: &mut Tape<S>,
    p: &ParamVars,
    ctx: &DecodeContext,
    enc_answer: &EncodedSequence,
    ext_ids: &[usize],
    ext_total: usize,
    opts: &DecodeOptions,
) -> DecodedSummary {
    assert!(opts.beam_size >= 1, "beam size must be at least 1");
    let vocab = p.dims.vocab;
    let init = initial_state(tape, p, enc_answer);
    let mut active = vec![Hypothesis {
        tokens: Vec::new(),
        p_gens: Vec::new(),
        log_prob: 0.0,
        state: init,
    }];
    let mut finished: Vec<DecodedSummary> = Vec::new();

    // Hypotheses entering step k carry exactly k tokens; at the cap only
    // STOP continuations are admissible.
    for step in 0..=opts.max_len {
        if active.is_empty() || finished.len() >= opts.beam_size {
            break;
        }
        let mut candidates: Vec<(f64, usize, usize, f64)> = Vec::new(); // (logp, hyp, token, p_gen)
        let mut outs = Vec::with_capacity(active.len());
        for (hi, hyp) in active.iter().enumerate() {
            let prev = match hyp.tokens.last() {
                None => crate::corpus::vocab::START,
                Some(&t) if t < vocab => t,
                Some(_) => UNK,
            };
            let x = tape.embed_row(p.embeddings_table, prev);
            let out = decode_step(tape, p, ctx, &hyp.state, x, ext_ids, ext_total, opts.p_gen_override);
            let dist = tape.value(out.p_final).data();
            let p_gen = tape.scalar_value(out.p_gen).f64_value();
            let mut scored: Vec<(usize, f64)> = dist
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != UNK)
                .map(|(i, &v)| (i, v.f64_value()))
                .collect();
            scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            for &(tok, prob) in scored.iter().take(opts.beam_size + 1) {
                let lp = hyp.log_prob + prob.max(crate::numerics::tape::LOG_CLAMP).ln();
                candidates.push((lp, hi, tok, p_gen));
            }
            outs.push(out);
        }
        candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

        let mut next_active = Vec::with_capacity(opts.beam_size);
        for &(lp, hi, tok, p_gen) in candidates.iter().take(opts.beam_size) {
            let hyp = &active[hi];
            if tok == STOP {
                finished.push(DecodedSummary {
                    token_ids: hyp.tokens.clone(),
                    p_gen: hyp.p_gens.clone(),
                    copied: hyp.tokens.iter().map(|&t| t >= vocab).collect(),
                    log_prob: lp,
                    finished: true,
                });
            } else if step < opts.max_len {
                let mut tokens = hyp.tokens.clone();
                tokens.push(tok);
                let mut p_gens = hyp.p_gens.clone();
                p_gens.push(p_gen);
                next_active.push(Hypothesis { tokens, p_gens, log_prob: lp, state: outs[hi].next });
            }
        }
        if step == opts.max_len {
            // keep the cap-length hypotheses for the no-STOP fallback
            break;
        }
        active = next_active;
    }

    let best_finished = finished.into_iter().max_by(|a, b| {
        let sa = a.log_prob / a.token_ids.len().max(1) as f64;
        let sb = b.log_prob / b.token_ids.len().max(1) as f64;
        sa.total_cmp(&sb).then_with(|| b.token_ids.cmp(&a.token_ids))
    });
    match best_finished {
        Some(s) => s,
        None => {
            let hyp = active
                .into_iter()
                .max_by(|a, b| a.normalized(0).total_cmp(&b.normalized(0)))
                .expect("beam search always has a live hypothesis at the cap");
            DecodedSummary {
                copied: hyp.tokens.iter().map(|&t| t >= vocab).collect(),
                p_gen: hyp.p_gens,
                log_prob: hyp.log_prob,
                token_ids: hyp.tokens,
                finished: false,
            }
        }
    }
}
