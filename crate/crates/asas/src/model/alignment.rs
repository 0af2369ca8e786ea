//! Two-way co-attention between the encoded question and the decoded
//! summary representations, and the binary relevance classifier.

use crate::model::params::ParamVars;
use crate::numerics::{Scalar, Tape, Var};

/// Attentive sentence representations and the co-attention weights that
/// produced them.
#[derive(Debug, Clone, Copy)]
pub struct AttentiveReps {
    pub r_q: Var,
    pub r_a: Var,
    pub alpha_q: Var,
    pub alpha_a: Var,
}

/// Project encoder rows ([L, 2h]) down to the co-attention width so the
/// bilinear interaction matrix stays square.
pub fn project_question<S: Scalar>(tape: &mut Tape<S>, p: &ParamVars, h_q: Var) -> Var {
    tape.matmul_tb(h_q, p.align_q_proj)
}

/// M = tanh(Hq' U Hs'); co-attention weights come from max-pooling M
/// across the opposite sequence axis, then softmax; representations are
/// the attention-weighted row sums.
pub fn coattention<S: Scalar>(
    tape: &mut Tape<S>,
    p: &ParamVars,
    h_q_proj: Var,
    h_s: Var,
) -> AttentiveReps {
    assert!(tape.value(h_s).rows() >= 1, "co-attention over an empty summary trace");
    assert_eq!(
        tape.value(h_q_proj).cols(),
        tape.value(h_s).cols(),
        "question/summary representation widths differ"
    );
    let qu = tape.matmul(h_q_proj, p.align_u);
    let m = tape.matmul_tb(qu, h_s);
    let m = tape.tanh(m);
    let pooled_q = tape.max_over_cols(m);
    let pooled_a = tape.max_over_rows(m);
    let alpha_q = tape.softmax(pooled_q);
    let alpha_a = tape.softmax(pooled_a);
    let r_q = tape.weighted_sum_rows(h_q_proj, alpha_q);
    let r_a = tape.weighted_sum_rows(h_s, alpha_a);
    AttentiveReps { r_q, r_a, alpha_q, alpha_a }
}

/// softmax(W_s [r_q : r_a] + b_s) -> (p_neg, p_pos); the second entry is
/// the relevance score used for ranking.
pub fn classify<S: Scalar>(tape: &mut Tape<S>, p: &ParamVars, reps: &AttentiveReps) -> Var {
    let cat = tape.concat(&[reps.r_q, reps.r_a]);
    let logits = tape.matvec(p.align_w_s, cat);
    let logits = tape.add(logits, p.align_b_s);
    tape.softmax(logits)
}
