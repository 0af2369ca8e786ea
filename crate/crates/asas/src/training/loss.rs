//! The three loss terms and their weighted combination. Each term is a
//! scalar tape node so gradients flow through the full forward pass.

use serde::Serialize;

use crate::model::decoder::StepOut;
use crate::numerics::{Scalar, Tape, Var};

/// Loss weights; the total is lambda_qa*L_qa + lambda_sum*L_sum +
/// lambda_cov*L_cov.
#[derive(Debug, Clone, Copy)]
pub struct Lambdas {
    pub qa: f64,
    pub sum: f64,
    pub cov: f64,
}

impl Default for Lambdas {
    fn default() -> Self {
        Lambdas { qa: 1.0, sum: 1.0, cov: 1.0 }
    }
}

/// Reported batch losses. `l_total` decomposes exactly as the weighted
/// sum of the three components.
#[derive(Debug, Clone, Copy, Default, Serialize, PartialEq)]
pub struct LossBreakdown {
    pub l_qa: f64,
    pub l_sum: f64,
    pub l_cov: f64,
    pub l_total: f64,
    pub qa_pairs: usize,
    pub summary_tokens: usize,
}

impl LossBreakdown {
    pub fn finalize(&mut self, lambdas: &Lambdas) {
        self.l_total = lambdas.qa * self.l_qa + lambdas.sum * self.l_sum + lambdas.cov * self.l_cov;
    }
}

/// Binary cross-entropy term for one pair: -ln p[label], with the
/// probability clamped away from zero before the log.
pub fn qa_loss_term<S: Scalar>(tape: &mut Tape<S>, probs: Var, label: u8) -> Var {
    assert!(label <= 1, "label must be 0 or 1");
    assert_eq!(tape.value(probs).numel(), 2, "classifier output must be a probability pair");
    tape.pick_neg_log(probs, label as usize)
}

/// Negative log likelihood of the reference under the per-step extended
/// distributions: (1/T) sum_t -ln P_t(target_t).
pub fn sum_loss_term<S: Scalar>(tape: &mut Tape<S>, steps: &[StepOut], targets: &[usize]) -> Var {
    assert_eq!(steps.len(), targets.len(), "decode steps vs targets length mismatch");
    assert!(!steps.is_empty(), "summary loss over zero steps");
    let inv = S::c(1.0 / steps.len() as f64);
    let terms: Vec<(Var, S)> = steps
        .iter()
        .zip(targets)
        .map(|(step, &tgt)| {
            let ext = tape.value(step.p_final).numel();
            assert!(tgt < ext, "target id {tgt} outside extended vocabulary {ext}");
            (tape.pick_neg_log(step.p_final, tgt), inv)
        })
        .collect();
    tape.affine_scalars(&terms)
}

/// Coverage penalty: (1/T) sum_t sum_i min(attn_i^t, cov_i^t), where the
/// coverage entering step t is the sum of all earlier attentions.
pub fn cov_loss_term<S: Scalar>(tape: &mut Tape<S>, steps: &[StepOut]) -> Var {
    let attns: Vec<Var> = steps.iter().map(|s| s.attn).collect();
    let covs: Vec<Var> = steps.iter().map(|s| s.cov_before).collect();
    coverage_loss(tape, &attns, &covs)
}

pub fn coverage_loss<S: Scalar>(tape: &mut Tape<S>, attns: &[Var], covs: &[Var]) -> Var {
    assert_eq!(attns.len(), covs.len(), "attention/coverage trace length mismatch");
    assert!(!attns.is_empty(), "coverage loss over zero steps");
    let inv = S::c(1.0 / attns.len() as f64);
    let terms: Vec<(Var, S)> = attns
        .iter()
        .zip(covs)
        .map(|(&a, &c)| {
            let m = tape.min_elem(a, c);
            (tape.sum_vec(m), inv)
        })
        .collect();
    tape.affine_scalars(&terms)
}
