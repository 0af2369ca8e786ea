//! Mini-batch joint training with early stopping on dev MAP, plus the
//! freeze-aware fine-tuning used for transfer.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::eval::{rank_metrics, RankedItem, RankedList};
use crate::model::{
    forward_pair, group_of, register_params, score_pair, DecodeOptions, ModelParams,
    SummarySource, Dropout,
};
use crate::numerics::{clip_global_norm, OptimizerState, Scalar, Tape};
use crate::training::data::{group_by_question, TrainPair};
use crate::training::loss::{cov_loss_term, qa_loss_term, sum_loss_term, Lambdas, LossBreakdown};

#[derive(Debug, Clone)]
pub struct TrainSettings {
    pub batch_size: usize,
    pub epochs: usize,
    /// Stop after this many consecutive epochs without dev-MAP
    /// improvement.
    pub patience: usize,
    pub lambdas: Lambdas,
    pub dropout: f64,
    pub clip_norm: f64,
    /// Greedy-decode cap when building summary states.
    pub max_summary_len: usize,
    /// Parameter groups excluded from optimizer updates.
    pub freeze: BTreeSet<String>,
}

impl Default for TrainSettings {
    fn default() -> Self {
        TrainSettings {
            batch_size: 32,
            epochs: 5,
            patience: 1,
            lambdas: Lambdas::default(),
            dropout: 0.5,
            clip_norm: 2.0,
            max_summary_len: 100,
            freeze: BTreeSet::new(),
        }
    }
}

/// One line of the metrics log.
#[derive(Debug, Clone, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    #[serde(rename = "L_qa")]
    pub l_qa: f64,
    #[serde(rename = "L_sum")]
    pub l_sum: f64,
    #[serde(rename = "L_cov")]
    pub l_cov: f64,
    #[serde(rename = "L_total")]
    pub l_total: f64,
    pub dev_map: f64,
    pub dev_mrr: f64,
}

pub struct TrainOutcome<S: Scalar> {
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_dev_map: f64,
    pub best_params: ModelParams<S>,
    pub best_optimizer: OptimizerState<S>,
    /// Shuffle/dropout stream positions at the best epoch's end.
    pub best_rng_cursors: BTreeMap<String, u128>,
    pub stopped_early: bool,
}

/// Called after every epoch with the record, the live model state, and
/// the RNG stream positions (for resumable checkpoints).
pub type EpochCallback<'a, S> = &'a mut dyn FnMut(
    &EpochRecord,
    &ModelParams<S>,
    &OptimizerState<S>,
    &BTreeMap<String, u128>,
) -> Result<()>;

/// Forward/backward over one batch of pairs: weighted per-pair losses so
/// the summed gradients equal the gradient of the reported batch loss.
/// Teacher forcing is used wherever a reference exists; other candidates
/// decode greedily to build their summary states.
pub fn batch_gradients<S: Scalar>(
    params: &ModelParams<S>,
    batch: &[&TrainPair],
    lambdas: &Lambdas,
    max_summary_len: usize,
    mut dropout: Option<&mut Dropout>,
) -> Result<(LossBreakdown, BTreeMap<String, Vec<S>>)> {
    let b_count = batch.len();
    let r_count = batch.iter().filter(|p| p.counts_for_summary_loss()).count();
    let mut grads: BTreeMap<String, Vec<S>> = BTreeMap::new();
    let mut breakdown = LossBreakdown { qa_pairs: b_count, ..Default::default() };

    for pair in batch {
        let mut tape = Tape::new();
        let pv = register_params(&mut tape, params);
        let source = match &pair.reference {
            Some((input_ids, target_ids)) => {
                SummarySource::Reference { input_ids, target_ids }
            }
            None => SummarySource::Greedy(DecodeOptions {
                beam_size: 1,
                max_len: max_summary_len,
                p_gen_override: None,
            }),
        };
        let fwd = forward_pair(&mut tape, &pv, &pair.input, source, dropout.as_deref_mut());

        let qa = qa_loss_term(&mut tape, fwd.probs, pair.label);
        let mut terms: Vec<(crate::numerics::Var, S)> = Vec::with_capacity(3);
        if lambdas.qa != 0.0 {
            terms.push((qa, S::c(lambdas.qa / b_count as f64)));
        }
        breakdown.l_qa += tape.scalar_value(qa).f64_value() / b_count as f64;

        if pair.counts_for_summary_loss() {
            let (_, target_ids) = pair.reference.as_ref().expect("reference present");
            let sum = sum_loss_term(&mut tape, &fwd.trace.steps, target_ids);
            let cov = cov_loss_term(&mut tape, &fwd.trace.steps);
            if lambdas.sum != 0.0 {
                terms.push((sum, S::c(lambdas.sum / r_count as f64)));
            }
            if lambdas.cov != 0.0 {
                terms.push((cov, S::c(lambdas.cov / r_count as f64)));
            }
            breakdown.l_sum += tape.scalar_value(sum).f64_value() / r_count as f64;
            breakdown.l_cov += tape.scalar_value(cov).f64_value() / r_count as f64;
            breakdown.summary_tokens += target_ids.len();
        }

        // a pair may contribute nothing when all lambdas are zero
        if terms.is_empty() {
            continue;
        }
        let loss = tape.affine_scalars(&terms);
        let loss_value = tape.scalar_value(loss).f64_value();
        if !loss_value.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite loss on pair ({}, {})",
                pair.question_id, pair.answer_id
            )));
        }
        let g = tape.backward(loss);
        for (name, var) in pv.named() {
            if let Some(src) = g.get(var) {
                let slot = grads
                    .entry(name.to_string())
                    .or_insert_with(|| vec![S::zero(); src.len()]);
                for (acc, v) in slot.iter_mut().zip(src) {
                    *acc += *v;
                }
            }
        }
    }
    breakdown.finalize(lambdas);
    Ok((breakdown, grads))
}

/// Batch loss value only (same weighting as `batch_gradients`), used by
/// finite-difference checks.
pub fn batch_loss<S: Scalar>(
    params: &ModelParams<S>,
    batch: &[&TrainPair],
    lambdas: &Lambdas,
    max_summary_len: usize,
) -> f64 {
    let (breakdown, _) = batch_gradients(params, batch, lambdas, max_summary_len, None)
        .expect("finite batch loss");
    breakdown.l_total
}

/// Score every pair greedily and group into ranked lists per question.
pub fn rank_pairs<S: Scalar>(
    params: &ModelParams<S>,
    pairs: &[TrainPair],
    max_summary_len: usize,
) -> Vec<RankedList> {
    let opts = DecodeOptions { beam_size: 1, max_len: max_summary_len, p_gen_override: None };
    group_by_question(pairs)
        .into_iter()
        .map(|(qid, group)| {
            let items = group
                .into_iter()
                .map(|p| RankedItem {
                    answer_id: p.answer_id.clone(),
                    score: score_pair(params, &p.input, opts),
                    label: p.label,
                    answer_len: p.answer_len,
                })
                .collect();
            RankedList::new(qid, items)
        })
        .collect()
}

/// Joint training loop. Shuffles pairs each epoch, steps Adagrad on
/// clipped batch gradients, evaluates dev MAP after every epoch, and
/// keeps the best-dev snapshot. Frozen groups receive no updates.
#[allow(clippy::too_many_arguments)]
pub fn train<S: Scalar>(
    params: &mut ModelParams<S>,
    optimizer: &mut OptimizerState<S>,
    train_pairs: &[TrainPair],
    dev_pairs: &[TrainPair],
    settings: &TrainSettings,
    shuffle_rng: &mut ChaCha8Rng,
    dropout_rng: &mut ChaCha8Rng,
    mut on_epoch: Option<EpochCallback<'_, S>>,
) -> Result<TrainOutcome<S>> {
    if train_pairs.is_empty() {
        return Err(Error::data("empty training set"));
    }
    crate::model::validate_groups(&settings.freeze.iter().cloned().collect::<Vec<_>>())?;

    let mut history = Vec::new();
    let mut best_epoch = 0usize;
    let mut best_dev_map = f64::NEG_INFINITY;
    let mut best_params = params.clone();
    let mut best_optimizer = optimizer.clone();
    let mut best_rng_cursors = BTreeMap::new();
    let mut since_improvement = 0usize;
    let mut stopped_early = false;

    for epoch in 1..=settings.epochs {
        let mut order: Vec<usize> = (0..train_pairs.len()).collect();
        order.shuffle(shuffle_rng);

        let mut epoch_loss = LossBreakdown::default();
        let mut batches = 0usize;
        for chunk in order.chunks(settings.batch_size) {
            let batch: Vec<&TrainPair> = chunk.iter().map(|&i| &train_pairs[i]).collect();
            let mut dropout = Dropout { rate: settings.dropout, rng: dropout_rng };
            let (breakdown, mut grads) = batch_gradients(
                params,
                &batch,
                &settings.lambdas,
                settings.max_summary_len,
                Some(&mut dropout),
            )
            .map_err(|e| match e {
                Error::Numeric(msg) => Error::Numeric(format!(
                    "{msg}; batch ids: {}",
                    batch
                        .iter()
                        .map(|p| format!("({},{})", p.question_id, p.answer_id))
                        .collect::<Vec<_>>()
                        .join(" ")
                )),
                other => other,
            })?;
            clip_global_norm(&mut grads, settings.clip_norm);
            for (name, grad) in &grads {
                if settings.freeze.contains(group_of(name)) {
                    continue;
                }
                let tensor = params.tensor_mut(name).expect("gradient for known tensor");
                optimizer.step(name, tensor, grad);
            }
            epoch_loss.l_qa += breakdown.l_qa;
            epoch_loss.l_sum += breakdown.l_sum;
            epoch_loss.l_cov += breakdown.l_cov;
            epoch_loss.qa_pairs += breakdown.qa_pairs;
            epoch_loss.summary_tokens += breakdown.summary_tokens;
            batches += 1;
        }
        let n = batches.max(1) as f64;
        epoch_loss.l_qa /= n;
        epoch_loss.l_sum /= n;
        epoch_loss.l_cov /= n;
        epoch_loss.finalize(&settings.lambdas);

        let (dev_map, dev_mrr) = if dev_pairs.is_empty() {
            (0.0, 0.0)
        } else {
            let lists = rank_pairs(params, dev_pairs, settings.max_summary_len);
            let report = rank_metrics(&lists)?;
            (report.map, report.mrr)
        };

        let record = EpochRecord {
            epoch,
            l_qa: epoch_loss.l_qa,
            l_sum: epoch_loss.l_sum,
            l_cov: epoch_loss.l_cov,
            l_total: epoch_loss.l_total,
            dev_map,
            dev_mrr,
        };
        let cursors = BTreeMap::from([
            ("shuffle".to_string(), crate::rng::cursor_of(shuffle_rng).word_pos),
            ("dropout".to_string(), crate::rng::cursor_of(dropout_rng).word_pos),
        ]);
        if let Some(cb) = on_epoch.as_deref_mut() {
            cb(&record, params, optimizer, &cursors)?;
        }
        history.push(record);

        if dev_map > best_dev_map {
            best_dev_map = dev_map;
            best_epoch = epoch;
            best_params = params.clone();
            best_optimizer = optimizer.clone();
            best_rng_cursors = cursors;
            since_improvement = 0;
        } else {
            since_improvement += 1;
            if since_improvement >= settings.patience {
                stopped_early = epoch < settings.epochs;
                break;
            }
        }
    }

    Ok(TrainOutcome {
        history,
        best_epoch,
        best_dev_map,
        best_params,
        best_optimizer,
        best_rng_cursors,
        stopped_early,
    })
}
