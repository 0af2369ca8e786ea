//! Joint objective, the training loop, and pair preparation.

pub mod data;
pub mod loss;
pub mod trainer;

pub use data::{group_by_question, prepare_pairs, TrainPair};
pub use loss::{cov_loss_term, coverage_loss, qa_loss_term, sum_loss_term, Lambdas, LossBreakdown};
pub use trainer::{
    batch_gradients, batch_loss, rank_pairs, train, EpochRecord, TrainOutcome, TrainSettings,
};
