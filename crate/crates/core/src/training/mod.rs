//! Loss terms, the optimizer loop with early stopping, and the
//! finite-difference gradient check.

mod config;
mod example;
mod gradcheck;
mod loss;
mod optim;
mod trainer;

pub use config::{ConfigError, TrainConfig};
pub use example::{build_examples, PrevTurn, TurnExample};
pub use loss::{example_loss, sample_noise, ActiveTerms, ExampleLoss, LossBreakdown, Noise, TokenCounts, Weights};
pub use optim::{clip_grad_norm, grad_norm, zero_grads, AdamW};
pub use gradcheck::{grad_check, micro_config, rel_error, synthetic_turn, GradCheckReport, TermCheck, TERMS};
pub use trainer::{EarlyStopping, EpochLog, Progress, TrainData, TrainError, TrainState, Trainer, TrainingLog, TrainingSummary};
