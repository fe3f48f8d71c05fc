//! Reverse-mode differentiation over the float reference ops, a finite
//! difference checker for every backward rule, and a trainer for the adding
//! problem.

mod adding;
mod gradcheck;
mod tape;
mod train;

pub use adding::{generate_adding, AddingExample, AddingStream, ADDING_BASELINE_MSE};
pub use gradcheck::{
    gradcheck, registered_checks, GradCheckReport, OpCheck, GRADCHECK_EPS, GRADCHECK_NORM_FLOOR, GRADCHECK_TOL,
    MIN_KINK_MARGIN,
};
pub use tape::{Tape, Var};
pub use train::{
    attention_on_tape, evaluate_mse, forward_on_tape, train, Adam, AddingModel, LogRow, TrainConfig, TrainReport,
    LOG_EVERY, TRAIN_CSV_HEADER,
};
