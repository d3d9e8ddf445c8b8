//! Seeded randomness, momentum SGD, the training loop and gradient checking.

mod gradcheck;
mod optim;
mod prng;
mod train;

pub use gradcheck::{
    check_coords, grad_check, relative_error, sample_coords, CoordCheck, GradCheckOptions, GradCheckReport,
};
pub use optim::{sgd_step, sgd_update, OptState, SgdConfig};
pub use prng::Prng;
pub use train::{batch_gradient, evaluate_model, train, train_with, StepInfo, TrainOptions, TrainReport};
