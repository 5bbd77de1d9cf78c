//! Fitting the per-segment counts: loss, exact reverse-mode gradient through the
//! unrolled Euler scheme, projection onto the feasible set, and the training loop.

mod adjoint;
mod fit;
mod loss;
mod projection;

pub use adjoint::{adjoint_gradient, loss_and_gradient, LossGradient};
pub use fit::{fit, fit_with_observer, StepRule, StopReason, TrainConfig, TrainResult};
pub use loss::train_loss;
pub use projection::project_onto_feasible;

pub(crate) use loss::squared_error;
