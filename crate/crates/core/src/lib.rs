//! Traffic density reconstruction from sparse probe trajectories.
//!
//! A follow-the-leader fleet is observed through a subset of probe vehicles. The number
//! of vehicles between consecutive probes is learned by projected gradient descent through
//! an unrolled Euler scheme, and the learned counts define a piecewise-constant density
//! that is compared against ground truth and a Godunov solution of the conservation law.
//!
//! Every numerical type is generic over [`Scalar`] (`f32` or `f64`); the aliases below
//! fix it to `f64`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod datagen;
pub mod densityfield;
pub mod error;
pub mod evaluate;
pub mod fleet;
pub mod learn;
pub mod macrosolver;
pub mod microsim;
pub mod scalar;
pub mod units;
pub mod velocity;

pub use error::{Error, Result};
pub use scalar::Scalar;
pub use units::ScaleSystem;
pub use velocity::{Greenshields, VelocityMap};

pub type FleetConfigF64 = fleet::FleetConfig<f64>;
pub type ProbeObservationsF64 = fleet::ProbeObservations<f64>;
pub type AlphaVectorF64 = fleet::AlphaVector<f64>;
pub type TrajectoryFieldF64 = microsim::TrajectoryField<f64>;
pub type DensityProfileF64 = datagen::DensityProfile<f64>;
pub type ScenarioF64 = datagen::Scenario<f64>;
pub type DatasetF64 = datagen::Dataset<f64>;
pub type PiecewiseDensityF64 = densityfield::PiecewiseDensity<f64>;
pub type SpacetimeDensityF64 = densityfield::SpacetimeDensity<f64>;
pub type GodunovSolutionF64 = macrosolver::GodunovSolution<f64>;
pub type TrainConfigF64 = learn::TrainConfig<f64>;
pub type TrainResultF64 = learn::TrainResult<f64>;
pub type PipelineConfigF64 = evaluate::PipelineConfig<f64>;
pub type PipelineRunF64 = evaluate::PipelineRun<f64>;
