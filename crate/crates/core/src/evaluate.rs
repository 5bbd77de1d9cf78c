//! Test-phase simulation through the reconstructed density, error metrics, the Godunov
//! comparison, and the end-to-end pipeline with its convergence study.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::{generate_dataset, Dataset, GenerateOptions, Scenario};
use crate::densityfield::{
    spacetime_density, wasserstein_l1, PiecewiseDensity, SpacetimeDensity, PROFILE_CELLS,
};
use crate::error::{Error, Result};
use crate::learn::{fit, squared_error, TrainConfig, TrainResult};
use crate::macrosolver::{godunov_solve, GodunovGrid, GodunovSolution, DEFAULT_CELLS, DEFAULT_CFL};
use crate::microsim::{check_maximum_principle, simulate_probes, TrajectoryField};
use crate::scalar::Scalar;
use crate::velocity::VelocityMap;

/// Definition of the relative error stored alongside every report.
pub const RE_DEFINITION: &str = "||pred - obs||_2 / ||obs||_2 over final test positions";

/// Euler paths of independent test vehicles driven by `v(ρ(t, x⁺))` of the field.
///
/// Each row holds all test vehicles at one step; columns follow `test_init`.
pub fn test_simulate<T: Scalar, V: VelocityMap<T> + ?Sized>(
    field: &SpacetimeDensity<T>,
    test_init: &[T],
    horizon: T,
    v: &V,
    steps: usize,
) -> Result<TrajectoryField<T>> {
    if steps == 0 {
        return Err(Error::Config(
            "test simulation needs at least one step".into(),
        ));
    }
    let width = test_init.len();
    if width == 0 {
        return Err(Error::Config("no test vehicles to simulate".into()));
    }
    let dt = horizon / T::from_count(steps);
    let mut times = Vec::with_capacity(steps + 1);
    let mut positions = Vec::with_capacity((steps + 1) * width);
    let mut x = test_init.to_vec();
    times.push(T::zero());
    positions.extend_from_slice(&x);
    for k in 0..steps {
        let t = T::from_count(k) * dt;
        let rho = field.at_time(t);
        for xi in x.iter_mut() {
            let density = rho.density_at(*xi).max(T::zero()).min(T::one());
            *xi = *xi + dt * v.speed(density);
        }
        times.push(if k + 1 == steps {
            horizon
        } else {
            T::from_count(k + 1) * dt
        });
        positions.extend_from_slice(&x);
    }
    TrajectoryField::from_rows(times, positions, width)
}

/// Mean squared difference.
pub fn mse<T: Scalar>(pred: &[T], obs: &[T]) -> Result<T> {
    if pred.len() != obs.len() {
        return Err(Error::LengthMismatch {
            expected: obs.len(),
            got: pred.len(),
        });
    }
    if obs.is_empty() {
        return Err(Error::Config("cannot average over zero positions".into()));
    }
    Ok(squared_error(pred, obs) / T::from_count(obs.len()))
}

/// `‖pred - obs‖₂ / ‖obs‖₂`.
pub fn relative_error<T: Scalar>(pred: &[T], obs: &[T]) -> Result<T> {
    if pred.len() != obs.len() {
        return Err(Error::LengthMismatch {
            expected: obs.len(),
            got: pred.len(),
        });
    }
    let norm = obs.iter().map(|&y| y * y).sum::<T>().sqrt();
    if !(norm > T::zero()) {
        return Err(Error::ZeroNorm);
    }
    Ok(squared_error(pred, obs).sqrt() / norm)
}

/// L¹ discrepancy between a reconstructed field and a Godunov solution at shared times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GodunovComparison<T> {
    pub times: Vec<T>,
    /// `∫ |ρ_field - ρ_pde| dx` on the Godunov grid at each time.
    pub l1: Vec<T>,
    /// Trapezoidal time average of `l1`.
    pub mean: T,
    pub final_l1: T,
}

/// Rasterizes the field on the Godunov grid at each snapshot inside the field's time range.
pub fn compare_to_godunov<T: Scalar>(
    field: &SpacetimeDensity<T>,
    pde: &GodunovSolution<T>,
) -> Result<GodunovComparison<T>> {
    let (t0, t1) = (field.times()[0], field.times()[field.steps()]);
    let slack = T::lit(1e-12) * (T::one() + t1.abs());
    let dx = pde.dx();
    let mut times = Vec::new();
    let mut l1 = Vec::new();
    for (k, &t) in pde.times.iter().enumerate() {
        if t < t0 - slack || t > t1 + slack {
            continue;
        }
        let rho = field.at_time(t);
        let (a, b) = rho.support();
        if b <= pde.x_min || a >= pde.x_max {
            return Err(Error::DisjointDomains);
        }
        let raster = rho.rasterize(pde.x_min, pde.x_max, pde.cells);
        let d = raster
            .iter()
            .zip(pde.snapshot(k))
            .map(|(&p, &q)| (p - q).abs())
            .sum::<T>()
            * dx;
        times.push(t);
        l1.push(d);
    }
    if times.is_empty() {
        return Err(Error::DisjointDomains);
    }
    let mean = if times.len() == 1 {
        l1[0]
    } else {
        let span = times[times.len() - 1] - times[0];
        let area: T = (1..times.len())
            .map(|j| (l1[j] + l1[j - 1]) * T::half() * (times[j] - times[j - 1]))
            .sum();
        if span > T::zero() {
            area / span
        } else {
            l1[0]
        }
    };
    let final_l1 = l1[l1.len() - 1];
    Ok(GodunovComparison {
        times,
        l1,
        mean,
        final_l1,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GodunovOptions<T> {
    pub cells: usize,
    pub cfl: T,
    /// Output intervals stored between `0` and the horizon.
    pub snapshots: usize,
    /// Padding on both sides of the domain, as a fraction of its span.
    pub margin: T,
}

impl<T: Scalar> Default for GodunovOptions<T> {
    fn default() -> Self {
        Self {
            cells: DEFAULT_CELLS,
            cfl: T::lit(DEFAULT_CFL),
            snapshots: 50,
            margin: T::lit(0.05),
        }
    }
}

/// Solves the conservation law from the scenario's initial profile on a domain that
/// contains the fleet up to the horizon.
pub fn godunov_reference<T: Scalar, V: VelocityMap<T> + ?Sized>(
    scenario: &Scenario<T>,
    v: &V,
    options: &GodunovOptions<T>,
) -> Result<GodunovSolution<T>> {
    let (a, b) = scenario.profile.support();
    let reach = b + v.v_max() * scenario.horizon;
    let pad = options.margin * (reach - a);
    let grid = GodunovGrid::from_mass(
        a - pad,
        reach + pad,
        options.cells,
        options.cfl,
        v,
        |l, r| scenario.profile.mass_between(l, r),
    )?;
    godunov_solve(&grid, scenario.horizon, v, options.snapshots)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig<T> {
    pub scenario: Scenario<T>,
    pub generate: GenerateOptions,
    pub train: TrainConfig<T>,
    /// Euler steps of the test simulation; `None` reuses the training `K`.
    pub test_steps: Option<usize>,
    pub godunov: GodunovOptions<T>,
    /// Allowed `O(Δt)` excursion in the maximum-principle check.
    pub max_principle_margin: T,
}

impl<T: Scalar> PipelineConfig<T> {
    pub fn new(scenario: Scenario<T>) -> Self {
        Self {
            scenario,
            generate: GenerateOptions::default(),
            train: TrainConfig::default(),
            test_steps: None,
            godunov: GodunovOptions::default(),
            max_principle_margin: T::lit(1e-3),
        }
    }
}

/// Scalar summary of one pipeline run; lengths are nondimensional unless marked physical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub vehicles: usize,
    pub followers: usize,
    pub test_vehicles: usize,
    pub horizon: f64,
    pub stride: usize,
    pub epochs_run: usize,
    pub mse_test: f64,
    /// Squared kilometres.
    pub mse_test_physical: f64,
    pub re_test: f64,
    pub re_definition: String,
    pub mse_train: f64,
    pub mse_train_physical: f64,
    pub initial_train_loss: f64,
    /// `W_{L,1}` between the reconstructed initial density and the profile.
    pub wasserstein_init: f64,
    /// Same distance with the ground-truth counts.
    pub wasserstein_init_true: f64,
    /// `Σ|α - α_true| / Σ α_true`.
    pub alpha_error: f64,
    pub max_principle_violations: usize,
    pub max_principle_worst_slack: f64,
    /// Time-averaged L¹ gap to the Godunov solution.
    pub density_l1_vs_godunov: f64,
    pub density_l1_final: f64,
    /// Final L¹ gap with the ground-truth counts.
    pub density_l1_final_true: f64,
    pub godunov_cells: usize,
    pub godunov_mass_residual: f64,
}

#[derive(Debug, Clone)]
pub struct PipelineRun<T> {
    pub dataset: Dataset<T>,
    pub training: TrainResult<T>,
    pub field: SpacetimeDensity<T>,
    pub test_paths: TrajectoryField<T>,
    pub godunov: GodunovSolution<T>,
    pub comparison: GodunovComparison<T>,
    pub report: EvalReport,
}

/// Reconstructs the density from a count vector and scores it.
#[derive(Debug, Clone)]
pub struct Evaluation<T> {
    pub field: SpacetimeDensity<T>,
    pub test_paths: TrajectoryField<T>,
    pub comparison: GodunovComparison<T>,
    pub report: EvalReport,
}

/// Generate, fit and evaluate one scenario.
pub fn run_pipeline<T: Scalar, V: VelocityMap<T> + ?Sized>(
    config: &PipelineConfig<T>,
    v: &V,
) -> Result<PipelineRun<T>> {
    let dataset = generate_dataset(&config.scenario, v, &config.generate)?;
    let training = fit(&dataset.train_obs, &dataset.fleet, v, &config.train)?;
    let godunov = godunov_reference(&config.scenario, v, &config.godunov)?;
    let eval = evaluate_fit(config, v, &dataset, &training, &godunov)?;
    Ok(PipelineRun {
        dataset,
        training,
        field: eval.field,
        test_paths: eval.test_paths,
        godunov,
        comparison: eval.comparison,
        report: eval.report,
    })
}

/// Scores a training result against its dataset and a Godunov reference.
pub fn evaluate_fit<T: Scalar, V: VelocityMap<T> + ?Sized>(
    config: &PipelineConfig<T>,
    v: &V,
    dataset: &Dataset<T>,
    training: &TrainResult<T>,
    godunov: &GodunovSolution<T>,
) -> Result<Evaluation<T>> {
    let cfg = &dataset.fleet;
    let obs = &dataset.train_obs;
    let k = config.train.steps;
    let alpha = training.alpha_star.values();
    let scales = &config.scenario.scales;

    let field = spacetime_density(&training.trajectory, alpha, cfg)?;
    let test_steps = config.test_steps.unwrap_or(k);
    let test_paths = test_simulate(&field, &dataset.test_init, cfg.horizon, v, test_steps)?;
    let pred = test_paths.final_row();
    let mse_test = mse(pred, &dataset.test_final)?;
    let re_test = relative_error(pred, &dataset.test_final)?;

    let profile = PiecewiseDensity::from_profile(&config.scenario.profile, PROFILE_CELLS)?;
    let wasserstein_init = wasserstein_l1(&field.at_step(0), &profile);

    let truth = &dataset.ground_truth_alpha;
    let truth_traj = simulate_probes(truth, obs, cfg, v, k)?;
    let truth_field = spacetime_density(&truth_traj, truth, cfg)?;
    let wasserstein_init_true = wasserstein_l1(&truth_field.at_step(0), &profile);

    let truth_sum: T = truth.iter().copied().sum();
    let alpha_error = alpha
        .iter()
        .zip(truth)
        .map(|(&a, &b)| (a - b).abs())
        .sum::<T>()
        / truth_sum;

    let principle = check_maximum_principle(
        &training.trajectory,
        alpha,
        cfg,
        v,
        config.max_principle_margin,
    )?;
    let comparison = compare_to_godunov(&field, godunov)?;
    let truth_comparison = compare_to_godunov(&truth_field, godunov)?;

    let mse_test = mse_test.as_f64();
    let mse_train = training.best_loss.as_f64();
    let report = EvalReport {
        vehicles: cfg.vehicles,
        followers: obs.followers(),
        test_vehicles: dataset.test_indices.len(),
        horizon: cfg.horizon.as_f64(),
        stride: dataset.stride,
        epochs_run: training.loss_history.len(),
        mse_test,
        mse_test_physical: scales.squared_length_to_physical(mse_test),
        re_test: re_test.as_f64(),
        re_definition: RE_DEFINITION.to_string(),
        mse_train,
        mse_train_physical: scales.squared_length_to_physical(mse_train),
        initial_train_loss: training.initial_loss.as_f64(),
        wasserstein_init: wasserstein_init.as_f64(),
        wasserstein_init_true: wasserstein_init_true.as_f64(),
        alpha_error: alpha_error.as_f64(),
        max_principle_violations: principle.violations,
        max_principle_worst_slack: principle.worst_slack,
        density_l1_vs_godunov: comparison.mean.as_f64(),
        density_l1_final: comparison.final_l1.as_f64(),
        density_l1_final_true: truth_comparison.final_l1.as_f64(),
        godunov_cells: godunov.cells,
        godunov_mass_residual: godunov.max_mass_residual.as_f64(),
    };
    Ok(Evaluation {
        field,
        test_paths,
        comparison,
        report,
    })
}

/// One row of the convergence table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub vehicles: usize,
    pub followers: usize,
    pub wasserstein_init: f64,
    pub wasserstein_init_true: f64,
    pub density_l1_final: f64,
    pub density_l1_final_true: f64,
    pub mse_test: f64,
    pub mse_test_physical: f64,
    pub re_test: f64,
}

impl From<&EvalReport> for ConvergenceRow {
    fn from(r: &EvalReport) -> Self {
        Self {
            vehicles: r.vehicles,
            followers: r.followers,
            wasserstein_init: r.wasserstein_init,
            wasserstein_init_true: r.wasserstein_init_true,
            density_l1_final: r.density_l1_final,
            density_l1_final_true: r.density_l1_final_true,
            mse_test: r.mse_test,
            mse_test_physical: r.mse_test_physical,
            re_test: r.re_test,
        }
    }
}

/// Runs the pipeline for every fleet size in parallel; rows keep the order of `vehicles`.
pub fn convergence_study<T: Scalar, V: VelocityMap<T> + ?Sized>(
    base: &PipelineConfig<T>,
    vehicles: &[usize],
    v: &V,
) -> Result<Vec<ConvergenceRow>> {
    vehicles
        .par_iter()
        .map(|&n| {
            let mut config = base.clone();
            config.scenario.vehicles = n;
            run_pipeline(&config, v).map(|run| ConvergenceRow::from(&run.report))
        })
        .collect()
}
