//! The four subcommands. Each reads only its inputs and writes only into `out`.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use trafficrecon_core::datagen::{
    generate_dataset, validate_alpha_assumption, AlphaAssumptionReport, Dataset,
};
use trafficrecon_core::evaluate::{
    convergence_study, evaluate_fit, godunov_reference, ConvergenceRow, EvalReport,
};
use trafficrecon_core::fleet::{make_alpha_bounds, AlphaVector, FleetConfig, ProbeObservations};
use trafficrecon_core::learn::{fit, StepRule, StopReason, TrainResult};
use trafficrecon_core::microsim::simulate_probes;
use trafficrecon_core::Greenshields;

use crate::config::{MetricUnits, RunConfig};
use crate::io::{
    check_schema, read_csv, read_json, write_csv, write_json, DensityCellRow, FinalDensityRow,
    GodunovRow, L1Row, LossRow, ProbeRow, TestRow, TestTrajectoryRow, TrajectoryRow,
    SCHEMA_VERSION,
};

/// Training loss recorded with every fit.
pub const LOSS_DEFINITION: &str =
    "mean over the n follower probes of the squared final-position error; the leader is excluded";

/// Constant in the growth check `max αᵢ <= C N / ln N` reported by `generate`.
pub const ALPHA_ASSUMPTION_CONSTANT: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub schema_version: u32,
    pub config: RunConfig,
    pub vehicles: usize,
    pub followers: usize,
    pub test_vehicles: usize,
    pub stride: usize,
    pub horizon: f64,
    pub total_length: f64,
    pub car_length: f64,
    pub fleet_steps: usize,
    pub ground_truth_alpha: Vec<f64>,
    pub alpha_assumption: AlphaAssumptionReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaFile {
    pub schema_version: u32,
    pub alpha: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub total: f64,
    pub steps: usize,
    pub step_rule: StepRule,
    /// Initial step length when set explicitly in the configuration.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    pub loss_definition: String,
    pub epochs_run: usize,
    pub initial_loss: f64,
    pub best_loss: f64,
    pub final_eta: f64,
    pub restarts: usize,
    pub stop_reason: StopReason,
}

fn prepare_out(out: &Path) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating output directory {}", out.display()))
}

pub fn cmd_generate(config: &RunConfig, out: &Path) -> Result<DatasetMeta> {
    let scenario = config.scenario()?;
    let ds = generate_dataset(&scenario, &Greenshields, &config.generate_options()?)?;
    prepare_out(out)?;
    let train_rows = ds.train_indices.iter().enumerate().map(|(j, &i)| ProbeRow {
        probe: j,
        vehicle: i,
        x_initial: ds.train_obs.initial()[j],
        x_final: ds.train_obs.terminal()[j],
    });
    write_csv(&out.join("train.csv"), train_rows)?;
    let test_rows = ds.test_indices.iter().enumerate().map(|(j, &i)| TestRow {
        test_id: j,
        vehicle: i,
        x_initial: ds.test_init[j],
        x_final: ds.test_final[j],
    });
    write_csv(&out.join("test.csv"), test_rows)?;
    let meta = DatasetMeta {
        schema_version: SCHEMA_VERSION,
        config: config.clone(),
        vehicles: ds.fleet.vehicles,
        followers: ds.fleet.followers,
        test_vehicles: ds.test_indices.len(),
        stride: ds.stride,
        horizon: ds.fleet.horizon,
        total_length: ds.fleet.total_length,
        car_length: ds.fleet.car_length(),
        fleet_steps: ds.fleet_steps,
        alpha_assumption: validate_alpha_assumption(
            &ds.ground_truth_alpha,
            ds.fleet.vehicles,
            ALPHA_ASSUMPTION_CONSTANT,
        ),
        ground_truth_alpha: ds.ground_truth_alpha,
    };
    write_json(&out.join("meta.json"), &meta)?;
    Ok(meta)
}

pub fn load_dataset(dir: &Path) -> Result<(DatasetMeta, Dataset<f64>)> {
    let meta_path = dir.join("meta.json");
    let meta: DatasetMeta = read_json(&meta_path)?;
    check_schema(meta.schema_version, &meta_path)?;
    let train: Vec<ProbeRow> = read_csv(&dir.join("train.csv"))?;
    let test: Vec<TestRow> = read_csv(&dir.join("test.csv"))?;
    if train.len() != meta.followers + 1 {
        bail!(
            "train.csv has {} probes, meta.json expects {}",
            train.len(),
            meta.followers + 1
        );
    }
    if test.len() != meta.test_vehicles {
        bail!(
            "test.csv has {} rows, meta.json expects {}",
            test.len(),
            meta.test_vehicles
        );
    }
    if train.iter().enumerate().any(|(j, r)| r.probe != j) {
        bail!("train.csv probes must be listed in order 0..=n");
    }
    let fleet = FleetConfig::new(
        meta.vehicles,
        meta.total_length,
        meta.horizon,
        meta.followers,
    )?;
    let train_obs = ProbeObservations::new(
        train.iter().map(|r| r.x_initial).collect(),
        train.iter().map(|r| r.x_final).collect(),
        1.0,
        meta.horizon,
    )?;
    let ds = Dataset {
        fleet,
        stride: meta.stride,
        fleet_steps: meta.fleet_steps,
        train_indices: train.iter().map(|r| r.vehicle).collect(),
        train_obs,
        test_indices: test.iter().map(|r| r.vehicle).collect(),
        test_init: test.iter().map(|r| r.x_initial).collect(),
        test_final: test.iter().map(|r| r.x_final).collect(),
        ground_truth_alpha: meta.ground_truth_alpha.clone(),
        full_trajectories: None,
    };
    Ok((meta, ds))
}

pub fn cmd_train(config: &RunConfig, dataset: &Path, out: &Path) -> Result<AlphaFile> {
    let (_, ds) = load_dataset(dataset)?;
    let tc = config.train_config();
    let result = fit(&ds.train_obs, &ds.fleet, &Greenshields, &tc)?;
    prepare_out(out)?;
    let alpha = &result.alpha_star;
    let file = AlphaFile {
        schema_version: SCHEMA_VERSION,
        alpha: alpha.values().to_vec(),
        lower: alpha.lower().to_vec(),
        upper: alpha.upper().to_vec(),
        total: alpha.total(),
        steps: tc.steps,
        step_rule: tc.step_rule,
        eta: tc.eta,
        loss_definition: LOSS_DEFINITION.to_string(),
        epochs_run: result.loss_history.len(),
        initial_loss: result.initial_loss,
        best_loss: result.best_loss,
        final_eta: result.final_eta,
        restarts: result.restarts,
        stop_reason: result.stop_reason,
    };
    write_json(&out.join("alpha.json"), &file)?;
    let loss_rows = result
        .loss_history
        .iter()
        .zip(&result.gradient_norm_history)
        .enumerate()
        .map(|(epoch, (&loss, &g))| LossRow {
            epoch,
            loss,
            projected_gradient_norm: g,
        });
    write_csv(&out.join("loss_history.csv"), loss_rows)?;
    write_csv(&out.join("trajectories.csv"), trajectory_rows(&result))?;
    Ok(file)
}

fn trajectory_rows(result: &TrainResult<f64>) -> Vec<TrajectoryRow> {
    result
        .trajectory
        .rows()
        .enumerate()
        .flat_map(|(step, (time, row))| {
            row.iter()
                .enumerate()
                .map(move |(probe, &position)| TrajectoryRow {
                    step,
                    time,
                    probe,
                    position,
                })
        })
        .collect()
}

/// Rebuilds a training result from `alpha.json` and `loss_history.csv`.
pub fn load_training(dir: &Path, ds: &Dataset<f64>) -> Result<TrainResult<f64>> {
    let path = dir.join("alpha.json");
    let file: AlphaFile = read_json(&path)?;
    check_schema(file.schema_version, &path)?;
    let losses: Vec<LossRow> = read_csv(&dir.join("loss_history.csv"))?;
    let bounds = make_alpha_bounds(&ds.train_obs, &ds.fleet)?;
    if file.alpha.len() != ds.train_obs.followers() || file.upper != bounds.upper {
        bail!("alpha.json does not belong to this dataset");
    }
    let alpha_star = AlphaVector::new(file.alpha, file.upper, file.total, 1e-9)?;
    let trajectory = simulate_probes(
        alpha_star.values(),
        &ds.train_obs,
        &ds.fleet,
        &Greenshields,
        file.steps,
    )?;
    Ok(TrainResult {
        alpha_star,
        loss_history: losses.iter().map(|r| r.loss).collect(),
        gradient_norm_history: losses.iter().map(|r| r.projected_gradient_norm).collect(),
        trajectory,
        initial_loss: file.initial_loss,
        best_loss: file.best_loss,
        final_eta: file.final_eta,
        restarts: file.restarts,
        stop_reason: file.stop_reason,
    })
}

pub fn cmd_evaluate(
    config: &RunConfig,
    dataset: &Path,
    results: &Path,
    out: &Path,
) -> Result<EvalReport> {
    let (meta, ds) = load_dataset(dataset)?;
    let training = load_training(results, &ds)?;
    let mut pipeline = config.pipeline()?;
    pipeline.scenario = meta.config.scenario()?;
    pipeline.train.steps = training.trajectory.steps();
    let godunov = godunov_reference(&pipeline.scenario, &Greenshields, &pipeline.godunov)?;
    let eval = evaluate_fit(&pipeline, &Greenshields, &ds, &training, &godunov)?;
    prepare_out(out)?;

    let field = &eval.field;
    let mut cells = Vec::new();
    for (step, (time, rho)) in field.iter().enumerate() {
        for (cell, (w, &density)) in rho.edges().windows(2).zip(rho.values()).enumerate() {
            cells.push(DensityCellRow {
                step,
                time,
                cell,
                x_left: w[0],
                x_right: w[1],
                density,
            });
        }
    }
    write_csv(&out.join("density_spacetime.csv"), cells)?;

    let last = field.at_step(field.steps());
    let pde_final = godunov.final_snapshot();
    let (x_min, dx) = (godunov.x_min, godunov.dx());
    let pde_average = |a: f64, b: f64| {
        // exact average of the Godunov step function over [a, b]
        let (ja, jb) = (
            ((a - x_min) / dx).floor() as isize,
            ((b - x_min) / dx).floor() as isize,
        );
        let mut mass = 0.0;
        for j in ja.max(0)..=jb.min(godunov.cells as isize - 1) {
            let lo = (x_min + j as f64 * dx).max(a);
            let hi = (x_min + (j + 1) as f64 * dx).min(b);
            if hi > lo {
                mass += pde_final[j as usize] * (hi - lo);
            }
        }
        mass / (b - a)
    };
    let final_rows =
        last.edges()
            .windows(2)
            .zip(last.values())
            .enumerate()
            .map(|(cell, (w, &density))| FinalDensityRow {
                cell,
                x_left: w[0],
                x_right: w[1],
                density,
                density_godunov: pde_average(w[0], w[1]),
            });
    write_csv(&out.join("density_final.csv"), final_rows)?;

    let centers = godunov.centers();
    let mut pde_rows = Vec::with_capacity(godunov.snapshots() * godunov.cells);
    for (snapshot, &time) in godunov.times.iter().enumerate() {
        for (cell, (&x_center, &density)) in
            centers.iter().zip(godunov.snapshot(snapshot)).enumerate()
        {
            pde_rows.push(GodunovRow {
                snapshot,
                time,
                cell,
                x_center,
                density,
            });
        }
    }
    write_csv(&out.join("godunov_spacetime.csv"), pde_rows)?;

    let mut test_rows = Vec::new();
    for (step, (time, row)) in eval.test_paths.rows().enumerate() {
        for (test_id, &position) in row.iter().enumerate() {
            test_rows.push(TestTrajectoryRow {
                step,
                time,
                test_id,
                vehicle: ds.test_indices[test_id],
                position,
            });
        }
    }
    write_csv(&out.join("test_trajectories.csv"), test_rows)?;
    let l1_rows = eval
        .comparison
        .times
        .iter()
        .zip(&eval.comparison.l1)
        .map(|(&time, &l1)| L1Row { time, l1 });
    write_csv(&out.join("godunov_l1.csv"), l1_rows)?;
    write_json(&out.join("report.json"), &eval.report)?;
    Ok(eval.report)
}

pub fn cmd_convergence(config: &RunConfig, out: &Path) -> Result<Vec<ConvergenceRow>> {
    let pipeline = config.pipeline()?;
    let rows = convergence_study(&pipeline, &config.convergence.vehicles, &Greenshields)?;
    prepare_out(out)?;
    write_csv(&out.join("convergence.csv"), &rows)?;
    Ok(rows)
}

/// Test MSE in the configured reporting units, with its unit label.
pub fn preferred_mse(config: &RunConfig, report: &EvalReport) -> (f64, &'static str) {
    match config.units.report {
        MetricUnits::Nondimensional => (report.mse_test, "normalised length^2"),
        MetricUnits::Physical => (report.mse_test_physical, "km^2"),
    }
}
