//! Follow-the-Leader simulation: the full fleet (ground truth) and the
//! count-parametrised probe system, both integrated with explicit Euler.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fleet::{AlphaVector, FleetConfig, ProbeObservations};
use crate::scalar::Scalar;
use crate::velocity::VelocityMap;

/// Relative tolerance below the jam spacing at which a gap counts as collapsed.
pub const GAP_COLLAPSE_TOL: f64 = 1e-6;

/// Positions of a column of vehicles at every Euler time point.
///
/// Row `k` holds all positions at `times[k]`; the last column is the leader.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryField<T> {
    times: Vec<T>,
    positions: Vec<T>,
    width: usize,
}

impl<T: Scalar> TrajectoryField<T> {
    pub fn from_rows(times: Vec<T>, positions: Vec<T>, width: usize) -> Result<Self> {
        if width == 0 || positions.len() != times.len() * width {
            return Err(Error::LengthMismatch {
                expected: times.len() * width,
                got: positions.len(),
            });
        }
        Ok(Self {
            times,
            positions,
            width,
        })
    }

    /// Number of Euler steps `K` (there are `K + 1` rows).
    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    /// Vehicles per row, leader included.
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn times(&self) -> &[T] {
        &self.times
    }

    pub fn time(&self, step: usize) -> T {
        self.times[step]
    }

    pub fn row(&self, step: usize) -> &[T] {
        &self.positions[step * self.width..(step + 1) * self.width]
    }

    pub fn initial_row(&self) -> &[T] {
        self.row(0)
    }

    pub fn final_row(&self) -> &[T] {
        self.row(self.steps())
    }

    pub fn horizon(&self) -> T {
        self.times[self.steps()]
    }

    pub fn rows(&self) -> impl Iterator<Item = (T, &[T])> + '_ {
        self.times
            .iter()
            .copied()
            .zip(self.positions.chunks_exact(self.width))
    }

    /// Restricts every row to the given vehicle indices.
    pub fn select(&self, indices: &[usize]) -> Self {
        let positions = self
            .positions
            .chunks_exact(self.width)
            .flat_map(|row| indices.iter().map(move |&i| row[i]))
            .collect();
        Self {
            times: self.times.clone(),
            positions,
            width: indices.len(),
        }
    }
}

/// The probe dynamics in matrix form `ẋ = V(W x + b(t))`.
///
/// `W` is upper bidiagonal with `W[i][i] = -N/(αᵢL)` and `W[i][i+1] = N/(αᵢL)` for
/// `i = 0..n-2`; the bias has the single entry `b[n-1](t) = N/(α_{n-1}L) (v_max t + x̄ₙ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParametrizedSystem<T> {
    coupling: Vec<T>,
    leader_start: T,
    v_max: T,
}

impl<T: Scalar> ParametrizedSystem<T> {
    pub fn new(alpha: &[T], cfg: &FleetConfig<T>, leader_start: T, v_max: T) -> Result<Self> {
        let scale = T::from_count(cfg.vehicles) / cfg.total_length;
        let coupling = alpha
            .iter()
            .map(|&a| {
                if a > T::zero() && a.is_finite() {
                    Ok(scale / a)
                } else {
                    Err(Error::Domain {
                        what: "segment count",
                        value: a.as_f64(),
                    })
                }
            })
            .collect::<Result<Vec<_>>>()?;
        if coupling.is_empty() {
            return Err(Error::InvalidObservations("no probe followers".into()));
        }
        Ok(Self {
            coupling,
            leader_start,
            v_max,
        })
    }

    pub fn followers(&self) -> usize {
        self.coupling.len()
    }

    /// `N / (αᵢ L)`, the reciprocal of the jam length of segment `i`.
    pub fn coupling(&self) -> &[T] {
        &self.coupling
    }

    pub fn diagonal(&self, i: usize) -> T {
        -self.coupling[i]
    }

    pub fn superdiagonal(&self, i: usize) -> T {
        if i + 1 < self.followers() {
            self.coupling[i]
        } else {
            T::zero()
        }
    }

    pub fn leader_position(&self, t: T) -> T {
        self.leader_start + self.v_max * t
    }

    /// Last bias entry `b[n-1](t)`; all other entries vanish.
    pub fn bias(&self, t: T) -> T {
        self.coupling[self.followers() - 1] * self.leader_position(t)
    }

    /// Dense `W` for inspection and tests.
    pub fn weight_matrix(&self) -> Vec<Vec<T>> {
        let n = self.followers();
        (0..n)
            .map(|i| {
                let mut row = vec![T::zero(); n];
                row[i] = self.diagonal(i);
                if i + 1 < n {
                    row[i + 1] = self.superdiagonal(i);
                }
                row
            })
            .collect()
    }

    /// Gap quotients `W x + b(t)` for the follower positions `x`, evaluated as
    /// `N (x_{i+1} - x_i) / (αᵢ L)` with the analytic leader in the last row.
    pub fn gap_quotients_into(&self, followers: &[T], t: T, out: &mut [T]) {
        let n = self.followers();
        for i in 0..n - 1 {
            out[i] = self.coupling[i] * (followers[i + 1] - followers[i]);
        }
        out[n - 1] = self.coupling[n - 1] * (self.leader_position(t) - followers[n - 1]);
    }

    pub fn gap_quotients(&self, followers: &[T], t: T) -> Vec<T> {
        let mut out = vec![T::zero(); self.followers()];
        self.gap_quotients_into(followers, t, &mut out);
        out
    }
}

/// Explicit Euler unroll of a parametrised system. Returns all rows when `record` is set,
/// otherwise only the initial and final rows.
fn unroll<T: Scalar, V: VelocityMap<T> + ?Sized>(
    system: &ParametrizedSystem<T>,
    start: &[T],
    horizon: T,
    steps: usize,
    v: &V,
    record: bool,
) -> Result<TrajectoryField<T>> {
    if steps == 0 {
        return Err(Error::Config("step count K must be at least 1".into()));
    }
    let n = system.followers();
    if start.len() != n + 1 {
        return Err(Error::LengthMismatch {
            expected: n + 1,
            got: start.len(),
        });
    }
    let dt = horizon / T::from_count(steps);
    let floor_factor = T::one() - T::lit(GAP_COLLAPSE_TOL);
    let check = |row: &[T], step: usize| -> Result<()> {
        for i in 0..n {
            let gap = row[i + 1] - row[i];
            let floor = floor_factor / system.coupling[i];
            if !(gap >= floor) {
                return Err(Error::GapCollapse {
                    step,
                    segment: i,
                    gap: gap.as_f64(),
                    floor: floor.as_f64(),
                });
            }
        }
        Ok(())
    };

    let mut current = start.to_vec();
    current[n] = system.leader_position(T::zero());
    check(&current, 0)?;

    let rows = if record { steps + 1 } else { 2 };
    let mut times = Vec::with_capacity(rows);
    let mut positions = Vec::with_capacity(rows * (n + 1));
    times.push(T::zero());
    positions.extend_from_slice(&current);

    let mut z = vec![T::zero(); n];
    for k in 0..steps {
        let t = T::from_count(k) * dt;
        system.gap_quotients_into(&current[..n], t, &mut z);
        for i in 0..n {
            current[i] = current[i] + v.spacing_speed(z[i]) * dt;
        }
        let t_next = T::from_count(k + 1) * dt;
        current[n] = system.leader_position(t_next);
        check(&current, k + 1)?;
        if record || k + 1 == steps {
            times.push(t_next);
            positions.extend_from_slice(&current);
        }
    }
    TrajectoryField::from_rows(times, positions, n + 1)
}

/// Step count that keeps `Δt <= l / (2 v_max)` for the full fleet, and at least 1000.
pub fn stable_fleet_steps<T: Scalar>(cfg: &FleetConfig<T>, v_max: T) -> usize {
    let max_dt = cfg.car_length() / (T::two() * v_max);
    let needed = (cfg.horizon / max_dt)
        .ceil()
        .to_usize()
        .unwrap_or(usize::MAX);
    needed.max(1000)
}

fn full_fleet_system<T: Scalar, V: VelocityMap<T> + ?Sized>(
    initial: &[T],
    cfg: &FleetConfig<T>,
    v: &V,
) -> Result<ParametrizedSystem<T>> {
    if initial.len() != cfg.vehicles + 1 {
        return Err(Error::LengthMismatch {
            expected: cfg.vehicles + 1,
            got: initial.len(),
        });
    }
    let ones = vec![T::one(); cfg.vehicles];
    ParametrizedSystem::new(&ones, cfg, initial[cfg.vehicles], v.v_max())
}

/// Full-fleet Follow-the-Leader trajectories of all `N + 1` vehicles.
pub fn ftl_full_simulate<T: Scalar, V: VelocityMap<T> + ?Sized>(
    initial: &[T],
    cfg: &FleetConfig<T>,
    v: &V,
    steps: usize,
) -> Result<TrajectoryField<T>> {
    let system = full_fleet_system(initial, cfg, v)?;
    unroll(&system, initial, cfg.horizon, steps, v, true)
}

/// Same dynamics as [`ftl_full_simulate`], keeping only the final positions.
pub fn ftl_full_final<T: Scalar, V: VelocityMap<T> + ?Sized>(
    initial: &[T],
    cfg: &FleetConfig<T>,
    v: &V,
    steps: usize,
) -> Result<Vec<T>> {
    let system = full_fleet_system(initial, cfg, v)?;
    Ok(unroll(&system, initial, cfg.horizon, steps, v, false)?
        .final_row()
        .to_vec())
}

/// Probe trajectories for an arbitrary positive count vector (no feasibility check).
///
/// Used by the finite-difference oracle, which perturbs counts off the constraint set.
pub fn simulate_probes<T: Scalar, V: VelocityMap<T> + ?Sized>(
    alpha: &[T],
    obs: &ProbeObservations<T>,
    cfg: &FleetConfig<T>,
    v: &V,
    steps: usize,
) -> Result<TrajectoryField<T>> {
    if alpha.len() != obs.followers() {
        return Err(Error::LengthMismatch {
            expected: obs.followers(),
            got: alpha.len(),
        });
    }
    let system = ParametrizedSystem::new(alpha, cfg, obs.leader_start(), v.v_max())?;
    unroll(&system, obs.initial(), cfg.horizon, steps, v, true)
}

/// Unrolled Euler forward pass of the probe system for a feasible count vector.
pub fn probe_forward<T: Scalar, V: VelocityMap<T> + ?Sized>(
    alpha: &AlphaVector<T>,
    obs: &ProbeObservations<T>,
    cfg: &FleetConfig<T>,
    v: &V,
    steps: usize,
) -> Result<TrajectoryField<T>> {
    let violation = alpha.violation();
    if violation > T::lit(1e-9).max(T::epsilon() * T::lit(64.0)) {
        return Err(Error::Infeasible(format!(
            "count vector violates its constraints by {violation}"
        )));
    }
    simulate_probes(alpha.values(), obs, cfg, v, steps)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepBounds {
    pub step: usize,
    pub time: f64,
    /// `min_i (gap_i - αᵢL/(NM))`; negative means the lower bound is violated.
    pub lower_slack: f64,
    /// `min_i (upper - gap_i)`.
    pub upper_slack: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaximumPrincipleReport {
    /// Maximum initial discrete density `M`.
    pub max_initial_density: f64,
    pub margin: f64,
    pub steps: Vec<StepBounds>,
    pub violations: usize,
    /// Smallest slack over all steps and both bounds.
    pub worst_slack: f64,
}

impl MaximumPrincipleReport {
    pub fn holds(&self) -> bool {
        self.violations == 0
    }
}

/// Checks the two-sided gap bounds of the discrete maximum principle at every stored step.
///
/// A step is a violation when either slack is below `-margin`; Euler steps may cross the
/// continuous-time bound by `O(Δt)`.
pub fn check_maximum_principle<T: Scalar, V: VelocityMap<T> + ?Sized>(
    traj: &TrajectoryField<T>,
    alpha: &[T],
    cfg: &FleetConfig<T>,
    v: &V,
    margin: T,
) -> Result<MaximumPrincipleReport> {
    let n = traj.width() - 1;
    if alpha.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: alpha.len(),
        });
    }
    let jam: Vec<T> = alpha.iter().map(|&a| a * cfg.car_length()).collect();
    let first = traj.initial_row();
    let max_density = (0..n)
        .map(|i| jam[i] / (first[i + 1] - first[i]))
        .fold(T::zero(), T::max);
    let spread = first[n] - first[0];
    let speed_gap = v.v_max() - v.speed(max_density);

    let mut steps = Vec::with_capacity(traj.steps() + 1);
    let mut violations = 0;
    let mut worst = T::infinity();
    for (k, (t, row)) in traj.rows().enumerate() {
        let upper = spread + speed_gap * t;
        let mut lower_slack = T::infinity();
        let mut upper_slack = T::infinity();
        for i in 0..n {
            let gap = row[i + 1] - row[i];
            lower_slack = lower_slack.min(gap - jam[i] / max_density);
            upper_slack = upper_slack.min(upper - gap);
        }
        let holds = lower_slack >= -margin && upper_slack >= -margin;
        if !holds {
            violations += 1;
        }
        worst = worst.min(lower_slack).min(upper_slack);
        steps.push(StepBounds {
            step: k,
            time: t.as_f64(),
            lower_slack: lower_slack.as_f64(),
            upper_slack: upper_slack.as_f64(),
            holds,
        });
    }
    Ok(MaximumPrincipleReport {
        max_initial_density: max_density.as_f64(),
        margin: margin.as_f64(),
        steps,
        violations,
        worst_slack: worst.as_f64(),
    })
}
