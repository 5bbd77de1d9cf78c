//! Synthetic datasets: discretise a ground-truth initial density into vehicles,
//! evolve the full fleet, and pick train and test probes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fleet::{FleetConfig, ProbeObservations};
use crate::microsim::{ftl_full_final, ftl_full_simulate, stable_fleet_steps, TrajectoryField};
use crate::scalar::Scalar;
use crate::units::ScaleSystem;
use crate::velocity::VelocityMap;

/// Quadrature nodes per unit length for the cumulative-mass table.
pub const CUMULATIVE_NODES_PER_UNIT: usize = 100_000;

/// Nondimensional initial density `ρ̄` on a bounded support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DensityProfile<T> {
    /// `mean + amplitude · sin(2π waves x)` on `[0, 1]`.
    Sinusoidal { mean: T, amplitude: T, waves: T },
    /// `left` on `[0, jump)`, `right` on `[jump, 1]`.
    Shock { left: T, right: T, jump: T },
    /// Linear interpolation of `values` at increasing `knots`, zero outside.
    PiecewiseLinear { knots: Vec<T>, values: Vec<T> },
}

impl<T: Scalar> DensityProfile<T> {
    pub fn support(&self) -> (T, T) {
        match self {
            Self::Sinusoidal { .. } | Self::Shock { .. } => (T::zero(), T::one()),
            Self::PiecewiseLinear { knots, .. } => (knots[0], knots[knots.len() - 1]),
        }
    }

    /// Interior points where the density is discontinuous or has a kink.
    pub fn breakpoints(&self) -> Vec<T> {
        match self {
            Self::Sinusoidal { .. } => Vec::new(),
            Self::Shock { jump, .. } => vec![*jump],
            Self::PiecewiseLinear { knots, .. } => knots[1..knots.len() - 1].to_vec(),
        }
    }

    /// Right limit `ρ̄(x⁺)`; zero outside the support.
    pub fn density(&self, x: T) -> T {
        let (a, b) = self.support();
        if x < a || x >= b {
            return T::zero();
        }
        self.inside(x, false)
    }

    /// Left limit `ρ̄(x⁻)`; zero outside the support.
    pub fn density_left(&self, x: T) -> T {
        let (a, b) = self.support();
        if x <= a || x > b {
            return T::zero();
        }
        self.inside(x, true)
    }

    fn inside(&self, x: T, left_limit: bool) -> T {
        match self {
            Self::Sinusoidal {
                mean,
                amplitude,
                waves,
            } => *mean + *amplitude * (T::two() * T::PI() * *waves * x).sin(),
            Self::Shock { left, right, jump } => {
                let behind = if left_limit { x <= *jump } else { x < *jump };
                if behind {
                    *left
                } else {
                    *right
                }
            }
            Self::PiecewiseLinear { knots, values } => {
                let j = knots.partition_point(|&k| k <= x).clamp(1, knots.len() - 1);
                let (x0, x1) = (knots[j - 1], knots[j]);
                values[j - 1] + (values[j] - values[j - 1]) * (x - x0) / (x1 - x0)
            }
        }
    }

    /// Exact `∫_{-∞}^{x} ρ̄`.
    pub fn cumulative(&self, x: T) -> T {
        let (a, b) = self.support();
        let x = x.max(a).min(b);
        match self {
            Self::Sinusoidal {
                mean,
                amplitude,
                waves,
            } => {
                let omega = T::two() * T::PI() * *waves;
                *mean * x + *amplitude * (T::one() - (omega * x).cos()) / omega
            }
            Self::Shock { left, right, jump } => {
                if x <= *jump {
                    *left * x
                } else {
                    *left * *jump + *right * (x - *jump)
                }
            }
            Self::PiecewiseLinear { knots, values } => {
                let mut acc = T::zero();
                for j in 1..knots.len() {
                    let (x0, x1) = (knots[j - 1], knots[j]);
                    if x <= x0 {
                        break;
                    }
                    let hi = x.min(x1);
                    let v_hi = values[j - 1] + (values[j] - values[j - 1]) * (hi - x0) / (x1 - x0);
                    acc = acc + (hi - x0) * (values[j - 1] + v_hi) * T::half();
                }
                acc
            }
        }
    }

    /// Mass on `[a, b]`.
    pub fn mass_between(&self, a: T, b: T) -> T {
        self.cumulative(b) - self.cumulative(a)
    }

    pub fn mass(&self) -> T {
        let (a, b) = self.support();
        self.mass_between(a, b)
    }

    /// Checks the profile lies in `(0, 1]` on its support.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        let in_range = |r: T| r > T::zero() && r <= T::one();
        match self {
            Self::Sinusoidal {
                mean,
                amplitude,
                waves,
            } => {
                if !(in_range(*mean - amplitude.abs()) && in_range(*mean + amplitude.abs())) {
                    return bad(format!(
                        "sinusoidal profile {mean} ± {amplitude} leaves (0, 1]"
                    ));
                }
                if !(*waves > T::zero()) {
                    return bad(format!("wave count must be positive, got {waves}"));
                }
            }
            Self::Shock { left, right, jump } => {
                if !(in_range(*left) && in_range(*right)) {
                    return bad(format!("shock states {left}, {right} leave (0, 1]"));
                }
                if !(*jump > T::zero() && *jump < T::one()) {
                    return bad(format!("jump position {jump} outside (0, 1)"));
                }
            }
            Self::PiecewiseLinear { knots, values } => {
                if knots.len() < 2 || knots.len() != values.len() {
                    return bad(
                        "piecewise profile needs matching knots and values (at least two)".into(),
                    );
                }
                if knots.windows(2).any(|w| !(w[0] < w[1])) {
                    return bad("profile knots must be strictly increasing".into());
                }
                if values.iter().any(|&v| !in_range(v)) {
                    return bad("profile values must lie in (0, 1]".into());
                }
            }
        }
        Ok(())
    }

    /// Piecewise-linear cumulative table on a uniform grid refined at breakpoints.
    pub fn cumulative_table(&self, nodes_per_unit: usize) -> CumulativeTable<T> {
        CumulativeTable::build(self, nodes_per_unit)
    }
}

/// Composite-trapezoid cumulative mass of a profile.
///
/// Within a quadrature interval the density is taken linear between its one-sided
/// end values, so the cumulative is an increasing piecewise quadratic.
#[derive(Debug, Clone)]
pub struct CumulativeTable<T> {
    nodes: Vec<T>,
    cumulative: Vec<T>,
    right_values: Vec<T>,
    left_values: Vec<T>,
}

impl<T: Scalar> CumulativeTable<T> {
    pub fn build(profile: &DensityProfile<T>, nodes_per_unit: usize) -> Self {
        let (a, b) = profile.support();
        let intervals = ((b - a) * T::from_count(nodes_per_unit))
            .ceil()
            .to_usize()
            .unwrap_or(1)
            .max(1);
        let h = (b - a) / T::from_count(intervals);
        let mut nodes: Vec<T> = (0..=intervals).map(|j| a + T::from_count(j) * h).collect();
        nodes[intervals] = b;
        nodes.extend(profile.breakpoints());
        nodes.sort_by(|p, q| p.partial_cmp(q).expect("finite nodes"));
        nodes.dedup();

        let m = nodes.len() - 1;
        let mut right_values = Vec::with_capacity(m);
        let mut left_values = Vec::with_capacity(m);
        let mut cumulative = Vec::with_capacity(m + 1);
        cumulative.push(T::zero());
        let mut acc = T::zero();
        for j in 0..m {
            let fa = profile.density(nodes[j]);
            let fb = profile.density_left(nodes[j + 1]);
            acc = acc + (nodes[j + 1] - nodes[j]) * (fa + fb) * T::half();
            right_values.push(fa);
            left_values.push(fb);
            cumulative.push(acc);
        }
        Self {
            nodes,
            cumulative,
            right_values,
            left_values,
        }
    }

    pub fn total(&self) -> T {
        self.cumulative[self.cumulative.len() - 1]
    }

    fn eval_in(&self, j: usize, x: T) -> T {
        let h = self.nodes[j + 1] - self.nodes[j];
        let s = x - self.nodes[j];
        let (fa, fb) = (self.right_values[j], self.left_values[j]);
        self.cumulative[j] + s * fa + (fb - fa) * s * s / (T::two() * h)
    }

    /// Cumulative mass up to `x`.
    pub fn eval(&self, x: T) -> T {
        let last = self.nodes.len() - 1;
        if x <= self.nodes[0] {
            return T::zero();
        }
        if x >= self.nodes[last] {
            return self.total();
        }
        let j = self.nodes.partition_point(|&p| p <= x) - 1;
        self.eval_in(j, x)
    }

    /// `sup { x : F(x) <= mass }` by bisection, to `tol` in mass.
    pub fn inverse(&self, mass: T, tol: T) -> T {
        let last = self.nodes.len() - 1;
        if mass <= T::zero() {
            return self.nodes[0];
        }
        if mass >= self.total() {
            return self.nodes[last];
        }
        // interval whose cumulative range brackets the target
        let j = (self.cumulative.partition_point(|&c| c <= mass) - 1).min(last - 1);
        let (mut lo, mut hi) = (self.nodes[j], self.nodes[j + 1]);
        for _ in 0..200 {
            let mid = (lo + hi) * T::half();
            let f = self.eval_in(j, mid);
            if (f - mass).abs() <= tol || !(mid > lo && mid < hi) {
                return mid;
            }
            if f <= mass {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        (lo + hi) * T::half()
    }
}

/// `N + 1` ordered positions, consecutive pairs enclosing mass `L / N` of `ρ̄`.
pub fn discretize_positions<T: Scalar>(
    profile: &DensityProfile<T>,
    cfg: &FleetConfig<T>,
) -> Result<Vec<T>> {
    profile.validate()?;
    let table = profile.cumulative_table(CUMULATIVE_NODES_PER_UNIT);
    let available = table.total();
    let required = cfg.total_length;
    if available < required * (T::one() - T::lit(1e-9)) {
        return Err(Error::InsufficientMass {
            available: available.as_f64(),
            required: required.as_f64(),
        });
    }
    let per_car = cfg.car_length();
    let tol = T::lit(1e-12).max(T::epsilon() * T::lit(8.0)) * required.max(T::one());
    let positions: Vec<T> = (0..=cfg.vehicles)
        .map(|i| {
            if i == 0 {
                profile.support().0
            } else {
                table.inverse((T::from_count(i) * per_car).min(available), tol)
            }
        })
        .collect();
    if let Some(i) = positions.windows(2).position(|w| !(w[0] < w[1])) {
        return Err(Error::Config(format!(
            "discretised positions not strictly increasing at vehicle {i}; refine the profile"
        )));
    }
    Ok(positions)
}

/// Ground-truth scenario: initial density, fleet size and horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario<T> {
    pub profile: DensityProfile<T>,
    pub vehicles: usize,
    pub horizon: T,
    pub scales: ScaleSystem,
}

impl<T: Scalar> Scenario<T> {
    /// Oscillating congestion: `0.6 + 0.3 sin(2π k x)` with `k = 3`.
    pub fn waves(vehicles: usize, horizon: T) -> Self {
        Self {
            profile: DensityProfile::Sinusoidal {
                mean: T::lit(0.6),
                amplitude: T::lit(0.3),
                waves: T::lit(3.0),
            },
            vehicles,
            horizon,
            scales: ScaleSystem::default(),
        }
    }

    /// Low-to-high density jump `0.4 → 0.9` at `x = 0.5`.
    pub fn shock(vehicles: usize, horizon: T) -> Self {
        Self {
            profile: DensityProfile::Shock {
                left: T::lit(0.4),
                right: T::lit(0.9),
                jump: T::half(),
            },
            vehicles,
            horizon,
            scales: ScaleSystem::default(),
        }
    }

    /// Fleet length `L`: the whole profile mass is shared by the `N` cars.
    pub fn total_length(&self) -> T {
        self.profile.mass()
    }

    pub fn fleet(&self, followers: usize) -> Result<FleetConfig<T>> {
        FleetConfig::new(self.vehicles, self.total_length(), self.horizon, followers)
    }
}

/// Train probes `{0, s, 2s, …}` plus the leader `N`.
pub fn train_indices(vehicles: usize, stride: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..vehicles).step_by(stride.max(1)).collect();
    idx.push(vehicles);
    idx
}

/// One test vehicle per fourth inter-probe segment, at the segment's middle index.
pub fn test_indices(train: &[usize]) -> Vec<usize> {
    train
        .windows(2)
        .enumerate()
        .filter(|(j, w)| j % 4 == 0 && w[1] - w[0] >= 2)
        .map(|(_, w)| w[0] + (w[1] - w[0]) / 2)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerateOptions {
    /// Euler steps of the ground-truth simulation; `None` picks [`stable_fleet_steps`].
    pub fleet_steps: Option<usize>,
    /// Probe stride `s`; 10 gives the 10% penetration rate.
    pub stride: usize,
    pub keep_trajectories: bool,
}

impl Default for GenerateOptions {
    fn default() -> Self {
        Self {
            fleet_steps: None,
            stride: 10,
            keep_trajectories: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset<T> {
    pub fleet: FleetConfig<T>,
    pub stride: usize,
    pub fleet_steps: usize,
    pub train_indices: Vec<usize>,
    pub train_obs: ProbeObservations<T>,
    pub test_indices: Vec<usize>,
    pub test_init: Vec<T>,
    pub test_final: Vec<T>,
    /// Vehicles per training segment; held out from the learner.
    pub ground_truth_alpha: Vec<T>,
    pub full_trajectories: Option<TrajectoryField<T>>,
}

/// Discretises the scenario, evolves all `N + 1` vehicles and samples probes.
pub fn generate_dataset<T: Scalar, V: VelocityMap<T> + ?Sized>(
    scenario: &Scenario<T>,
    v: &V,
    options: &GenerateOptions,
) -> Result<Dataset<T>> {
    if options.stride < 2 {
        return Err(Error::Config(format!(
            "probe stride must be at least 2, got {}",
            options.stride
        )));
    }
    let train = train_indices(scenario.vehicles, options.stride);
    let test = test_indices(&train);
    let fleet = scenario.fleet(train.len() - 1)?;
    let initial = discretize_positions(&scenario.profile, &fleet)?;
    let fleet_steps = options
        .fleet_steps
        .unwrap_or_else(|| stable_fleet_steps(&fleet, v.v_max()));

    let (terminal, full_trajectories) = if options.keep_trajectories {
        let traj = ftl_full_simulate(&initial, &fleet, v, fleet_steps)?;
        (traj.final_row().to_vec(), Some(traj))
    } else {
        (ftl_full_final(&initial, &fleet, v, fleet_steps)?, None)
    };

    let pick = |xs: &[T], idx: &[usize]| idx.iter().map(|&i| xs[i]).collect::<Vec<T>>();
    let train_obs = ProbeObservations::new(
        pick(&initial, &train),
        pick(&terminal, &train),
        v.v_max(),
        fleet.horizon,
    )?;
    let ground_truth_alpha = train
        .windows(2)
        .map(|w| T::from_count(w[1] - w[0]))
        .collect();
    Ok(Dataset {
        fleet,
        stride: options.stride,
        fleet_steps,
        test_init: pick(&initial, &test),
        test_final: pick(&terminal, &test),
        train_indices: train,
        train_obs,
        test_indices: test,
        ground_truth_alpha,
        full_trajectories,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaAssumptionReport {
    pub max_alpha: f64,
    /// `max αᵢ · ln N / N`.
    pub ratio: f64,
    pub constant: f64,
    pub pass: bool,
}

/// Checks the growth condition `max αᵢ <= C N / ln N` on segment counts.
pub fn validate_alpha_assumption<T: Scalar>(
    alpha: &[T],
    vehicles: usize,
    constant: f64,
) -> AlphaAssumptionReport {
    let max_alpha = alpha
        .iter()
        .copied()
        .fold(T::neg_infinity(), T::max)
        .as_f64();
    let n = vehicles as f64;
    let ratio = max_alpha * n.ln() / n;
    AlphaAssumptionReport {
        max_alpha,
        ratio,
        constant,
        pass: ratio <= constant,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::velocity::Greenshields;
    use approx::assert_relative_eq;

    #[test]
    fn constant_density_gives_uniform_spacing() {
        let profile = DensityProfile::PiecewiseLinear {
            knots: vec![0.0, 1.0],
            values: vec![1.0, 1.0],
        };
        let cfg = FleetConfig::new(100, 1.0, 0.1, 10).unwrap();
        let x = discretize_positions(&profile, &cfg).unwrap();
        for (i, xi) in x.iter().enumerate() {
            assert_relative_eq!(*xi, i as f64 / 100.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn shock_profile_spacing() {
        let profile = DensityProfile::Shock {
            left: 0.4,
            right: 0.9,
            jump: 0.5,
        };
        let n = 1000;
        let cfg = FleetConfig::new(n, profile.mass(), 0.1, 100).unwrap();
        let x = discretize_positions(&profile, &cfg).unwrap();
        let l = cfg.car_length();
        for w in x.windows(2) {
            let gap = w[1] - w[0];
            if w[1] <= 0.5 {
                assert_relative_eq!(gap, l / 0.4, max_relative = 1e-8);
            } else if w[0] >= 0.5 {
                assert_relative_eq!(gap, l / 0.9, max_relative = 1e-8);
            }
        }
        assert_relative_eq!(x[n], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn insufficient_mass_is_rejected() {
        let profile = DensityProfile::Shock {
            left: 0.4,
            right: 0.9,
            jump: 0.5,
        };
        let cfg = FleetConfig::new(100, 1.0, 0.1, 10).unwrap();
        assert!(matches!(
            discretize_positions(&profile, &cfg),
            Err(Error::InsufficientMass { .. })
        ));
    }

    #[test]
    fn table_matches_exact_cumulative() {
        let profile = DensityProfile::Sinusoidal {
            mean: 0.6,
            amplitude: 0.3,
            waves: 3.0,
        };
        let table = profile.cumulative_table(CUMULATIVE_NODES_PER_UNIT);
        for j in 0..=50 {
            let x = j as f64 / 50.0 - 1e-7 * j as f64;
            assert!((table.eval(x) - profile.cumulative(x)).abs() < 1e-10);
        }
        assert_relative_eq!(profile.mass(), 0.6, epsilon = 1e-14);
    }

    #[test]
    fn probe_selection() {
        let train = train_indices(2000, 10);
        assert_eq!(train.len(), 201);
        assert_eq!(*train.last().unwrap(), 2000);
        let test = test_indices(&train);
        assert_eq!(test.len(), 50);
        assert_eq!(&test[..2], &[5, 45]);

        // uneven tail segment
        let train = train_indices(25, 10);
        assert_eq!(train, vec![0, 10, 20, 25]);
    }

    #[test]
    fn profile_validation() {
        assert!(DensityProfile::Sinusoidal {
            mean: 0.6,
            amplitude: 0.5,
            waves: 3.0
        }
        .validate()
        .is_err());
        assert!(DensityProfile::Shock {
            left: 0.0,
            right: 0.9,
            jump: 0.5
        }
        .validate()
        .is_err());
        assert!(DensityProfile::<f64>::PiecewiseLinear {
            knots: vec![0.0],
            values: vec![0.5]
        }
        .validate()
        .is_err());
        assert!(Scenario::<f64>::waves(10, 0.1).profile.validate().is_ok());
    }

    #[test]
    fn small_dataset_invariants() {
        let scenario = Scenario::waves(200, 0.05);
        let data = generate_dataset(
            &scenario,
            &Greenshields,
            &GenerateOptions {
                keep_trajectories: true,
                ..GenerateOptions::default()
            },
        )
        .unwrap();
        assert_eq!(data.train_obs.followers(), 20);
        assert_eq!(data.test_indices.len(), 5);
        let sum: f64 = data.ground_truth_alpha.iter().sum();
        assert_eq!(sum, 200.0);
        let full = data.full_trajectories.as_ref().unwrap();
        for (j, &i) in data.train_indices.iter().enumerate() {
            assert_eq!(data.train_obs.terminal()[j], full.final_row()[i]);
        }
        for (j, &i) in data.test_indices.iter().enumerate() {
            assert_eq!(data.test_final[j], full.final_row()[i]);
            assert!(!data.train_indices.contains(&i));
        }
    }

    #[test]
    fn alpha_assumption_examples() {
        let r = validate_alpha_assumption(&vec![10.0; 200], 2000, 1.0);
        assert_relative_eq!(r.ratio, 10.0 * 2000f64.ln() / 2000.0);
        assert!((r.ratio - 0.038).abs() < 5e-4 && r.pass);

        let mut alpha = vec![1.0; 51];
        alpha[3] = 50.0;
        let r = validate_alpha_assumption(&alpha, 100, 1.0);
        assert!((r.ratio - 2.30).abs() < 5e-3 && !r.pass);

        for n in [2, 10, 1000] {
            let r = validate_alpha_assumption(&vec![1.0; n], n, 1.0);
            assert_eq!(r.max_alpha, 1.0);
            assert!(r.pass);
        }
    }
}
