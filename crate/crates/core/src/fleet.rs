//! Fleet parameters, probe observations and the per-segment count vector.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Size and horizon of the fleet being reconstructed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FleetConfig<T> {
    /// Total vehicle count `N` (the fleet has `N + 1` vehicles including the leader).
    pub vehicles: usize,
    /// Bumper-to-bumper length `L` of the whole fleet, nondimensional.
    pub total_length: T,
    /// Time horizon `T`, nondimensional.
    pub horizon: T,
    /// Number of probe followers `n` (probes are `n` followers plus the leader).
    pub followers: usize,
}

impl<T: Scalar> FleetConfig<T> {
    pub fn new(vehicles: usize, total_length: T, horizon: T, followers: usize) -> Result<Self> {
        let cfg = Self {
            vehicles,
            total_length,
            horizon,
            followers,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.vehicles == 0 {
            return Err(Error::Config("vehicle count N must be positive".into()));
        }
        if self.followers == 0 || self.followers > self.vehicles {
            return Err(Error::Config(format!(
                "probe follower count n = {} must satisfy 1 <= n <= N = {}",
                self.followers, self.vehicles
            )));
        }
        if !(self.total_length > T::zero() && self.total_length.is_finite()) {
            return Err(Error::Config(format!(
                "fleet length L must be positive, got {}",
                self.total_length
            )));
        }
        if !(self.horizon >= T::zero() && self.horizon.is_finite()) {
            return Err(Error::Config(format!(
                "horizon T must be non-negative, got {}",
                self.horizon
            )));
        }
        Ok(())
    }

    /// Single-car length `l = L / N`.
    pub fn car_length(&self) -> T {
        self.total_length / T::from_count(self.vehicles)
    }

    /// Same fleet observed through a different number of probe followers.
    pub fn with_followers(&self, followers: usize) -> Result<Self> {
        Self::new(self.vehicles, self.total_length, self.horizon, followers)
    }
}

/// Initial and final positions of the `n + 1` probes; index `n` is the leader.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeObservations<T> {
    initial: Vec<T>,
    terminal: Vec<T>,
}

impl<T: Scalar> ProbeObservations<T> {
    /// Validates strict ordering at both times and that the leader travelled `v_max * horizon`.
    pub fn new(initial: Vec<T>, terminal: Vec<T>, v_max: T, horizon: T) -> Result<Self> {
        if initial.len() != terminal.len() {
            return Err(Error::LengthMismatch {
                expected: initial.len(),
                got: terminal.len(),
            });
        }
        if initial.len() < 2 {
            return Err(Error::InvalidObservations(
                "need at least one follower and the leader".into(),
            ));
        }
        for (name, xs) in [("initial", &initial), ("final", &terminal)] {
            if let Some(i) = xs
                .windows(2)
                .position(|w| !(w[0] < w[1]) || !w[0].is_finite() || !w[1].is_finite())
            {
                return Err(Error::InvalidObservations(format!(
                    "{name} positions not strictly increasing at index {i}"
                )));
            }
        }
        let n = initial.len() - 1;
        let expected = initial[n] + v_max * horizon;
        let tol = T::lit(1e-9) * T::one().max(expected.abs());
        if (terminal[n] - expected).abs() > tol.max(T::epsilon() * T::lit(64.0)) {
            return Err(Error::InvalidObservations(format!(
                "leader final position {} differs from initial + v_max * T = {}",
                terminal[n], expected
            )));
        }
        Ok(Self { initial, terminal })
    }

    pub fn initial(&self) -> &[T] {
        &self.initial
    }

    pub fn terminal(&self) -> &[T] {
        &self.terminal
    }

    /// Number of probe followers `n`.
    pub fn followers(&self) -> usize {
        self.initial.len() - 1
    }

    pub fn leader_start(&self) -> T {
        self.initial[self.followers()]
    }
}

/// Upper bounds `z̄ᵢ = min(N Δx̄ᵢ / L, N Δȳᵢ / L)` together with a feasibility verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaBounds<T> {
    pub upper: Vec<T>,
    pub total: T,
    pub feasible: bool,
    /// Why the constraint set is empty, when it is.
    pub reason: Option<String>,
}

impl<T: Scalar> AlphaBounds<T> {
    /// Turns an empty constraint set into [`Error::Infeasible`].
    pub fn require_feasible(self) -> Result<Self> {
        match self.reason {
            Some(reason) => Err(Error::Infeasible(reason)),
            None => Ok(self),
        }
    }

    pub fn lower(&self) -> Vec<T> {
        vec![T::one(); self.upper.len()]
    }
}

/// Per-segment capacity bounds. The constraint set `{α ∈ [1, z̄], Σ α = N}` is empty
/// when `n > N`, some `z̄ᵢ < 1`, or `Σ z̄ᵢ < N`; this is reported, never clamped away.
pub fn make_alpha_bounds<T: Scalar>(
    obs: &ProbeObservations<T>,
    cfg: &FleetConfig<T>,
) -> Result<AlphaBounds<T>> {
    let n = obs.followers();
    if n != cfg.followers {
        return Err(Error::LengthMismatch {
            expected: cfg.followers,
            got: n,
        });
    }
    let scale = T::from_count(cfg.vehicles) / cfg.total_length;
    let upper: Vec<T> = (0..n)
        .map(|i| {
            let first = (obs.initial[i + 1] - obs.initial[i]) * scale;
            let last = (obs.terminal[i + 1] - obs.terminal[i]) * scale;
            first.min(last)
        })
        .collect();
    let slack = T::lit(1e-9);
    let capacity: T = upper.iter().copied().sum();
    let total = T::from_count(cfg.vehicles);
    let reason = if n > cfg.vehicles {
        Some(format!(
            "{n} segments cannot each hold a vehicle when N = {}",
            cfg.vehicles
        ))
    } else if let Some(i) = upper.iter().position(|&z| z < T::one() - slack) {
        Some(format!(
            "segment {i} has room for only {} vehicles",
            upper[i]
        ))
    } else if capacity < total * (T::one() - slack) {
        Some(format!(
            "segments hold at most {capacity} vehicles, fewer than N = {total}"
        ))
    } else {
        None
    };
    Ok(AlphaBounds {
        upper,
        total,
        feasible: reason.is_none(),
        reason,
    })
}

/// Per-segment vehicle counts `α ∈ [1, z̄]` with `Σ α = N`, relaxed to reals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaVector<T> {
    values: Vec<T>,
    lower: Vec<T>,
    upper: Vec<T>,
    total: T,
}

impl<T: Scalar> AlphaVector<T> {
    /// Builds a count vector, rejecting values outside `[1, upper] ± tol` or a sum off by more than `tol * total`.
    pub fn new(values: Vec<T>, upper: Vec<T>, total: T, tol: T) -> Result<Self> {
        let alpha = Self {
            lower: vec![T::one(); values.len()],
            values,
            upper,
            total,
        };
        if alpha.upper.len() != alpha.values.len() {
            return Err(Error::LengthMismatch {
                expected: alpha.values.len(),
                got: alpha.upper.len(),
            });
        }
        let violation = alpha.violation();
        if violation > tol {
            return Err(Error::Infeasible(format!(
                "count vector violates its constraints by {violation}"
            )));
        }
        Ok(alpha)
    }

    pub(crate) fn from_parts_unchecked(
        values: Vec<T>,
        lower: Vec<T>,
        upper: Vec<T>,
        total: T,
    ) -> Self {
        Self {
            values,
            lower,
            upper,
            total,
        }
    }

    /// Largest constraint violation: box excess, or the sum residual relative to `total`.
    pub fn violation(&self) -> T {
        let box_excess = self
            .values
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(&a, (&lo, &hi))| (lo - a).max(a - hi).max(T::zero()))
            .fold(T::zero(), T::max);
        let sum: T = self.values.iter().copied().sum();
        let sum_excess = (sum - self.total).abs() / self.total.max(T::one());
        box_excess.max(sum_excess)
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn lower(&self) -> &[T] {
        &self.lower
    }

    pub fn upper(&self) -> &[T] {
        &self.upper
    }

    pub fn total(&self) -> T {
        self.total
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn obs(initial: Vec<f64>, terminal: Vec<f64>, horizon: f64) -> ProbeObservations<f64> {
        ProbeObservations::new(initial, terminal, 1.0, horizon).unwrap()
    }

    #[test]
    fn bounds_take_the_tighter_gap() {
        let o = obs(vec![0.0, 0.3, 0.8], vec![0.1, 0.5, 1.1], 0.3);
        let cfg = FleetConfig::new(10, 1.0, 0.3, 2).unwrap();
        let bounds = make_alpha_bounds(&o, &cfg).unwrap();
        assert_relative_eq!(bounds.upper[0], 3.0, epsilon = 1e-12);
        assert_relative_eq!(bounds.upper[1], 5.0, epsilon = 1e-12);
        // 3 + 5 < 10: reported, and an error once feasibility is required
        assert!(!bounds.feasible);
        assert!(matches!(
            bounds.require_feasible(),
            Err(Error::Infeasible(_))
        ));

        let cfg = FleetConfig::new(8, 0.5, 0.3, 2).unwrap();
        let bounds = make_alpha_bounds(&o, &cfg)
            .unwrap()
            .require_feasible()
            .unwrap();
        assert_relative_eq!(bounds.upper[0], 4.8, epsilon = 1e-12);
        assert_relative_eq!(bounds.upper[1], 8.0, epsilon = 1e-12);
    }

    #[test]
    fn bumper_to_bumper_bounds_are_one() {
        // gaps of exactly L/N with n = N
        let n = 4;
        let xs: Vec<f64> = (0..=n).map(|i| i as f64 * 0.25).collect();
        let o = obs(xs.clone(), xs.clone(), 0.0);
        let cfg = FleetConfig::new(n, 1.0, 0.0, n).unwrap();
        let bounds = make_alpha_bounds(&o, &cfg).unwrap();
        assert!(bounds.feasible);
        for zi in bounds.upper {
            assert_relative_eq!(zi, 1.0, epsilon = 1e-12);
        }
        // same gaps with N > n leave too little room
        let cfg = FleetConfig::new(8, 2.0, 0.0, n).unwrap();
        assert!(!make_alpha_bounds(&o, &cfg).unwrap().feasible);
    }

    #[test]
    fn tiny_gaps_are_infeasible() {
        let o = obs(vec![0.0, 0.1, 0.2], vec![0.0, 0.1, 0.2], 0.0);
        let cfg = FleetConfig::new(10, 1.0, 0.0, 2).unwrap();
        let bounds = make_alpha_bounds(&o, &cfg).unwrap();
        assert!(!bounds.feasible);
        assert!(matches!(
            bounds.require_feasible(),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn observations_validate_ordering_and_leader() {
        assert!(ProbeObservations::new(vec![0.0, 0.0], vec![0.1, 0.2], 1.0, 0.0).is_err());
        assert!(ProbeObservations::new(vec![0.0, 1.0], vec![0.5, 1.3], 1.0, 0.2).is_err());
        assert!(ProbeObservations::new(vec![0.0, 1.0], vec![0.5, 1.2], 1.0, 0.2).is_ok());
        assert!(ProbeObservations::new(vec![0.0, 1.0], vec![0.5], 1.0, 0.2).is_err());
    }

    #[test]
    fn fleet_config_validation() {
        assert!(FleetConfig::new(0, 1.0, 0.1, 1).is_err());
        assert!(FleetConfig::new(10, 1.0, 0.1, 11).is_err());
        assert!(FleetConfig::new(10, 0.0, 0.1, 2).is_err());
        let cfg = FleetConfig::new(10, 2.0, 0.1, 2).unwrap();
        assert_relative_eq!(cfg.car_length(), 0.2);
    }

    #[test]
    fn alpha_vector_checks_constraints() {
        let upper = vec![3.0, 5.0];
        assert!(AlphaVector::new(vec![2.0, 4.0], upper.clone(), 6.0, 1e-9).is_ok());
        assert!(AlphaVector::new(vec![0.5, 5.5], upper.clone(), 6.0, 1e-9).is_err());
        assert!(AlphaVector::new(vec![2.0, 3.0], upper.clone(), 6.0, 1e-9).is_err());
        assert!(AlphaVector::new(vec![2.0, 4.0, 1.0], upper, 7.0, 1e-9).is_err());
    }
}
