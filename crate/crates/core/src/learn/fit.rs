use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fleet::{make_alpha_bounds, AlphaVector, FleetConfig, ProbeObservations};
use crate::microsim::TrajectoryField;
use crate::scalar::Scalar;
use crate::velocity::VelocityMap;

use super::adjoint::{loss_and_gradient, LossGradient};
use super::projection::project_onto_feasible;

/// How the step length `η` of `α ← P(α - η ∇L)` is chosen each epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StepRule {
    /// Constant `η`, halved whenever the loss exceeds ten times its initial value.
    Fixed,
    /// Barzilai-Borwein step with a non-monotone Armijo backtrack along the projected direction.
    #[default]
    Spectral,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig<T> {
    pub epochs: usize,
    /// Initial step length; `None` uses `1e-2 N / n` for [`StepRule::Fixed`] and the
    /// inverse sup-norm of the first projected gradient for [`StepRule::Spectral`].
    pub eta: Option<T>,
    pub step_rule: StepRule,
    /// Euler steps `K` of the unrolled forward pass.
    pub steps: usize,
    /// Stop once the training loss falls below this value.
    pub tol_loss: T,
    /// Allowed constraint violation of every iterate.
    pub projection_tol: T,
}

impl<T: Scalar> Default for TrainConfig<T> {
    fn default() -> Self {
        Self {
            epochs: 5000,
            eta: None,
            step_rule: StepRule::Spectral,
            steps: 100,
            tol_loss: T::zero(),
            projection_tol: T::lit(1e-9),
        }
    }
}

impl<T: Scalar> TrainConfig<T> {
    /// Default Euler step count for a horizon: 100 per 0.1 time units.
    pub fn default_steps(horizon: T) -> usize {
        (horizon * T::lit(1000.0))
            .ceil()
            .to_usize()
            .unwrap_or(100)
            .max(100)
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::Config(
                "Euler step count K must be at least 1".into(),
            ));
        }
        if let Some(eta) = self.eta {
            if !(eta > T::zero() && eta.is_finite()) {
                return Err(Error::Config(format!(
                    "learning rate must be positive, got {eta}"
                )));
            }
        }
        if !(self.projection_tol >= T::zero()) {
            return Err(Error::Config(
                "projection tolerance must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    EpochLimit,
    LossTolerance,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainResult<T> {
    /// Best-loss iterate.
    pub alpha_star: AlphaVector<T>,
    /// Loss at the iterate entering each epoch.
    pub loss_history: Vec<T>,
    /// `‖α - P(α - ∇L)‖₂` at the iterate entering each epoch.
    pub gradient_norm_history: Vec<T>,
    /// Forward pass at `alpha_star`.
    pub trajectory: TrajectoryField<T>,
    pub initial_loss: T,
    pub best_loss: T,
    pub final_eta: T,
    /// Divergence-guard restarts (each halves `η`).
    pub restarts: usize,
    pub stop_reason: StopReason,
}

struct Iterate<T> {
    alpha: Vec<T>,
    eval: LossGradient<T>,
}

const NONMONOTONE_MEMORY: usize = 10;
const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 60;

/// Projected gradient descent on the training loss over the feasible count set.
pub fn fit<T: Scalar, V: VelocityMap<T> + ?Sized>(
    obs: &ProbeObservations<T>,
    cfg: &FleetConfig<T>,
    v: &V,
    tc: &TrainConfig<T>,
) -> Result<TrainResult<T>> {
    fit_with_observer(obs, cfg, v, tc, |_, _, _| {})
}

/// [`fit`], calling `observer(epoch, α, loss)` with the iterate produced by each epoch.
pub fn fit_with_observer<T: Scalar, V: VelocityMap<T> + ?Sized>(
    obs: &ProbeObservations<T>,
    cfg: &FleetConfig<T>,
    v: &V,
    tc: &TrainConfig<T>,
    mut observer: impl FnMut(usize, &[T], T),
) -> Result<TrainResult<T>> {
    tc.validate()?;
    let bounds = make_alpha_bounds(obs, cfg)?.require_feasible()?;
    let lower = bounds.lower();
    let upper = bounds.upper;
    let total = bounds.total;
    let n = obs.followers();

    let project = |raw: &[T]| -> Result<Vec<T>> {
        let p = project_onto_feasible(raw, &lower, &upper, total)?;
        let violation = p.violation();
        if violation > tc.projection_tol.max(T::epsilon() * T::lit(64.0)) {
            return Err(Error::Infeasible(format!(
                "projection left a violation of {violation}"
            )));
        }
        Ok(p.into_values())
    };
    let evaluate = |alpha: &[T]| loss_and_gradient(alpha, obs, cfg, v, tc.steps);

    let start = project(&vec![total / T::from_count(n); n])?;
    let first = evaluate(&start)?;
    let initial_loss = first.loss;
    let mut current = Iterate {
        alpha: start,
        eval: first,
    };
    let mut best_alpha = current.alpha.clone();
    let mut best = current.eval.clone();

    let unit_step = |it: &Iterate<T>| -> Result<Vec<T>> {
        let raw: Vec<T> = it
            .alpha
            .iter()
            .zip(&it.eval.gradient)
            .map(|(&a, &g)| a - g)
            .collect();
        let p = project(&raw)?;
        Ok(p.iter().zip(&it.alpha).map(|(&q, &a)| q - a).collect())
    };
    let norm = |xs: &[T]| xs.iter().map(|&x| x * x).sum::<T>().sqrt();

    let step_min = T::lit(1e-20);
    let step_max = T::lit(1e20);
    let mut eta = match (tc.eta, tc.step_rule) {
        (Some(eta), _) => eta,
        (None, StepRule::Fixed) => T::lit(1e-2) * total / T::from_count(n),
        (None, StepRule::Spectral) => {
            let d = unit_step(&current)?;
            let sup = d.iter().map(|x| x.abs()).fold(T::zero(), T::max);
            if sup > T::zero() {
                sup.recip().max(step_min).min(step_max)
            } else {
                T::one()
            }
        }
    };

    let mut loss_history = Vec::with_capacity(tc.epochs);
    let mut gradient_norm_history = Vec::with_capacity(tc.epochs);
    let mut recent: Vec<T> = Vec::with_capacity(NONMONOTONE_MEMORY);
    let mut restarts = 0;
    let mut stop_reason = StopReason::EpochLimit;

    for epoch in 0..tc.epochs {
        if current.eval.loss < tc.tol_loss {
            stop_reason = StopReason::LossTolerance;
            break;
        }
        loss_history.push(current.eval.loss);
        gradient_norm_history.push(norm(&unit_step(&current)?));
        if recent.len() == NONMONOTONE_MEMORY {
            recent.remove(0);
        }
        recent.push(current.eval.loss);

        let raw: Vec<T> = current
            .alpha
            .iter()
            .zip(&current.eval.gradient)
            .map(|(&a, &g)| a - eta * g)
            .collect();
        let target = project(&raw)?;
        let direction: Vec<T> = target
            .iter()
            .zip(&current.alpha)
            .map(|(&p, &a)| p - a)
            .collect();

        let accepted = match tc.step_rule {
            StepRule::Fixed => match evaluate(&target) {
                Ok(eval) if eval.loss.is_finite() => Some(Iterate {
                    alpha: target,
                    eval,
                }),
                Ok(_) | Err(Error::GapCollapse { .. }) => None,
                Err(e) => return Err(e),
            },
            StepRule::Spectral => {
                if direction.iter().all(|&d| d == T::zero()) {
                    observer(epoch, &current.alpha, current.eval.loss);
                    continue;
                }
                let slope: T = direction
                    .iter()
                    .zip(&current.eval.gradient)
                    .map(|(&d, &g)| d * g)
                    .sum();
                let reference = recent.iter().copied().fold(T::neg_infinity(), T::max);
                let mut t = T::one();
                let mut found = None;
                for _ in 0..MAX_BACKTRACKS {
                    let trial: Vec<T> = current
                        .alpha
                        .iter()
                        .zip(&direction)
                        .map(|(&a, &d)| a + t * d)
                        .collect();
                    match evaluate(&trial) {
                        Ok(eval)
                            if eval.loss.is_finite()
                                && eval.loss <= reference + T::lit(ARMIJO) * t * slope =>
                        {
                            found = Some(Iterate { alpha: trial, eval });
                            break;
                        }
                        Ok(_) | Err(Error::GapCollapse { .. }) => t = t * T::half(),
                        Err(e) => return Err(e),
                    }
                }
                found
            }
        };

        match accepted {
            Some(next) if next.eval.loss <= T::lit(10.0) * initial_loss => {
                if tc.step_rule == StepRule::Spectral {
                    let s: Vec<T> = next
                        .alpha
                        .iter()
                        .zip(&current.alpha)
                        .map(|(&a, &b)| a - b)
                        .collect();
                    let sy: T = s
                        .iter()
                        .zip(next.eval.gradient.iter().zip(&current.eval.gradient))
                        .map(|(&si, (&g1, &g0))| si * (g1 - g0))
                        .sum();
                    let ss: T = s.iter().map(|&x| x * x).sum();
                    eta = if sy > T::zero() {
                        (ss / sy).max(step_min).min(step_max)
                    } else {
                        step_max
                    };
                }
                current = next;
            }
            _ => {
                // diverged or no acceptable step: back off from the best iterate
                eta = eta * T::half();
                restarts += 1;
                recent.clear();
                current = Iterate {
                    alpha: best_alpha.clone(),
                    eval: best.clone(),
                };
            }
        }
        if current.eval.loss < best.loss {
            best = current.eval.clone();
            best_alpha = current.alpha.clone();
        }
        observer(epoch, &current.alpha, current.eval.loss);
    }

    let alpha_star = AlphaVector::new(
        best_alpha,
        upper,
        total,
        tc.projection_tol.max(T::epsilon() * T::lit(64.0)),
    )?;
    Ok(TrainResult {
        alpha_star,
        loss_history,
        gradient_norm_history,
        trajectory: best.trajectory,
        initial_loss,
        best_loss: best.loss,
        final_eta: eta,
        restarts,
        stop_reason,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{generate_dataset, GenerateOptions, Scenario};
    use crate::microsim::simulate_probes;
    use crate::velocity::Greenshields;

    fn instance() -> crate::datagen::Dataset<f64> {
        let options = GenerateOptions {
            stride: 25,
            ..GenerateOptions::default()
        };
        generate_dataset(&Scenario::waves(200, 0.1), &Greenshields, &options).unwrap()
    }

    #[test]
    fn zero_epochs_returns_initial_iterate() {
        let ds = instance();
        let tc = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        let r = fit(&ds.train_obs, &ds.fleet, &Greenshields, &tc).unwrap();
        assert!(r.loss_history.is_empty());
        assert_eq!(r.best_loss, r.initial_loss);
        let n = ds.train_obs.followers() as f64;
        assert!(r
            .alpha_star
            .values()
            .iter()
            .all(|&a| (a - 200.0 / n).abs() < 1e-9));
    }

    #[test]
    fn recovers_planted_counts() {
        let ds = instance();
        let n = ds.train_obs.followers();
        let planted: Vec<f64> = (0..n)
            .map(|i| ds.ground_truth_alpha[i] + if i % 2 == 0 { -3.0 } else { 3.0 })
            .collect();
        let bounds = make_alpha_bounds(&ds.train_obs, &ds.fleet).unwrap();
        AlphaVector::new(planted.clone(), bounds.upper, bounds.total, 1e-9).unwrap();
        let traj = simulate_probes(&planted, &ds.train_obs, &ds.fleet, &Greenshields, 100).unwrap();
        let obs = ProbeObservations::new(
            ds.train_obs.initial().to_vec(),
            traj.final_row().to_vec(),
            1.0,
            ds.fleet.horizon,
        )
        .unwrap();
        let tc = TrainConfig {
            epochs: 400,
            ..TrainConfig::default()
        };
        let mut checked = 0;
        let r = fit_with_observer(&obs, &ds.fleet, &Greenshields, &tc, |_, a, _| {
            let s: f64 = a.iter().sum();
            assert!((s - 200.0).abs() < 1e-8);
            checked += 1;
        })
        .unwrap();
        assert_eq!(checked, r.loss_history.len());
        assert!(
            r.best_loss < 1e-3 * r.initial_loss,
            "{} vs {}",
            r.best_loss,
            r.initial_loss
        );
        for (a, p) in r.alpha_star.values().iter().zip(&planted) {
            assert!((a - p).abs() < 0.5, "{a} vs {p}");
        }
    }

    #[test]
    fn fixed_rule_never_increases_best_loss() {
        let ds = instance();
        let tc = TrainConfig {
            epochs: 50,
            step_rule: StepRule::Fixed,
            ..TrainConfig::default()
        };
        let r = fit(&ds.train_obs, &ds.fleet, &Greenshields, &tc).unwrap();
        assert!(r.best_loss <= r.initial_loss);
        assert_eq!(r.loss_history.len(), 50);
    }

    #[test]
    fn rejects_bad_config() {
        let ds = instance();
        let tc = TrainConfig {
            steps: 0,
            ..TrainConfig::<f64>::default()
        };
        assert!(fit(&ds.train_obs, &ds.fleet, &Greenshields, &tc).is_err());
        let tc = TrainConfig {
            eta: Some(-1.0),
            ..TrainConfig::<f64>::default()
        };
        assert!(fit(&ds.train_obs, &ds.fleet, &Greenshields, &tc).is_err());
    }
}
