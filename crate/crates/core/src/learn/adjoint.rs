use crate::error::{Error, Result};
use crate::fleet::{AlphaVector, FleetConfig, ProbeObservations};
use crate::microsim::{simulate_probes, ParametrizedSystem, TrajectoryField};
use crate::scalar::Scalar;
use crate::velocity::VelocityMap;

use super::loss::train_loss;

/// Training loss at a count vector, its exact gradient, and the forward tape.
#[derive(Debug, Clone)]
pub struct LossGradient<T> {
    pub loss: T,
    pub gradient: Vec<T>,
    pub trajectory: TrajectoryField<T>,
}

/// Reverse sweep through the unrolled Euler map `x_{k+1} = x_k + Δt V(W_α x_k + b_α(t_k))`.
///
/// The co-state starts at `∂L/∂x_K = 2 (x_K - ȳ) / n` and is pulled back through each
/// step's bidiagonal Jacobian; the explicit dependence `∂z_i/∂α_i = -z_i/α_i` of the gap
/// quotients is accumulated along the way. The counts are not checked for feasibility.
pub fn loss_and_gradient<T: Scalar, V: VelocityMap<T> + ?Sized>(
    alpha: &[T],
    obs: &ProbeObservations<T>,
    cfg: &FleetConfig<T>,
    v: &V,
    steps: usize,
) -> Result<LossGradient<T>> {
    let trajectory = simulate_probes(alpha, obs, cfg, v, steps)?;
    let loss = train_loss(&trajectory, obs)?;
    let gradient = backward(alpha, obs, cfg, v, &trajectory)?;
    Ok(LossGradient {
        loss,
        gradient,
        trajectory,
    })
}

fn backward<T: Scalar, V: VelocityMap<T> + ?Sized>(
    alpha: &[T],
    obs: &ProbeObservations<T>,
    cfg: &FleetConfig<T>,
    v: &V,
    tape: &TrajectoryField<T>,
) -> Result<Vec<T>> {
    let n = obs.followers();
    if tape.width() != n + 1 {
        return Err(Error::LengthMismatch {
            expected: n + 1,
            got: tape.width(),
        });
    }
    let system = ParametrizedSystem::new(alpha, cfg, obs.leader_start(), v.v_max())?;
    let coupling = system.coupling();
    let steps = tape.steps();
    let dt = cfg.horizon / T::from_count(steps);
    let scale = T::two() / T::from_count(n);

    let mut costate: Vec<T> = tape.final_row()[..n]
        .iter()
        .zip(obs.terminal())
        .map(|(&x, &y)| scale * (x - y))
        .collect();
    let mut gradient = vec![T::zero(); n];
    let mut z = vec![T::zero(); n];
    let mut pull = vec![T::zero(); n];

    for k in (0..steps).rev() {
        let t = T::from_count(k) * dt;
        system.gap_quotients_into(&tape.row(k)[..n], t, &mut z);
        for i in 0..n {
            // sensitivity of x_{k+1,i} to its gap quotient
            pull[i] = costate[i] * dt * v.spacing_speed_derivative(z[i]);
            gradient[i] = gradient[i] - pull[i] * z[i] / alpha[i];
        }
        for i in 0..n {
            let mut next = costate[i] - pull[i] * coupling[i];
            if i > 0 {
                next = next + pull[i - 1] * coupling[i - 1];
            }
            costate[i] = next;
        }
    }
    Ok(gradient)
}

/// `∇_α L^train` for a feasible count vector.
pub fn adjoint_gradient<T: Scalar, V: VelocityMap<T> + ?Sized>(
    alpha: &AlphaVector<T>,
    obs: &ProbeObservations<T>,
    cfg: &FleetConfig<T>,
    v: &V,
    steps: usize,
) -> Result<Vec<T>> {
    let violation = alpha.violation();
    if violation > T::lit(1e-9).max(T::epsilon() * T::lit(64.0)) {
        return Err(Error::Infeasible(format!(
            "count vector violates its constraints by {violation}"
        )));
    }
    Ok(loss_and_gradient(alpha.values(), obs, cfg, v, steps)?.gradient)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{generate_dataset, GenerateOptions, Scenario};
    use crate::microsim::probe_forward;
    use crate::velocity::Greenshields;

    fn instance() -> crate::datagen::Dataset<f64> {
        let scenario = Scenario::waves(200, 0.1);
        let options = GenerateOptions {
            stride: 20,
            ..GenerateOptions::default()
        };
        generate_dataset(&scenario, &Greenshields, &options).unwrap()
    }

    fn perturbed(alpha: &[f64]) -> Vec<f64> {
        alpha
            .iter()
            .enumerate()
            .map(|(i, &a)| a * (1.0 + 0.15 * ((i as f64) * 1.7).sin()))
            .collect()
    }

    #[test]
    fn zero_loss_means_zero_gradient() {
        let ds = instance();
        let n = ds.train_obs.followers();
        let alpha = vec![2.0; n];
        let traj = simulate_probes(&alpha, &ds.train_obs, &ds.fleet, &Greenshields, 50).unwrap();
        let obs = ProbeObservations::new(
            ds.train_obs.initial().to_vec(),
            traj.final_row().to_vec(),
            1.0,
            ds.fleet.horizon,
        )
        .unwrap();
        let lg = loss_and_gradient(&alpha, &obs, &ds.fleet, &Greenshields, 50).unwrap();
        assert_eq!(lg.loss, 0.0);
        assert!(lg.gradient.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn matches_central_differences() {
        let ds = instance();
        let alpha = perturbed(&ds.ground_truth_alpha);
        let steps = 100;
        let lg = loss_and_gradient(&alpha, &ds.train_obs, &ds.fleet, &Greenshields, steps).unwrap();
        assert!(lg.loss > 0.0);
        let scale = lg.gradient.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        for i in 0..alpha.len() {
            let eps = 1e-5 * alpha[i];
            let mut up = alpha.clone();
            let mut down = alpha.clone();
            up[i] += eps;
            down[i] -= eps;
            let lu = loss_and_gradient(&up, &ds.train_obs, &ds.fleet, &Greenshields, steps)
                .unwrap()
                .loss;
            let ld = loss_and_gradient(&down, &ds.train_obs, &ds.fleet, &Greenshields, steps)
                .unwrap()
                .loss;
            let fd = (lu - ld) / (2.0 * eps);
            let err = (fd - lg.gradient[i]).abs() / lg.gradient[i].abs().max(1e-3 * scale);
            assert!(
                err < 1e-4,
                "component {i}: adjoint {} fd {fd}",
                lg.gradient[i]
            );
        }
    }

    #[test]
    fn small_descent_step_reduces_loss() {
        let ds = instance();
        let alpha = perturbed(&ds.ground_truth_alpha);
        let lg = loss_and_gradient(&alpha, &ds.train_obs, &ds.fleet, &Greenshields, 100).unwrap();
        let gnorm2: f64 = lg.gradient.iter().map(|g| g * g).sum();
        let mut t = 1.0 / gnorm2.sqrt();
        let mut decreased = false;
        for _ in 0..40 {
            let trial: Vec<f64> = alpha
                .iter()
                .zip(&lg.gradient)
                .map(|(a, g)| a - t * g)
                .collect();
            let l = loss_and_gradient(&trial, &ds.train_obs, &ds.fleet, &Greenshields, 100)
                .unwrap()
                .loss;
            if l < lg.loss - 1e-4 * t * gnorm2 {
                decreased = true;
                break;
            }
            t *= 0.5;
        }
        assert!(decreased);
    }

    #[test]
    fn checked_entry_point_agrees_with_raw() {
        let ds = instance();
        let bounds = crate::fleet::make_alpha_bounds(&ds.train_obs, &ds.fleet).unwrap();
        let alpha = AlphaVector::new(
            ds.ground_truth_alpha.clone(),
            bounds.upper.clone(),
            bounds.total,
            1e-9,
        )
        .unwrap();
        let g = adjoint_gradient(&alpha, &ds.train_obs, &ds.fleet, &Greenshields, 100).unwrap();
        let raw = loss_and_gradient(alpha.values(), &ds.train_obs, &ds.fleet, &Greenshields, 100)
            .unwrap();
        assert_eq!(g, raw.gradient);
        let traj = probe_forward(&alpha, &ds.train_obs, &ds.fleet, &Greenshields, 100).unwrap();
        assert_eq!(traj.final_row(), raw.trajectory.final_row());
    }
}
