use crate::error::{Error, Result};
use crate::fleet::AlphaVector;
use crate::scalar::Scalar;

fn clipped_sum<T: Scalar>(raw: &[T], lower: &[T], upper: &[T], shift: T) -> T {
    raw.iter()
        .zip(lower.iter().zip(upper))
        .map(|(&r, (&lo, &hi))| (r + shift).max(lo).min(hi))
        .sum()
}

/// Euclidean projection onto `{α : lowerᵢ <= αᵢ <= upperᵢ, Σ αᵢ = total}`.
///
/// The projection is `clip(raw + λ)` for the scalar `λ` that restores the sum; `λ` is
/// bracketed by bisection and then polished with one exact step on the free set.
pub fn project_onto_feasible<T: Scalar>(
    raw: &[T],
    lower: &[T],
    upper: &[T],
    total: T,
) -> Result<AlphaVector<T>> {
    let n = raw.len();
    if lower.len() != n || upper.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: lower.len().min(upper.len()),
        });
    }
    if n == 0 {
        return Err(Error::Infeasible("no segments to project onto".into()));
    }
    if let Some(i) = (0..n).find(|&i| !(lower[i] <= upper[i])) {
        return Err(Error::Infeasible(format!(
            "segment {i} has empty box [{}, {}]",
            lower[i], upper[i]
        )));
    }
    if raw.iter().any(|r| !r.is_finite()) {
        return Err(Error::Domain {
            what: "projection input",
            value: f64::NAN,
        });
    }
    let tol = T::lit(1e-12).max(T::epsilon() * T::lit(16.0)) * total.abs().max(T::one());
    let lo_sum: T = lower.iter().copied().sum();
    let hi_sum: T = upper.iter().copied().sum();
    if lo_sum > total + tol || hi_sum < total - tol {
        return Err(Error::Infeasible(format!(
            "total {total} outside the attainable range [{lo_sum}, {hi_sum}]"
        )));
    }

    let residual = |shift: T| clipped_sum(raw, lower, upper, shift) - total;

    let mut shift = T::zero();
    if residual(T::zero()).abs() > tol {
        let mut a = (0..n)
            .map(|i| lower[i] - raw[i])
            .fold(T::infinity(), T::min);
        let mut b = (0..n)
            .map(|i| upper[i] - raw[i])
            .fold(T::neg_infinity(), T::max);
        for _ in 0..200 {
            shift = (a + b) * T::half();
            let g = residual(shift);
            if g.abs() <= tol || !(shift > a && shift < b) {
                break;
            }
            if g < T::zero() {
                a = shift;
            } else {
                b = shift;
            }
        }
        // g is affine in the shift while the active set is unchanged
        let free = (0..n)
            .filter(|&i| {
                let x = raw[i] + shift;
                x > lower[i] && x < upper[i]
            })
            .count();
        if free > 0 {
            let polished = shift - residual(shift) / T::from_count(free);
            if residual(polished).abs() <= residual(shift).abs() {
                shift = polished;
            }
        }
    }

    let mut values: Vec<T> = (0..n)
        .map(|i| (raw[i] + shift).max(lower[i]).min(upper[i]))
        .collect();
    // a large shift loses digits; spread the leftover sum over the movable entries
    for _ in 0..n {
        let excess = values.iter().copied().sum::<T>() - total;
        if excess.abs() <= tol {
            break;
        }
        let movable: Vec<usize> = (0..n)
            .filter(|&i| {
                if excess > T::zero() {
                    values[i] > lower[i]
                } else {
                    values[i] < upper[i]
                }
            })
            .collect();
        if movable.is_empty() {
            break;
        }
        let step = excess / T::from_count(movable.len());
        for i in movable {
            values[i] = (values[i] - step).max(lower[i]).min(upper[i]);
        }
    }
    Ok(AlphaVector::from_parts_unchecked(
        values,
        lower.to_vec(),
        upper.to_vec(),
        total,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn huge_inputs_keep_the_sum() {
        let raw: Vec<f64> = (0..200).map(|i| 1e12 * ((i as f64) * 0.37).sin()).collect();
        let upper: Vec<f64> = (0..200).map(|i| 12.0 + (i % 7) as f64).collect();
        let p = project_onto_feasible(&raw, &[1.0; 200], &upper, 2000.0).unwrap();
        assert!(p.violation() <= 1e-12 * 2000.0, "{}", p.violation());
    }

    #[test]
    fn feasible_points_are_fixed() {
        let p = project_onto_feasible(&[2.0, 2.0, 2.0], &[1.0; 3], &[3.0; 3], 6.0).unwrap();
        assert_eq!(p.values(), &[2.0, 2.0, 2.0]);
    }

    #[test]
    fn two_segment_example() {
        // oracle: grid search over {(a, 3 - a) : a in [1, 2]}
        let raw = [0.0, 3.0];
        let best = (0..=100_000)
            .map(|k| 1.0 + k as f64 / 100_000.0)
            .min_by(|&a, &b| {
                let d = |x: f64| (x - raw[0]).powi(2) + (3.0 - x - raw[1]).powi(2);
                d(a).partial_cmp(&d(b)).unwrap()
            })
            .unwrap();
        assert_relative_eq!(best, 1.0);
        let p = project_onto_feasible(&raw, &[1.0; 2], &[2.0; 2], 3.0).unwrap();
        assert_relative_eq!(p.values()[0], best, epsilon = 1e-12);
        assert_relative_eq!(p.values()[1], 3.0 - best, epsilon = 1e-12);
    }

    #[test]
    fn infeasible_sets_error() {
        assert!(matches!(
            project_onto_feasible(&[1.0, 1.0], &[1.0; 2], &[2.0; 2], 5.0),
            Err(Error::Infeasible(_))
        ));
        assert!(matches!(
            project_onto_feasible(&[1.0, 1.0], &[1.0; 2], &[2.0; 2], 1.0),
            Err(Error::Infeasible(_))
        ));
        assert!(project_onto_feasible(&[1.0], &[2.0], &[1.0], 1.5).is_err());
    }

    #[test]
    fn sum_is_exact_to_tolerance() {
        let raw = [-3.0, 0.2, 7.5, 4.4, 100.0];
        let upper = [4.0, 5.0, 6.0, 7.0, 8.0];
        let p = project_onto_feasible(&raw, &[1.0; 5], &upper, 17.3).unwrap();
        let s: f64 = p.values().iter().sum();
        assert!((s - 17.3).abs() <= 1e-12 * 17.3);
    }
}
