use crate::error::{Error, Result};
use crate::fleet::ProbeObservations;
use crate::microsim::TrajectoryField;
use crate::scalar::Scalar;

/// Mean squared final-position error over the `n` probe followers; the leader is exact
/// by construction and excluded.
pub fn train_loss<T: Scalar>(traj: &TrajectoryField<T>, obs: &ProbeObservations<T>) -> Result<T> {
    if traj.width() != obs.followers() + 1 {
        return Err(Error::LengthMismatch {
            expected: obs.followers() + 1,
            got: traj.width(),
        });
    }
    let n = obs.followers();
    Ok(squared_error(&traj.final_row()[..n], &obs.terminal()[..n]) / T::from_count(n))
}

pub(crate) fn squared_error<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn traj(final_row: Vec<f64>) -> TrajectoryField<f64> {
        let w = final_row.len();
        TrajectoryField::from_rows(vec![1.0], final_row, w).unwrap()
    }

    #[test]
    fn examples() {
        let obs =
            ProbeObservations::new(vec![0.0, 1.0, 2.0], vec![3.0, 4.0, 5.0], 1.0, 3.0).unwrap();
        assert_eq!(train_loss(&traj(vec![3.0, 4.0, 5.0]), &obs).unwrap(), 0.0);
        assert_eq!(train_loss(&traj(vec![4.0, 7.0, 5.0]), &obs).unwrap(), 5.0);
        // errors scaled by c scale the loss by c²
        assert_eq!(train_loss(&traj(vec![5.0, 10.0, 5.0]), &obs).unwrap(), 20.0);
        assert!(train_loss(&traj(vec![3.0, 4.0]), &obs).is_err());
    }
}
