//! Speed-density laws `v(rho)` and their spacing form `V(z) = v(1/z)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A non-increasing, C¹ speed-density law with `speed(0) = v_max`, in nondimensional units.
///
/// `speed` and `speed_derivative` are unchecked and used in the inner loops; the
/// free functions [`checked_speed`] and [`spacing_velocity`] validate their argument.
pub trait VelocityMap<T: Scalar>: Send + Sync {
    fn speed(&self, rho: T) -> T;

    fn speed_derivative(&self, rho: T) -> T;

    fn v_max(&self) -> T {
        self.speed(T::zero())
    }

    /// Fundamental diagram `f(rho) = rho * v(rho)`.
    fn flux(&self, rho: T) -> T {
        rho * self.speed(rho)
    }

    fn flux_derivative(&self, rho: T) -> T {
        self.speed(rho) + rho * self.speed_derivative(rho)
    }

    /// Maximiser of the (concave) flux on `[0, 1]`.
    fn critical_density(&self) -> T {
        // golden-section search
        let ratio = T::lit(0.618_033_988_749_894_9);
        let (mut lo, mut hi) = (T::zero(), T::one());
        for _ in 0..200 {
            let a = hi - ratio * (hi - lo);
            let b = lo + ratio * (hi - lo);
            if self.flux(a) < self.flux(b) {
                lo = a;
            } else {
                hi = b;
            }
        }
        (lo + hi) * T::half()
    }

    /// `V(z) = v(1/z)` for a gap quotient `z > 0`.
    fn spacing_speed(&self, z: T) -> T {
        self.speed(z.recip())
    }

    /// `V'(z) = -v'(1/z) / z²`.
    fn spacing_speed_derivative(&self, z: T) -> T {
        -self.speed_derivative(z.recip()) / (z * z)
    }
}

/// Linear law `v(rho) = max(1 - rho, 0)`.
///
/// At the kink `rho = 1` the derivative is the left limit `-1`; beyond it the
/// derivative is zero.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Greenshields;

impl<T: Scalar> VelocityMap<T> for Greenshields {
    #[inline]
    fn speed(&self, rho: T) -> T {
        (T::one() - rho).max(T::zero())
    }

    #[inline]
    fn speed_derivative(&self, rho: T) -> T {
        if rho <= T::one() {
            -T::one()
        } else {
            T::zero()
        }
    }

    fn v_max(&self) -> T {
        T::one()
    }

    fn critical_density(&self) -> T {
        T::half()
    }

    #[inline]
    fn spacing_speed(&self, z: T) -> T {
        (T::one() - z.recip()).max(T::zero())
    }

    #[inline]
    fn spacing_speed_derivative(&self, z: T) -> T {
        if z >= T::one() {
            (z * z).recip()
        } else {
            T::zero()
        }
    }
}

/// `v(rho)` with a domain check on `rho`.
pub fn checked_speed<T: Scalar, V: VelocityMap<T> + ?Sized>(v: &V, rho: T) -> Result<T> {
    if rho.is_nan() || rho < T::zero() {
        return Err(Error::Domain {
            what: "density",
            value: rho.as_f64(),
        });
    }
    Ok(v.speed(rho))
}

/// Greenshields speed of a nondimensional density.
pub fn greenshields<T: Scalar>(rho: T) -> Result<T> {
    checked_speed(&Greenshields, rho)
}

/// `V(z) = v(1/z)` with a domain check; a vanishing gap quotient signals a blow-up upstream.
pub fn spacing_velocity<T: Scalar, V: VelocityMap<T> + ?Sized>(v: &V, z: T) -> Result<T> {
    if z.is_nan() || z <= T::zero() {
        return Err(Error::Domain {
            what: "gap quotient",
            value: z.as_f64(),
        });
    }
    Ok(v.spacing_speed(z))
}
