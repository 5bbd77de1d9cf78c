//! First-order Godunov scheme for `ρ_t + f(ρ)_x = 0` with `f(ρ) = ρ v(ρ)`.
//!
//! Only used as an evaluation reference; the learner never sees the PDE.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::velocity::VelocityMap;

pub const DEFAULT_CFL: f64 = 0.9;
pub const DEFAULT_CELLS: usize = 1000;

/// Exact Riemann flux for a concave flux with maximiser `critical`.
#[inline]
fn riemann_flux<T: Scalar, V: VelocityMap<T> + ?Sized>(left: T, right: T, critical: T, v: &V) -> T {
    if left <= right {
        v.flux(left).min(v.flux(right))
    } else if right <= critical && critical <= left {
        v.flux(critical)
    } else {
        v.flux(left).max(v.flux(right))
    }
}

/// Godunov interface flux between two densities in `[0, 1]`.
pub fn godunov_flux<T: Scalar, V: VelocityMap<T> + ?Sized>(
    rho_left: T,
    rho_right: T,
    v: &V,
) -> Result<T> {
    for rho in [rho_left, rho_right] {
        if !(rho >= T::zero() && rho <= T::one()) {
            return Err(Error::Domain {
                what: "density",
                value: rho.as_f64(),
            });
        }
    }
    Ok(riemann_flux(rho_left, rho_right, v.critical_density(), v))
}

/// Uniform finite-volume grid with its initial cell averages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GodunovGrid<T> {
    pub x_min: T,
    pub x_max: T,
    pub dt: T,
    pub cell_averages: Vec<T>,
}

impl<T: Scalar> GodunovGrid<T> {
    /// Grid whose time step is `cfl · Δx / max|f'|`.
    pub fn with_cfl<V: VelocityMap<T> + ?Sized>(
        x_min: T,
        x_max: T,
        cell_averages: Vec<T>,
        cfl: T,
        v: &V,
    ) -> Result<Self> {
        if cell_averages.is_empty() || !(x_max > x_min) {
            return Err(Error::Config(
                "Godunov grid needs cells and x_max > x_min".into(),
            ));
        }
        if !(cfl > T::zero() && cfl <= T::one()) {
            return Err(Error::Config(format!(
                "CFL number must lie in (0, 1], got {cfl}"
            )));
        }
        let dx = (x_max - x_min) / T::from_count(cell_averages.len());
        let dt = cfl * dx / max_wave_speed(v);
        Ok(Self {
            x_min,
            x_max,
            dt,
            cell_averages,
        })
    }

    /// Grid with cell averages of `profile_mass(a, b)` (mass on `[a, b]`) divided by `Δx`.
    pub fn from_mass<V: VelocityMap<T> + ?Sized>(
        x_min: T,
        x_max: T,
        cells: usize,
        cfl: T,
        v: &V,
        profile_mass: impl Fn(T, T) -> T,
    ) -> Result<Self> {
        if cells == 0 {
            return Err(Error::Config("Godunov grid needs at least one cell".into()));
        }
        let dx = (x_max - x_min) / T::from_count(cells);
        let averages = (0..cells)
            .map(|j| {
                let a = x_min + T::from_count(j) * dx;
                let b = x_min + T::from_count(j + 1) * dx;
                profile_mass(a, b) / dx
            })
            .collect();
        Self::with_cfl(x_min, x_max, averages, cfl, v)
    }

    pub fn cells(&self) -> usize {
        self.cell_averages.len()
    }

    pub fn dx(&self) -> T {
        (self.x_max - self.x_min) / T::from_count(self.cells())
    }
}

/// `max |f'(ρ)|` over `[0, 1]`; for a concave flux the endpoints suffice.
pub fn max_wave_speed<T: Scalar, V: VelocityMap<T> + ?Sized>(v: &V) -> T {
    v.flux_derivative(T::zero())
        .abs()
        .max(v.flux_derivative(T::one()).abs())
}

/// Cell averages stored at a subset of the time steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GodunovSolution<T> {
    pub x_min: T,
    pub x_max: T,
    pub cells: usize,
    pub times: Vec<T>,
    densities: Vec<T>,
    /// Number of time steps taken.
    pub steps: usize,
    /// Largest per-step `|mass_{k+1} - mass_k + dt (F_out - F_in)|`.
    pub max_mass_residual: T,
    pub min_density: T,
    pub max_density: T,
}

impl<T: Scalar> GodunovSolution<T> {
    pub fn dx(&self) -> T {
        (self.x_max - self.x_min) / T::from_count(self.cells)
    }

    pub fn edges(&self) -> Vec<T> {
        let dx = self.dx();
        (0..=self.cells)
            .map(|j| self.x_min + T::from_count(j) * dx)
            .collect()
    }

    pub fn centers(&self) -> Vec<T> {
        let dx = self.dx();
        (0..self.cells)
            .map(|j| self.x_min + (T::from_count(j) + T::half()) * dx)
            .collect()
    }

    pub fn snapshots(&self) -> usize {
        self.times.len()
    }

    pub fn snapshot(&self, k: usize) -> &[T] {
        &self.densities[k * self.cells..(k + 1) * self.cells]
    }

    pub fn final_snapshot(&self) -> &[T] {
        self.snapshot(self.snapshots() - 1)
    }

    pub fn mass(&self, k: usize) -> T {
        self.snapshot(k).iter().copied().sum::<T>() * self.dx()
    }
}

/// Advances the grid to `horizon` with outflow (edge-copy) boundaries.
///
/// Every step uses `grid.dt` except possibly a shorter final one; `snapshots` output
/// intervals are stored evenly in step index, plus the initial state.
pub fn godunov_solve<T: Scalar, V: VelocityMap<T> + ?Sized>(
    grid: &GodunovGrid<T>,
    horizon: T,
    v: &V,
    snapshots: usize,
) -> Result<GodunovSolution<T>> {
    let cells = grid.cells();
    if cells == 0 {
        return Err(Error::Config("Godunov grid has no cells".into()));
    }
    let dx = grid.dx();
    let limit = dx / max_wave_speed(v);
    if !(grid.dt > T::zero() && grid.dt <= limit * (T::one() + T::epsilon())) {
        return Err(Error::Cfl {
            dt: grid.dt.as_f64(),
            limit: limit.as_f64(),
        });
    }
    if !(horizon >= T::zero()) {
        return Err(Error::Config(format!(
            "horizon must be non-negative, got {horizon}"
        )));
    }
    if let Some(bad) = grid
        .cell_averages
        .iter()
        .find(|r| !(**r >= T::zero() && **r <= T::one()))
    {
        return Err(Error::Domain {
            what: "initial density",
            value: bad.as_f64(),
        });
    }

    let steps = (horizon / grid.dt).ceil().to_usize().unwrap_or(0).max(1);
    let snapshots = snapshots.clamp(1, steps);
    let mut store_at: Vec<usize> = (0..=snapshots).map(|j| j * steps / snapshots).collect();
    store_at.dedup();

    let critical = v.critical_density();
    let mut rho = grid.cell_averages.clone();
    let mut next = rho.clone();
    let mut flux = vec![T::zero(); cells + 1];
    let mut times = vec![T::zero()];
    let mut densities = rho.clone();
    let mut next_store = 1;
    let mut max_residual = T::zero();
    let mut min_density = rho.iter().copied().fold(T::infinity(), T::min);
    let mut max_density = rho.iter().copied().fold(T::neg_infinity(), T::max);
    let mut mass = rho.iter().copied().sum::<T>() * dx;
    let mut t = T::zero();

    for k in 0..steps {
        let dt = if k + 1 == steps {
            horizon - T::from_count(steps - 1) * grid.dt
        } else {
            grid.dt
        };
        // ghost cells copy the edge values
        flux[0] = riemann_flux(rho[0], rho[0], critical, v);
        for j in 1..cells {
            flux[j] = riemann_flux(rho[j - 1], rho[j], critical, v);
        }
        flux[cells] = riemann_flux(rho[cells - 1], rho[cells - 1], critical, v);

        let ratio = dt / dx;
        for j in 0..cells {
            next[j] = rho[j] - ratio * (flux[j + 1] - flux[j]);
        }
        std::mem::swap(&mut rho, &mut next);

        let new_mass = rho.iter().copied().sum::<T>() * dx;
        let residual = (new_mass - (mass - dt * (flux[cells] - flux[0]))).abs();
        max_residual = max_residual.max(residual);
        mass = new_mass;
        for &r in &rho {
            min_density = min_density.min(r);
            max_density = max_density.max(r);
        }

        t = if k + 1 == steps { horizon } else { t + dt };
        if next_store < store_at.len() && store_at[next_store] == k + 1 {
            times.push(t);
            densities.extend_from_slice(&rho);
            next_store += 1;
        }
    }

    Ok(GodunovSolution {
        x_min: grid.x_min,
        x_max: grid.x_max,
        cells,
        times,
        densities,
        steps,
        max_mass_residual: max_residual,
        min_density,
        max_density,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::velocity::Greenshields;
    use approx::assert_relative_eq;

    #[test]
    fn flux_examples() {
        let v = Greenshields;
        assert_relative_eq!(godunov_flux(0.4, 0.4, &v).unwrap(), 0.24, epsilon = 1e-15);
        assert_eq!(godunov_flux(0.0, 1.0, &v).unwrap(), 0.0);
        assert_eq!(godunov_flux(1.0, 0.0, &v).unwrap(), 0.25);
        assert!(godunov_flux(1.2, 0.0, &v).is_err());
        assert!(godunov_flux(0.2, -0.1, &v).is_err());
    }

    #[test]
    fn flux_matches_brute_force_extremum() {
        let v = Greenshields;
        let grid: Vec<f64> = (0..=20).map(|i| i as f64 / 20.0).collect();
        for &l in &grid {
            for &r in &grid {
                let (lo, hi) = if l <= r { (l, r) } else { (r, l) };
                let samples = (0..=2000).map(|s| {
                    let rho = lo + (hi - lo) * s as f64 / 2000.0;
                    VelocityMap::<f64>::flux(&v, rho)
                });
                let expected = if l <= r {
                    samples.fold(f64::INFINITY, f64::min)
                } else {
                    samples.fold(f64::NEG_INFINITY, f64::max)
                };
                // sampling resolution bounds the oracle error by (Δρ)²
                assert_relative_eq!(godunov_flux(l, r, &v).unwrap(), expected, epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn constant_state_is_preserved() {
        let v = Greenshields;
        let grid = GodunovGrid::with_cfl(0.0, 1.0, vec![0.6; 200], 0.9, &v).unwrap();
        let sol = godunov_solve(&grid, 0.3, &v, 3).unwrap();
        for k in 0..sol.snapshots() {
            assert!(sol.snapshot(k).iter().all(|&r| (r - 0.6f64).abs() < 1e-14));
        }
        assert_relative_eq!(*sol.times.last().unwrap(), 0.3, epsilon = 1e-15);
    }

    #[test]
    fn rejects_cfl_violation() {
        let v = Greenshields;
        let mut grid = GodunovGrid::with_cfl(0.0, 1.0, vec![0.5; 10], 0.9, &v).unwrap();
        grid.dt = 0.2;
        assert!(matches!(
            godunov_solve(&grid, 1.0, &v, 1),
            Err(Error::Cfl { .. })
        ));
        assert!(GodunovGrid::with_cfl(0.0, 1.0, vec![0.5; 10], 1.5, &v).is_err());
    }

    #[test]
    fn mass_balance_and_bounds() {
        let v = Greenshields;
        let init: Vec<f64> = (0..400)
            .map(|j| {
                let x = (j as f64 + 0.5) / 400.0;
                if (0.2..0.6).contains(&x) {
                    0.3 + 0.6 * x
                } else {
                    0.1
                }
            })
            .collect();
        let (lo, hi) = (0.1, 0.3 + 0.6 * 0.6);
        let grid = GodunovGrid::with_cfl(0.0, 1.0, init, 0.9, &v).unwrap();
        let sol = godunov_solve(&grid, 0.4, &v, 10).unwrap();
        assert!(sol.max_mass_residual < 1e-12);
        assert!(sol.min_density >= lo - 1e-12 && sol.max_density <= hi + 1e-12);
    }
}
