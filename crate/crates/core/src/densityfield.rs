//! Piecewise-constant Eulerian density built on probe cells, and the `W_{L,1}` distance.

use serde::{Deserialize, Serialize};

use crate::datagen::DensityProfile;
use crate::error::{Error, Result};
use crate::fleet::FleetConfig;
use crate::microsim::TrajectoryField;
use crate::scalar::Scalar;

/// Cells used to represent a ground-truth profile in distance computations.
pub const PROFILE_CELLS: usize = 10_000;

/// Step function with value `values[j]` on `[edges[j], edges[j+1])` and zero elsewhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseDensity<T> {
    edges: Vec<T>,
    values: Vec<T>,
}

impl<T: Scalar> PiecewiseDensity<T> {
    pub fn new(edges: Vec<T>, values: Vec<T>) -> Result<Self> {
        if edges.len() != values.len() + 1 || values.is_empty() {
            return Err(Error::LengthMismatch {
                expected: values.len() + 1,
                got: edges.len(),
            });
        }
        if edges.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Config(
                "cell edges must be strictly increasing".into(),
            ));
        }
        if values.iter().any(|v| !(*v >= T::zero())) {
            return Err(Error::Config("densities must be non-negative".into()));
        }
        Ok(Self { edges, values })
    }

    /// Exact cell averages of `profile` on `cells` uniform cells over its support.
    pub fn from_profile(profile: &DensityProfile<T>, cells: usize) -> Result<Self> {
        let (a, b) = profile.support();
        let cells = cells.max(1);
        let h = (b - a) / T::from_count(cells);
        let mut edges: Vec<T> = (0..=cells).map(|j| a + T::from_count(j) * h).collect();
        edges[cells] = b;
        let values = edges
            .windows(2)
            .map(|w| profile.mass_between(w[0], w[1]) / (w[1] - w[0]))
            .collect();
        Self::new(edges, values)
    }

    pub fn edges(&self) -> &[T] {
        &self.edges
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn cells(&self) -> usize {
        self.values.len()
    }

    pub fn support(&self) -> (T, T) {
        (self.edges[0], self.edges[self.edges.len() - 1])
    }

    pub fn mass(&self) -> T {
        self.edges
            .windows(2)
            .zip(&self.values)
            .map(|(w, &v)| v * (w[1] - w[0]))
            .sum()
    }

    /// Right-limit value at `x`; zero behind the first edge and from the last edge on.
    pub fn density_at(&self, x: T) -> T {
        let (a, b) = self.support();
        if x < a || x >= b {
            return T::zero();
        }
        let j = self.edges.partition_point(|&e| e <= x) - 1;
        self.values[j]
    }

    /// Mass on `(-∞, x]`.
    pub fn cumulative(&self, x: T) -> T {
        let (a, b) = self.support();
        if x <= a {
            return T::zero();
        }
        let full = self.edges.partition_point(|&e| e <= x.min(b)) - 1;
        let mut acc = T::zero();
        for j in 0..full.min(self.cells()) {
            acc = acc + self.values[j] * (self.edges[j + 1] - self.edges[j]);
        }
        if full < self.cells() {
            acc = acc + self.values[full] * (x - self.edges[full]);
        }
        acc
    }

    /// Cumulative mass at every point of an increasing sequence, in one sweep.
    fn cumulative_sorted(&self, xs: &[T]) -> Vec<T> {
        let mut out = Vec::with_capacity(xs.len());
        let mut j = 0;
        let mut acc = T::zero();
        for &x in xs {
            while j < self.cells() && self.edges[j + 1] <= x {
                acc = acc + self.values[j] * (self.edges[j + 1] - self.edges[j]);
                j += 1;
            }
            let partial = if j < self.cells() && x > self.edges[j] {
                self.values[j] * (x - self.edges[j])
            } else {
                T::zero()
            };
            out.push(acc + partial);
        }
        out
    }

    /// Averages over the uniform cells of `[x_min, x_max]`.
    pub fn rasterize(&self, x_min: T, x_max: T, cells: usize) -> Vec<T> {
        let h = (x_max - x_min) / T::from_count(cells);
        let xs: Vec<T> = (0..=cells).map(|j| x_min + T::from_count(j) * h).collect();
        let cum = self.cumulative_sorted(&xs);
        cum.windows(2).map(|w| (w[1] - w[0]) / h).collect()
    }

    /// Same field with every edge moved by `shift`.
    pub fn translated(&self, shift: T) -> Self {
        Self {
            edges: self.edges.iter().map(|&e| e + shift).collect(),
            values: self.values.clone(),
        }
    }
}

/// Discrete density `ρᵢ = αᵢ L / (N (x_{i+1} - x_i))` on the probe cells at one stored step.
pub fn discrete_density<T: Scalar>(
    traj: &TrajectoryField<T>,
    alpha: &[T],
    cfg: &FleetConfig<T>,
    step: usize,
) -> Result<PiecewiseDensity<T>> {
    if alpha.len() + 1 != traj.width() {
        return Err(Error::LengthMismatch {
            expected: traj.width() - 1,
            got: alpha.len(),
        });
    }
    if step > traj.steps() {
        return Err(Error::Config(format!(
            "step {step} beyond the trajectory's {} steps",
            traj.steps()
        )));
    }
    let row = traj.row(step);
    let l = cfg.car_length();
    let values = alpha
        .iter()
        .zip(row.windows(2))
        .map(|(&a, w)| a * l / (w[1] - w[0]))
        .collect();
    PiecewiseDensity::new(row.to_vec(), values)
}

/// Reconstructed density at every Euler step, with linear-in-edges interpolation between steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpacetimeDensity<T> {
    times: Vec<T>,
    edges: Vec<T>,
    /// Mass `αᵢ L / N` carried by each cell, constant in time.
    masses: Vec<T>,
}

impl<T: Scalar> SpacetimeDensity<T> {
    pub fn times(&self) -> &[T] {
        &self.times
    }

    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn cell_masses(&self) -> &[T] {
        &self.masses
    }

    fn width(&self) -> usize {
        self.masses.len() + 1
    }

    fn build(&self, edges: Vec<T>) -> PiecewiseDensity<T> {
        let values = self
            .masses
            .iter()
            .zip(edges.windows(2))
            .map(|(&m, w)| m / (w[1] - w[0]))
            .collect();
        PiecewiseDensity { edges, values }
    }

    pub fn edges_at_step(&self, k: usize) -> &[T] {
        &self.edges[k * self.width()..(k + 1) * self.width()]
    }

    pub fn at_step(&self, k: usize) -> PiecewiseDensity<T> {
        self.build(self.edges_at_step(k).to_vec())
    }

    /// Field at time `t`, clamped to the stored interval.
    pub fn at_time(&self, t: T) -> PiecewiseDensity<T> {
        let last = self.steps();
        if t <= self.times[0] {
            return self.at_step(0);
        }
        if t >= self.times[last] {
            return self.at_step(last);
        }
        let k = (self.times.partition_point(|&s| s <= t) - 1).min(last - 1);
        let (t0, t1) = (self.times[k], self.times[k + 1]);
        let w = (t - t0) / (t1 - t0);
        if w == T::zero() {
            return self.at_step(k);
        }
        let edges = self
            .edges_at_step(k)
            .iter()
            .zip(self.edges_at_step(k + 1))
            .map(|(&a, &b)| a + (b - a) * w)
            .collect();
        self.build(edges)
    }

    pub fn iter(&self) -> impl Iterator<Item = (T, PiecewiseDensity<T>)> + '_ {
        (0..=self.steps()).map(move |k| (self.times[k], self.at_step(k)))
    }
}

/// One density field per stored step of a probe trajectory.
pub fn spacetime_density<T: Scalar>(
    traj: &TrajectoryField<T>,
    alpha: &[T],
    cfg: &FleetConfig<T>,
) -> Result<SpacetimeDensity<T>> {
    if alpha.len() + 1 != traj.width() {
        return Err(Error::LengthMismatch {
            expected: traj.width() - 1,
            got: alpha.len(),
        });
    }
    let l = cfg.car_length();
    let mut edges = Vec::with_capacity((traj.steps() + 1) * traj.width());
    for (_, row) in traj.rows() {
        if row.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Config("probe ordering broken in trajectory".into()));
        }
        edges.extend_from_slice(row);
    }
    Ok(SpacetimeDensity {
        times: traj.times().to_vec(),
        edges,
        masses: alpha.iter().map(|&a| a * l).collect(),
    })
}

/// `∫ |y|` over `[0, h]` for `y` linear from `ya` to `yb`.
fn abs_linear_integral<T: Scalar>(ya: T, yb: T, h: T) -> T {
    if (ya >= T::zero()) == (yb >= T::zero()) || ya == T::zero() || yb == T::zero() {
        (ya.abs() + yb.abs()) * h * T::half()
    } else {
        (ya * ya + yb * yb) / (T::two() * (ya.abs() + yb.abs())) * h
    }
}

/// `W_{L,1}(f, g) = ‖F - G‖_{L¹}` of the cumulative mass functions, in closed form.
///
/// Returns `+∞` when the masses differ by more than `1e-9` relative, since the tail of
/// `F - G` is then a nonzero constant.
pub fn wasserstein_l1<T: Scalar>(f: &PiecewiseDensity<T>, g: &PiecewiseDensity<T>) -> T {
    let (mf, mg) = (f.mass(), g.mass());
    let scale = mf.abs().max(mg.abs()).max(T::min_positive_value());
    if (mf - mg).abs() > T::lit(1e-9).max(T::epsilon() * T::lit(64.0)) * scale {
        return T::infinity();
    }
    let mut points: Vec<T> = f.edges.iter().chain(&g.edges).copied().collect();
    points.sort_by(|a, b| a.partial_cmp(b).expect("finite edges"));
    points.dedup();
    let cf = f.cumulative_sorted(&points);
    let cg = g.cumulative_sorted(&points);
    (1..points.len())
        .map(|j| {
            abs_linear_integral(
                cf[j - 1] - cg[j - 1],
                cf[j] - cg[j],
                points[j] - points[j - 1],
            )
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fleet::ProbeObservations;
    use crate::microsim::simulate_probes;
    use crate::velocity::Greenshields;
    use approx::assert_relative_eq;

    fn field(edges: &[f64], values: &[f64]) -> PiecewiseDensity<f64> {
        PiecewiseDensity::new(edges.to_vec(), values.to_vec()).unwrap()
    }

    #[test]
    fn right_limit_lookup() {
        let f = field(&[0.0, 1.0, 2.0], &[0.3, 0.7]);
        assert_eq!(f.density_at(1.0), 0.7);
        assert_eq!(f.density_at(0.5), 0.3);
        assert_eq!(f.density_at(2.0), 0.0);
        assert_eq!(f.density_at(5.0), 0.0);
        assert_eq!(f.density_at(-0.1), 0.0);
        assert_eq!(f.density_at(0.0), 0.3);
    }

    #[test]
    fn discrete_density_examples() {
        let cfg = FleetConfig::new(12, 1.2, 0.0, 3).unwrap();
        let alpha = [2.0, 4.0, 6.0];
        // gaps exactly αᵢ L / N
        let row = vec![0.0, 0.2, 0.6, 1.2];
        let traj = TrajectoryField::from_rows(vec![0.0], row.clone(), 4).unwrap();
        let rho = discrete_density(&traj, &alpha, &cfg, 0).unwrap();
        for v in rho.values() {
            assert_relative_eq!(*v, 1.0, epsilon = 1e-12);
        }
        assert_relative_eq!(rho.mass(), 1.2, epsilon = 1e-12);

        let doubled: Vec<f64> = row.iter().map(|x| 2.0 * x).collect();
        let traj = TrajectoryField::from_rows(vec![0.0], doubled, 4).unwrap();
        let half = discrete_density(&traj, &alpha, &cfg, 0).unwrap();
        for v in half.values() {
            assert_relative_eq!(*v, 0.5, epsilon = 1e-12);
        }
        assert_relative_eq!(half.mass(), 1.2, epsilon = 1e-12);
    }

    #[test]
    fn spacetime_mass_and_interpolation() {
        let cfg = FleetConfig::new(30, 0.6, 0.1, 3).unwrap();
        let obs = ProbeObservations::new(
            vec![0.0, 0.2, 0.5, 0.8],
            vec![0.05, 0.27, 0.6, 0.9],
            1.0,
            0.1,
        )
        .unwrap();
        let alpha = [8.0, 12.0, 10.0];
        let traj = simulate_probes(&alpha, &obs, &cfg, &Greenshields, 40).unwrap();
        let st = spacetime_density(&traj, &alpha, &cfg).unwrap();
        assert_eq!(
            st.at_step(0),
            discrete_density(&traj, &alpha, &cfg, 0).unwrap()
        );
        for (_, f) in st.iter() {
            assert_relative_eq!(f.mass(), 0.6, max_relative = 1e-12);
        }
        let (t0, t1) = (st.times()[3], st.times()[4]);
        let mid = st.at_time((t0 + t1) / 2.0);
        for (j, e) in mid.edges().iter().enumerate() {
            let avg = (traj.row(3)[j] + traj.row(4)[j]) / 2.0;
            assert_relative_eq!(*e, avg, max_relative = 1e-12);
        }
        assert_relative_eq!(mid.mass(), 0.6, max_relative = 1e-12);
    }

    #[test]
    fn wasserstein_examples() {
        let f = field(&[0.0, 1.0], &[1.0]);
        let g = field(&[0.3, 1.3], &[1.0]);
        assert_eq!(wasserstein_l1(&f, &f), 0.0);
        assert_relative_eq!(wasserstein_l1(&f, &g), 0.3, epsilon = 1e-14);
        let h = field(&[0.0, 1.0], &[2.0]);
        assert!(wasserstein_l1(&f, &h).is_infinite());
    }

    #[test]
    fn crossing_cumulatives() {
        // same mass, cumulatives cross in the middle
        let f = field(&[0.0, 1.0, 2.0], &[1.0, 0.0]);
        let g = field(&[0.0, 2.0], &[0.5]);
        // F - G = x/2 on [0,1], 1 - x/2 on [1,2]: integral 1/4 + 1/4
        assert_relative_eq!(wasserstein_l1(&f, &g), 0.5, epsilon = 1e-14);
        let a = field(&[0.0, 1.0], &[1.0]);
        let b = field(&[0.0, 0.5, 1.0], &[0.0, 2.0]);
        let c = field(&[0.0, 0.5, 1.0], &[2.0, 0.0]);
        // F_b - F_c changes sign at 0.5
        assert_relative_eq!(wasserstein_l1(&b, &c), 0.5, epsilon = 1e-14);
        assert_relative_eq!(wasserstein_l1(&a, &b), 0.25, epsilon = 1e-14);
    }

    #[test]
    fn profile_representation_keeps_mass() {
        let p = DensityProfile::Sinusoidal {
            mean: 0.6,
            amplitude: 0.3,
            waves: 3.0,
        };
        let f = PiecewiseDensity::from_profile(&p, PROFILE_CELLS).unwrap();
        assert_relative_eq!(f.mass(), 0.6, max_relative = 1e-12);
    }

    #[test]
    fn rasterisation_is_conservative() {
        let f = field(&[0.1, 0.35, 0.4, 0.93], &[0.2, 0.9, 0.5]);
        let cells = f.rasterize(0.0, 1.0, 37);
        let mass: f64 = cells.iter().sum::<f64>() / 37.0;
        assert_relative_eq!(mass, f.mass(), max_relative = 1e-12);
        assert_relative_eq!(f.cumulative(0.4), 0.2 * 0.25 + 0.9 * 0.05, epsilon = 1e-15);
    }
}
