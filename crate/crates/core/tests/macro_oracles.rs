use trafficrecon_core::macrosolver::{godunov_solve, GodunovGrid};
use trafficrecon_core::Greenshields;

fn riemann_grid(left: f64, right: f64, cells: usize) -> GodunovGrid<f64> {
    let dx = 1.0 / cells as f64;
    let averages = (0..cells)
        .map(|j| {
            if (j as f64 + 0.5) * dx < 0.5 {
                left
            } else {
                right
            }
        })
        .collect();
    GodunovGrid::with_cfl(0.0, 1.0, averages, 0.9, &Greenshields).unwrap()
}

#[test]
fn shock_moves_at_rankine_hugoniot_speed() {
    let horizon = 0.5;
    let sol = godunov_solve(&riemann_grid(0.4, 0.9, 2000), horizon, &Greenshields, 10).unwrap();
    let centers = sol.centers();
    let rho = sol.final_snapshot();
    let j = rho.iter().position(|&r| r > 0.65).unwrap();
    let (x0, x1) = (centers[j - 1], centers[j]);
    let front = x0 + (0.65 - rho[j - 1]) / (rho[j] - rho[j - 1]) * (x1 - x0);
    let speed = (front - 0.5) / horizon;
    assert!((speed + 0.3).abs() < 0.02 * 0.3, "speed {speed}");
    assert!(sol.max_mass_residual < 1e-12);
}

#[test]
fn rarefaction_converges_in_l1() {
    // 0.9 | 0.4 opens a fan rho = (1 - (x - 0.5) / t) / 2 between speeds -0.8 and 0.2
    let horizon = 0.25;
    let exact = |x: f64| {
        let s = (x - 0.5) / horizon;
        if s <= -0.8 {
            0.9
        } else if s >= 0.2 {
            0.4
        } else {
            0.5 * (1.0 - s)
        }
    };
    let errors: Vec<f64> = [200, 400, 800, 1600]
        .iter()
        .map(|&cells| {
            let sol =
                godunov_solve(&riemann_grid(0.9, 0.4, cells), horizon, &Greenshields, 1).unwrap();
            sol.centers()
                .iter()
                .zip(sol.final_snapshot())
                .map(|(&x, &r)| (r - exact(x)).abs())
                .sum::<f64>()
                * sol.dx()
        })
        .collect();
    assert!(errors.windows(2).all(|w| w[1] < w[0]), "{errors:?}");
    assert!(errors[3] < 5e-3);
}

#[test]
fn constant_state_is_preserved() {
    let grid = GodunovGrid::with_cfl(0.0, 1.0, vec![0.3f64; 100], 0.9, &Greenshields).unwrap();
    let sol = godunov_solve(&grid, 0.3, &Greenshields, 3).unwrap();
    assert!(sol.final_snapshot().iter().all(|r| (r - 0.3).abs() < 1e-14));
    assert!(sol.min_density >= 0.0 && sol.max_density <= 1.0);
}
