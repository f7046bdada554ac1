//! Controlled diffusion `dY = -(x Qdot)^{1/2} u dt + Qdot^{1/2} dW` with
//! payoff `g(Y(1)) - (1/2) int u^2 ds`, simulated by Euler-Maruyama.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::eval::measure::Terminal;
use crate::order::DiscretePath;
use crate::seeds::{child_seed, rng};
use crate::stats::Estimate;

use super::solver::PdeSolution;

/// Control `u(t, y)`.
pub enum ControlPolicy<'a> {
    Zero,
    /// `u* = -(x Qdot)^{1/2} f_y` read off a solution grid.
    Feedback(&'a PdeSolution),
    /// Bilinear interpolation in a `(t, y)` table; constant outside.
    Table {
        t: Vec<f64>,
        y: Vec<f64>,
        u: Vec<Vec<f64>>,
    },
}

fn bracket(grid: &[f64], v: f64) -> (usize, f64) {
    if grid.len() == 1 {
        return (0, 0.0);
    }
    let last = grid.len() - 1;
    if v <= grid[0] {
        return (0, 0.0);
    }
    if v >= grid[last] {
        return (last - 1, 1.0);
    }
    let i = grid.partition_point(|&g| g <= v) - 1;
    let i = i.min(last - 1);
    (i, (v - grid[i]) / (grid[i + 1] - grid[i]))
}

impl ControlPolicy<'_> {
    fn value(&self, t: f64, y: f64, x: f64, q_dot: f64) -> f64 {
        match self {
            ControlPolicy::Zero => 0.0,
            ControlPolicy::Feedback(sol) => {
                let row = sol.row_at(t);
                -(x * q_dot).sqrt() * sol.row_gradient(row, y)
            }
            ControlPolicy::Table { t: ts, y: ys, u } => {
                let (i, a) = bracket(ts, t);
                let (j, b) = bracket(ys, y);
                let at = |ii: usize, jj: usize| u[ii.min(ts.len() - 1)][jj.min(ys.len() - 1)];
                let lo = at(i, j) * (1.0 - b) + at(i, j + 1) * b;
                let hi = at(i + 1, j) * (1.0 - b) + at(i + 1, j + 1) * b;
                lo * (1.0 - a) + hi * a
            }
        }
    }

    fn validate(&self) -> Result<()> {
        if let ControlPolicy::Table { t, y, u } = self {
            if t.is_empty() || y.is_empty() || u.len() != t.len() || u.iter().any(|r| r.len() != y.len()) {
                return Err(Error::InvalidArgument("control table shape mismatch".into()));
            }
            if u.iter().flatten().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument("control table has non-finite entries".into()));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ControlConfig {
    /// Euler-Maruyama steps per unit time.
    pub steps_per_unit: usize,
    pub paths: usize,
    pub seed: u64,
    pub y0: f64,
}

impl ControlConfig {
    pub fn new(paths: usize, seed: u64) -> Self {
        Self {
            steps_per_unit: 512,
            paths,
            seed,
            y0: 0.0,
        }
    }
}

const CHUNK: usize = 256;

/// Monte Carlo estimate of `E[g(Y(1)) - (1/2) int u^2 ds]`.
pub fn simulate_control_value(
    path: &DiscretePath<f64>,
    terminal: &dyn Terminal,
    policy: &ControlPolicy<'_>,
    cfg: &ControlConfig,
) -> Result<Estimate> {
    if path.dim() != 1 || terminal.dim() != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            found: path.dim().max(terminal.dim()),
        });
    }
    policy.validate()?;
    if cfg.paths < 2 || cfg.steps_per_unit == 0 {
        return Err(Error::InvalidArgument("need at least two paths and one step".into()));
    }
    let xs = path.partition().values();
    let n = path.levels();
    let inc = path.chain().increments();
    let mut segments = Vec::new();
    for k in 0..=n {
        let len = xs[k + 1] - xs[k];
        let dq = inc[k].get(0, 0);
        if dq == 0.0 {
            continue;
        }
        if len <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "segment {k} has zero length but positive variance"
            )));
        }
        let steps = ((len * cfg.steps_per_unit as f64).ceil() as usize).max(1);
        segments.push((xs[k], len, dq / len, steps));
    }
    let chunks = cfg.paths.div_ceil(CHUNK);
    let payoffs: Vec<f64> = (0..chunks)
        .into_par_iter()
        .flat_map_iter(|c| {
            let mut r = rng(child_seed(cfg.seed, "control", c as u64));
            let count = CHUNK.min(cfg.paths - c * CHUNK);
            let segments = &segments;
            (0..count)
                .map(move |_| {
                    let mut y = cfg.y0;
                    let mut cost = 0.0;
                    for &(x, len, q_dot, steps) in segments {
                        let dt = len / steps as f64;
                        for s in 0..steps {
                            let t = x + s as f64 * dt;
                            let u = policy.value(t, y, x, q_dot);
                            let z: f64 = StandardNormal.sample(&mut r);
                            y += -(x * q_dot).sqrt() * u * dt + (q_dot * dt).sqrt() * z;
                            cost += 0.5 * u * u * dt;
                        }
                    }
                    terminal.eval(&[y]) - cost
                })
                .collect::<Vec<_>>()
        })
        .collect();
    Ok(Estimate::from_samples(&payoffs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{LinearProbe, SoftplusProbe};
    use crate::pde::solver::{solve_pde_1d, GridSpec};
    use rand::{Rng, SeedableRng};

    #[test]
    fn zero_control_is_martingale_for_linear_payoff() {
        let p = DiscretePath::scalar(&[0.4], &[0.3], 1.0).unwrap();
        let g = LinearProbe { a: vec![0.8] };
        let v = simulate_control_value(&p, &g, &ControlPolicy::Zero, &ControlConfig::new(4096, 1)).unwrap();
        assert!(v.within(0.0, 3.0, 1e-12), "{v:?}");
    }

    #[test]
    fn feedback_attains_closed_form() {
        let a = 0.8;
        let p = DiscretePath::scalar(&[0.4], &[0.3], 1.0).unwrap();
        let g = LinearProbe { a: vec![a] };
        let sol = solve_pde_1d(&p, &g, &GridSpec::new(0.02)).unwrap();
        let v = simulate_control_value(&p, &g, &ControlPolicy::Feedback(&sol), &ControlConfig::new(4096, 2)).unwrap();
        let expected = 0.5 * a * a * 0.4 * 0.7;
        assert!(v.within(expected, 3.0, 1e-12), "{v:?} vs {expected}");
    }

    #[test]
    fn random_policies_are_suboptimal() {
        let p = DiscretePath::scalar(&[0.3, 0.6], &[0.2, 0.5], 1.0).unwrap();
        let g = SoftplusProbe::default();
        let sol = solve_pde_1d(&p, &g, &GridSpec::new(0.02)).unwrap();
        let cfg = ControlConfig::new(4096, 3);
        let best = simulate_control_value(&p, &g, &ControlPolicy::Feedback(&sol), &cfg).unwrap();
        assert!((best.value - sol.value_at_origin()).abs() <= 3.0 * best.std_error + 2e-3);
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        for _ in 0..3 {
            let t: Vec<f64> = (0..=4).map(|i| i as f64 / 4.0).collect();
            let y: Vec<f64> = (-3..=3).map(|i| i as f64).collect();
            let u: Vec<Vec<f64>> = t.iter().map(|_| y.iter().map(|_| r.random_range(-1.0..1.0)).collect()).collect();
            let v = simulate_control_value(&p, &g, &ControlPolicy::Table { t, y, u }, &cfg).unwrap();
            let se = (v.std_error.powi(2) + best.std_error.powi(2)).sqrt();
            assert!(v.value <= best.value + 3.0 * se);
        }
    }
}
