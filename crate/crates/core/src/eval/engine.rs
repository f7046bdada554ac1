use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{sym_sqrt, PsdMatrix};
use crate::quadrature::normal_rule;
use crate::seeds::{child_seed, rng};

use super::measure::Terminal;

/// How Gaussian expectations are taken.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Engine {
    /// Tensor Gauss-Hermite rule through the spectral root of each increment.
    GaussHermite { nodes: usize },
    /// Antithetic normal draws per level, shared by every node of that level
    /// (common random numbers); `replicas` independent draws give the error bar.
    MonteCarlo {
        samples: usize,
        replicas: usize,
        seed: u64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    pub engine: Engine,
    #[serde(default = "default_small_x")]
    pub small_x_threshold: f64,
    /// Largest admissible number of leaves in the quadrature tree.
    #[serde(default = "default_budget")]
    pub leaf_budget: f64,
}

fn default_small_x() -> f64 {
    1e-6
}

fn default_budget() -> f64 {
    (1u64 << 24) as f64
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self::gauss_hermite(32)
    }
}

impl EvalConfig {
    pub fn gauss_hermite(nodes: usize) -> Self {
        Self {
            engine: Engine::GaussHermite { nodes },
            small_x_threshold: default_small_x(),
            leaf_budget: default_budget(),
        }
    }

    pub fn monte_carlo(samples: usize, replicas: usize, seed: u64) -> Self {
        Self {
            engine: Engine::MonteCarlo {
                samples,
                replicas,
                seed,
            },
            small_x_threshold: default_small_x(),
            leaf_budget: default_budget(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.engine {
            Engine::GaussHermite { nodes } if nodes < 8 => Err(Error::InvalidArgument(format!(
                "{nodes} Gauss-Hermite nodes; at least 8 required"
            ))),
            Engine::MonteCarlo { samples, replicas, .. } if samples < 2 || replicas < 1 => {
                Err(Error::InvalidArgument("Monte Carlo needs samples >= 2, replicas >= 1".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Points and weights approximating `E f(z)`, `z ~ N(0, Delta Q)`.
#[derive(Clone, Debug)]
pub struct LevelRule {
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl LevelRule {
    pub fn dirac(d: usize) -> Self {
        Self {
            points: vec![vec![0.0; d]],
            weights: vec![1.0],
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Directions `sqrt(lambda_j) v_j` of a PSD matrix with non-negligible variance.
pub fn principal_axes(delta: &PsdMatrix<f64>) -> Vec<Vec<f64>> {
    let d = delta.dim();
    let tol = 1e-14 * (1.0 + delta.frobenius_norm());
    if d == 1 {
        let v = delta.get(0, 0);
        return if v > tol { vec![vec![v.sqrt()]] } else { vec![] };
    }
    let e = delta.eigen();
    e.values
        .iter()
        .enumerate()
        .filter(|(_, &l)| l > tol)
        .map(|(k, &l)| {
            let s = l.sqrt();
            (0..d).map(|u| s * e.vectors.get(u, k)).collect()
        })
        .collect()
}

/// Tensor Gauss-Hermite rule with `m` nodes per active axis.
pub fn gh_level(delta: &PsdMatrix<f64>, m: usize) -> LevelRule {
    let d = delta.dim();
    let axes = principal_axes(delta);
    if axes.is_empty() {
        return LevelRule::dirac(d);
    }
    let base = normal_rule(m);
    let mut points = vec![vec![0.0; d]];
    let mut weights = vec![1.0];
    for axis in &axes {
        let mut np = Vec::with_capacity(points.len() * m);
        let mut nw = Vec::with_capacity(points.len() * m);
        for (p, w) in points.iter().zip(&weights) {
            for (z, wz) in base.nodes.iter().zip(&base.weights) {
                np.push(p.iter().zip(axis).map(|(a, b)| a + z * b).collect());
                nw.push(w * wz);
            }
        }
        points = np;
        weights = nw;
    }
    LevelRule { points, weights }
}

/// Monte Carlo rule from standard normal draws (antithetic pairs).
pub fn mc_level(delta: &PsdMatrix<f64>, normals: &[Vec<f64>]) -> LevelRule {
    let d = delta.dim();
    if principal_axes(delta).is_empty() {
        return LevelRule::dirac(d);
    }
    let root = sym_sqrt(delta);
    let points: Vec<Vec<f64>> = normals.iter().map(|z| root.mat_vec(z)).collect();
    let w = 1.0 / points.len() as f64;
    LevelRule {
        weights: vec![w; points.len()],
        points,
    }
}

/// Antithetic standard normal vectors (`samples` rounded up to even).
pub fn antithetic_normals(d: usize, samples: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut r = rng(seed);
    let half = samples.div_ceil(2);
    let mut out = Vec::with_capacity(2 * half);
    for _ in 0..half {
        let z: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut r)).collect();
        out.push(z.iter().map(|v| -v).collect());
        out.push(z);
    }
    out
}

/// `(1/x) log sum_i w_i exp(x v_i)`; the plain mean at `x = 0` and the
/// second-order expansion below `small_x`.
pub fn soft_average(values: &[f64], weights: &[f64], x: f64, small_x: f64) -> f64 {
    let mean: f64 = values.iter().zip(weights).map(|(v, w)| v * w).sum();
    if x == 0.0 {
        return mean;
    }
    if x < small_x {
        let var: f64 = values
            .iter()
            .zip(weights)
            .map(|(v, w)| w * (v - mean) * (v - mean))
            .sum();
        return mean + 0.5 * x * var;
    }
    let m = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if x * (m - mean) < 1.0 {
        let s1: f64 = values
            .iter()
            .zip(weights)
            .map(|(v, w)| w * (x * (v - mean)).exp_m1())
            .sum();
        return mean + s1.ln_1p() / x;
    }
    let s: f64 = values
        .iter()
        .zip(weights)
        .map(|(v, w)| w * (x * (v - m)).exp())
        .sum();
    m + s.ln() / x
}

/// Rules for every level `k = 0..=n` of one evaluation.
pub fn build_rules(
    increments: &[PsdMatrix<f64>],
    cfg: &EvalConfig,
    replica: u64,
) -> Result<Vec<LevelRule>> {
    cfg.validate()?;
    let ranks: Vec<usize> = increments.iter().map(|q| principal_axes(q).len()).collect();
    let total_rank: usize = ranks.iter().sum();
    match cfg.engine {
        Engine::GaussHermite { nodes } => {
            let m = nodes_within_budget(nodes, total_rank, cfg.leaf_budget)?;
            Ok(increments.iter().map(|q| gh_level(q, m)).collect())
        }
        Engine::MonteCarlo { samples, seed, .. } => {
            let active = ranks.iter().filter(|&&r| r > 0).count();
            let s = samples.div_ceil(2) * 2;
            let leaves = (s as f64).powi(active as i32);
            if leaves > cfg.leaf_budget {
                return Err(Error::BudgetExceeded {
                    states: leaves,
                    budget: cfg.leaf_budget,
                });
            }
            Ok(increments
                .iter()
                .enumerate()
                .map(|(k, q)| {
                    let normals = antithetic_normals(
                        q.dim(),
                        samples,
                        child_seed(seed, &format!("level{k}"), replica),
                    );
                    mc_level(q, &normals)
                })
                .collect())
        }
    }
}

/// Largest node count `<= nodes` keeping `m^rank` within budget; at least 8.
pub fn nodes_within_budget(nodes: usize, rank: usize, budget: f64) -> Result<usize> {
    if rank == 0 {
        return Ok(nodes);
    }
    let mut m = nodes;
    while m > 8 && (m as f64).powi(rank as i32) > budget {
        m -= 1;
    }
    let leaves = (m as f64).powi(rank as i32);
    if leaves > budget {
        return Err(Error::BudgetExceeded {
            states: leaves,
            budget,
        });
    }
    Ok(m)
}

/// Descending recursion over pre-built level rules: level `k` averages with
/// parameter `xs[k]` (`xs[0] = 0` gives the plain expectation).
pub fn nested_value(
    rules: &[LevelRule],
    xs: &[f64],
    terminal: &dyn Terminal,
    small_x: f64,
) -> f64 {
    let d = terminal.dim();
    let origin = vec![0.0; d];
    if rules.is_empty() {
        return terminal.eval(&origin);
    }
    let top = &rules[0];
    let values: Vec<f64> = top
        .points
        .par_iter()
        .map(|p| descend(rules, xs, terminal, small_x, 1, p))
        .collect();
    soft_average(&values, &top.weights, xs[0], small_x)
}

fn descend(
    rules: &[LevelRule],
    xs: &[f64],
    terminal: &dyn Terminal,
    small_x: f64,
    k: usize,
    y: &[f64],
) -> f64 {
    if k == rules.len() {
        return terminal.eval(y);
    }
    let rule = &rules[k];
    let mut buf = vec![0.0; y.len()];
    let values: Vec<f64> = rule
        .points
        .iter()
        .map(|p| {
            for ((b, a), c) in buf.iter_mut().zip(y).zip(p) {
                *b = a + c;
            }
            descend(rules, xs, terminal, small_x, k + 1, &buf)
        })
        .collect();
    soft_average(&values, &rule.weights, xs[k], small_x)
}
