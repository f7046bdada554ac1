//! Truncated Ruelle probability cascades and the filtered GREM field.

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::engine::principal_axes;
use crate::eval::measure::Terminal;
use crate::order::{MonotoneChain, UnitPartition};
use crate::seeds::{child_seed, rng, Rng};
use crate::stats::{log_sum_exp, Estimate};

/// Largest number of leaves a cascade may have.
pub const LEAF_BUDGET: usize = 1 << 24;
/// Above this many leaves pair statistics are sampled instead of summed.
pub const EXACT_PAIR_LIMIT: usize = 1 << 16;

/// Logs of the top `m` atoms `Gamma_i^{-1/x}` of a Poisson process with
/// intensity `x t^{-x-1} dt`, decreasing.
pub fn ppp_log_atoms(x: f64, m: usize, r: &mut Rng) -> Vec<f64> {
    let mut gamma = 0.0;
    (0..m)
        .map(|_| {
            let e: f64 = Exp1.sample(r);
            gamma += e;
            -gamma.ln() / x
        })
        .collect()
}

/// Top `m` atoms of the Poisson process with parameter `x`.
pub fn sample_ppp_top(x: f64, m: usize, seed: u64) -> Result<Vec<f64>> {
    check_parameter(x)?;
    Ok(ppp_log_atoms(x, m, &mut rng(seed)).into_iter().map(f64::exp).collect())
}

fn check_parameter(x: f64) -> Result<()> {
    if !(x > 0.0 && x < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "Poisson-Dirichlet parameter {x} outside (0, 1)"
        )));
    }
    Ok(())
}

/// Cascade truncated to the top `m` children per node; node `i` at depth
/// `k` has parent `i / m`.
#[derive(Clone, Debug)]
pub struct CascadeTree {
    levels: usize,
    m: usize,
    x: Vec<f64>,
    /// `log_atoms[k - 1][i]`: log raw atom of node `i` at depth `k`.
    log_atoms: Vec<Vec<f64>>,
    /// Normalised leaf weights.
    weights: Vec<f64>,
    log_total: f64,
    truncation: f64,
}

/// `1 + (length of the common prefix)`, or `n + 1` for equal indices.
pub fn lexicographic_overlap(a: &[usize], b: &[usize]) -> Result<usize> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    Ok(1 + a.iter().zip(b).take_while(|(u, v)| u == v).count())
}

impl CascadeTree {
    fn from_log_atoms(x: Vec<f64>, m: usize, log_atoms: Vec<Vec<f64>>) -> Self {
        let levels = x.len();
        let mut acc = vec![0.0];
        for level in &log_atoms {
            acc = level
                .iter()
                .enumerate()
                .map(|(i, a)| acc[i / m] + a)
                .collect();
        }
        let log_total = log_sum_exp(acc.iter().copied());
        let weights: Vec<f64> = acc.iter().map(|v| (v - log_total).exp()).collect();
        let mut share = 0.0;
        let mut nodes = 0usize;
        for level in &log_atoms {
            for sib in level.chunks(m) {
                share += (sib[m - 1] - log_sum_exp(sib.iter().copied())).exp();
                nodes += 1;
            }
        }
        Self {
            levels,
            m,
            x,
            log_atoms,
            weights,
            log_total,
            truncation: share / nodes as f64,
        }
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn branching(&self) -> usize {
        self.m
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn leaf_count(&self) -> usize {
        self.weights.len()
    }

    /// Normalised weights in leaf order.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `log sum_alpha xi(alpha)` of the raw weights.
    pub fn log_total(&self) -> f64 {
        self.log_total
    }

    /// Mean share of the smallest retained atom among its siblings.
    pub fn truncation_indicator(&self) -> f64 {
        self.truncation
    }

    /// Multi-index of leaf `leaf` (0-based coordinates).
    pub fn multi_index(&self, leaf: usize) -> Vec<usize> {
        let mut idx = vec![0; self.levels];
        let mut v = leaf;
        for k in (0..self.levels).rev() {
            idx[k] = v % self.m;
            v /= self.m;
        }
        idx
    }

    /// Multiplies every raw weight by `exp(shift)` at the first level.
    pub fn rescaled(&self, shift: f64) -> Self {
        let mut la = self.log_atoms.clone();
        for v in &mut la[0] {
            *v += shift;
        }
        Self::from_log_atoms(self.x.clone(), self.m, la)
    }

    /// Same cascade with the children of every node shuffled, subtrees moving
    /// with their roots.
    pub fn permuted(&self, seed: u64) -> Self {
        let mut r = rng(seed);
        let m = self.m;
        // `map[k][i]`: original index of the node now at position `i` on depth k+1.
        let mut map: Vec<Vec<usize>> = Vec::with_capacity(self.levels);
        let mut parents: Vec<usize> = vec![0];
        for _ in 0..self.levels {
            let mut level = Vec::with_capacity(parents.len() * m);
            for &p in &parents {
                let mut kids: Vec<usize> = (0..m).map(|c| p * m + c).collect();
                kids.shuffle(&mut r);
                level.extend(kids);
            }
            parents = level.clone();
            map.push(level);
        }
        let la = map
            .iter()
            .zip(&self.log_atoms)
            .map(|(idx, atoms)| idx.iter().map(|&i| atoms[i]).collect())
            .collect();
        Self::from_log_atoms(self.x.clone(), m, la)
    }

    /// `S_j = sum over depth-j nodes of (normalised subtree weight)^2`,
    /// `j = 0..=n`.
    pub fn depth_square_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.levels + 1];
        let mut w = self.weights.clone();
        for j in (0..=self.levels).rev() {
            out[j] = w.iter().map(|v| v * v).sum();
            if j > 0 {
                w = w.chunks(self.m).map(|c| c.iter().sum()).collect();
            }
        }
        out
    }
}

/// Nested Poisson-Dirichlet weights for the interior jump times of `x`.
pub fn build_cascade(x: &UnitPartition<f64>, m: usize, seed: u64) -> Result<CascadeTree> {
    let xs = x.interior().to_vec();
    let n = xs.len();
    if n == 0 {
        return Err(Error::InvalidArgument("a cascade needs n >= 1".into()));
    }
    for &v in &xs {
        check_parameter(v)?;
    }
    if m < 2 || (m as f64).powi(n as i32) > LEAF_BUDGET as f64 {
        return Err(Error::BudgetExceeded {
            states: (m as f64).powi(n as i32),
            budget: LEAF_BUDGET as f64,
        });
    }
    let mut r = rng(seed);
    let mut log_atoms = Vec::with_capacity(n);
    let mut count = 1usize;
    for &xk in &xs {
        let mut level = Vec::with_capacity(count * m);
        for _ in 0..count {
            level.extend(ppp_log_atoms(xk, m, &mut r));
        }
        count *= m;
        log_atoms.push(level);
    }
    Ok(CascadeTree::from_log_atoms(xs, m, log_atoms))
}

/// Estimate, its standard error and the target value for one identity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentityRow {
    pub k: usize,
    pub estimate: f64,
    pub se: f64,
    pub target: f64,
}

impl IdentityRow {
    pub fn within(&self, k_se: f64) -> bool {
        (self.estimate - self.target).abs() <= k_se * self.se + 1e-12
    }
}

fn rows_from_samples(samples: &[Vec<f64>], targets: &[f64], first_k: usize) -> Vec<IdentityRow> {
    targets
        .iter()
        .enumerate()
        .map(|(j, &target)| {
            let col: Vec<f64> = samples.iter().map(|s| s[j]).collect();
            let e = Estimate::from_samples(&col);
            IdentityRow {
                k: first_k + j,
                estimate: e.value,
                se: e.std_error,
                target,
            }
        })
        .collect()
}

/// Weighted pair sampling: fraction of `pairs` draws with `q_L <= k`.
fn sampled_overlap_cdf(tree: &CascadeTree, pairs: usize, r: &mut Rng) -> Vec<f64> {
    let cdf: Vec<f64> = tree
        .weights
        .iter()
        .scan(0.0, |acc, w| {
            *acc += w;
            Some(*acc)
        })
        .collect();
    let draw = |r: &mut Rng| {
        let u: f64 = r.random::<f64>() * cdf[cdf.len() - 1];
        cdf.partition_point(|&c| c < u).min(cdf.len() - 1)
    };
    let n = tree.levels;
    let mut counts = vec![0usize; n + 2];
    for _ in 0..pairs {
        let a = tree.multi_index(draw(r));
        let b = tree.multi_index(draw(r));
        let q = lexicographic_overlap(&a, &b).expect("same depth");
        counts[q] += 1;
    }
    let mut acc = 0usize;
    (1..=n + 1)
        .map(|k| {
            acc += counts[k];
            acc as f64 / pairs as f64
        })
        .collect()
}

/// Per-replica `P(q_L <= k)`, `k = 1..=n+1`, against targets `x_k` and 1.
pub fn overlap_distribution_check(
    x: &UnitPartition<f64>,
    m: usize,
    replicas: usize,
    pairs: usize,
    seed: u64,
) -> Result<Vec<IdentityRow>> {
    let n = x.levels();
    let samples: Vec<Vec<f64>> = (0..replicas as u64)
        .into_par_iter()
        .map(|i| {
            let tree = build_cascade(x, m, child_seed(seed, "rpc-tree", i))?;
            if tree.leaf_count() <= EXACT_PAIR_LIMIT {
                let s = tree.depth_square_sums();
                let mut v: Vec<f64> = (1..=n).map(|k| 1.0 - s[k]).collect();
                v.push(1.0);
                Ok(v)
            } else {
                let mut r = rng(child_seed(seed, "rpc-pairs", i));
                Ok(sampled_overlap_cdf(&tree, pairs, &mut r))
            }
        })
        .collect::<Result<_>>()?;
    let mut targets: Vec<f64> = x.interior().to_vec();
    targets.push(1.0);
    Ok(rows_from_samples(&samples, &targets, 1))
}

/// Per-replica slab sums `S_k - S_{k+1}` (`k = 0..n-1`, target
/// `x_{k+1} - x_k`) followed by the diagonal `S_n` (target `1 - x_n`).
pub fn pair_sum_check(x: &UnitPartition<f64>, m: usize, replicas: usize, seed: u64) -> Result<Vec<IdentityRow>> {
    let n = x.levels();
    let xv = x.values();
    let samples: Vec<Vec<f64>> = (0..replicas as u64)
        .into_par_iter()
        .map(|i| {
            let tree = build_cascade(x, m, child_seed(seed, "rpc-tree", i))?;
            let s = tree.depth_square_sums();
            let mut v: Vec<f64> = (0..n).map(|k| s[k] - s[k + 1]).collect();
            v.push(s[n]);
            Ok(v)
        })
        .collect::<Result<_>>()?;
    let mut targets: Vec<f64> = (0..n).map(|k| xv[k + 1] - xv[k]).collect();
    targets.push(1.0 - xv[n]);
    Ok(rows_from_samples(&samples, &targets, 0))
}

/// Gaussian field on the cascade: the root carries `z_0 ~ N(0, dQ^(0))`,
/// each depth-`k` node `z_k ~ N(0, dQ^(k))`; leaves sum their ancestors.
#[derive(Clone, Debug)]
pub struct GremField {
    pub d: usize,
    /// `values[leaf * d + u]`.
    pub values: Vec<f64>,
}

impl GremField {
    pub fn leaf(&self, i: usize) -> &[f64] {
        &self.values[i * self.d..(i + 1) * self.d]
    }
}

pub fn sample_grem_field(tree: &CascadeTree, q: &MonotoneChain<f64>, r: &mut Rng) -> Result<GremField> {
    if q.levels() != tree.levels {
        return Err(Error::InvalidArgument(format!(
            "chain has {} levels, cascade {}",
            q.levels(),
            tree.levels
        )));
    }
    let d = q.dim();
    let inc = q.increments();
    let axes: Vec<Vec<Vec<f64>>> = inc.iter().map(principal_axes).collect();
    let draw = |k: usize, r: &mut Rng| -> Vec<f64> {
        let mut v = vec![0.0; d];
        for a in &axes[k] {
            let z: f64 = StandardNormal.sample(r);
            for (vi, ai) in v.iter_mut().zip(a) {
                *vi += z * ai;
            }
        }
        v
    };
    let mut cur = draw(0, r);
    let mut count = 1usize;
    for k in 1..=tree.levels {
        let mut next = Vec::with_capacity(count * tree.m * d);
        for p in 0..count {
            let base = cur[p * d..(p + 1) * d].to_vec();
            for _ in 0..tree.m {
                let z = draw(k, r);
                next.extend(base.iter().zip(&z).map(|(a, b)| a + b));
            }
        }
        count *= tree.m;
        cur = next;
    }
    Ok(GremField { d, values: cur })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RpcEstimate {
    pub estimate: Estimate,
    /// Mean truncation indicator over replicas.
    pub truncation: f64,
}

/// `E log sum_alpha N(alpha) exp(g(Y(alpha)))` over independent cascades and
/// fields; the normalised weights absorb the subtraction of the log mass.
pub fn rpc_parisi_representation(
    x: &UnitPartition<f64>,
    q: &MonotoneChain<f64>,
    g: &dyn Terminal,
    m: usize,
    replicas: usize,
    seed: u64,
) -> Result<RpcEstimate> {
    if g.dim() != q.dim() {
        return Err(Error::DimensionMismatch {
            expected: q.dim(),
            found: g.dim(),
        });
    }
    if replicas < 2 {
        return Err(Error::InvalidArgument("need at least two replicas".into()));
    }
    let results: Vec<(f64, f64)> = (0..replicas as u64)
        .into_par_iter()
        .map(|i| {
            let tree = build_cascade(x, m, child_seed(seed, "rpc-tree", i))?;
            let mut r = rng(child_seed(seed, "rpc-field", i));
            let field = sample_grem_field(&tree, q, &mut r)?;
            let v = log_sum_exp(
                tree.weights
                    .iter()
                    .enumerate()
                    .map(|(j, w)| w.ln() + g.eval(field.leaf(j))),
            );
            Ok((v, tree.truncation))
        })
        .collect::<Result<_>>()?;
    let values: Vec<f64> = results.iter().map(|p| p.0).collect();
    Ok(RpcEstimate {
        estimate: Estimate::from_samples(&values),
        truncation: results.iter().map(|p| p.1).sum::<f64>() / replicas as f64,
    })
}

/// Empirical `E[Y(a^1) Y(a^2)^T]` grouped by `q_L`, from uniformly chosen
/// leaf pairs, one pair per field draw.
pub fn grem_covariance_check(
    x: &UnitPartition<f64>,
    q: &MonotoneChain<f64>,
    m: usize,
    pairs: usize,
    seed: u64,
) -> Result<Vec<(usize, Vec<Estimate>)>> {
    let n = x.levels();
    let d = q.dim();
    let tree = build_cascade(x, m, seed)?;
    let per: Vec<(usize, Vec<f64>)> = (0..pairs as u64)
        .into_par_iter()
        .map(|i| {
            let mut r = rng(child_seed(seed, "grem-pair", i));
            let field = sample_grem_field(&tree, q, &mut r)?;
            // Bias the draw so every overlap value is represented.
            let target = 1 + (i as usize % (n + 1));
            let a = r.random_range(0..tree.leaf_count());
            let ia = tree.multi_index(a);
            let mut ib = ia.clone();
            for (k, v) in ib.iter_mut().enumerate() {
                if k + 1 >= target {
                    *v = r.random_range(0..m);
                }
            }
            if target <= n {
                while ib[target - 1] == ia[target - 1] {
                    ib[target - 1] = r.random_range(0..m);
                }
            }
            let ql = lexicographic_overlap(&ia, &ib)?;
            let to_leaf = |idx: &[usize]| idx.iter().fold(0, |acc, &v| acc * m + v);
            let (ya, yb) = (field.leaf(to_leaf(&ia)), field.leaf(to_leaf(&ib)));
            let prod: Vec<f64> = (0..d * d).map(|e| ya[e / d] * yb[e % d]).collect();
            Ok((ql, prod))
        })
        .collect::<Result<_>>()?;
    Ok((1..=n + 1)
        .map(|ql| {
            let rows: Vec<&Vec<f64>> = per.iter().filter(|p| p.0 == ql).map(|p| &p.1).collect();
            let est = (0..d * d)
                .map(|e| Estimate::from_samples(&rows.iter().map(|r| r[e]).collect::<Vec<_>>()))
                .collect();
            (ql, est)
        })
        .collect())
}
