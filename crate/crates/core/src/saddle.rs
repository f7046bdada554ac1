//! The sup-inf driver: inner infimum of the local Parisi functional over
//! `(x, Q, Lambda)` and outer supremum over self-overlaps `U`.

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{local_parisi_f, phi_b, AprioriMeasure, EvalConfig, TerminalCondition};
use crate::gaussian::x0_closed_form;
use crate::matrix::{project_psd, sym_sqrt, PsdMatrix, SymMatrix};
use crate::optim::{golden_section, nelder_mead_restarts, Minimum, NelderMeadOptions};
use crate::order::{MonotoneChain, UnitPartition};
use crate::seeds::{child_seed, rng};

/// Admissible self-overlaps searched by the outer supremum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum UDomain {
    Fixed { u: Vec<Vec<f64>> },
    /// PSD matrices with operator norm at most `radius`.
    Ball { radius: f64 },
    /// Diagonal `U` with entries on a per-axis grid, refined locally.
    DiagonalGrid { axes: Vec<Vec<f64>> },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    General,
    /// Diagonal `U`, `Q` and `Lambda` for product measures; the functional
    /// splits into one-dimensional terms with a shared `x`.
    Diagonal,
}

#[derive(Clone, Debug)]
pub struct SaddleProblem {
    pub beta: f64,
    pub measure: AprioriMeasure,
    pub levels: usize,
    pub domain: UDomain,
    pub scenario: Scenario,
    pub hadamard: bool,
    pub eval: EvalConfig,
    pub options: NelderMeadOptions,
    pub restarts: usize,
    pub ascent_steps: usize,
    pub seed: u64,
}

impl SaddleProblem {
    pub fn new(beta: f64, measure: AprioriMeasure, levels: usize, domain: UDomain) -> Self {
        Self {
            beta,
            measure,
            levels,
            domain,
            scenario: Scenario::General,
            hadamard: false,
            eval: EvalConfig::default(),
            options: NelderMeadOptions {
                max_evals: 20_000,
                ftol: 1e-13,
                xtol: 1e-8,
                initial_step: 0.25,
            },
            restarts: 5,
            ascent_steps: 40,
            seed: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.measure.dim()
    }

    fn validate(&self) -> Result<()> {
        if self.levels == 0 {
            return Err(Error::InvalidArgument("the inner problem needs n >= 1".into()));
        }
        if self.restarts == 0 {
            return Err(Error::InvalidArgument("need at least one restart".into()));
        }
        if !(self.beta >= 0.0) {
            return Err(Error::InvalidArgument("beta must be nonnegative".into()));
        }
        self.eval.validate()
    }
}

/// Order parameter `(x_1..x_n, Q^(1)..Q^(n), Lambda)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SaddlePoint {
    pub x: Vec<f64>,
    pub q: Vec<SymMatrix<f64>>,
    pub lambda: SymMatrix<f64>,
}

fn tri(d: usize) -> usize {
    d * (d + 1) / 2
}

fn sym_from(v: &[f64], d: usize) -> SymMatrix<f64> {
    let mut idx = 0;
    let mut m = vec![vec![0.0; d]; d];
    for i in 0..d {
        for j in 0..=i {
            m[i][j] = v[idx];
            m[j][i] = v[idx];
            idx += 1;
        }
    }
    SymMatrix::from_rows(&m).expect("square")
}

/// `G G^T` for the lower-triangular `G` stored row by row.
fn gram_from(v: &[f64], d: usize) -> SymMatrix<f64> {
    let mut g = vec![vec![0.0; d]; d];
    let mut idx = 0;
    for (i, row) in g.iter_mut().enumerate() {
        for cell in row.iter_mut().take(i + 1) {
            *cell = v[idx];
            idx += 1;
        }
    }
    SymMatrix::from_fn(d, |a, b| (0..d).map(|k| g[a][k] * g[b][k]).sum())
}

fn sorted_x(theta: &[f64]) -> Vec<f64> {
    let mut x: Vec<f64> = theta.iter().map(|t| t.clamp(1e-6, 1.0)).collect();
    x.sort_by(f64::total_cmp);
    x
}

struct Layout {
    n: usize,
    d: usize,
    scenario: Scenario,
}

impl Layout {
    fn per_level(&self) -> usize {
        match self.scenario {
            Scenario::General => tri(self.d),
            Scenario::Diagonal => self.d,
        }
    }

    fn len(&self) -> usize {
        self.n + self.n * self.per_level() + self.per_level()
    }

    /// `A_k = sum_{j<=k} G_j G_j^T`, `P_k = (I + A_n)^{-1/2} A_k (I + A_n)^{-1/2}`,
    /// `Q^(k) = U^{1/2} P_k U^{1/2}`.
    fn decode(&self, theta: &[f64], u_half: &SymMatrix<f64>) -> SaddlePoint {
        let (n, d, p) = (self.n, self.d, self.per_level());
        let x = sorted_x(&theta[..n]);
        let mut a = SymMatrix::zeros(d);
        let mut acc = Vec::with_capacity(n);
        for k in 0..n {
            let block = &theta[n + k * p..n + (k + 1) * p];
            let inc = match self.scenario {
                Scenario::General => gram_from(block, d),
                Scenario::Diagonal => SymMatrix::from_diag(&block.iter().map(|g| g * g).collect::<Vec<_>>()),
            };
            a = &a + &inc;
            acc.push(a.clone());
        }
        let total = &SymMatrix::identity(d) + &a;
        let inv_half = total.spectral_map(|l| 1.0 / l.sqrt());
        let q = acc
            .iter()
            .map(|ak| {
                let pk = inv_half.to_square().mul(&ak.to_square()).mul(&inv_half.to_square());
                let m = u_half.to_square().mul(&pk).mul(&u_half.to_square());
                SymMatrix::from_fn(d, |i, j| 0.5 * (m.get(i, j) + m.get(j, i)))
            })
            .collect();
        let lv = &theta[n + n * p..];
        let lambda = match self.scenario {
            Scenario::General => sym_from(lv, d),
            Scenario::Diagonal => SymMatrix::from_diag(lv),
        };
        SaddlePoint { x, q, lambda }
    }

    /// Uniform `x`, `Q` steps of `U / (n + 1)`, `Lambda = 0`.
    fn initial(&self) -> Vec<f64> {
        let (n, d) = (self.n, self.d);
        let mut v: Vec<f64> = (1..=n).map(|k| k as f64 / (n + 1) as f64).collect();
        for _ in 0..n {
            match self.scenario {
                Scenario::General => {
                    for i in 0..d {
                        for j in 0..=i {
                            v.push(if i == j { 1.0 } else { 0.0 });
                        }
                    }
                }
                Scenario::Diagonal => v.extend(std::iter::repeat_n(1.0, d)),
            }
        }
        v.extend(std::iter::repeat_n(0.0, self.per_level()));
        v
    }
}

/// One-dimensional marginals of a product measure.
fn marginals(mu: &AprioriMeasure) -> Result<Vec<AprioriMeasure>> {
    let d = mu.dim();
    match mu {
        AprioriMeasure::Gaussian { c, h } => {
            for i in 0..d {
                for j in 0..d {
                    if i != j && c.get(i, j).abs() > 1e-12 {
                        return Err(Error::InvalidArgument(
                            "diagonal scenario needs a diagonal precision matrix".into(),
                        ));
                    }
                }
            }
            (0..d)
                .map(|v| AprioriMeasure::gaussian(SymMatrix::scalar(c.get(v, v)), vec![h[v]]))
                .collect()
        }
        AprioriMeasure::Discrete { points, weights } => {
            let total: f64 = weights.iter().sum();
            let mut out = Vec::with_capacity(d);
            let mut values: Vec<Vec<f64>> = Vec::with_capacity(d);
            let mut masses: Vec<Vec<f64>> = Vec::with_capacity(d);
            for v in 0..d {
                let mut vals: Vec<f64> = Vec::new();
                let mut ws: Vec<f64> = Vec::new();
                for (p, w) in points.iter().zip(weights) {
                    match vals.iter().position(|&a| a == p[v]) {
                        Some(i) => ws[i] += w,
                        None => {
                            vals.push(p[v]);
                            ws.push(*w);
                        }
                    }
                }
                values.push(vals);
                masses.push(ws);
            }
            let count: usize = values.iter().map(|v| v.len()).product();
            let scale = total.powi(d as i32 - 1);
            let product = count == points.len()
                && points.iter().zip(weights).all(|(p, w)| {
                    let prod: f64 = (0..d)
                        .map(|v| masses[v][values[v].iter().position(|&a| a == p[v]).expect("seen")])
                        .product();
                    (prod / scale - w).abs() <= 1e-12 * w.abs().max(1.0)
                });
            if !product {
                return Err(Error::InvalidArgument(
                    "diagonal scenario needs a product measure".into(),
                ));
            }
            // Spread the total mass evenly so the product of marginals is `mu`.
            let share = total.powf(1.0 / d as f64);
            for v in 0..d {
                let ws: Vec<f64> = masses[v].iter().map(|m| m / total * share).collect();
                out.push(AprioriMeasure::discrete(
                    values[v].iter().map(|&a| vec![a]).collect(),
                    ws,
                )?);
            }
            Ok(out)
        }
    }
}

/// `f(x, Q, U, Lambda)`; the Gaussian case uses the closed form of `X_0`.
pub fn saddle_objective(
    beta: f64,
    mu: &AprioriMeasure,
    u: &SymMatrix<f64>,
    point: &SaddlePoint,
    cfg: &EvalConfig,
) -> Result<f64> {
    let x = UnitPartition::with_ties(&point.x)?;
    let q = MonotoneChain::with_equal(point.q.clone(), u.clone())?;
    match mu {
        AprioriMeasure::Gaussian { c, h } => {
            let x0 = x0_closed_form(&x, &q, &point.lambda, c, h, beta)?;
            Ok(x0 - point.lambda.frobenius_inner(u)? - phi_b(&x, &q, beta))
        }
        AprioriMeasure::Discrete { .. } => {
            let tc = TerminalCondition::new(beta, point.lambda.clone(), mu.clone())?;
            Ok(local_parisi_f(&x, &q, &tc, cfg)?.value)
        }
    }
}

fn hadamard_penalty(u: &SymMatrix<f64>, q: &[SymMatrix<f64>]) -> f64 {
    let mut chain: Vec<SymMatrix<f64>> = vec![SymMatrix::zeros(u.dim())];
    chain.extend(q.iter().cloned());
    chain.push(u.clone());
    chain
        .windows(2)
        .map(|w| {
            let sq = |m: &SymMatrix<f64>| m.map(|v| v * v);
            (-(&sq(&w[1]) - &sq(&w[0])).min_eigenvalue()).max(0.0)
        })
        .sum::<f64>()
        * 1e3
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    /// Largest one-sided descent slope over the `Q^(k)` entries, per level.
    pub q_gradient: Vec<f64>,
    pub lambda_gradient: f64,
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SaddleResult {
    pub scenario: Scenario,
    pub beta: f64,
    pub levels: usize,
    pub u: Vec<Vec<f64>>,
    pub x: Vec<f64>,
    pub q: Vec<Vec<Vec<f64>>>,
    pub lambda: Vec<Vec<f64>>,
    pub inner_value: f64,
    /// Outer value (equal to `inner_value` for the reported `U`).
    pub value: f64,
    /// Optimum of every restart, the polish run last.
    pub restart_values: Vec<f64>,
    pub converged: bool,
    pub evals: usize,
    /// Best objective after each Nelder-Mead iteration of the winning run.
    pub trace: Vec<f64>,
    /// `(U, inner value)` for every outer evaluation.
    pub outer_log: Vec<(Vec<Vec<f64>>, f64)>,
    pub residual: Option<ResidualReport>,
    pub seed: u64,
    pub options: NelderMeadOptions,
}

impl SaddleResult {
    pub fn point(&self) -> Result<SaddlePoint> {
        Ok(SaddlePoint {
            x: self.x.clone(),
            q: self.q.iter().map(|m| SymMatrix::from_rows(m)).collect::<Result<_>>()?,
            lambda: SymMatrix::from_rows(&self.lambda)?,
        })
    }

    pub fn u_matrix(&self) -> Result<SymMatrix<f64>> {
        SymMatrix::from_rows(&self.u)
    }
}

fn evaluate_point(problem: &SaddleProblem, u: &SymMatrix<f64>, point: &SaddlePoint, parts: &Option<Vec<AprioriMeasure>>) -> f64 {
    let value = match parts {
        Some(marg) => {
            let mut total = 0.0;
            for (v, m) in marg.iter().enumerate() {
                let p = SaddlePoint {
                    x: point.x.clone(),
                    q: point.q.iter().map(|q| SymMatrix::scalar(q.get(v, v))).collect(),
                    lambda: SymMatrix::scalar(point.lambda.get(v, v)),
                };
                match saddle_objective(problem.beta, m, &SymMatrix::scalar(u.get(v, v)), &p, &problem.eval) {
                    Ok(f) => total += f,
                    Err(_) => return f64::INFINITY,
                }
            }
            total
        }
        None => saddle_objective(problem.beta, &problem.measure, u, point, &problem.eval).unwrap_or(f64::INFINITY),
    };
    if problem.hadamard {
        value + hadamard_penalty(u, &point.q)
    } else {
        value
    }
}

/// Minimises the local functional at fixed `U` from the default start and
/// `restarts - 1` random ones, then polishes the best.
pub fn inner_inf(u: &SymMatrix<f64>, problem: &SaddleProblem) -> Result<SaddleResult> {
    problem.validate()?;
    let d = problem.dim();
    if u.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: u.dim(),
        });
    }
    let u_psd = PsdMatrix::new(u.clone())?;
    let parts = match problem.scenario {
        Scenario::General => None,
        Scenario::Diagonal => {
            if (0..d).any(|i| (0..d).any(|j| i != j && u.get(i, j) != 0.0)) {
                return Err(Error::InvalidArgument("diagonal scenario needs a diagonal U".into()));
            }
            Some(marginals(&problem.measure)?)
        }
    };
    let layout = Layout {
        n: problem.levels,
        d,
        scenario: problem.scenario,
    };
    let u_half = sym_sqrt(&u_psd);
    let objective = |theta: &[f64]| evaluate_point(problem, u, &layout.decode(theta, &u_half), &parts);
    let base = layout.initial();
    let mut r = rng(child_seed(problem.seed, "saddle-restart", 0));
    let normal = Normal::new(0.0, 0.5).expect("valid");
    let mut starts = vec![base.clone()];
    for _ in 1..problem.restarts {
        let mut s = base.clone();
        for v in s.iter_mut().take(layout.n) {
            *v = r.random_range(0.02..1.0);
        }
        let lam_start = layout.len() - layout.per_level();
        for v in s[layout.n..lam_start].iter_mut() {
            *v += normal.sample(&mut r);
        }
        starts.push(s);
    }
    let (best, runs): (Minimum, Vec<Minimum>) = nelder_mead_restarts(&objective, &starts, &problem.options);
    if !best.value.is_finite() {
        return Err(Error::NonConvergence("no feasible order parameter found".into()));
    }
    let point = layout.decode(&best.x, &u_half);
    Ok(SaddleResult {
        scenario: problem.scenario,
        beta: problem.beta,
        levels: problem.levels,
        u: u.rows(),
        x: point.x.clone(),
        q: point.q.iter().map(|m| m.rows()).collect(),
        lambda: point.lambda.rows(),
        inner_value: best.value,
        value: best.value,
        restart_values: runs.iter().map(|m| m.value).collect(),
        converged: best.converged,
        evals: runs.iter().map(|m| m.evals).sum(),
        trace: best.trace.clone(),
        outer_log: vec![(u.rows(), best.value)],
        residual: None,
        seed: problem.seed,
        options: problem.options,
    })
}

fn project_ball(m: &SymMatrix<f64>, radius: f64) -> SymMatrix<f64> {
    let p = project_psd(m);
    p.spectral_map(|l| l.clamp(0.0, radius))
}

/// Maximises `inner_inf` over the admissible `U`.
pub fn outer_sup(problem: &SaddleProblem) -> Result<SaddleResult> {
    problem.validate()?;
    let d = problem.dim();
    let mut result = match &problem.domain {
        UDomain::Fixed { u } => inner_inf(&SymMatrix::from_rows(u)?, problem)?,
        UDomain::DiagonalGrid { axes } => {
            if axes.len() != d || axes.iter().any(|a| a.is_empty() || a.iter().any(|&v| !(v > 0.0))) {
                return Err(Error::InvalidArgument("need one nonempty positive grid per axis".into()));
            }
            let total: usize = axes.iter().map(|a| a.len()).product();
            let points: Vec<Vec<f64>> = (0..total)
                .map(|mut idx| {
                    axes.iter()
                        .map(|a| {
                            let v = a[idx % a.len()];
                            idx /= a.len();
                            v
                        })
                        .collect()
                })
                .collect();
            let values: Vec<Result<f64>> = points
                .par_iter()
                .map(|p| Ok(inner_inf(&SymMatrix::from_diag(p), problem)?.inner_value))
                .collect();
            let mut log = Vec::new();
            let mut best: Option<(Vec<f64>, f64)> = None;
            for (p, v) in points.iter().zip(values) {
                let v = v?;
                log.push((SymMatrix::from_diag(p).rows(), v));
                if best.as_ref().is_none_or(|b| v > b.1) {
                    best = Some((p.clone(), v));
                }
            }
            let (mut u_best, _) = best.expect("nonempty grid");
            // Coordinate-wise golden refinement between grid neighbours.
            for _ in 0..2 {
                for (a, axis) in axes.iter().enumerate() {
                    let mut sorted = axis.clone();
                    sorted.sort_by(f64::total_cmp);
                    let pos = sorted.partition_point(|&v| v < u_best[a]);
                    let lo = if pos == 0 { sorted[0] } else { sorted[pos - 1] };
                    let hi = sorted[(pos + 1).min(sorted.len() - 1)];
                    if hi <= lo {
                        continue;
                    }
                    let f = |t: f64| {
                        let mut p = u_best.clone();
                        p[a] = t;
                        -inner_inf(&SymMatrix::from_diag(&p), problem).map_or(f64::NEG_INFINITY, |r| r.inner_value)
                    };
                    let (t, neg) = golden_section(f, lo, hi, 1e-7);
                    let v = -neg;
                    let mut p = u_best.clone();
                    p[a] = t;
                    log.push((SymMatrix::from_diag(&p).rows(), v));
                    u_best = p;
                }
            }
            let mut r = inner_inf(&SymMatrix::from_diag(&u_best), problem)?;
            log.push((r.u.clone(), r.inner_value));
            r.outer_log = log;
            r
        }
        UDomain::Ball { radius } => {
            if !(*radius > 0.0) {
                return Err(Error::InvalidArgument("ball radius must be positive".into()));
            }
            let mut u = SymMatrix::identity(d).scale(0.5 * radius);
            let mut cur = inner_inf(&u, problem)?;
            let mut log = vec![(u.rows(), cur.inner_value)];
            let mut step = 0.5;
            let h = 1e-4 * radius;
            for _ in 0..problem.ascent_steps {
                let mut grad = SymMatrix::zeros(d);
                for i in 0..d {
                    for j in 0..=i {
                        let e = SymMatrix::from_fn(d, |a, b| if (a, b) == (i, j) || (a, b) == (j, i) { 1.0 } else { 0.0 });
                        let plus = project_ball(&(&u + &e.scale(h)), *radius);
                        let minus = project_ball(&(&u - &e.scale(h)), *radius);
                        let fp = inner_inf(&plus, problem).map_or(f64::NEG_INFINITY, |r| r.inner_value);
                        let fm = inner_inf(&minus, problem).map_or(f64::NEG_INFINITY, |r| r.inner_value);
                        let span = (&plus - &minus).frobenius_inner(&e)?;
                        let g = if span > 0.0 && fp.is_finite() && fm.is_finite() { (fp - fm) / span } else { 0.0 };
                        grad = &grad + &e.scale(g);
                    }
                }
                let mut moved = false;
                while step > 1e-8 {
                    let cand = project_ball(&(&u + &grad.scale(step)), *radius);
                    if (&cand - &u).frobenius_norm() < 1e-9 {
                        break;
                    }
                    if let Ok(r) = inner_inf(&cand, problem) {
                        log.push((cand.rows(), r.inner_value));
                        if r.inner_value > cur.inner_value {
                            u = cand;
                            cur = r;
                            moved = true;
                            step *= 1.5;
                            break;
                        }
                    }
                    step *= 0.5;
                }
                if !moved {
                    break;
                }
            }
            cur.outer_log = log;
            cur
        }
    };
    result.value = result.inner_value;
    Ok(result)
}

/// Finite-difference gradient of `f` in the `Q^(k)` and `Lambda` entries at
/// the reported minimiser. Where a chain constraint is active only feasible
/// directions count, and only descent slopes enter the residual.
pub fn stationarity_residual(result: &SaddleResult, problem: &SaddleProblem) -> Result<ResidualReport> {
    let u = result.u_matrix()?;
    let p0 = result.point()?;
    let d = u.dim();
    let f = |p: &SaddlePoint| saddle_objective(problem.beta, &problem.measure, &u, p, &problem.eval);
    let f0 = f(&p0)?;
    let scale = 1.0 + u.operator_norm();
    let h = 1e-5 * scale;
    let dirs: Vec<SymMatrix<f64>> = (0..d)
        .flat_map(|i| (0..=i).map(move |j| (i, j)))
        .map(|(i, j)| SymMatrix::from_fn(d, |a, b| if (a, b) == (i, j) || (a, b) == (j, i) { 1.0 } else { 0.0 }))
        .collect();
    let n = p0.q.len();
    let mut chain = vec![SymMatrix::zeros(d)];
    chain.extend(p0.q.iter().cloned());
    chain.push(u.clone());
    let tol = 1e-12 * scale;
    let mut q_grad = Vec::with_capacity(n);
    for k in 1..=n {
        let mut worst: f64 = 0.0;
        for e in &dirs {
            let feasible = |s: f64| {
                let qk = &chain[k] + &e.scale(s * h);
                (&qk - &chain[k - 1]).min_eigenvalue() >= -tol && (&chain[k + 1] - &qk).min_eigenvalue() >= -tol
            };
            let at = |s: f64| {
                let mut p = p0.clone();
                p.q[k - 1] = &p.q[k - 1] + &e.scale(s * h);
                f(&p)
            };
            let slope = match (feasible(1.0), feasible(-1.0)) {
                (true, true) => ((at(1.0)? - at(-1.0)?) / (2.0 * h)).abs(),
                (true, false) => (-(at(1.0)? - f0) / h).max(0.0),
                (false, true) => ((f0 - at(-1.0)?) / h).max(0.0),
                (false, false) => 0.0,
            };
            worst = worst.max(slope);
        }
        q_grad.push(worst);
    }
    let mut lam: f64 = 0.0;
    for e in &dirs {
        let at = |s: f64| {
            let mut p = p0.clone();
            p.lambda = &p.lambda + &e.scale(s * h);
            f(&p)
        };
        lam = lam.max(((at(1.0)? - at(-1.0)?) / (2.0 * h)).abs());
    }
    let residual = q_grad.iter().copied().fold(lam, f64::max);
    Ok(ResidualReport {
        q_gradient: q_grad,
        lambda_gradient: lam,
        residual,
    })
}

/// Re-evaluates `f` at the reported minimiser with another configuration.
pub fn reevaluate(result: &SaddleResult, problem: &SaddleProblem, cfg: &EvalConfig) -> Result<crate::stats::Estimate> {
    let u = result.u_matrix()?;
    let p = result.point()?;
    let x = UnitPartition::with_ties(&p.x)?;
    let q = MonotoneChain::with_equal(p.q.clone(), u)?;
    let tc = TerminalCondition::new(problem.beta, p.lambda.clone(), problem.measure.clone())?;
    local_parisi_f(&x, &q, &tc, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::{equivalence_check, f_closed};
    use approx::assert_abs_diff_eq;

    fn gaussian(c: &[f64]) -> AprioriMeasure {
        AprioriMeasure::gaussian(SymMatrix::from_diag(c), vec![0.0; c.len()]).unwrap()
    }

    #[test]
    fn decode_gives_monotone_chain() {
        let layout = Layout { n: 3, d: 2, scenario: Scenario::General };
        let u = SymMatrix::from_rows(&[vec![1.0, 0.3], vec![0.3, 0.6]]).unwrap();
        let uh = sym_sqrt(&PsdMatrix::new(u.clone()).unwrap());
        let mut r = rng(1);
        for _ in 0..50 {
            let theta: Vec<f64> = (0..layout.len()).map(|_| r.random_range(-1.5..1.5)).collect();
            let p = layout.decode(&theta, &uh);
            assert!(p.x.windows(2).all(|w| w[0] <= w[1]));
            assert!(MonotoneChain::with_equal(p.q.clone(), u.clone()).is_ok());
        }
        let p = layout.decode(&layout.initial(), &uh);
        for (k, q) in p.q.iter().enumerate() {
            let expect = u.scale((k + 1) as f64 / 4.0);
            assert!((q - &expect).frobenius_norm() < 1e-12);
        }
        assert_eq!(p.x, vec![0.25, 0.5, 0.75]);
    }

    #[test]
    fn product_marginals() {
        let m = marginals(&AprioriMeasure::hypercube(2)).unwrap();
        assert_eq!(m.len(), 2);
        let total: f64 = m.iter().map(|v| v.log_mass()).sum();
        assert_abs_diff_eq!(total, 4f64.ln(), epsilon = 1e-12);
        let skew = AprioriMeasure::discrete(vec![vec![1.0, 1.0], vec![-1.0, -1.0]], vec![1.0, 1.0]).unwrap();
        assert!(marginals(&skew).is_err());
    }

    #[test]
    fn beta_zero_minimiser() {
        let mut p = SaddleProblem::new(0.0, AprioriMeasure::hypercube(2), 1, UDomain::Fixed { u: vec![vec![1.0, 0.0], vec![0.0, 1.0]] });
        p.eval = EvalConfig::gauss_hermite(8);
        let r = outer_sup(&p).unwrap();
        assert_abs_diff_eq!(r.value, 4f64.ln(), epsilon = 1e-8);
        let lam = SymMatrix::from_rows(&r.lambda).unwrap();
        assert!(lam.get(0, 1).abs() < 1e-3, "{lam:?}");
        let analytic = SaddleResult {
            lambda: SymMatrix::zeros(2).rows(),
            ..r.clone()
        };
        assert!(stationarity_residual(&analytic, &p).unwrap().residual <= 1e-6);
    }

    #[test]
    fn gaussian_inner_matches_closed_form() {
        let p = SaddleProblem::new(1.0, gaussian(&[3.0]), 1, UDomain::Fixed { u: vec![vec![0.5]] });
        let r = outer_sup(&p).unwrap();
        let eq = equivalence_check(3.0, 0.5, 0.0, 1.0, 1, 0).unwrap();
        assert!((2.0 * r.value - eq.inf_p).abs() <= 1e-3, "{} vs {}", 2.0 * r.value, eq.inf_p);
        assert!((2.0 * r.value - f_closed(3.0, 0.5, 1.0)).abs() <= 1e-3);
        let res = stationarity_residual(&r, &p).unwrap();
        assert!(res.residual <= 1e-4, "{res:?}");
        assert!(r.trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn extra_level_never_raises_the_infimum() {
        let mut p = SaddleProblem::new(1.2, AprioriMeasure::rademacher(), 1, UDomain::Fixed { u: vec![vec![1.0]] });
        p.eval = EvalConfig::gauss_hermite(24);
        let one = outer_sup(&p).unwrap().value;
        p.levels = 2;
        let two = outer_sup(&p).unwrap().value;
        assert!(two <= one + 2e-3, "{two} > {one}");
    }

    #[test]
    fn outer_recovers_u_star() {
        let mut p = SaddleProblem::new(1.0, gaussian(&[3.0]), 1, UDomain::DiagonalGrid {
            axes: vec![(2..=10).map(|k| k as f64 / 10.0).collect()],
        });
        p.restarts = 2;
        let r = outer_sup(&p).unwrap();
        assert!((r.u[0][0] - 0.5).abs() < 1e-3, "{:?}", r.u);
        assert!((2.0 * r.value - 0.1554651).abs() < 1e-6);
    }

    #[test]
    fn ball_radius_beyond_optimum_is_idle() {
        let mut p = SaddleProblem::new(1.0, gaussian(&[3.0]), 1, UDomain::Ball { radius: 0.6 });
        p.restarts = 2;
        let a = outer_sup(&p).unwrap();
        p.domain = UDomain::Ball { radius: 1.0 };
        let b = outer_sup(&p).unwrap();
        assert!((a.value - b.value).abs() < 1e-5, "{} {}", a.value, b.value);
        assert!((2.0 * a.value - 0.1554651).abs() < 1e-4);
    }

    #[test]
    fn diagonal_and_general_agree() {
        let u = vec![vec![0.5, 0.0], vec![0.0, 0.5]];
        let mut p = SaddleProblem::new(1.0, gaussian(&[3.0, 4.0]), 1, UDomain::Fixed { u });
        p.scenario = Scenario::Diagonal;
        let diag = outer_sup(&p).unwrap();
        let target = f_closed(3.0, 0.5, 1.0) + f_closed(4.0, 0.5, 1.0);
        assert!((2.0 * diag.value - target).abs() <= 2e-3);
        p.scenario = Scenario::General;
        let general = outer_sup(&p).unwrap();
        assert!(general.value >= diag.value - 1e-6, "{} < {}", general.value, diag.value);
    }

    #[test]
    fn deterministic_and_reproducible() {
        let mut p = SaddleProblem::new(0.8, AprioriMeasure::rademacher(), 1, UDomain::Fixed { u: vec![vec![1.0]] });
        p.eval = EvalConfig::monte_carlo(64, 8, 3);
        p.restarts = 2;
        let a = outer_sup(&p).unwrap();
        let b = outer_sup(&p).unwrap();
        assert_eq!(a, b);
        let own = reevaluate(&a, &p, &p.eval).unwrap();
        assert_abs_diff_eq!(own.value, a.value, epsilon = 1e-12);
        let again = reevaluate(&a, &p, &EvalConfig::monte_carlo(64, 8, 99)).unwrap();
        let se = (own.std_error.powi(2) + again.std_error.powi(2)).sqrt();
        assert!((again.value - a.value).abs() <= 3.0 * se, "{again:?} vs {own:?}");
        let json = serde_json::to_string(&a).unwrap();
        let back: SaddleResult = serde_json::from_str(&json).unwrap();
        assert_eq!(back, a);
    }
}
