//! Closed forms for Gaussian a priori spins.

use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{Square, SymMatrix};
use crate::optim::{golden_section, nelder_mead_restarts, NelderMeadOptions};
use crate::order::{MonotoneChain, UnitPartition};
use crate::scalar::Scalar;

/// Smallest eigenvalue admitted for `D` and effective matrices.
pub const FEASIBILITY_MARGIN: f64 = 1e-8;

fn check_pd<T: Scalar>(m: &SymMatrix<T>, what: &str) -> Result<()> {
    let lmin = m.min_eigenvalue();
    if lmin < T::lit(FEASIBILITY_MARGIN) {
        return Err(Error::GaussianInfeasible(format!(
            "{what} has smallest eigenvalue {:e}",
            lmin.to_f64_lossy()
        )));
    }
    Ok(())
}

fn check_shapes<T: Scalar>(
    x: &UnitPartition<T>,
    q: &MonotoneChain<T>,
    lambda: &SymMatrix<T>,
    c: &SymMatrix<T>,
) -> Result<()> {
    if x.levels() != q.levels() {
        return Err(Error::InvalidArgument(format!(
            "partition has {} levels, chain has {}",
            x.levels(),
            q.levels()
        )));
    }
    for m in [lambda, c] {
        if m.dim() != q.dim() {
            return Err(Error::DimensionMismatch {
                expected: q.dim(),
                found: m.dim(),
            });
        }
    }
    Ok(())
}

/// `[D^(1), ..., D^(n+1)]` with `D^(n+1) = C` and
/// `D^(k) = C - Lambda - 2 beta^2 sum_{l=k}^n x_l Delta Q^(l)`.
pub fn d_matrices<T: Scalar>(
    x: &UnitPartition<T>,
    q: &MonotoneChain<T>,
    lambda: &SymMatrix<T>,
    c: &SymMatrix<T>,
    beta: T,
) -> Result<Vec<SymMatrix<T>>> {
    check_shapes(x, q, lambda, c)?;
    let n = x.levels();
    let inc = q.increments();
    let b2 = T::lit(2.0) * beta * beta;
    let mut out = vec![c.clone()];
    let mut acc = c - lambda;
    for k in (1..=n).rev() {
        acc = &acc - &inc[k].scale(b2 * x.get(k));
        check_pd(&acc, &format!("D^({k})"))?;
        out.push(acc.clone());
    }
    out.reverse();
    Ok(out)
}

/// `[E^(1), ..., E^(n+1)]` with `E^(n+1) = C - 2 Lambda` and
/// `E^(k) = E^(k+1) - 2 beta^2 x_k Delta Q^(k)`: the precision matrices of
/// the Gaussian integrals met by the recursion.
pub fn effective_matrices<T: Scalar>(
    x: &UnitPartition<T>,
    q: &MonotoneChain<T>,
    lambda: &SymMatrix<T>,
    c: &SymMatrix<T>,
    beta: T,
) -> Result<Vec<SymMatrix<T>>> {
    check_shapes(x, q, lambda, c)?;
    let n = x.levels();
    let inc = q.increments();
    let b2 = T::lit(2.0) * beta * beta;
    let mut acc = c - &lambda.scale(T::lit(2.0));
    check_pd(&acc, "C - 2 Lambda")?;
    let mut out = vec![acc.clone()];
    for k in (1..=n).rev() {
        acc = &acc - &inc[k].scale(b2 * x.get(k));
        check_pd(&acc, &format!("E^({k})"))?;
        out.push(acc.clone());
    }
    out.reverse();
    Ok(out)
}

/// `X_0` for the Gaussian density with precision `C` and field `h`, with
/// terminal `g(y) = log int exp(sqrt(2) beta <y,s> + <Lambda s,s>) dmu(s)`.
pub fn x0_closed_form<T: Scalar>(
    x: &UnitPartition<T>,
    q: &MonotoneChain<T>,
    lambda: &SymMatrix<T>,
    c: &SymMatrix<T>,
    h: &[T],
    beta: T,
) -> Result<T> {
    if h.len() != c.dim() {
        return Err(Error::DimensionMismatch {
            expected: c.dim(),
            found: h.len(),
        });
    }
    let e = effective_matrices(x, q, lambda, c, beta)?;
    let n = x.levels();
    let half = T::lit(0.5);
    let mut v = half * (c.log_det_pd()? - e[n].log_det_pd()?);
    for l in 1..=n {
        v = v + half / x.get(l) * (e[l].log_det_pd()? - e[l - 1].log_det_pd()?);
    }
    let e1_inv = e[0].inverse_pd()?;
    let dq0 = q.get(1);
    v = v + beta * beta * e1_inv.frobenius_inner(dq0)? + half * e1_inv.quad_form(h);
    Ok(v)
}

fn check_scalar_path<T: Scalar>(x: &[T], q: &[T], u: T) -> Result<()> {
    if x.len() != q.len() {
        return Err(Error::InvalidArgument(format!(
            "{} jump times, {} values",
            x.len(),
            q.len()
        )));
    }
    UnitPartition::with_ties(x)?;
    let mut prev = T::zero();
    for &v in q.iter().chain(std::iter::once(&u)) {
        if !(v >= prev) {
            return Err(Error::InvalidChain("scalar chain must be nondecreasing from 0".into()));
        }
        prev = v;
    }
    Ok(())
}

/// `d^(1..=n+1)` for the scalar functional; `d^(n+1) = c`.
fn scalar_d<T: Scalar>(x: &[T], q: &[T], lambda: T, c: T, u: T, beta: T) -> Vec<T> {
    let n = x.len();
    let b2 = T::lit(2.0) * beta * beta;
    let mut d = vec![c; n + 1];
    let mut acc = c - lambda;
    for k in (0..n).rev() {
        let next = if k + 1 < n { q[k + 1] } else { u };
        acc = acc - b2 * x[k] * (next - q[k]);
        d[k] = acc;
    }
    d
}

/// One-dimensional Parisi functional for the Gaussian density; `x` and `q`
/// hold `x_1..x_n` and `q^(1)..q^(n)`.
pub fn parisi_1d<T: Scalar>(x: &[T], q: &[T], lambda: T, c: T, u: T, h: T, beta: T) -> Result<T> {
    check_scalar_path(x, q, u)?;
    let n = x.len();
    let d = scalar_d(x, q, lambda, c, u, beta);
    if let Some(v) = d.iter().find(|&&v| !(v > T::zero())) {
        return Err(Error::GaussianInfeasible(format!(
            "d-scalar {:e} not positive",
            v.to_f64_lossy()
        )));
    }
    let b2 = beta * beta;
    let q1 = if n > 0 { q[0] } else { u };
    let mut v = -lambda * u + (T::lit(2.0) * b2 * q1 + h * h) / d[0];
    for l in 0..n {
        v = v + (d[l + 1] / d[l]).ln() / x[l];
    }
    for l in 0..n {
        let next = if l + 1 < n { q[l + 1] } else { u };
        v = v - b2 * x[l] * (next * next - q[l] * q[l]);
    }
    Ok(v)
}

/// `s^(k) = sum_{l=k}^n x_l (q^(l+1) - q^(l))` for `k = 1..=n`.
pub fn cs_s<T: Scalar>(x: &[T], q: &[T], u: T) -> Vec<T> {
    let n = x.len();
    let mut s = vec![T::zero(); n];
    let mut acc = T::zero();
    for k in (0..n).rev() {
        let next = if k + 1 < n { q[k + 1] } else { u };
        acc = acc + x[k] * (next - q[k]);
        s[k] = acc;
    }
    s
}

/// Crisanti-Sommers functional; requires `n >= 1` and `u > q^(n)`.
pub fn cs_functional<T: Scalar>(x: &[T], q: &[T], c: T, u: T, h: T, beta: T) -> Result<T> {
    check_scalar_path(x, q, u)?;
    let n = x.len();
    if n == 0 {
        return Err(Error::InvalidArgument("Crisanti-Sommers functional needs n >= 1".into()));
    }
    if !(u > q[n - 1]) {
        return Err(Error::InvalidArgument(format!(
            "u = {} must exceed q^(n) = {}",
            u.to_f64_lossy(),
            q[n - 1].to_f64_lossy()
        )));
    }
    let s = cs_s(x, q, u);
    if s.iter().any(|&v| !(v > T::zero())) {
        return Err(Error::InvalidArgument("s-values must be positive".into()));
    }
    let b2 = beta * beta;
    let mut v = T::one() - c * u + h * h * s[0] + q[0] / s[0];
    for l in 0..n - 1 {
        v = v + (s[l] / s[l + 1]).ln() / x[l];
    }
    v = v + (c * (u - q[n - 1])).ln();
    for l in 0..n {
        let next = if l + 1 < n { q[l + 1] } else { u };
        v = v + b2 * x[l] * (next * next - q[l] * q[l]);
    }
    Ok(v)
}

/// `sqrt(2) / (2 beta)`, infinite at `beta = 0`.
pub fn threshold<T: Scalar>(beta: T) -> T {
    if beta == T::zero() {
        T::infinity()
    } else {
        T::lit(std::f64::consts::SQRT_2) / (T::lit(2.0) * beta)
    }
}

/// Two-clause local value for one Gaussian coordinate.
pub fn f_closed<T: Scalar>(c: T, u: T, beta: T) -> T {
    let one = T::one();
    if u <= threshold(beta) {
        beta * beta * u * u + (c * u).ln() - c * u + one
    } else {
        let two = T::lit(2.0);
        (two * T::lit(std::f64::consts::SQRT_2) * beta - c) * u + (c / beta).ln()
            - T::lit(0.5) * (one + two.ln())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    LowU,
    HighU,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RsSolution<T> {
    pub q_star: T,
    pub u_star: Option<T>,
    pub regime: Regime,
}

pub fn q_star<T: Scalar>(u: T, beta: T) -> RsSolution<T> {
    let t = threshold(beta);
    if u <= t {
        RsSolution {
            q_star: T::zero(),
            u_star: None,
            regime: Regime::LowU,
        }
    } else {
        RsSolution {
            q_star: u - t,
            u_star: None,
            regime: Regime::HighU,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum UStar<T> {
    Attained { u: T, value: T },
    /// `c < 2 sqrt(2) beta`: the supremum over `u` is infinite.
    Divergent,
}

pub fn u_star<T: Scalar>(c: T, beta: T) -> UStar<T> {
    let two = T::lit(2.0);
    let crit = two * T::lit(std::f64::consts::SQRT_2) * beta;
    if c < crit {
        return UStar::Divergent;
    }
    let near = c - crit < T::lit(1e-4) * c;
    let disc = if near { (c - crit) * (c + crit) } else { c * c - T::lit(8.0) * beta * beta }.max(T::zero());
    let u = two / (c + disc.sqrt());
    UStar::Attained {
        u,
        value: beta * beta * u * u + (c * u).ln() - c * u + T::one(),
    }
}

/// Gaussian problem with `C` and `U` diagonal in the same basis `O`.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianSpec<T> {
    pub c: Vec<T>,
    pub u: Vec<T>,
    pub basis: Square<T>,
    pub h: Vec<T>,
    pub beta: T,
}

impl<T: Scalar> GaussianSpec<T> {
    pub fn new(c: Vec<T>, u: Vec<T>, basis: Square<T>, h: Vec<T>, beta: T) -> Result<Self> {
        let d = c.len();
        if d == 0 || u.len() != d || h.len() != d || basis.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: u.len(),
            });
        }
        if c.iter().chain(&u).any(|&v| !(v > T::zero())) {
            return Err(Error::InvalidArgument("eigenvalues of C and U must be positive".into()));
        }
        if !basis.is_orthogonal(T::lit(1e-12).max(T::epsilon() * T::lit(16.0))) {
            return Err(Error::InvalidArgument("basis is not orthogonal".into()));
        }
        if !(beta >= T::zero()) {
            return Err(Error::InvalidArgument("beta must be >= 0".into()));
        }
        Ok(Self { c, u, basis, h, beta })
    }

    pub fn diagonal(c: Vec<T>, u: Vec<T>, beta: T) -> Result<Self> {
        let d = c.len();
        Self::new(c, u, Square::identity(d), vec![T::zero(); d], beta)
    }

    pub fn dim(&self) -> usize {
        self.c.len()
    }

    pub fn c_matrix(&self) -> SymMatrix<T> {
        SymMatrix::from_diag(&self.c)
            .conjugate(&self.basis)
            .expect("dimensions checked")
    }

    pub fn u_matrix(&self) -> SymMatrix<T> {
        SymMatrix::from_diag(&self.u)
            .conjugate(&self.basis)
            .expect("dimensions checked")
    }
}

/// `sum_v f_closed(c_v, u_v, beta)`; requires `h = 0`.
pub fn local_parisi_value<T: Scalar>(spec: &GaussianSpec<T>) -> Result<T> {
    if spec.h.iter().any(|&v| v != T::zero()) {
        return Err(Error::InvalidArgument("closed form requires h = 0".into()));
    }
    Ok(spec
        .c
        .iter()
        .zip(&spec.u)
        .fold(T::zero(), |acc, (&c, &u)| acc + f_closed(c, u, spec.beta)))
}

/// One row of the replica-symmetric table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RsRow {
    pub c: f64,
    pub u: f64,
    pub beta: f64,
    pub q_star: f64,
    pub value: f64,
    pub regime: Regime,
}

pub fn rs_table(cs: &[f64], us: &[f64], beta: f64) -> Vec<RsRow> {
    cs.iter()
        .flat_map(|&c| {
            us.iter().map(move |&u| {
                let rs = q_star(u, beta);
                RsRow {
                    c,
                    u,
                    beta,
                    q_star: rs.q_star,
                    value: f_closed(c, u, beta),
                    regime: rs.regime,
                }
            })
        })
        .collect()
}

/// Optimiser point of a scalar functional.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalarOptimum {
    pub x: Vec<f64>,
    pub q: Vec<f64>,
    pub lambda: Option<f64>,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub n: usize,
    pub inf_p: f64,
    pub inf_cs: f64,
    pub gap: f64,
    pub p_optimum: ScalarOptimum,
    pub cs_optimum: ScalarOptimum,
    pub converged: bool,
}

/// Monotone `q^(1) <= .. <= q^(n) < u` from unconstrained factors.
fn q_from_params(g: &[f64], u: f64) -> Vec<f64> {
    let mut acc = 0.0;
    let a: Vec<f64> = g
        .iter()
        .map(|v| {
            acc += v * v;
            acc
        })
        .collect();
    let total = 1.0 + acc;
    a.iter().map(|v| u * v / total).collect()
}

/// Inverse of `q_from_params`.
fn params_from_q(q: &[f64], u: f64) -> Vec<f64> {
    let last = *q.last().unwrap_or(&0.0);
    let total = 1.0 / (1.0 - last / u);
    let mut prev = 0.0;
    q.iter()
        .map(|&v| {
            let a = v / u * total;
            let g = (a - prev).max(0.0).sqrt();
            prev = a;
            g
        })
        .collect()
}

/// `x_1 <= .. <= x_{n-1}` in `[1e-6, 1]`, with `x_n = 1` appended.
fn x_from_params(theta: &[f64]) -> Vec<f64> {
    let mut x: Vec<f64> = theta.iter().map(|t| t.clamp(1e-6, 1.0)).collect();
    x.sort_by(f64::total_cmp);
    x.push(1.0);
    x
}

/// `inf_lambda` of the one-level functional at fixed `q`, by golden section
/// over `d^(1)`, which is convex.
fn p_inner_lambda(q: f64, c: f64, u: f64, h: f64, beta: f64) -> (f64, f64) {
    let b2 = beta * beta;
    let shift = c - 2.0 * b2 * (u - q);
    let a = 2.0 * b2 * q + h * h;
    let d_star = (1.0 + (1.0 + 4.0 * u * a).sqrt()) / (2.0 * u);
    let f = |d: f64| {
        parisi_1d(&[1.0], &[q], shift - d, c, u, h, beta).unwrap_or(f64::INFINITY)
    };
    let (d, v) = golden_section(f, FEASIBILITY_MARGIN, 4.0 * d_star + 1.0, 1e-12 * (1.0 + d_star));
    (shift - d, v)
}

/// Minimises the one-dimensional Parisi and Crisanti-Sommers functionals
/// with `n` levels (`x_n` pinned at 1) and reports the gap.
pub fn equivalence_check(c: f64, u: f64, h: f64, beta: f64, n: usize, seed: u64) -> Result<EquivalenceReport> {
    if n == 0 {
        return Err(Error::InvalidArgument("equivalence check needs n >= 1".into()));
    }
    if !(c > 0.0 && u > 0.0 && beta >= 0.0) {
        return Err(Error::InvalidArgument("need c, u > 0 and beta >= 0".into()));
    }
    let qmax = u * (1.0 - 1e-9);
    let (q1, _) = golden_section(|q| p_inner_lambda(q, c, u, h, beta).1, 0.0, qmax, 1e-12);
    let (lambda1, p1) = p_inner_lambda(q1, c, u, h, beta);
    let (q1cs, cs1) = golden_section(
        |q| cs_functional(&[1.0], &[q], c, u, h, beta).unwrap_or(f64::INFINITY),
        0.0,
        qmax,
        1e-12,
    );
    let mut p_opt = ScalarOptimum {
        x: vec![1.0],
        q: vec![q1],
        lambda: Some(lambda1),
        value: p1,
    };
    let mut cs_opt = ScalarOptimum {
        x: vec![1.0],
        q: vec![q1cs],
        lambda: None,
        value: cs1,
    };
    let mut converged = true;
    if n > 1 {
        let opts = NelderMeadOptions {
            max_evals: 40_000,
            ftol: 1e-14,
            xtol: 1e-10,
            initial_step: 0.2,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut starts_cs: Vec<Vec<f64>> = Vec::new();
        let mut starts_p: Vec<Vec<f64>> = Vec::new();
        for r in 0..5 {
            let theta: Vec<f64> = (1..n).map(|k| k as f64 / n as f64).collect();
            let q: Vec<f64> = if r == 0 {
                vec![q1; n]
            } else {
                let mut q: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..0.9) * u).collect();
                q.sort_by(f64::total_cmp);
                q
            };
            let theta: Vec<f64> = if r == 0 {
                theta
            } else {
                (1..n).map(|_| rng.random_range(0.05..1.0)).collect()
            };
            let g = params_from_q(&q, u);
            let mut cs_start = theta.clone();
            cs_start.extend(&g);
            starts_cs.push(cs_start.clone());
            let mut p_start = cs_start;
            p_start.push(lambda1);
            starts_p.push(p_start);
        }
        let m = n - 1;
        let p_obj = |v: &[f64]| {
            let x = x_from_params(&v[..m]);
            let q = q_from_params(&v[m..m + n], u);
            parisi_1d(&x, &q, v[m + n], c, u, h, beta).unwrap_or(f64::INFINITY)
        };
        let cs_obj = |v: &[f64]| {
            let x = x_from_params(&v[..m]);
            let q = q_from_params(&v[m..], u);
            cs_functional(&x, &q, c, u, h, beta).unwrap_or(f64::INFINITY)
        };
        let (bp, _) = nelder_mead_restarts(p_obj, &starts_p, &opts);
        let (bc, _) = nelder_mead_restarts(cs_obj, &starts_cs, &opts);
        converged = bp.converged && bc.converged;
        p_opt = ScalarOptimum {
            x: x_from_params(&bp.x[..m]),
            q: q_from_params(&bp.x[m..m + n], u),
            lambda: Some(bp.x[m + n]),
            value: bp.value,
        };
        cs_opt = ScalarOptimum {
            x: x_from_params(&bc.x[..m]),
            q: q_from_params(&bc.x[m..], u),
            lambda: None,
            value: bc.value,
        };
    }
    Ok(EquivalenceReport {
        n,
        inf_p: p_opt.value,
        inf_cs: cs_opt.value,
        gap: (p_opt.value - cs_opt.value).abs(),
        p_optimum: p_opt,
        cs_optimum: cs_opt,
        converged,
    })
}
