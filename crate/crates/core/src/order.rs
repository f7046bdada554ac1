//! Order parameters: partitions of the unit interval, Loewner-monotone
//! matrix chains and the step paths they define.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{loewner_leq, PsdMatrix, Square, SymMatrix};
use crate::scalar::Scalar;

/// `0 = x_0 < x_1 < ... < x_n < x_{n+1} = 1`.
///
/// With `allow_ties` the interior values only need `0 < x_1 <= ... <= x_n <= 1`,
/// which the optimizers use to let levels merge.
#[derive(Clone, Debug, PartialEq)]
pub struct UnitPartition<T> {
    values: Vec<T>,
}

impl<T: Scalar> UnitPartition<T> {
    pub fn new(interior: &[T]) -> Result<Self> {
        Self::build(interior, false)
    }

    pub fn with_ties(interior: &[T]) -> Result<Self> {
        Self::build(interior, true)
    }

    fn build(interior: &[T], allow_ties: bool) -> Result<Self> {
        let mut values = Vec::with_capacity(interior.len() + 2);
        values.push(T::zero());
        values.extend_from_slice(interior);
        values.push(T::one());
        for (k, w) in values.windows(2).enumerate() {
            let ok = if allow_ties && k > 0 {
                w[0] <= w[1]
            } else {
                w[0] < w[1]
            };
            if !ok || w[1].is_nan() {
                return Err(Error::InvalidPartition(format!(
                    "x_{} = {} is not below x_{} = {}",
                    k,
                    w[0],
                    k + 1,
                    w[1]
                )));
            }
        }
        Ok(Self { values })
    }

    /// Number of interior levels `n`.
    pub fn levels(&self) -> usize {
        self.values.len() - 2
    }

    /// `x_0, ..., x_{n+1}`.
    pub fn values(&self) -> &[T] {
        &self.values
    }

    /// `x_1, ..., x_n`.
    pub fn interior(&self) -> &[T] {
        &self.values[1..self.values.len() - 1]
    }

    pub fn get(&self, k: usize) -> T {
        self.values[k]
    }
}

/// Outcome of [`validate_chain`].
#[derive(Clone, Debug, PartialEq)]
pub struct ChainReport {
    pub monotone: bool,
    /// First `k` with `Q^(k)` not below `Q^(k+1)`.
    pub violation: Option<usize>,
    pub min_increment_eigenvalues: Vec<f64>,
    /// `None` when the Hadamard check was not requested.
    pub hadamard: Option<bool>,
    pub hadamard_violation: Option<usize>,
}

impl ChainReport {
    pub fn is_valid(&self) -> bool {
        self.monotone && self.hadamard.unwrap_or(true)
    }
}

/// Checks `Q^(0) <= ... <= Q^(n+1)` and optionally the chain of entrywise
/// squares from `Q^(1)` upward.
pub fn validate_chain<T: Scalar>(matrices: &[SymMatrix<T>], require_hadamard: bool) -> ChainReport {
    let tol = T::psd_tol();
    let mut violation = None;
    let mut mins = Vec::new();
    for (k, w) in matrices.windows(2).enumerate() {
        let inc = &w[1] - &w[0];
        mins.push(inc.min_eigenvalue().to_f64_lossy());
        if violation.is_none() && !loewner_leq(&w[0], &w[1], tol).unwrap_or(false) {
            violation = Some(k);
        }
    }
    let (hadamard, hadamard_violation) = if require_hadamard {
        let squares: Vec<_> = matrices
            .iter()
            .skip(1)
            .map(|m| m.hadamard_power(T::lit(2.0)).expect("integer power"))
            .collect();
        let bad = squares
            .windows(2)
            .position(|w| !loewner_leq(&w[0], &w[1], tol).unwrap_or(false))
            .map(|k| k + 1);
        (Some(bad.is_none()), bad)
    } else {
        (None, None)
    };
    ChainReport {
        monotone: violation.is_none(),
        violation,
        min_increment_eigenvalues: mins,
        hadamard,
        hadamard_violation,
    }
}

/// `0 = Q^(0) <= Q^(1) <= ... <= Q^(n+1) = U`.
#[derive(Clone, Debug, PartialEq)]
pub struct MonotoneChain<T> {
    matrices: Vec<SymMatrix<T>>,
    allow_equal: bool,
}

impl<T: Scalar> MonotoneChain<T> {
    /// Strict chain: every increment has smallest eigenvalue above the PSD tolerance.
    pub fn new(interior: Vec<SymMatrix<T>>, u: SymMatrix<T>) -> Result<Self> {
        Self::build(interior, u, false)
    }

    /// Chain where consecutive matrices may coincide (increments only PSD).
    pub fn with_equal(interior: Vec<SymMatrix<T>>, u: SymMatrix<T>) -> Result<Self> {
        Self::build(interior, u, true)
    }

    fn build(interior: Vec<SymMatrix<T>>, u: SymMatrix<T>, allow_equal: bool) -> Result<Self> {
        let d = u.dim();
        PsdMatrix::new(u.clone()).map_err(|e| Error::InvalidChain(format!("terminal U: {e}")))?;
        let mut matrices = Vec::with_capacity(interior.len() + 2);
        matrices.push(SymMatrix::zeros(d));
        for m in interior {
            if m.dim() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: m.dim(),
                });
            }
            matrices.push(m);
        }
        matrices.push(u);
        for (k, w) in matrices.windows(2).enumerate() {
            let inc = &w[1] - &w[0];
            let lmin = inc.min_eigenvalue();
            let ok = if allow_equal {
                lmin >= -T::psd_tol() * (T::one() + inc.frobenius_norm())
            } else {
                lmin > T::psd_tol()
            };
            if !ok {
                return Err(Error::InvalidChain(format!(
                    "increment {k} has smallest eigenvalue {:e}",
                    lmin.to_f64_lossy()
                )));
            }
        }
        Ok(Self {
            matrices,
            allow_equal,
        })
    }

    pub fn dim(&self) -> usize {
        self.matrices[0].dim()
    }

    pub fn levels(&self) -> usize {
        self.matrices.len() - 2
    }

    pub fn allows_equal(&self) -> bool {
        self.allow_equal
    }

    /// `Q^(0), ..., Q^(n+1)`.
    pub fn matrices(&self) -> &[SymMatrix<T>] {
        &self.matrices
    }

    pub fn get(&self, k: usize) -> &SymMatrix<T> {
        &self.matrices[k]
    }

    pub fn terminal(&self) -> &SymMatrix<T> {
        &self.matrices[self.matrices.len() - 1]
    }

    /// `Delta Q^(k) = Q^(k+1) - Q^(k)` for `k = 0..=n`, projected onto the PSD cone.
    pub fn increments(&self) -> Vec<PsdMatrix<T>> {
        self.matrices
            .windows(2)
            .map(|w| crate::matrix::project_psd(&(&w[1] - &w[0])))
            .collect()
    }

    pub fn validate(&self, require_hadamard: bool) -> ChainReport {
        validate_chain(&self.matrices, require_hadamard)
    }
}

/// Right-continuous step path `rho(t) = Q^(k)` on `[x_k, x_{k+1})`, `rho(1) = U`.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscretePath<T> {
    partition: UnitPartition<T>,
    chain: MonotoneChain<T>,
}

impl<T: Scalar> DiscretePath<T> {
    pub fn new(partition: UnitPartition<T>, chain: MonotoneChain<T>) -> Result<Self> {
        if partition.levels() != chain.levels() {
            return Err(Error::InvalidArgument(format!(
                "partition has {} levels, chain has {}",
                partition.levels(),
                chain.levels()
            )));
        }
        Ok(Self { partition, chain })
    }

    /// Scalar path (d = 1) from interior jump times and values.
    pub fn scalar(x: &[T], q: &[T], u: T) -> Result<Self> {
        let partition = UnitPartition::with_ties(x)?;
        let chain = MonotoneChain::with_equal(
            q.iter().map(|&v| SymMatrix::scalar(v)).collect(),
            SymMatrix::scalar(u),
        )?;
        Self::new(partition, chain)
    }

    pub fn partition(&self) -> &UnitPartition<T> {
        &self.partition
    }

    pub fn chain(&self) -> &MonotoneChain<T> {
        &self.chain
    }

    pub fn dim(&self) -> usize {
        self.chain.dim()
    }

    pub fn levels(&self) -> usize {
        self.chain.levels()
    }

    pub fn terminal(&self) -> &SymMatrix<T> {
        self.chain.terminal()
    }

    /// `rho(t)` for `t` in `[0, 1]`.
    pub fn value_at(&self, t: T) -> &SymMatrix<T> {
        let x = self.partition.values();
        let n1 = x.len() - 1;
        if t >= T::one() {
            return self.chain.get(n1);
        }
        let k = (0..n1).rev().find(|&k| x[k] <= t).unwrap_or(0);
        self.chain.get(k)
    }

    /// `Q^(k+1)` for `t` in `[x_k, x_{k+1})`.
    pub fn shifted_value_at(&self, t: T) -> &SymMatrix<T> {
        let x = self.partition.values();
        let n1 = x.len() - 1;
        if t >= T::one() {
            return self.chain.get(n1);
        }
        let k = (0..n1).rev().find(|&k| x[k] <= t).unwrap_or(0);
        self.chain.get(k + 1)
    }

    /// Inserts a level at `t` carrying the value of the next jump, which
    /// leaves the recursion value unchanged.
    pub fn split_level(&self, t: T) -> Result<Self> {
        let x = self.partition.interior();
        let pos = x.iter().position(|&v| v > t).unwrap_or(x.len());
        let mut xs = x.to_vec();
        xs.insert(pos, t);
        let mut qs: Vec<SymMatrix<T>> = self.chain.matrices()[1..=self.levels()].to_vec();
        qs.insert(pos, self.chain.get(pos + 1).clone());
        Self::new(
            UnitPartition::with_ties(&xs)?,
            MonotoneChain::with_equal(qs, self.terminal().clone())?,
        )
    }

    /// `int_0^1 |rho(t)|_F dt`.
    pub fn path_norm(&self) -> T {
        let x = self.partition.values();
        (0..x.len() - 1).fold(T::zero(), |acc, k| {
            acc + (x[k + 1] - x[k]) * self.chain.get(k).frobenius_norm()
        })
    }

    pub fn linear_interpolant(&self) -> LinearInterpolant<T> {
        let x = self.partition.values().to_vec();
        let q = self.chain.matrices().to_vec();
        let slopes = (0..x.len() - 1)
            .map(|k| {
                let dx = x[k + 1] - x[k];
                if dx > T::zero() {
                    Some((&q[k + 1] - &q[k]).scale(T::one() / dx))
                } else {
                    None
                }
            })
            .collect();
        LinearInterpolant {
            knots: x,
            values: q,
            slopes,
        }
    }

    /// Same path on a finer jump grid: extra breakpoints repeat the current value.
    pub fn refine(&self, extra: &[T]) -> Result<Self> {
        let mut grid: Vec<T> = self.partition.interior().to_vec();
        for &t in extra {
            if t > T::zero() && t < T::one() {
                grid.push(t);
            }
        }
        grid.sort_by(|a, b| a.partial_cmp(b).expect("finite grid"));
        let values: Vec<_> = grid.iter().map(|&t| self.value_at(t).clone()).collect();
        Self::new(
            UnitPartition::with_ties(&grid)?,
            MonotoneChain::with_equal(values, self.terminal().clone())?,
        )
    }

    pub fn to_record(&self) -> PathRecord {
        PathRecord {
            d: self.dim(),
            x: self.partition.interior().iter().map(|v| v.to_f64_lossy()).collect(),
            q: self.chain.matrices()[1..=self.levels()]
                .iter()
                .map(rows_f64)
                .collect(),
            u: rows_f64(self.terminal()),
        }
    }

    pub fn from_record(r: &PathRecord) -> Result<Self> {
        if r.x.len() != r.q.len() {
            return Err(Error::InvalidArgument(format!(
                "{} jump times but {} matrices",
                r.x.len(),
                r.q.len()
            )));
        }
        let parse = |rows: &Vec<Vec<f64>>| -> Result<SymMatrix<T>> {
            if rows.len() != r.d {
                return Err(Error::DimensionMismatch {
                    expected: r.d,
                    found: rows.len(),
                });
            }
            let cast: Vec<Vec<T>> = rows
                .iter()
                .map(|row| row.iter().map(|&v| T::lit(v)).collect())
                .collect();
            SymMatrix::from_rows(&cast)
        };
        let x: Vec<T> = r.x.iter().map(|&v| T::lit(v)).collect();
        let q = r.q.iter().map(parse).collect::<Result<Vec<_>>>()?;
        Self::new(
            UnitPartition::with_ties(&x)?,
            MonotoneChain::with_equal(q, parse(&r.u)?)?,
        )
    }
}

fn rows_f64<T: Scalar>(m: &SymMatrix<T>) -> Vec<Vec<f64>> {
    m.rows()
        .into_iter()
        .map(|r| r.into_iter().map(|v| v.to_f64_lossy()).collect())
        .collect()
}

/// JSON form of a path: interior jump times `x`, interior matrices `Q`, terminal `U`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathRecord {
    pub d: usize,
    pub x: Vec<f64>,
    #[serde(rename = "Q")]
    pub q: Vec<Vec<Vec<f64>>>,
    #[serde(rename = "U")]
    pub u: Vec<Vec<f64>>,
}

/// `int_0^1 |rho_1(t) - rho_2(t)|_F dt`, exact on the merged jump grid.
pub fn path_distance<T: Scalar>(
    a: &DiscretePath<T>,
    b: &DiscretePath<T>,
    allow_different_terminal: bool,
) -> Result<T> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            found: b.dim(),
        });
    }
    if !allow_different_terminal {
        let gap = (a.terminal() - b.terminal()).frobenius_norm();
        if gap > T::epsilon() * T::lit(16.0) * (T::one() + a.terminal().frobenius_norm()) {
            return Err(Error::InvalidArgument(
                "paths end at different U; opt in to compare them".into(),
            ));
        }
    }
    let grid = merged_grid(a.partition.values(), b.partition.values());
    Ok(grid.windows(2).fold(T::zero(), |acc, w| {
        if w[1] > w[0] {
            acc + (w[1] - w[0]) * (a.value_at(w[0]) - b.value_at(w[0])).frobenius_norm()
        } else {
            acc
        }
    }))
}

/// Distance between the left-shifted paths `rho#(t) = Q^(k+1)` on
/// `[x_k, x_{k+1})`, the generalised inverse of the jump-size distribution.
/// Jump parameter `x_k` governs the increment `Q^(k+1) - Q^(k)`, so this is
/// the metric in which the recursion value is Lipschitz.
pub fn shifted_distance<T: Scalar>(
    a: &DiscretePath<T>,
    b: &DiscretePath<T>,
    allow_different_terminal: bool,
) -> Result<T> {
    path_distance(a, b, allow_different_terminal)?;
    let grid = merged_grid(a.partition.values(), b.partition.values());
    Ok(grid.windows(2).fold(T::zero(), |acc, w| {
        if w[1] > w[0] {
            acc + (w[1] - w[0]) * (a.shifted_value_at(w[0]) - b.shifted_value_at(w[0])).frobenius_norm()
        } else {
            acc
        }
    }))
}

fn merged_grid<T: Scalar>(a: &[T], b: &[T]) -> Vec<T> {
    let mut g: Vec<T> = a.iter().chain(b).copied().collect();
    g.sort_by(|p, q| p.partial_cmp(q).expect("finite grid"));
    g.dedup();
    g
}

/// Piecewise-linear path through `(x_k, Q^(k))`.
#[derive(Clone, Debug)]
pub struct LinearInterpolant<T> {
    pub knots: Vec<T>,
    pub values: Vec<SymMatrix<T>>,
    /// Slope on `[x_k, x_{k+1}]`; `None` for empty segments.
    pub slopes: Vec<Option<SymMatrix<T>>>,
}

impl<T: Scalar> LinearInterpolant<T> {
    pub fn eval(&self, t: T) -> SymMatrix<T> {
        let n1 = self.knots.len() - 1;
        if t >= self.knots[n1] {
            return self.values[n1].clone();
        }
        let k = (0..n1).rev().find(|&k| self.knots[k] <= t).unwrap_or(0);
        match &self.slopes[k] {
            Some(s) => &self.values[k] + &s.scale(t - self.knots[k]),
            None => self.values[k].clone(),
        }
    }

    pub fn segments(&self) -> usize {
        self.slopes.len()
    }
}

/// Path whose values are all diagonal in the basis `o`:
/// `rho(t) = O diag(u_v s_v(t)) O^T`, where each shape `s_v` is a scalar path
/// ending at 1. A single shape is shared by every coordinate.
pub fn diagonal_path<T: Scalar>(
    u: &[T],
    o: &Square<T>,
    shapes: &[DiscretePath<T>],
) -> Result<DiscretePath<T>> {
    let d = u.len();
    if o.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: o.dim(),
        });
    }
    if !o.is_orthogonal(T::lit(1e3) * T::epsilon()) {
        return Err(Error::InvalidArgument("basis is not orthogonal".into()));
    }
    if let Some(&bad) = u.iter().find(|&&v| !(v >= T::zero())) {
        return Err(Error::InvalidArgument(format!("negative eigenvalue {bad}")));
    }
    if shapes.len() != 1 && shapes.len() != d {
        return Err(Error::InvalidArgument(format!(
            "need 1 or {d} shapes, got {}",
            shapes.len()
        )));
    }
    for s in shapes {
        if s.dim() != 1 || (s.terminal().get(0, 0) - T::one()).abs() > T::epsilon() * T::lit(4.0) {
            return Err(Error::InvalidArgument(
                "shapes must be scalar paths ending at 1".into(),
            ));
        }
    }
    let shape = |v: usize| &shapes[if shapes.len() == 1 { 0 } else { v }];
    let mut grid: Vec<T> = Vec::new();
    for s in shapes {
        grid.extend_from_slice(s.partition().interior());
    }
    grid.sort_by(|a, b| a.partial_cmp(b).expect("finite grid"));
    grid.dedup();
    let at = |t: T| {
        let diag: Vec<T> = (0..d)
            .map(|v| u[v] * shape(v).value_at(t).get(0, 0))
            .collect();
        SymMatrix::from_diag(&diag).conjugate(o).expect("dims checked")
    };
    let values = grid.iter().map(|&t| at(t)).collect();
    DiscretePath::new(
        UnitPartition::with_ties(&grid)?,
        MonotoneChain::with_equal(values, at(T::one()))?,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn partition_rules() {
        assert!(UnitPartition::new(&[0.3, 0.6]).is_ok());
        assert!(UnitPartition::<f64>::new(&[]).is_ok());
        assert!(UnitPartition::new(&[0.6, 0.3]).is_err());
        assert!(UnitPartition::new(&[0.3, 0.3]).is_err());
        assert!(UnitPartition::new(&[0.5, 1.0]).is_err());
        assert!(UnitPartition::with_ties(&[0.3, 0.3, 1.0]).is_ok());
        assert!(UnitPartition::with_ties(&[0.0]).is_err());
    }

    #[test]
    fn chain_examples() {
        let one = SymMatrix::scalar(1.0);
        let c = MonotoneChain::new(vec![SymMatrix::scalar(0.3)], one.clone()).unwrap();
        let r = c.validate(true);
        assert!(r.monotone && r.hadamard == Some(true));

        let chain = vec![
            SymMatrix::zeros(2),
            SymMatrix::from_diag(&[0.5, 0.1]),
            SymMatrix::identity(2),
        ];
        let r = validate_chain(&chain, true);
        assert!(r.is_valid());

        let bad = vec![
            SymMatrix::zeros(2),
            SymMatrix::from_diag(&[0.5, 0.1]),
            SymMatrix::from_diag(&[0.4, 0.2]),
            SymMatrix::identity(2),
        ];
        let r = validate_chain(&bad, false);
        assert!(!r.monotone);
        assert_eq!(r.violation, Some(1));
        assert!(MonotoneChain::new(vec![SymMatrix::scalar(1.0)], one.clone()).is_err());
        assert!(MonotoneChain::with_equal(vec![SymMatrix::scalar(1.0)], one).is_ok());
    }

    #[test]
    fn hadamard_reports_indefinite_chains() {
        let a = SymMatrix::from_rows(&[vec![1.0, -0.9], vec![-0.9, 1.0]]).unwrap();
        let b = SymMatrix::from_rows(&[vec![2.0, 0.0], vec![0.0, 2.0]]).unwrap();
        let r = validate_chain(&[SymMatrix::zeros(2), a, b], true);
        assert!(r.monotone);
        assert_eq!(r.hadamard, Some(true));
        // Squares of a non-PSD lower step can overtake the upper one.
        let a = SymMatrix::from_diag(&[-2.0, 0.0]);
        let b = SymMatrix::from_diag(&[1.0, 1.0]);
        let r = validate_chain(&[SymMatrix::zeros(2), a, b], true);
        assert!(!r.monotone);
        assert_eq!(r.hadamard, Some(false));
        assert_eq!(r.hadamard_violation, Some(1));
    }

    #[test]
    fn norm_examples() {
        let p = DiscretePath::scalar(&[], &[], 1.0).unwrap();
        assert_eq!(p.path_norm(), 0.0);
        let p = DiscretePath::scalar(&[0.5], &[0.5], 1.0).unwrap();
        assert_abs_diff_eq!(p.path_norm(), 0.25, epsilon = 1e-15);
        let p2 = DiscretePath::scalar(&[0.5], &[1.0], 2.0).unwrap();
        assert_abs_diff_eq!(p2.path_norm(), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn distance_examples() {
        let a = DiscretePath::scalar(&[0.5], &[0.5], 1.0).unwrap();
        let b = DiscretePath::scalar(&[0.5], &[0.7], 1.0).unwrap();
        assert_eq!(path_distance(&a, &a, false).unwrap(), 0.0);
        assert_abs_diff_eq!(path_distance(&a, &b, false).unwrap(), 0.1, epsilon = 1e-15);
        assert_abs_diff_eq!(shifted_distance(&a, &b, false).unwrap(), 0.1, epsilon = 1e-15);
        let e = DiscretePath::scalar(&[0.6], &[0.5], 1.0).unwrap();
        assert_abs_diff_eq!(path_distance(&a, &e, false).unwrap(), 0.05, epsilon = 1e-15);
        assert_abs_diff_eq!(shifted_distance(&a, &e, false).unwrap(), 0.05, epsilon = 1e-15);
        let c = DiscretePath::scalar(&[0.5], &[0.5], 2.0).unwrap();
        assert!(path_distance(&a, &c, false).is_err());
        assert!(path_distance(&a, &c, true).is_ok());
    }

    #[test]
    fn interpolant_examples() {
        let p = DiscretePath::scalar(&[], &[], 2.0).unwrap();
        let li = p.linear_interpolant();
        assert_eq!(li.slopes[0].as_ref().unwrap().get(0, 0), 2.0);
        let p = DiscretePath::scalar(&[0.25, 0.6], &[0.1, 0.4], 1.0).unwrap();
        let li = p.linear_interpolant();
        for (k, &x) in p.partition().values().iter().enumerate() {
            assert_abs_diff_eq!(
                li.eval(x).get(0, 0),
                p.chain().get(k).get(0, 0),
                epsilon = 1e-15
            );
        }
        assert!(li
            .slopes
            .iter()
            .flatten()
            .all(|s| s.min_eigenvalue() >= 0.0));
    }

    #[test]
    fn diagonal_path_examples() {
        let shape = DiscretePath::scalar(&[0.3, 0.7], &[0.2, 0.5], 1.0).unwrap();
        let p = diagonal_path(&[1.0], &Square::identity(1), &[shape.clone()]).unwrap();
        assert_eq!(p, shape);

        let o = Square::rotation(0.4);
        let p = diagonal_path(&[0.5, 1.0], &o, &[shape.clone()]).unwrap();
        assert!(p.chain().validate(false).monotone);
        for (k, q) in p.chain().matrices().iter().enumerate() {
            let back = q.conjugate(&o.transpose()).unwrap();
            let s = shape.chain().get(k).get(0, 0);
            assert_abs_diff_eq!(back.get(0, 0), 0.5 * s, epsilon = 1e-14);
            assert_abs_diff_eq!(back.get(1, 1), s, epsilon = 1e-14);
            assert_abs_diff_eq!(back.get(0, 1), 0.0, epsilon = 1e-14);
        }
        assert!(diagonal_path(&[-0.5, 1.0], &o, &[shape]).is_err());
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let o = Square::rotation(0.123456789);
        let shape = DiscretePath::scalar(&[0.1 + 0.2, 0.7], &[1.0 / 3.0, 0.5], 1.0).unwrap();
        let p = diagonal_path(&[0.5, 1.0 / 7.0], &o, &[shape]).unwrap();
        let s = serde_json::to_string(&p.to_record()).unwrap();
        let back: PathRecord = serde_json::from_str(&s).unwrap();
        let q = DiscretePath::<f64>::from_record(&back).unwrap();
        assert_eq!(q, p);
        assert!(s.contains("\"Q\"") && s.contains("\"U\""));
    }

    fn scalar_path() -> impl Strategy<Value = DiscretePath<f64>> {
        (0usize..4, 0.2..3.0f64).prop_flat_map(|(n, u)| {
            (
                prop::collection::vec(0.01..0.99f64, n),
                prop::collection::vec(0.0..1.0f64, n),
            )
                .prop_map(move |(mut x, mut q)| {
                    x.sort_by(|a, b| a.partial_cmp(b).unwrap());
                    q.sort_by(|a, b| a.partial_cmp(b).unwrap());
                    let q: Vec<f64> = q.iter().map(|v| v * u).collect();
                    DiscretePath::scalar(&x, &q, u).unwrap()
                })
        })
    }

    fn psd2_path() -> impl Strategy<Value = DiscretePath<f64>> {
        (1usize..4).prop_flat_map(|n| {
            (
                prop::collection::vec(0.01..0.99f64, n),
                prop::collection::vec(prop::collection::vec(-1.0..1.0f64, 4), n + 1),
            )
                .prop_map(|(mut x, gs)| {
                    x.sort_by(|a, b| a.partial_cmp(b).unwrap());
                    let mut acc = SymMatrix::zeros(2);
                    let mut qs = Vec::new();
                    for g in &gs {
                        let gm = Square::from_rows(&[vec![g[0], g[1]], vec![g[2], g[3]]]).unwrap();
                        acc = &acc + &SymMatrix::symmetric_part(&gm.mul(&gm.transpose()));
                        qs.push(acc.clone());
                    }
                    let u = qs.pop().unwrap();
                    DiscretePath::new(
                        UnitPartition::with_ties(&x).unwrap(),
                        MonotoneChain::with_equal(qs, u).unwrap(),
                    )
                    .unwrap()
                })
        })
    }

    proptest! {
        #[test]
        fn norm_bounded_by_terminal(p in psd2_path()) {
            prop_assert!(p.path_norm() <= p.terminal().frobenius_norm() * (1.0 + 1e-12));
        }

        #[test]
        fn refinement_keeps_norm(p in psd2_path(), extra in prop::collection::vec(0.0..1.0f64, 0..5)) {
            let r = p.refine(&extra).unwrap();
            prop_assert!((r.path_norm() - p.path_norm()).abs() < 1e-14);
            prop_assert!(path_distance(&p, &r, false).unwrap() < 1e-15);
        }

        #[test]
        fn triangle_inequality(a in scalar_path(), b in scalar_path(), c in scalar_path()) {
            let ab = path_distance(&a, &b, true).unwrap();
            let bc = path_distance(&b, &c, true).unwrap();
            let ac = path_distance(&a, &c, true).unwrap();
            prop_assert!(ac <= ab + bc + 1e-12);
        }

        #[test]
        fn psd_chains_satisfy_hadamard(p in psd2_path()) {
            prop_assert_eq!(p.chain().validate(true).hadamard, Some(true));
        }

        #[test]
        fn diagonal_chains_satisfy_hadamard(u in prop::collection::vec(0.0..2.0f64, 2), shape in scalar_path()) {
            let u1 = shape.terminal().get(0, 0);
            let q: Vec<f64> = shape.chain().matrices()[1..=shape.levels()].iter().map(|m| m.get(0, 0) / u1).collect();
            let s = DiscretePath::scalar(shape.partition().interior(), &q, 1.0).unwrap();
            let p = diagonal_path(&u, &Square::identity(2), &[s]).unwrap();
            prop_assert_eq!(p.chain().validate(true).hadamard, Some(true));
        }
    }
}
