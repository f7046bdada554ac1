//! Crank-Nicolson solver for the one-dimensional Parisi PDE
//! `f_t + (Qdot / 2) (f_yy + x f_y^2) = 0`, `f(1, .) = g`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::measure::Terminal;
use crate::order::DiscretePath;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    /// Spatial spacing.
    pub h: f64,
    /// Half-width of the domain; defaults to `max(6 sqrt(U), 8)`.
    #[serde(default)]
    pub half_width: Option<f64>,
    /// Crank-Nicolson steps per segment; defaults to `max(4, ceil(dQ / h))`.
    #[serde(default)]
    pub steps_per_segment: Option<usize>,
    #[serde(default = "default_iterations")]
    pub max_iterations: usize,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

fn default_iterations() -> usize {
    50
}

fn default_tolerance() -> f64 {
    1e-10
}

impl GridSpec {
    pub fn new(h: f64) -> Self {
        Self {
            h,
            half_width: None,
            steps_per_segment: None,
            max_iterations: default_iterations(),
            tolerance: default_tolerance(),
        }
    }
}

/// `f` on a `(t, y)` grid; rows are ordered by increasing `t`.
#[derive(Clone, Debug)]
pub struct PdeSolution {
    pub y: Vec<f64>,
    pub t: Vec<f64>,
    pub f: Vec<Vec<f64>>,
    /// Most fixed-point iterations used by any step.
    pub max_iterations_used: usize,
    /// Jump times and levels of the underlying path.
    pub x: Vec<f64>,
    pub q_dot: Vec<f64>,
}

impl PdeSolution {
    fn spacing(&self) -> f64 {
        self.y[1] - self.y[0]
    }

    /// Linear interpolation in `y` on row `row`.
    pub fn row_value(&self, row: usize, y: f64) -> f64 {
        let (i, w) = self.locate(y);
        let r = &self.f[row];
        r[i] * (1.0 - w) + r[i + 1] * w
    }

    /// Centred difference of `f_y` on row `row`, interpolated in `y`.
    pub fn row_gradient(&self, row: usize, y: f64) -> f64 {
        let (i, w) = self.locate(y);
        let g = |j: usize| -> f64 {
            let r = &self.f[row];
            let h = self.spacing();
            if j == 0 {
                (r[1] - r[0]) / h
            } else if j + 1 == r.len() {
                (r[j] - r[j - 1]) / h
            } else {
                (r[j + 1] - r[j - 1]) / (2.0 * h)
            }
        };
        g(i) * (1.0 - w) + g(i + 1) * w
    }

    fn locate(&self, y: f64) -> (usize, f64) {
        let h = self.spacing();
        let m = self.y.len();
        let s = ((y - self.y[0]) / h).clamp(0.0, (m - 1) as f64);
        let i = (s.floor() as usize).min(m - 2);
        (i, s - i as f64)
    }

    /// Index of the last row with `t <= t_query`.
    pub fn row_at(&self, t: f64) -> usize {
        match self.t.binary_search_by(|v| v.total_cmp(&t)) {
            Ok(i) => i,
            Err(0) => 0,
            Err(i) => i - 1,
        }
    }

    /// `f(0, 0)`.
    pub fn value_at_origin(&self) -> f64 {
        self.row_value(0, 0.0)
    }

    /// Rows `t,y,f`.
    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let io = |e: csv::Error| Error::InvalidArgument(format!("csv: {e}"));
        wr.write_record(["t", "y", "f"]).map_err(io)?;
        for (t, row) in self.t.iter().zip(&self.f) {
            for (y, f) in self.y.iter().zip(row) {
                wr.serialize((t, y, f)).map_err(io)?;
            }
        }
        wr.flush().map_err(|e| Error::InvalidArgument(format!("csv: {e}")))?;
        Ok(())
    }
}

fn thomas(sub: f64, diag: f64, sup: f64, rhs: &mut [f64], scratch: &mut [f64]) {
    // Boundary rows are identities; interior rows are `(sub, diag, sup)`.
    let m = rhs.len();
    scratch[0] = 0.0;
    for i in 1..m - 1 {
        let denom = diag - sub * scratch[i - 1];
        scratch[i] = sup / denom;
        let prev = if i == 1 { rhs[0] } else { rhs[i - 1] };
        rhs[i] = (rhs[i] - sub * prev) / denom;
    }
    // `rhs[m-1]` is already the solution at the right boundary.
    for i in (1..m - 1).rev() {
        rhs[i] -= scratch[i] * rhs[i + 1];
    }
}

fn gradient_sq(f: &[f64], h: f64, out: &mut [f64]) {
    let m = f.len();
    out[0] = ((f[1] - f[0]) / h).powi(2);
    out[m - 1] = ((f[m - 1] - f[m - 2]) / h).powi(2);
    for i in 1..m - 1 {
        out[i] = ((f[i + 1] - f[i - 1]) / (2.0 * h)).powi(2);
    }
}

/// Backward Crank-Nicolson sweep, one segment per level of the path, with
/// the nonlinear term at the step midpoint by fixed-point iteration.
pub fn solve_pde_1d(path: &DiscretePath<f64>, terminal: &dyn Terminal, grid: &GridSpec) -> Result<PdeSolution> {
    if path.dim() != 1 || terminal.dim() != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            found: path.dim().max(terminal.dim()),
        });
    }
    if !(grid.h > 0.0) {
        return Err(Error::InvalidArgument("grid spacing must be positive".into()));
    }
    let u = path.terminal().get(0, 0);
    let half = grid.half_width.unwrap_or_else(|| (6.0 * u.sqrt()).max(8.0));
    let cells = (half / grid.h).ceil() as usize;
    let m = 2 * cells + 1;
    let y: Vec<f64> = (0..m).map(|i| (i as f64 - cells as f64) * grid.h).collect();
    let xs = path.partition().values().to_vec();
    let n = path.levels();
    let inc: Vec<f64> = path.chain().increments().iter().map(|d| d.get(0, 0)).collect();
    let q_dot: Vec<f64> = (0..=n)
        .map(|k| {
            let len = xs[k + 1] - xs[k];
            if inc[k] == 0.0 {
                0.0
            } else if len > 0.0 {
                inc[k] / len
            } else {
                f64::INFINITY
            }
        })
        .collect();

    let mut cur: Vec<f64> = y.iter().map(|&v| terminal.eval(&[v])).collect();
    let mut rows = vec![cur.clone()];
    let mut times = vec![1.0];
    let mut max_used = 0;
    let h2 = grid.h * grid.h;
    let mut rhs = vec![0.0; m];
    let mut next = vec![0.0; m];
    let mut scratch = vec![0.0; m];
    let mut g_old = vec![0.0; m];
    let mut g_mid = vec![0.0; m];
    let mut mid = vec![0.0; m];
    for k in (0..=n).rev() {
        let x = xs[k];
        let steps = grid
            .steps_per_segment
            .unwrap_or_else(|| ((inc[k] / grid.h).ceil() as usize).max(4));
        let len = xs[k + 1] - xs[k];
        if inc[k] == 0.0 {
            continue;
        }
        // March in accumulated variance: `f_s = (f_yy + x f_y^2) / 2`.
        let ds = inc[k] / steps as f64;
        let r = 0.25 * ds / h2;
        gradient_sq(&cur, grid.h, &mut g_old);
        for step in 0..steps {
            for i in 1..m - 1 {
                rhs[i] = cur[i] + r * (cur[i + 1] - 2.0 * cur[i] + cur[i - 1]);
            }
            rhs[0] = cur[0];
            rhs[m - 1] = cur[m - 1];
            next.copy_from_slice(&cur);
            let mut converged = false;
            for it in 0..grid.max_iterations {
                for i in 0..m {
                    mid[i] = 0.5 * (cur[i] + next[i]);
                }
                gradient_sq(&mid, grid.h, &mut g_mid);
                let mut trial = rhs.clone();
                for i in 0..m {
                    trial[i] += 0.5 * ds * x * g_mid[i];
                }
                thomas(-r, 1.0 + 2.0 * r, -r, &mut trial, &mut scratch);
                let change = trial
                    .iter()
                    .zip(&next)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                next.copy_from_slice(&trial);
                max_used = max_used.max(it + 1);
                if change <= grid.tolerance * (1.0 + next[cells].abs()) || x == 0.0 {
                    converged = true;
                    break;
                }
            }
            if !converged {
                return Err(Error::NonConvergence(format!(
                    "fixed-point iteration did not converge on segment {k}, step {step}; reduce the step size"
                )));
            }
            std::mem::swap(&mut cur, &mut next);
            rows.push(cur.clone());
            times.push(xs[k + 1] - len * (step + 1) as f64 / steps as f64);
        }
    }
    rows.reverse();
    times.reverse();
    Ok(PdeSolution {
        y,
        t: times,
        f: rows,
        max_iterations_used: max_used,
        x: xs,
        q_dot,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{recursion_x0, AprioriMeasure, ConstantProbe, EvalConfig, LinearProbe, TerminalCondition};
    use approx::assert_abs_diff_eq;

    #[test]
    fn constant_terminal_stays_constant() {
        let p = DiscretePath::scalar(&[0.4], &[0.3], 1.0).unwrap();
        let s = solve_pde_1d(&p, &ConstantProbe { d: 1, c: 1.7 }, &GridSpec::new(0.05)).unwrap();
        for row in &s.f {
            for v in row {
                assert_abs_diff_eq!(*v, 1.7, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn linear_terminal_closed_form() {
        let a = 0.6;
        let p = DiscretePath::scalar(&[0.3, 0.7], &[0.2, 0.5], 1.0).unwrap();
        let s = solve_pde_1d(&p, &LinearProbe { a: vec![a] }, &GridSpec::new(0.02)).unwrap();
        let expected = 0.5 * a * a * (0.3 * 0.3 + 0.7 * 0.5);
        assert_abs_diff_eq!(s.value_at_origin(), expected, epsilon = 1e-10);
        assert_eq!(s.t[0], 0.0);
        assert_eq!(*s.t.last().unwrap(), 1.0);
    }

    #[test]
    fn matches_recursion_and_converges() {
        let tc = TerminalCondition::plain(0.5, AprioriMeasure::rademacher()).unwrap();
        let p = DiscretePath::scalar(&[0.3, 0.7], &[0.25, 0.6], 1.0).unwrap();
        let exact = recursion_x0(p.partition(), p.chain(), &tc, &EvalConfig::default())
            .unwrap()
            .value;
        let e1 = (solve_pde_1d(&p, &tc, &GridSpec::new(0.01)).unwrap().value_at_origin() - exact).abs();
        let e2 = (solve_pde_1d(&p, &tc, &GridSpec::new(0.005)).unwrap().value_at_origin() - exact).abs();
        assert!(e1 <= 1e-3, "{e1}");
        assert!(e1 >= 3.0 * e2, "{e1} {e2}");
    }

    #[test]
    fn csv_export() {
        let p = DiscretePath::scalar(&[], &[], 0.1).unwrap();
        let s = solve_pde_1d(&p, &ConstantProbe { d: 1, c: 0.0 }, &GridSpec { half_width: Some(0.2), ..GridSpec::new(0.1) }).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,y,f\n"));
        assert_eq!(text.lines().count(), 1 + s.t.len() * 5);
    }
}
