//! Exact one-segment propagator: on a segment where `x` is constant the
//! substitution `phi = exp(x f)` turns the Parisi PDE into the heat equation,
//! so the segment acts as a Gaussian convolution.

use crate::eval::engine::{gh_level, soft_average, LevelRule};
use crate::eval::measure::Terminal;
use crate::matrix::PsdMatrix;

pub type Field<'a> = Box<dyn Fn(&[f64]) -> f64 + Sync + 'a>;

/// `y -> (1/x) log E exp(x f_next(y + z))`, `z ~ N(0, Delta Q)`, with an
/// `m`-node Gauss-Hermite rule per active axis.
pub fn hopf_cole_segment<'a>(
    f_next: Field<'a>,
    x: f64,
    delta: &PsdMatrix<f64>,
    nodes: usize,
    small_x: f64,
) -> Field<'a> {
    apply_rule(f_next, x, gh_level(delta, nodes), small_x)
}

fn apply_rule<'a>(f_next: Field<'a>, x: f64, rule: LevelRule, small_x: f64) -> Field<'a> {
    if rule.len() == 1 && rule.points[0].iter().all(|&v| v == 0.0) {
        return f_next;
    }
    Box::new(move |y: &[f64]| {
        let mut buf = vec![0.0; y.len()];
        let values: Vec<f64> = rule
            .points
            .iter()
            .map(|p| {
                for ((b, a), c) in buf.iter_mut().zip(y).zip(p) {
                    *b = a + c;
                }
                f_next(&buf)
            })
            .collect();
        soft_average(&values, &rule.weights, x, small_x)
    })
}

/// `f(0, 0)` after propagating `g` backwards through every segment.
pub fn compose_segments(
    terminal: &dyn Terminal,
    xs: &[f64],
    rules: &[LevelRule],
    small_x: f64,
) -> f64 {
    let mut f: Field<'_> = Box::new(|y: &[f64]| terminal.eval(y));
    for k in (0..rules.len()).rev() {
        f = apply_rule(f, xs[k], rules[k].clone(), small_x);
    }
    f(&vec![0.0; terminal.dim()])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::SymMatrix;

    fn psd(v: f64) -> PsdMatrix<f64> {
        PsdMatrix::new(SymMatrix::scalar(v)).unwrap()
    }

    #[test]
    fn zero_variance_is_identity() {
        let f: Field = Box::new(|y: &[f64]| y[0].sin());
        let h = hopf_cole_segment(f, 0.4, &psd(0.0), 16, 1e-6);
        assert_eq!(h(&[0.3]), 0.3f64.sin());
    }

    #[test]
    fn unit_x_is_log_mgf() {
        // E exp(a (y + z)) = exp(a y + a^2 s / 2).
        let a = 0.7;
        let f: Field = Box::new(move |y: &[f64]| a * y[0]);
        let h = hopf_cole_segment(f, 1.0, &psd(0.5), 16, 1e-6);
        assert!((h(&[0.2]) - (a * 0.2 + a * a * 0.25)).abs() < 1e-13);
    }

    #[test]
    fn softplus_segment_matches_fine_quadrature() {
        let x = 0.35;
        let s: f64 = 0.8;
        let f: Field = Box::new(|y: &[f64]| crate::eval::softplus(y[0]));
        let h = hopf_cole_segment(f, x, &psd(s), 40, 1e-6);
        let n = 40_000;
        let mut acc = 0.0;
        for i in 0..n {
            let z = -12.0 + 24.0 * (i as f64 + 0.5) / n as f64;
            let dens = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt() * 24.0 / n as f64;
            acc += dens * (x * crate::eval::softplus(0.1 + s.sqrt() * z)).exp();
        }
        assert!((h(&[0.1]) - acc.ln() / x).abs() < 1e-10);
    }
}
