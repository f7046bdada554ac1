use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{PsdMatrix, SymMatrix};
use crate::stats::{log_sum_exp, LogSumExp};

/// A finite a priori measure on `R^d`.
#[derive(Clone, Debug, PartialEq)]
pub enum AprioriMeasure {
    /// Atoms `points[j]` with positive masses `weights[j]` (not necessarily normalised).
    Discrete {
        points: Vec<Vec<f64>>,
        weights: Vec<f64>,
    },
    /// Density `sqrt(det C / (2 pi)^d) exp(-<C s, s>/2 + <h, s>)`.
    Gaussian { c: SymMatrix<f64>, h: Vec<f64> },
}

impl AprioriMeasure {
    pub fn discrete(points: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        if points.is_empty() || points.len() != weights.len() {
            return Err(Error::InvalidMeasure(format!(
                "{} points, {} weights",
                points.len(),
                weights.len()
            )));
        }
        let d = points[0].len();
        if d == 0 || points.iter().any(|p| p.len() != d) {
            return Err(Error::InvalidMeasure("points of unequal dimension".into()));
        }
        if weights.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
            return Err(Error::InvalidMeasure("weights must be positive".into()));
        }
        if points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidMeasure("non-finite support point".into()));
        }
        Ok(Self::Discrete { points, weights })
    }

    /// Counting measure on `{-1, +1}` (total mass 2).
    pub fn rademacher() -> Self {
        Self::hypercube(1)
    }

    /// Counting measure on `{-1, +1}^d`.
    pub fn hypercube(d: usize) -> Self {
        let points: Vec<Vec<f64>> = (0..1usize << d)
            .map(|m| {
                (0..d)
                    .map(|i| if m >> i & 1 == 1 { 1.0 } else { -1.0 })
                    .collect()
            })
            .collect();
        let weights = vec![1.0; points.len()];
        Self::Discrete { points, weights }
    }

    pub fn gaussian(c: SymMatrix<f64>, h: Vec<f64>) -> Result<Self> {
        if h.len() != c.dim() {
            return Err(Error::DimensionMismatch {
                expected: c.dim(),
                found: h.len(),
            });
        }
        let lmin = c.min_eigenvalue();
        if !(lmin > 0.0) {
            return Err(Error::InvalidMeasure(format!(
                "C must be positive definite (smallest eigenvalue {lmin:e})"
            )));
        }
        Ok(Self::Gaussian { c, h })
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Discrete { points, .. } => points[0].len(),
            Self::Gaussian { c, .. } => c.dim(),
        }
    }

    /// `log mu(Sigma)`.
    pub fn log_mass(&self) -> f64 {
        match self {
            Self::Discrete { weights, .. } => log_sum_exp(weights.iter().map(|w| w.ln())),
            Self::Gaussian { c, h } => {
                let ci = c.inverse_pd().expect("checked at construction");
                0.5 * ci.quad_form(h)
            }
        }
    }

    /// `max |sigma|` over the support; infinite for Gaussian measures.
    pub fn support_radius(&self) -> f64 {
        match self {
            Self::Discrete { points, .. } => points
                .iter()
                .map(|p| p.iter().map(|v| v * v).sum::<f64>().sqrt())
                .fold(0.0, f64::max),
            Self::Gaussian { .. } => f64::INFINITY,
        }
    }
}

/// JSON description of an a priori measure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MeasureSpec {
    Rademacher {},
    Hypercube {
        d: usize,
    },
    Discrete {
        points: Vec<Vec<f64>>,
        weights: Vec<f64>,
    },
    Gaussian {
        #[serde(rename = "C")]
        c: Vec<Vec<f64>>,
        #[serde(default)]
        h: Option<Vec<f64>>,
    },
}

impl MeasureSpec {
    pub fn build(&self) -> Result<AprioriMeasure> {
        match self {
            Self::Rademacher {} => Ok(AprioriMeasure::rademacher()),
            Self::Hypercube { d } => Ok(AprioriMeasure::hypercube(*d)),
            Self::Discrete { points, weights } => {
                AprioriMeasure::discrete(points.clone(), weights.clone())
            }
            Self::Gaussian { c, h } => {
                let c = SymMatrix::from_rows(c)?;
                let h = h.clone().unwrap_or_else(|| vec![0.0; c.dim()]);
                AprioriMeasure::gaussian(c, h)
            }
        }
    }
}

/// A terminal function `g: R^d -> R` for the recursion.
pub trait Terminal: Sync {
    fn dim(&self) -> usize;
    fn eval(&self, y: &[f64]) -> f64;

    /// Rejects parameter values for which the recursion diverges.
    fn check_feasible(&self, _x: &[f64], _increments: &[PsdMatrix<f64>]) -> Result<()> {
        Ok(())
    }
}

#[derive(Clone, Debug)]
enum Kernel {
    Discrete {
        /// `sqrt(2) beta sigma_j`.
        slopes: Vec<Vec<f64>>,
        /// `<Lambda sigma_j, sigma_j> + log w_j`.
        offsets: Vec<f64>,
    },
    Gaussian {
        /// `(C - 2 Lambda)^{-1}`.
        a_inv: SymMatrix<f64>,
        a: SymMatrix<f64>,
        h: Vec<f64>,
        constant: f64,
    },
}

/// `g(y) = log int exp(sqrt(2) beta <y, s> + <Lambda s, s>) dmu(s)`.
#[derive(Clone, Debug)]
pub struct TerminalCondition {
    beta: f64,
    lambda: SymMatrix<f64>,
    measure: AprioriMeasure,
    kernel: Kernel,
}

impl TerminalCondition {
    pub fn new(beta: f64, lambda: SymMatrix<f64>, measure: AprioriMeasure) -> Result<Self> {
        if !(beta >= 0.0) {
            return Err(Error::InvalidArgument(format!("beta = {beta} must be >= 0")));
        }
        let d = measure.dim();
        if lambda.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: lambda.dim(),
            });
        }
        let r2 = std::f64::consts::SQRT_2 * beta;
        let kernel = match &measure {
            AprioriMeasure::Discrete { points, weights } => Kernel::Discrete {
                slopes: points
                    .iter()
                    .map(|p| p.iter().map(|v| r2 * v).collect())
                    .collect(),
                offsets: points
                    .iter()
                    .zip(weights)
                    .map(|(p, w)| lambda.quad_form(p) + w.ln())
                    .collect(),
            },
            AprioriMeasure::Gaussian { c, h } => {
                let a = c - &lambda.scale(2.0);
                let lmin = a.min_eigenvalue();
                if !(lmin > 0.0) {
                    return Err(Error::GaussianInfeasible(format!(
                        "C - 2 Lambda has smallest eigenvalue {lmin:e}"
                    )));
                }
                let constant = 0.5 * (c.log_det_pd()? - a.log_det_pd()?);
                Kernel::Gaussian {
                    a_inv: a.inverse_pd()?,
                    a,
                    h: h.clone(),
                    constant,
                }
            }
        };
        Ok(Self {
            beta,
            lambda,
            measure,
            kernel,
        })
    }

    /// Terminal condition with `Lambda = 0`.
    pub fn plain(beta: f64, measure: AprioriMeasure) -> Result<Self> {
        let d = measure.dim();
        Self::new(beta, SymMatrix::zeros(d), measure)
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn lambda(&self) -> &SymMatrix<f64> {
        &self.lambda
    }

    pub fn measure(&self) -> &AprioriMeasure {
        &self.measure
    }

    /// Same measure and `beta`, different `Lambda`.
    pub fn with_lambda(&self, lambda: SymMatrix<f64>) -> Result<Self> {
        Self::new(self.beta, lambda, self.measure.clone())
    }

    /// Upper bound on `sup_y |grad g(y)|^2 * d` for bounded support.
    pub fn gradient_bound(&self) -> f64 {
        let r = self.measure.support_radius();
        2.0 * self.beta * self.beta * r * r * self.measure.dim() as f64
    }
}

/// `g(y)` for the given terminal condition.
pub fn terminal_g(y: &[f64], tc: &TerminalCondition) -> f64 {
    tc.eval(y)
}

impl Terminal for TerminalCondition {
    fn dim(&self) -> usize {
        self.measure.dim()
    }

    fn eval(&self, y: &[f64]) -> f64 {
        match &self.kernel {
            Kernel::Discrete { slopes, offsets } => {
                let mut acc = LogSumExp::default();
                for (s, o) in slopes.iter().zip(offsets) {
                    acc.push(o + s.iter().zip(y).map(|(a, b)| a * b).sum::<f64>());
                }
                acc.value()
            }
            Kernel::Gaussian {
                a_inv, h, constant, ..
            } => {
                let r2 = std::f64::consts::SQRT_2 * self.beta;
                let b: Vec<f64> = h.iter().zip(y).map(|(hv, yv)| hv + r2 * yv).collect();
                constant + 0.5 * a_inv.quad_form(&b)
            }
        }
    }

    fn check_feasible(&self, x: &[f64], increments: &[PsdMatrix<f64>]) -> Result<()> {
        if let Kernel::Gaussian { a, .. } = &self.kernel {
            let b2 = 2.0 * self.beta * self.beta;
            let mut e = a.clone();
            for k in (1..increments.len()).rev() {
                e = &e - &increments[k].scale(b2 * x[k]);
                let lmin = e.min_eigenvalue();
                if lmin < GAUSSIAN_MARGIN {
                    return Err(Error::GaussianInfeasible(format!(
                        "effective matrix at level {k} has smallest eigenvalue {lmin:e}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Smallest eigenvalue admitted for the effective Gaussian matrices.
pub const GAUSSIAN_MARGIN: f64 = 1e-8;

/// `g(y) = c`.
#[derive(Clone, Debug)]
pub struct ConstantProbe {
    pub d: usize,
    pub c: f64,
}

impl Terminal for ConstantProbe {
    fn dim(&self) -> usize {
        self.d
    }
    fn eval(&self, _y: &[f64]) -> f64 {
        self.c
    }
}

/// `g(y) = <a, y>`.
#[derive(Clone, Debug)]
pub struct LinearProbe {
    pub a: Vec<f64>,
}

impl Terminal for LinearProbe {
    fn dim(&self) -> usize {
        self.a.len()
    }
    fn eval(&self, y: &[f64]) -> f64 {
        self.a.iter().zip(y).map(|(a, b)| a * b).sum()
    }
}

/// `g(y) = scale * log(1 + exp(y_1)) + shift`.
#[derive(Clone, Debug)]
pub struct SoftplusProbe {
    pub scale: f64,
    pub shift: f64,
}

impl Default for SoftplusProbe {
    fn default() -> Self {
        Self {
            scale: 1.0,
            shift: 0.0,
        }
    }
}

pub fn softplus(y: f64) -> f64 {
    if y > 0.0 {
        y + (-y).exp().ln_1p()
    } else {
        y.exp().ln_1p()
    }
}

impl Terminal for SoftplusProbe {
    fn dim(&self) -> usize {
        1
    }
    fn eval(&self, y: &[f64]) -> f64 {
        self.scale * softplus(y[0]) + self.shift
    }
}

/// Wraps a closure as a terminal function.
pub struct FnTerminal<F> {
    pub d: usize,
    pub f: F,
}

impl<F: Fn(&[f64]) -> f64 + Sync> Terminal for FnTerminal<F> {
    fn dim(&self) -> usize {
        self.d
    }
    fn eval(&self, y: &[f64]) -> f64 {
        (self.f)(y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn g_examples() {
        let probability = AprioriMeasure::discrete(vec![vec![-1.0], vec![1.0]], vec![0.5, 0.5]).unwrap();
        let tc = TerminalCondition::plain(0.0, probability).unwrap();
        assert!(terminal_g(&[0.7], &tc).abs() < 1e-15);

        let beta = 0.8;
        let tc = TerminalCondition::plain(beta, AprioriMeasure::rademacher()).unwrap();
        for y in [-2.0, -0.3, 0.0, 1.1] {
            let want = 2f64.ln() + (2f64.sqrt() * beta * y).cosh().ln();
            assert!((terminal_g(&[y], &tc) - want).abs() < 1e-14);
        }

        let m = AprioriMeasure::discrete(
            vec![vec![1.0, 0.5], vec![-1.0, -0.5], vec![0.0, 2.0], vec![0.0, -2.0]],
            vec![0.3, 0.3, 1.2, 1.2],
        )
        .unwrap();
        let tc = TerminalCondition::plain(1.3, m).unwrap();
        assert!((terminal_g(&[0.0, 0.0], &tc) - 3f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn gaussian_g_matches_quadrature() {
        // d = 1: int exp(b s + l s^2) N(h/c, 1/c)-type density by brute force.
        let (c, h, beta, lam) = (3.0, 0.4, 0.7, 0.5);
        let mu = AprioriMeasure::gaussian(SymMatrix::scalar(c), vec![h]).unwrap();
        let tc = TerminalCondition::new(beta, SymMatrix::scalar(lam), mu).unwrap();
        let y = 0.9;
        let b = 2f64.sqrt() * beta * y;
        let n = 200_000;
        let (lo, hi) = (-15.0, 15.0);
        let dx = (hi - lo) / n as f64;
        let mut acc = 0.0;
        for i in 0..n {
            let s = lo + (i as f64 + 0.5) * dx;
            acc += (b * s + lam * s * s - 0.5 * c * s * s + h * s).exp() * dx;
        }
        let want = (acc * (c / (2.0 * std::f64::consts::PI)).sqrt()).ln();
        assert!((tc.eval(&[y]) - want).abs() < 1e-9);
    }

    #[test]
    fn gaussian_feasibility() {
        let mu = AprioriMeasure::gaussian(SymMatrix::scalar(1.0), vec![0.0]).unwrap();
        assert!(matches!(
            TerminalCondition::new(1.0, SymMatrix::scalar(0.6), mu),
            Err(Error::GaussianInfeasible(_))
        ));
    }

    #[test]
    fn masses() {
        assert!((AprioriMeasure::rademacher().log_mass() - 2f64.ln()).abs() < 1e-15);
        assert!((AprioriMeasure::hypercube(2).log_mass() - 4f64.ln()).abs() < 1e-15);
        let g = AprioriMeasure::gaussian(SymMatrix::scalar(2.0), vec![1.0]).unwrap();
        assert!((g.log_mass() - 0.25).abs() < 1e-15);
        assert_eq!(AprioriMeasure::hypercube(3).support_radius(), 3f64.sqrt());
    }

    #[test]
    fn spec_parsing() {
        let s: MeasureSpec = serde_json::from_str(r#"{"kind":"gaussian","C":[[3.0]]}"#).unwrap();
        assert_eq!(s.build().unwrap().dim(), 1);
        assert!(serde_json::from_str::<MeasureSpec>(r#"{"kind":"rademacher","x":1}"#).is_err());
    }
}
