//! Convexity of `x -> f_{Q,x}(0, 0)` along segments between two `x`-paths.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::engine::EvalConfig;
use crate::eval::functional::recursion_raw;
use crate::eval::measure::Terminal;
use crate::order::MonotoneChain;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvexityPoint {
    pub gamma: f64,
    pub value: f64,
    pub std_error: f64,
    /// Chord value minus curve value.
    pub margin: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvexityReport {
    pub points: Vec<ConvexityPoint>,
    /// `(f(x1) + f(x2)) / 2 - f((x1 + x2) / 2)`.
    pub midpoint_margin: f64,
    pub midpoint_std_error: f64,
    pub min_margin: f64,
}

/// Evaluates `f` at `gamma x1 + (1 - gamma) x2` for the fixed chain `q`;
/// `x1`, `x2` hold `x_1..x_n` and must be nondecreasing in `[0, 1]`.
pub fn convexity_probe(
    q: &MonotoneChain<f64>,
    x1: &[f64],
    x2: &[f64],
    gammas: &[f64],
    g: &dyn Terminal,
    cfg: &EvalConfig,
) -> Result<ConvexityReport> {
    let n = q.levels();
    if x1.len() != n || x2.len() != n {
        return Err(Error::InvalidArgument(format!(
            "x-paths need {n} levels, got {} and {}",
            x1.len(),
            x2.len()
        )));
    }
    let inc = q.increments();
    let eval = |gamma: f64| -> Result<(f64, f64)> {
        let mut xs = vec![0.0];
        xs.extend(x1.iter().zip(x2).map(|(a, b)| gamma * a + (1.0 - gamma) * b));
        if xs.windows(2).any(|w| w[1] < w[0]) || xs.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(Error::InvalidPartition("x-path must be nondecreasing in [0, 1]".into()));
        }
        let e = recursion_raw(&xs, &inc, g, cfg)?;
        Ok((e.value, e.std_error))
    };
    let (f1, s1) = eval(1.0)?;
    let (f0, s0) = eval(0.0)?;
    let (fm, sm) = eval(0.5)?;
    let mut points = Vec::with_capacity(gammas.len());
    for &gamma in gammas {
        let (v, se) = eval(gamma)?;
        points.push(ConvexityPoint {
            gamma,
            value: v,
            std_error: se,
            margin: gamma * f1 + (1.0 - gamma) * f0 - v,
        });
    }
    let min_margin = points.iter().map(|p| p.margin).fold(f64::INFINITY, f64::min);
    Ok(ConvexityReport {
        points,
        midpoint_margin: 0.5 * (f1 + f0) - fm,
        midpoint_std_error: (0.25 * s1 * s1 + 0.25 * s0 * s0 + sm * sm).sqrt(),
        min_margin,
    })
}
