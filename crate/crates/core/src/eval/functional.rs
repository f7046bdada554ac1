use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::matrix::PsdMatrix;
use crate::order::{shifted_distance, DiscretePath, MonotoneChain, UnitPartition};
use crate::pde::hopf_cole::compose_segments;
use crate::stats::Estimate;

use super::engine::{build_rules, nested_value, EvalConfig, Engine};
use super::measure::{Terminal, TerminalCondition};

/// `X_0` from jump parameters `xs = (x_0, ..., x_n)` and increments
/// `Delta Q^(0), ..., Delta Q^(n)`.
pub fn recursion_raw(
    xs: &[f64],
    increments: &[PsdMatrix<f64>],
    terminal: &dyn Terminal,
    cfg: &EvalConfig,
) -> Result<Estimate> {
    if xs.len() != increments.len() {
        return Err(Error::InvalidArgument(format!(
            "{} jump parameters for {} increments",
            xs.len(),
            increments.len()
        )));
    }
    if let Some(q) = increments.iter().find(|q| q.dim() != terminal.dim()) {
        return Err(Error::DimensionMismatch {
            expected: terminal.dim(),
            found: q.dim(),
        });
    }
    terminal.check_feasible(xs, increments)?;
    match cfg.engine {
        Engine::GaussHermite { .. } => {
            let rules = build_rules(increments, cfg, 0)?;
            Ok(Estimate::exact(nested_value(
                &rules,
                xs,
                terminal,
                cfg.small_x_threshold,
            )))
        }
        Engine::MonteCarlo { replicas, .. } => {
            let values = (0..replicas as u64)
                .into_par_iter()
                .map(|r| {
                    let rules = build_rules(increments, cfg, r)?;
                    Ok(nested_value(&rules, xs, terminal, cfg.small_x_threshold))
                })
                .collect::<Result<Vec<f64>>>()?;
            Ok(Estimate::from_samples(&values))
        }
    }
}

fn check_shapes(x: &UnitPartition<f64>, q: &MonotoneChain<f64>) -> Result<()> {
    if x.levels() != q.levels() {
        return Err(Error::InvalidArgument(format!(
            "partition has {} levels, chain has {}",
            x.levels(),
            q.levels()
        )));
    }
    Ok(())
}

/// `X_0(x, Q, U, Lambda)` by the descending recursion.
pub fn recursion_x0(
    x: &UnitPartition<f64>,
    q: &MonotoneChain<f64>,
    terminal: &dyn Terminal,
    cfg: &EvalConfig,
) -> Result<Estimate> {
    check_shapes(x, q)?;
    let n = x.levels();
    recursion_raw(&x.values()[..=n], &q.increments(), terminal, cfg)
}

/// `(beta^2/2) sum_{k=1}^n x_k (|Q^(k+1)|_F^2 - |Q^(k)|_F^2)`.
pub fn phi_b(x: &UnitPartition<f64>, q: &MonotoneChain<f64>, beta: f64) -> f64 {
    let n = x.levels();
    let s: f64 = (1..=n)
        .map(|k| {
            x.get(k) * (q.get(k + 1).frobenius_norm_sq() - q.get(k).frobenius_norm_sq())
        })
        .sum();
    0.5 * beta * beta * s
}

/// `-<Lambda, U> - Phi[B] + X_0`.
pub fn local_parisi_f(
    x: &UnitPartition<f64>,
    q: &MonotoneChain<f64>,
    tc: &TerminalCondition,
    cfg: &EvalConfig,
) -> Result<Estimate> {
    check_shapes(x, q)?;
    let x0 = recursion_x0(x, q, tc, cfg)?;
    let shift = -tc.lambda().frobenius_inner(q.terminal())? - phi_b(x, q, tc.beta());
    Ok(Estimate {
        value: x0.value + shift,
        std_error: x0.std_error,
    })
}

/// Path form: `f_rho(0,0) - (beta^2/2) int x d|rho|^2 - <U, Lambda>`, with
/// `f_rho` obtained by composing one Hopf-Cole propagator per segment and the
/// Stieltjes integral taken along the linear interpolant.
pub fn parisi_p(path: &DiscretePath<f64>, tc: &TerminalCondition, cfg: &EvalConfig) -> Result<Estimate> {
    let f0 = path_value(path, tc, cfg)?;
    let li = path.linear_interpolant();
    let x = path.partition().values();
    let stieltjes: f64 = (0..li.segments())
        .map(|k| {
            x[k] * (li.eval(x[k + 1]).frobenius_norm_sq() - li.eval(x[k]).frobenius_norm_sq())
        })
        .sum();
    let shift = -0.5 * tc.beta() * tc.beta() * stieltjes
        - tc.lambda().frobenius_inner(path.terminal())?;
    Ok(Estimate {
        value: f0.value + shift,
        std_error: f0.std_error,
    })
}

/// `f_rho(0, 0)` through the segment propagators.
pub fn path_value(path: &DiscretePath<f64>, terminal: &dyn Terminal, cfg: &EvalConfig) -> Result<Estimate> {
    let n = path.levels();
    let xs = &path.partition().values()[..=n];
    let inc = path.chain().increments();
    terminal.check_feasible(xs, &inc)?;
    match cfg.engine {
        Engine::GaussHermite { .. } => {
            let rules = build_rules(&inc, cfg, 0)?;
            Ok(Estimate::exact(compose_segments(
                terminal,
                xs,
                &rules,
                cfg.small_x_threshold,
            )))
        }
        Engine::MonteCarlo { .. } => recursion_raw(xs, &inc, terminal, cfg),
    }
}

/// `(|f_rho1(0,0) - f_rho2(0,0)|, (C_g / 2) int |rho1# - rho2#|_F)`, the
/// distance taken between the left-shifted paths.
pub fn lipschitz_witness(
    rho1: &DiscretePath<f64>,
    rho2: &DiscretePath<f64>,
    tc: &TerminalCondition,
    cfg: &EvalConfig,
    allow_different_terminal: bool,
) -> Result<(f64, f64)> {
    let cg = tc.gradient_bound();
    if !cg.is_finite() {
        return Err(Error::InvalidArgument(
            "Lipschitz constant needs a bounded support".into(),
        ));
    }
    let dist = shifted_distance(rho1, rho2, allow_different_terminal)?;
    let f1 = recursion_x0(rho1.partition(), rho1.chain(), tc, cfg)?.value;
    let f2 = recursion_x0(rho2.partition(), rho2.chain(), tc, cfg)?.value;
    Ok(((f1 - f2).abs(), 0.5 * cg * dist))
}
