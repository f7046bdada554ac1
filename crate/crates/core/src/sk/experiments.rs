//! Disorder experiments built on exact enumeration.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeds::child_seed;
use crate::stats::{clopper_pearson, Estimate};

use super::{exact_local_free_energy, Disorder, OverlapConstraint, SpinSpace};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailRow {
    /// Deviation of `log Z_N` from its sample mean.
    pub t: f64,
    pub empirical: f64,
    pub cp_lower: f64,
    pub cp_upper: f64,
    pub bound: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationReport {
    pub n: usize,
    pub beta: f64,
    pub replicas: usize,
    pub mean: Estimate,
    pub rows: Vec<TailRow>,
    pub pass: bool,
}

fn replica_values(
    n: usize,
    beta: f64,
    replicas: usize,
    v: &OverlapConstraint,
    space: &SpinSpace,
    seed: u64,
    label: &str,
) -> Result<Vec<f64>> {
    (0..replicas as u64)
        .into_par_iter()
        .map(|i| exact_local_free_energy(&Disorder::sample(n, child_seed(seed, label, i)), beta, v, space))
        .collect()
}

/// Empirical two-sided tails of `log Z_N` against `2 exp(-t^2 / (4 beta^2 r^4 N))`
/// on a grid where the bound runs from 1 down to `1e-3`. A grid point fails
/// only if the 95% Clopper-Pearson lower limit exceeds the bound.
pub fn concentration_experiment(
    n: usize,
    beta: f64,
    replicas: usize,
    space: &SpinSpace,
    grid_points: usize,
    seed: u64,
) -> Result<ConcentrationReport> {
    if replicas < 2 || grid_points < 2 {
        return Err(Error::InvalidArgument("need at least two replicas and grid points".into()));
    }
    let ps = replica_values(n, beta, replicas, &OverlapConstraint::All, space, seed, "concentration")?;
    let mean = Estimate::from_samples(&ps);
    let dev: Vec<f64> = ps.iter().map(|p| n as f64 * (p - mean.value).abs()).collect();
    let r = space.radius;
    let scale2 = 4.0 * beta * beta * r.powi(4) * n as f64;
    let rows = (0..grid_points)
        .map(|j| {
            let frac = j as f64 / (grid_points - 1) as f64;
            let t = if scale2 > 0.0 {
                (scale2 * (2f64.ln() + frac * 1000f64.ln())).sqrt()
            } else {
                0.1 + frac
            };
            let bound = 2.0 * (-t * t / scale2).exp();
            let k = dev.iter().filter(|&&d| d > t).count() as u64;
            let (lo, hi) = clopper_pearson(k, replicas as u64, 0.95);
            TailRow {
                t,
                empirical: k as f64 / replicas as f64,
                cp_lower: lo,
                cp_upper: hi,
                bound,
                pass: lo <= bound,
            }
        })
        .collect::<Vec<_>>();
    Ok(ConcentrationReport {
        n,
        beta,
        replicas,
        mean,
        pass: rows.iter().all(|r| r.pass),
        rows,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuperadditivityReport {
    pub n: usize,
    pub m: usize,
    pub p_n: Estimate,
    pub p_m: Estimate,
    pub p_nm: Estimate,
    /// `(N+M) E p_{N+M} - N E p_N - M E p_M`; nonnegative on the superadditive side.
    pub margin: Estimate,
    pub pass: bool,
}

/// The `N` and `M` systems use the diagonal blocks of the `N+M` couplings,
/// so the margin is estimated from paired replicas.
pub fn superadditivity_experiment(
    n: usize,
    m: usize,
    beta: f64,
    replicas: usize,
    v: &OverlapConstraint,
    space: &SpinSpace,
    seed: u64,
) -> Result<SuperadditivityReport> {
    if replicas < 2 {
        return Err(Error::InvalidArgument("need at least two replicas".into()));
    }
    let triples: Vec<(f64, f64, f64)> = (0..replicas as u64)
        .into_par_iter()
        .map(|i| {
            let big = Disorder::sample(n + m, child_seed(seed, "superadditivity", i));
            let pn = exact_local_free_energy(&big.sub_block(0, n)?, beta, v, space)?;
            let pm = exact_local_free_energy(&big.sub_block(n, m)?, beta, v, space)?;
            let pnm = exact_local_free_energy(&big, beta, v, space)?;
            Ok((pn, pm, pnm))
        })
        .collect::<Result<_>>()?;
    let col = |f: fn(&(f64, f64, f64)) -> f64| Estimate::from_samples(&triples.iter().map(f).collect::<Vec<_>>());
    let (nf, mf) = (n as f64, m as f64);
    let margins: Vec<f64> = triples
        .iter()
        .map(|t| (nf + mf) * t.2 - nf * t.0 - mf * t.1)
        .collect();
    let margin = Estimate::from_samples(&margins);
    Ok(SuperadditivityReport {
        n,
        m,
        p_n: col(|t| t.0),
        p_m: col(|t| t.1),
        p_nm: col(|t| t.2),
        pass: margin.value >= -3.0 * margin.std_error - 1e-12,
        margin,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundRow {
    pub n: usize,
    pub p: Estimate,
    /// Saddle value minus `E p_N`.
    pub gap: f64,
    pub holds: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub beta: f64,
    pub saddle_value: f64,
    pub rows: Vec<BoundRow>,
    pub holds: bool,
    pub gap_non_increasing: bool,
}

/// `E p_N <= saddle + 3 SE` for each `N`; smaller systems use leading blocks
/// of the largest system's couplings.
pub fn bound_check(
    ns: &[usize],
    beta: f64,
    space: &SpinSpace,
    saddle_value: f64,
    replicas: usize,
    seed: u64,
) -> Result<BoundReport> {
    let n_max = *ns
        .iter()
        .max()
        .ok_or_else(|| Error::InvalidArgument("no system sizes given".into()))?;
    if replicas < 2 {
        return Err(Error::InvalidArgument("need at least two replicas".into()));
    }
    let per: Vec<Vec<f64>> = (0..replicas as u64)
        .into_par_iter()
        .map(|i| {
            let big = Disorder::sample(n_max, child_seed(seed, "bound", i));
            ns.iter()
                .map(|&n| exact_local_free_energy(&big.sub_block(0, n)?, beta, &OverlapConstraint::All, space))
                .collect()
        })
        .collect::<Result<_>>()?;
    let rows: Vec<BoundRow> = ns
        .iter()
        .enumerate()
        .map(|(j, &n)| {
            let p = Estimate::from_samples(&per.iter().map(|r| r[j]).collect::<Vec<_>>());
            BoundRow {
                n,
                p,
                gap: saddle_value - p.value,
                holds: p.value <= saddle_value + 3.0 * p.std_error + 1e-12,
            }
        })
        .collect();
    let mut sorted: Vec<&BoundRow> = rows.iter().collect();
    sorted.sort_by_key(|r| r.n);
    Ok(BoundReport {
        beta,
        saddle_value,
        holds: rows.iter().all(|r| r.holds),
        gap_non_increasing: sorted.windows(2).all(|w| w[1].gap <= w[0].gap + 1e-12),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn concentration_at_beta_zero_is_trivial() {
        let r = concentration_experiment(6, 0.0, 50, &SpinSpace::rademacher(), 5, 1).unwrap();
        assert!(r.rows.iter().all(|row| row.empirical == 0.0 && row.bound == 0.0));
        assert!(r.pass);
    }

    #[test]
    fn concentration_bound_decreases() {
        let r = concentration_experiment(6, 1.0, 300, &SpinSpace::rademacher(), 8, 2).unwrap();
        assert!(r.rows.windows(2).all(|w| w[1].bound < w[0].bound && w[1].t > w[0].t));
        assert_abs_diff_eq!(r.rows[0].bound, 1.0, epsilon = 1e-12);
        assert!(r.pass, "{r:?}");
    }

    #[test]
    fn superadditivity_margin() {
        let s = SpinSpace::rademacher();
        let zero = superadditivity_experiment(3, 4, 0.0, 10, &OverlapConstraint::All, &s, 1).unwrap();
        assert_abs_diff_eq!(zero.margin.value, 0.0, epsilon = 1e-12);
        let r = superadditivity_experiment(3, 3, 0.7, 200, &OverlapConstraint::All, &s, 2).unwrap();
        assert!(r.pass, "{r:?}");
    }

    #[test]
    fn bound_at_beta_zero_is_tight() {
        let s = SpinSpace::rademacher();
        let r = bound_check(&[4, 6], 0.0, &s, 2f64.ln(), 5, 3).unwrap();
        for row in &r.rows {
            assert_abs_diff_eq!(row.gap, 0.0, epsilon = 1e-12);
        }
        assert!(r.holds && r.gap_non_increasing);
    }
}
