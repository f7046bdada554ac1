//! Parallel tempering with thermodynamic integration in `beta`.

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeds::{child_seed, rng, Rng};
use crate::stats::Estimate;

use super::enumerate::{delta_energy, dot_table, energy, local_fields, update_fields};
use super::{composition_overlap, constrained_log_mass, feasible_start, Disorder, OverlapConstraint, SpinSpace};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McSchedule {
    #[serde(default = "default_rungs")]
    pub rungs: usize,
    #[serde(default = "default_sweeps")]
    pub sweeps: usize,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    #[serde(default = "default_swap_every")]
    pub swap_every: usize,
    /// Independent tempering runs; the standard error is taken across them.
    #[serde(default = "default_chains")]
    pub chains: usize,
    pub seed: u64,
}

fn default_rungs() -> usize {
    16
}
fn default_sweeps() -> usize {
    4000
}
fn default_burn_in() -> usize {
    500
}
fn default_swap_every() -> usize {
    10
}
fn default_chains() -> usize {
    8
}

impl McSchedule {
    pub fn new(seed: u64) -> Self {
        Self {
            rungs: default_rungs(),
            sweeps: default_sweeps(),
            burn_in: default_burn_in(),
            swap_every: default_swap_every(),
            chains: default_chains(),
            seed,
        }
    }

    /// `0` followed by a geometric ladder from `beta / 32` to `beta`.
    pub fn ladder(&self, beta: f64) -> Vec<f64> {
        let r = self.rungs;
        let mut b = vec![0.0];
        let lo = beta / 32.0;
        for j in 0..r - 1 {
            let t = if r > 2 { j as f64 / (r - 2) as f64 } else { 1.0 };
            b.push(lo * (beta / lo).powf(t));
        }
        b
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RungStat {
    pub beta: f64,
    /// `<sqrt(N) X_N>` at this rung.
    pub mean: f64,
    pub variance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub estimate: Estimate,
    /// Smallest replica-exchange acceptance over adjacent rungs.
    pub swap_acceptance: f64,
    pub converged: bool,
    /// Rung statistics averaged over chains.
    pub rungs: Vec<RungStat>,
}

struct Walker {
    s: Vec<usize>,
    counts: Vec<usize>,
    f: Vec<Vec<f64>>,
    e: f64,
    lw: f64,
}

struct ChainResult {
    p: f64,
    accepted: Vec<u64>,
    tried: Vec<u64>,
    stats: Vec<(f64, f64)>,
}

fn run_chain(
    disorder: &Disorder,
    ladder: &[f64],
    v: &OverlapConstraint,
    space: &SpinSpace,
    sched: &McSchedule,
    log_z0: f64,
    start: &[usize],
    r: &mut Rng,
) -> ChainResult {
    let n = disorder.n;
    let k = space.size();
    let sqrt_n = (n as f64).sqrt();
    let dots = dot_table(space);
    let all = matches!(v, OverlapConstraint::All);
    let mut counts0 = vec![0usize; k];
    start.iter().for_each(|&c| counts0[c] += 1);
    let mut walkers: Vec<Walker> = ladder
        .iter()
        .map(|_| Walker {
            s: start.to_vec(),
            counts: counts0.clone(),
            f: local_fields(disorder, &dots, start),
            e: energy(disorder, &dots, start),
            lw: start.iter().map(|&c| space.log_weights[c]).sum(),
        })
        .collect();
    let rungs = ladder.len();
    let mut sums = vec![(0.0, 0.0); rungs];
    let mut accepted = vec![0u64; rungs.saturating_sub(1)];
    let mut tried = vec![0u64; rungs.saturating_sub(1)];
    let total = sched.burn_in + sched.sweeps;
    for sweep in 0..total {
        for (w, &b) in walkers.iter_mut().zip(ladder) {
            for _ in 0..n {
                if k < 2 {
                    break;
                }
                let i = r.random_range(0..n);
                let a = w.s[i];
                let mut c = r.random_range(0..k - 1);
                if c >= a {
                    c += 1;
                }
                if !all {
                    w.counts[a] -= 1;
                    w.counts[c] += 1;
                    let ok = v.admits(&composition_overlap(space, &w.counts, n));
                    w.counts[a] += 1;
                    w.counts[c] -= 1;
                    if !ok {
                        continue;
                    }
                }
                let de = delta_energy(disorder, &dots, &w.f, i, a, c);
                let dl = b * de / sqrt_n + space.log_weights[c] - space.log_weights[a];
                if dl >= 0.0 || r.random::<f64>() < dl.exp() {
                    update_fields(disorder, &dots, &mut w.f, i, a, c);
                    w.s[i] = c;
                    w.counts[a] -= 1;
                    w.counts[c] += 1;
                    w.e += de;
                    w.lw += space.log_weights[c] - space.log_weights[a];
                }
            }
        }
        if (sweep + 1) % sched.swap_every == 0 {
            let parity = (sweep / sched.swap_every) % 2;
            let mut j = parity;
            while j + 1 < rungs {
                let (aj, ak) = (walkers[j].e / sqrt_n, walkers[j + 1].e / sqrt_n);
                let dl = (ladder[j] - ladder[j + 1]) * (ak - aj);
                tried[j] += 1;
                if dl >= 0.0 || r.random::<f64>() < dl.exp() {
                    walkers.swap(j, j + 1);
                    accepted[j] += 1;
                }
                j += 2;
            }
        }
        if sweep >= sched.burn_in {
            for (acc, w) in sums.iter_mut().zip(&walkers) {
                let a = w.e / sqrt_n;
                acc.0 += a;
                acc.1 += a * a;
            }
        }
    }
    let m = sched.sweeps as f64;
    let stats: Vec<(f64, f64)> = sums
        .iter()
        .map(|(s1, s2)| {
            let mean = s1 / m;
            (mean, (s2 / m - mean * mean).max(0.0))
        })
        .collect();
    // Cubic Hermite rule using d<A>/db = Var(A).
    let mut integral = 0.0;
    for j in 0..rungs - 1 {
        let h = ladder[j + 1] - ladder[j];
        integral += 0.5 * h * (stats[j].0 + stats[j + 1].0) + h * h / 12.0 * (stats[j].1 - stats[j + 1].1);
    }
    ChainResult {
        p: (log_z0 + integral) / n as f64,
        accepted,
        tried,
        stats,
    }
}

/// Thermodynamic-integration estimate of the local free energy with
/// tempering over a ladder in `beta`; the constraint is enforced by rejection.
pub fn mc_free_energy(
    disorder: &Disorder,
    beta: f64,
    v: &OverlapConstraint,
    space: &SpinSpace,
    sched: &McSchedule,
) -> Result<McEstimate> {
    v.check_dim(space.d)?;
    if sched.rungs < 2 || sched.sweeps == 0 || sched.swap_every == 0 || sched.chains < 2 {
        return Err(Error::InvalidArgument(
            "need at least two rungs, two chains and positive sweep counts".into(),
        ));
    }
    let n = disorder.n;
    let log_z0 = constrained_log_mass(space, n, v)?;
    if beta == 0.0 {
        return Ok(McEstimate {
            estimate: Estimate::exact(log_z0 / n as f64),
            swap_acceptance: 1.0,
            converged: true,
            rungs: vec![],
        });
    }
    let ladder = sched.ladder(beta);
    let start = feasible_start(space, n, v)?;
    let results: Vec<ChainResult> = (0..sched.chains as u64)
        .into_par_iter()
        .map(|c| {
            let mut r = rng(child_seed(sched.seed, "tempering", c));
            let mut s = start.clone();
            // Random site order of the starting composition.
            for i in (1..s.len()).rev() {
                let j = r.random_range(0..=i);
                s.swap(i, j);
            }
            run_chain(disorder, &ladder, v, space, sched, log_z0, &s, &mut r)
        })
        .collect();
    let ps: Vec<f64> = results.iter().map(|c| c.p).collect();
    let swap_acceptance = (0..ladder.len() - 1)
        .map(|j| {
            let a: u64 = results.iter().map(|c| c.accepted[j]).sum();
            let t: u64 = results.iter().map(|c| c.tried[j]).sum();
            if t == 0 {
                1.0
            } else {
                a as f64 / t as f64
            }
        })
        .fold(1.0, f64::min);
    let chains = results.len() as f64;
    let rungs = ladder
        .iter()
        .enumerate()
        .map(|(j, &b)| RungStat {
            beta: b,
            mean: results.iter().map(|c| c.stats[j].0).sum::<f64>() / chains,
            variance: results.iter().map(|c| c.stats[j].1).sum::<f64>() / chains,
        })
        .collect();
    Ok(McEstimate {
        estimate: Estimate::from_samples(&ps),
        swap_acceptance,
        converged: swap_acceptance >= 0.1,
        rungs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sk::exact_local_free_energy;
    use approx::assert_abs_diff_eq;

    #[test]
    fn ladder_shape() {
        let l = McSchedule::new(0).ladder(1.5);
        assert_eq!(l.len(), 16);
        assert_eq!(l[0], 0.0);
        assert_abs_diff_eq!(l[15], 1.5, epsilon = 1e-12);
        assert!(l.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn beta_zero_is_exact() {
        let s = SpinSpace::hypercube(2);
        let e = mc_free_energy(&Disorder::sample(5, 1), 0.0, &OverlapConstraint::All, &s, &McSchedule::new(1)).unwrap();
        assert_eq!(e.estimate.value, s.log_mass());
        assert_eq!(e.estimate.std_error, 0.0);
    }

    #[test]
    fn agrees_with_enumeration() {
        let s = SpinSpace::rademacher();
        for (seed, beta) in [(3u64, 1.0), (4, 0.5)] {
            let dis = Disorder::sample(8, seed);
            let exact = exact_local_free_energy(&dis, beta, &OverlapConstraint::All, &s).unwrap();
            let e = mc_free_energy(&dis, beta, &OverlapConstraint::All, &s, &McSchedule::new(seed)).unwrap();
            assert!(e.converged, "{e:?}");
            assert!(e.estimate.within(exact, 3.0, 1e-9), "{:?} vs {exact}", e.estimate);
        }
    }

    #[test]
    fn constrained_run_agrees_with_enumeration() {
        let s = SpinSpace::new(vec![vec![-1.0], vec![0.5], vec![2.0]], vec![0.2, 0.5, 0.3]).unwrap();
        let ball = OverlapConstraint::Ball { u: vec![vec![1.0]], eps: 0.6 };
        let dis = Disorder::sample(6, 8);
        let exact = exact_local_free_energy(&dis, 0.7, &ball, &s).unwrap();
        let e = mc_free_energy(&dis, 0.7, &ball, &s, &McSchedule::new(5)).unwrap();
        assert!(e.estimate.within(exact, 3.0, 1e-9), "{:?} vs {exact}", e.estimate);
    }

    #[test]
    fn rung_means_increase_with_beta() {
        let dis = Disorder::sample(8, 12);
        let e = mc_free_energy(&dis, 1.2, &OverlapConstraint::All, &SpinSpace::rademacher(), &McSchedule::new(2)).unwrap();
        for w in e.rungs.windows(2) {
            let slack = 0.1 * (w[0].variance + w[1].variance).sqrt();
            assert!(w[1].mean >= w[0].mean - slack, "{w:?}");
        }
    }
}
