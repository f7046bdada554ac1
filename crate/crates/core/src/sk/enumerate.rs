//! Exact local free energy by enumerating every configuration.

use crate::error::{Error, Result};
use crate::stats::LogSumExp;

use super::{composition_overlap, Disorder, OverlapConstraint, SpinSpace};

/// Largest number of configurations enumerated.
pub const ENUMERATION_BUDGET: f64 = (1u64 << 24) as f64;

const REFRESH: usize = 4096;

fn check(disorder: &Disorder, v: &OverlapConstraint, space: &SpinSpace) -> Result<()> {
    v.check_dim(space.d)?;
    if disorder.n == 0 {
        return Err(Error::InvalidArgument("need at least one site".into()));
    }
    let states = (space.size() as f64).powi(disorder.n as i32);
    if states > ENUMERATION_BUDGET {
        return Err(Error::BudgetExceeded {
            states,
            budget: ENUMERATION_BUDGET,
        });
    }
    Ok(())
}

fn empty_set() -> Error {
    Error::InvalidArgument("empty overlap constraint set; epsilon too small".into())
}

/// Dot products `<p_a, p_b>` between support points.
pub(crate) fn dot_table(space: &SpinSpace) -> Vec<Vec<f64>> {
    space
        .points
        .iter()
        .map(|a| {
            space
                .points
                .iter()
                .map(|b| a.iter().zip(b).map(|(x, y)| x * y).sum())
                .collect()
        })
        .collect()
}

/// `sum_{i,j} g_ij <sigma_i, sigma_j>` for state indices.
pub(crate) fn energy(disorder: &Disorder, dots: &[Vec<f64>], s: &[usize]) -> f64 {
    let n = disorder.n;
    let mut e = 0.0;
    for i in 0..n {
        for j in 0..n {
            e += disorder.get(i, j) * dots[s[i]][s[j]];
        }
    }
    e
}

/// `F[i][c] = sum_{j != i} (g_ij + g_ji) <p_c, sigma_j>`.
pub(crate) fn local_fields(disorder: &Disorder, dots: &[Vec<f64>], s: &[usize]) -> Vec<Vec<f64>> {
    let n = disorder.n;
    let k = dots.len();
    (0..n)
        .map(|i| {
            (0..k)
                .map(|c| {
                    (0..n)
                        .filter(|&j| j != i)
                        .map(|j| (disorder.get(i, j) + disorder.get(j, i)) * dots[c][s[j]])
                        .sum()
                })
                .collect()
        })
        .collect()
}

/// Energy change when site `i` moves from `a` to `b`.
pub(crate) fn delta_energy(disorder: &Disorder, dots: &[Vec<f64>], f: &[Vec<f64>], i: usize, a: usize, b: usize) -> f64 {
    f[i][b] - f[i][a] + disorder.get(i, i) * (dots[b][b] - dots[a][a])
}

pub(crate) fn update_fields(disorder: &Disorder, dots: &[Vec<f64>], f: &mut [Vec<f64>], i: usize, a: usize, b: usize) {
    for (j, row) in f.iter_mut().enumerate() {
        if j == i {
            continue;
        }
        let c = disorder.get(j, i) + disorder.get(i, j);
        for (col, v) in row.iter_mut().enumerate() {
            *v += c * (dots[col][b] - dots[col][a]);
        }
    }
}

/// `(1/N) log sum_{sigma : R(sigma, sigma) in V} exp(beta sqrt(N) X_N(sigma)) prod w(sigma_i)`,
/// walking the reflected Gray code so each step moves one site.
pub fn exact_local_free_energy(
    disorder: &Disorder,
    beta: f64,
    v: &OverlapConstraint,
    space: &SpinSpace,
) -> Result<f64> {
    check(disorder, v, space)?;
    let n = disorder.n;
    let k = space.size();
    let scale = beta / (n as f64).sqrt();
    let dots = dot_table(space);
    let mut s = vec![0usize; n];
    let mut dir = vec![1i64; n];
    let mut counts = vec![0usize; k];
    counts[0] = n;
    let mut e = energy(disorder, &dots, &s);
    let mut f = local_fields(disorder, &dots, &s);
    let mut lw = n as f64 * space.log_weights[0];
    let all = matches!(v, OverlapConstraint::All);
    let mut acc = LogSumExp::default();
    let mut steps = 0usize;
    loop {
        if all || v.admits(&composition_overlap(space, &counts, n)) {
            acc.push(scale * e + lw);
        }
        // Advance the lowest digit that can still move in its direction.
        let mut j = 0;
        while j < n {
            let next = s[j] as i64 + dir[j];
            if (0..k as i64).contains(&next) {
                break;
            }
            dir[j] = -dir[j];
            j += 1;
        }
        if j == n {
            break;
        }
        let (a, b) = (s[j], (s[j] as i64 + dir[j]) as usize);
        e += delta_energy(disorder, &dots, &f, j, a, b);
        update_fields(disorder, &dots, &mut f, j, a, b);
        s[j] = b;
        counts[a] -= 1;
        counts[b] += 1;
        lw += space.log_weights[b] - space.log_weights[a];
        steps += 1;
        if steps % REFRESH == 0 {
            e = energy(disorder, &dots, &s);
            f = local_fields(disorder, &dots, &s);
            lw = s.iter().map(|&c| space.log_weights[c]).sum();
        }
    }
    let z = acc.value();
    if !z.is_finite() {
        return Err(empty_set());
    }
    Ok(z / n as f64)
}

/// Same quantity by direct evaluation of every configuration.
pub fn naive_local_free_energy(
    disorder: &Disorder,
    beta: f64,
    v: &OverlapConstraint,
    space: &SpinSpace,
) -> Result<f64> {
    check(disorder, v, space)?;
    let n = disorder.n;
    let k = space.size();
    let scale = beta / (n as f64).sqrt();
    let dots = dot_table(space);
    let total = k.pow(n as u32);
    let mut acc = LogSumExp::default();
    let mut s = vec![0usize; n];
    let mut counts = vec![0usize; k];
    for idx in 0..total {
        let mut r = idx;
        counts.iter_mut().for_each(|c| *c = 0);
        for site in s.iter_mut() {
            *site = r % k;
            r /= k;
            counts[*site] += 1;
        }
        if v.admits(&composition_overlap(space, &counts, n)) {
            let lw: f64 = s.iter().map(|&c| space.log_weights[c]).sum();
            acc.push(scale * energy(disorder, &dots, &s) + lw);
        }
    }
    let z = acc.value();
    if !z.is_finite() {
        return Err(empty_set());
    }
    Ok(z / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::AprioriMeasure;
    use crate::matrix::{Square, SymMatrix};
    use crate::seeds::child_seed;
    use crate::stats::Estimate;
    use approx::assert_abs_diff_eq;

    fn rel_close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
    }

    #[test]
    fn beta_zero_probability_measure() {
        let s = SpinSpace::hypercube(2).normalized();
        let p = exact_local_free_energy(&Disorder::sample(5, 1), 0.0, &OverlapConstraint::All, &s).unwrap();
        assert_abs_diff_eq!(p, 0.0, epsilon = 1e-14);
    }

    #[test]
    fn constant_self_overlap_makes_constraint_idle() {
        let s = SpinSpace::rademacher();
        let dis = Disorder::sample(9, 2);
        let ball = OverlapConstraint::Ball { u: vec![vec![1.0]], eps: 0.05 };
        let a = exact_local_free_energy(&dis, 0.8, &ball, &s).unwrap();
        let b = exact_local_free_energy(&dis, 0.8, &OverlapConstraint::All, &s).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn gray_code_matches_naive() {
        let s = SpinSpace::rademacher();
        for n in [1, 2, 7, 10] {
            let dis = Disorder::sample(n, 10 + n as u64);
            let a = exact_local_free_energy(&dis, 1.3, &OverlapConstraint::All, &s).unwrap();
            let b = naive_local_free_energy(&dis, 1.3, &OverlapConstraint::All, &s).unwrap();
            assert!(rel_close(a, b), "n={n}: {a} {b}");
        }
        let cube = SpinSpace::hypercube(2);
        let dis = Disorder::sample(5, 3);
        let a = exact_local_free_energy(&dis, 0.9, &OverlapConstraint::All, &cube).unwrap();
        let b = naive_local_free_energy(&dis, 0.9, &OverlapConstraint::All, &cube).unwrap();
        assert!(rel_close(a, b));
        let three = SpinSpace::new(vec![vec![-1.0], vec![0.5], vec![2.0]], vec![0.2, 0.5, 0.3]).unwrap();
        let ball = OverlapConstraint::Ball { u: vec![vec![1.0]], eps: 0.6 };
        let dis = Disorder::sample(6, 4);
        let a = exact_local_free_energy(&dis, 0.7, &ball, &three).unwrap();
        let b = naive_local_free_energy(&dis, 0.7, &ball, &three).unwrap();
        assert!(rel_close(a, b), "{a} {b}");
        let tight = OverlapConstraint::Ball { u: vec![vec![9.0]], eps: 0.01 };
        assert!(exact_local_free_energy(&dis, 0.7, &tight, &three).is_err());
    }

    #[test]
    fn budget_is_enforced() {
        let dis = Disorder::sample(25, 1);
        assert!(matches!(
            exact_local_free_energy(&dis, 1.0, &OverlapConstraint::All, &SpinSpace::rademacher()),
            Err(Error::BudgetExceeded { .. })
        ));
    }

    #[test]
    fn annealed_bound() {
        let s = SpinSpace::rademacher();
        let ps: Vec<f64> = (0..200u64)
            .map(|i| {
                let dis = Disorder::sample(8, child_seed(11, "annealed", i));
                exact_local_free_energy(&dis, 1.0, &OverlapConstraint::All, &s).unwrap()
            })
            .collect();
        let e = Estimate::from_samples(&ps);
        assert!(e.value <= 2f64.ln() + 0.5 + 3.0 * e.std_error, "{e:?}");
    }

    #[test]
    fn relabelling_sites_and_rotating_spins() {
        let n = 6;
        let dis = Disorder::sample(n, 21);
        let perm = [3, 0, 5, 1, 4, 2];
        let g = (0..n * n).map(|e| dis.get(perm[e / n], perm[e % n])).collect();
        let shuffled = Disorder { n, g, seed: dis.seed };
        let s = SpinSpace::rademacher();
        let a = exact_local_free_energy(&dis, 1.1, &OverlapConstraint::All, &s).unwrap();
        let b = exact_local_free_energy(&shuffled, 1.1, &OverlapConstraint::All, &s).unwrap();
        assert!(rel_close(a, b));

        let mu = AprioriMeasure::gaussian(SymMatrix::identity(2).scale(2.0), vec![0.0, 0.0]).unwrap();
        let space = SpinSpace::from_measure(&mu, 3).unwrap();
        let rot = Square::rotation(0.7);
        let rotated = SpinSpace {
            points: space.points.iter().map(|p| rot.mat_vec(p)).collect(),
            ..space.clone()
        };
        let dis = Disorder::sample(4, 22);
        let a = exact_local_free_energy(&dis, 0.6, &OverlapConstraint::All, &space).unwrap();
        let b = exact_local_free_energy(&dis, 0.6, &OverlapConstraint::All, &rotated).unwrap();
        assert!(rel_close(a, b), "{a} {b}");
    }
}
