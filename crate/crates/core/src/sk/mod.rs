//! Finite-N vector-spin SK model: Hamiltonian, overlaps, exact enumeration,
//! tempering estimates and disorder experiments.

mod enumerate;
mod experiments;
mod mc;

pub use enumerate::{exact_local_free_energy, naive_local_free_energy, ENUMERATION_BUDGET};
pub use experiments::{
    bound_check, concentration_experiment, superadditivity_experiment, BoundReport, BoundRow,
    ConcentrationReport, SuperadditivityReport, TailRow,
};
pub use mc::{mc_free_energy, McEstimate, McSchedule};

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::AprioriMeasure;
use crate::matrix::SymMatrix;
use crate::seeds::rng;
use crate::stats::log_sum_exp;

/// Finite single-site space with log weights.
#[derive(Clone, Debug, PartialEq)]
pub struct SpinSpace {
    pub d: usize,
    pub points: Vec<Vec<f64>>,
    pub log_weights: Vec<f64>,
    /// `max |sigma|`.
    pub radius: f64,
}

impl SpinSpace {
    pub fn new(points: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        let m = AprioriMeasure::discrete(points, weights)?;
        Self::from_measure(&m, 0)
    }

    pub fn rademacher() -> Self {
        Self::hypercube(1)
    }

    pub fn hypercube(d: usize) -> Self {
        Self::from_measure(&AprioriMeasure::hypercube(d), 0).expect("finite support")
    }

    /// Discrete measures are used as given; Gaussian ones are discretised on
    /// `nodes` points per principal axis within 4 standard deviations.
    pub fn from_measure(mu: &AprioriMeasure, nodes: usize) -> Result<Self> {
        let (points, log_weights) = match mu {
            AprioriMeasure::Discrete { points, weights } => {
                (points.clone(), weights.iter().map(|w| w.ln()).collect::<Vec<_>>())
            }
            AprioriMeasure::Gaussian { c, h } => {
                if nodes < 2 {
                    return Err(Error::InvalidArgument("need at least two nodes per axis".into()));
                }
                let d = c.dim();
                let cov = c.inverse_pd()?;
                let mean = cov.mat_vec(h);
                let eig = cov.eigen();
                let total = nodes.pow(d as u32);
                let mut pts = Vec::with_capacity(total);
                let mut lw = Vec::with_capacity(total);
                for idx in 0..total {
                    let mut p = mean.clone();
                    let mut v = idx;
                    for a in 0..d {
                        let k = v % nodes;
                        v /= nodes;
                        let s = eig.values[a].max(0.0).sqrt();
                        let z = -4.0 + 8.0 * k as f64 / (nodes - 1) as f64;
                        for (u, pu) in p.iter_mut().enumerate() {
                            *pu += z * s * eig.vectors.get(u, a);
                        }
                    }
                    let dev: Vec<f64> = p.iter().zip(&mean).map(|(a, b)| a - b).collect();
                    lw.push(-0.5 * c.quad_form(&dev));
                    pts.push(p);
                }
                let shift = mu.log_mass() - log_sum_exp(lw.iter().copied());
                (pts, lw.into_iter().map(|w| w + shift).collect())
            }
        };
        let d = points[0].len();
        let radius = points
            .iter()
            .map(|p| p.iter().map(|v| v * v).sum::<f64>().sqrt())
            .fold(0.0, f64::max);
        Ok(Self {
            d,
            points,
            log_weights,
            radius,
        })
    }

    pub fn size(&self) -> usize {
        self.points.len()
    }

    /// `log mu(Sigma)`.
    pub fn log_mass(&self) -> f64 {
        log_sum_exp(self.log_weights.iter().copied())
    }

    /// Same points with weights rescaled to a probability measure.
    pub fn normalized(&self) -> Self {
        let z = self.log_mass();
        Self {
            log_weights: self.log_weights.iter().map(|w| w - z).collect(),
            ..self.clone()
        }
    }

    pub fn config(&self, states: &[usize]) -> Vec<Vec<f64>> {
        states.iter().map(|&s| self.points[s].clone()).collect()
    }
}

/// `N x N` i.i.d. standard normal couplings, not symmetrised.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Disorder {
    pub n: usize,
    /// Row-major `g[i * n + j]`.
    pub g: Vec<f64>,
    pub seed: u64,
}

impl Disorder {
    pub fn sample(n: usize, seed: u64) -> Self {
        let mut r = rng(seed);
        let g = (0..n * n).map(|_| StandardNormal.sample(&mut r)).collect();
        Self { n, g, seed }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.g[i * self.n + j]
    }

    /// Couplings among sites `start..start + m`.
    pub fn sub_block(&self, start: usize, m: usize) -> Result<Self> {
        if start + m > self.n {
            return Err(Error::InvalidArgument(format!(
                "block {start}..{} outside {} sites",
                start + m,
                self.n
            )));
        }
        let g = (0..m * m)
            .map(|e| self.get(start + e / m, start + e % m))
            .collect();
        Ok(Self { n: m, g, seed: self.seed })
    }
}

fn check_config(sigma: &[Vec<f64>]) -> Result<usize> {
    let d = sigma.first().map_or(0, |s| s.len());
    if d == 0 || sigma.iter().any(|s| s.len() != d) {
        return Err(Error::InvalidArgument("configuration with unequal or empty spins".into()));
    }
    Ok(d)
}

/// `X_N(sigma) = (1/N) sum_{i,j} g_ij <sigma_i, sigma_j>`.
pub fn hamiltonian_x(sigma: &[Vec<f64>], disorder: &Disorder) -> Result<f64> {
    if sigma.len() != disorder.n {
        return Err(Error::DimensionMismatch {
            expected: disorder.n,
            found: sigma.len(),
        });
    }
    check_config(sigma)?;
    let n = disorder.n;
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            let dot: f64 = sigma[i].iter().zip(&sigma[j]).map(|(a, b)| a * b).sum();
            s += disorder.get(i, j) * dot;
        }
    }
    Ok(s / n as f64)
}

/// `d x d` overlap matrix, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OverlapMatrix {
    pub d: usize,
    pub r: Vec<f64>,
}

impl OverlapMatrix {
    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.r[u * self.d + v]
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.r.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (0..self.d).all(|u| (0..self.d).all(|v| (self.get(u, v) - self.get(v, u)).abs() <= tol))
    }

    pub fn symmetric(&self) -> SymMatrix<f64> {
        SymMatrix::from_fn(self.d, |u, v| 0.5 * (self.get(u, v) + self.get(v, u)))
    }
}

/// `R[u][v] = (1/N) sum_i sigma1_{i,u} sigma2_{i,v}`.
pub fn overlap(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<OverlapMatrix> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    let d = check_config(a)?;
    if check_config(b)? != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: b[0].len(),
        });
    }
    let n = a.len() as f64;
    let mut r = vec![0.0; d * d];
    for (sa, sb) in a.iter().zip(b) {
        for u in 0..d {
            for v in 0..d {
                r[u * d + v] += sa[u] * sb[v];
            }
        }
    }
    r.iter_mut().for_each(|v| *v /= n);
    Ok(OverlapMatrix { d, r })
}

/// The `2d x 2d` Gram matrix `[[R11, R12], [R21, R22]]` of two configurations.
pub fn block_overlap(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<SymMatrix<f64>> {
    let blocks = [
        [overlap(a, a)?, overlap(a, b)?],
        [overlap(b, a)?, overlap(b, b)?],
    ];
    let d = blocks[0][0].d;
    Ok(SymMatrix::from_fn(2 * d, |u, v| {
        let bl = &blocks[u / d][v / d];
        bl.get(u % d, v % d)
    }))
}

/// Admissible self-overlaps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OverlapConstraint {
    All,
    /// `||R - U||_F <= eps`.
    Ball { u: Vec<Vec<f64>>, eps: f64 },
}

impl OverlapConstraint {
    /// Ball of radius `0.05 ||U||_F`.
    pub fn default_ball(u: &SymMatrix<f64>) -> Self {
        Self::Ball {
            u: u.rows(),
            eps: 0.05 * u.frobenius_norm(),
        }
    }

    pub fn admits(&self, r: &[f64]) -> bool {
        match self {
            Self::All => true,
            Self::Ball { u, eps } => {
                let d = u.len();
                let dist: f64 = (0..d * d).map(|e| (r[e] - u[e / d][e % d]).powi(2)).sum();
                dist.sqrt() <= *eps + 1e-12
            }
        }
    }

    pub fn check_dim(&self, d: usize) -> Result<()> {
        if let Self::Ball { u, eps } = self {
            if u.len() != d || u.iter().any(|r| r.len() != d) {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: u.len(),
                });
            }
            if !(*eps >= 0.0) {
                return Err(Error::InvalidArgument("ball radius must be nonnegative".into()));
            }
        }
        Ok(())
    }
}

/// Self-overlap `(1/N) sum_k count_k p_k p_k^T` of a composition.
fn composition_overlap(space: &SpinSpace, counts: &[usize], n: usize) -> Vec<f64> {
    let d = space.d;
    let mut r = vec![0.0; d * d];
    for (p, &c) in space.points.iter().zip(counts) {
        if c == 0 {
            continue;
        }
        for u in 0..d {
            for v in 0..d {
                r[u * d + v] += c as f64 * p[u] * p[v];
            }
        }
    }
    r.iter_mut().for_each(|v| *v /= n as f64);
    r
}

fn for_each_composition(n: usize, k: usize, f: &mut impl FnMut(&[usize])) {
    fn rec(left: usize, slot: usize, counts: &mut Vec<usize>, f: &mut impl FnMut(&[usize])) {
        if slot + 1 == counts.len() {
            counts[slot] = left;
            f(counts);
            return;
        }
        for c in 0..=left {
            counts[slot] = c;
            rec(left - c, slot + 1, counts, f);
        }
    }
    let mut counts = vec![0; k];
    rec(n, 0, &mut counts, f);
}

fn ln_factorial(n: usize) -> f64 {
    (1..=n).map(|v| (v as f64).ln()).sum()
}

/// `log mu^N({sigma : R(sigma, sigma) in V})` by summing over compositions.
pub fn constrained_log_mass(space: &SpinSpace, n: usize, v: &OverlapConstraint) -> Result<f64> {
    v.check_dim(space.d)?;
    if matches!(v, OverlapConstraint::All) {
        return Ok(n as f64 * space.log_mass());
    }
    let lf_n = ln_factorial(n);
    let mut terms = Vec::new();
    for_each_composition(n, space.size(), &mut |counts| {
        if v.admits(&composition_overlap(space, counts, n)) {
            let t = lf_n
                + counts
                    .iter()
                    .zip(&space.log_weights)
                    .map(|(&c, w)| c as f64 * w - ln_factorial(c))
                    .sum::<f64>();
            terms.push(t);
        }
    });
    if terms.is_empty() {
        return Err(Error::InvalidArgument(
            "empty overlap constraint set; epsilon too small".into(),
        ));
    }
    Ok(log_sum_exp(terms))
}

/// A feasible composition of largest mass, spread over sites.
fn feasible_start(space: &SpinSpace, n: usize, v: &OverlapConstraint) -> Result<Vec<usize>> {
    let mut best: Option<(f64, Vec<usize>)> = None;
    for_each_composition(n, space.size(), &mut |counts| {
        if v.admits(&composition_overlap(space, counts, n)) {
            let t = counts
                .iter()
                .zip(&space.log_weights)
                .map(|(&c, w)| c as f64 * w - ln_factorial(c))
                .sum::<f64>();
            if best.as_ref().is_none_or(|b| t > b.0) {
                best = Some((t, counts.to_vec()));
            }
        }
    });
    let (_, counts) = best.ok_or_else(|| {
        Error::InvalidArgument("empty overlap constraint set; epsilon too small".into())
    })?;
    Ok(counts
        .iter()
        .enumerate()
        .flat_map(|(s, &c)| std::iter::repeat_n(s, c))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::Estimate;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    fn random_config(space: &SpinSpace, n: usize, r: &mut crate::seeds::Rng) -> Vec<Vec<f64>> {
        (0..n).map(|_| space.points[r.random_range(0..space.size())].clone()).collect()
    }

    #[test]
    fn hamiltonian_examples() {
        let dis = Disorder::sample(1, 3);
        assert_abs_diff_eq!(hamiltonian_x(&[vec![1.0]], &dis).unwrap(), dis.g[0], epsilon = 1e-15);
        assert_abs_diff_eq!(hamiltonian_x(&[vec![-1.0]], &dis).unwrap(), dis.g[0], epsilon = 1e-15);
        let dis = Disorder::sample(3, 4);
        assert_eq!(hamiltonian_x(&vec![vec![0.0, 0.0]; 3], &dis).unwrap(), 0.0);
        assert!(hamiltonian_x(&[vec![1.0]], &dis).is_err());
    }

    #[test]
    fn hamiltonian_variance_is_squared_frobenius() {
        let space = SpinSpace::hypercube(2);
        let mut r = rng(1);
        let sigma = random_config(&space, 5, &mut r);
        let target = overlap(&sigma, &sigma).unwrap().frobenius_norm().powi(2);
        let xs: Vec<f64> = (0..10_000u64)
            .map(|s| hamiltonian_x(&sigma, &Disorder::sample(5, s)).unwrap())
            .collect();
        let sq: Vec<f64> = xs.iter().map(|v| v * v).collect();
        let e = Estimate::from_samples(&sq);
        // `X_N` is centred, so its second moment is the variance.
        assert!(e.within(target, 4.0, 0.0), "{e:?} vs {target}");
    }

    #[test]
    fn covariance_is_squared_inner_product() {
        let space = SpinSpace::hypercube(2);
        let mut r = rng(2);
        let a = random_config(&space, 4, &mut r);
        let b = random_config(&space, 4, &mut r);
        let r12 = overlap(&a, &b).unwrap();
        let target = r12.r.iter().map(|v| v * v).sum::<f64>();
        let prods: Vec<f64> = (0..10_000u64)
            .map(|s| {
                let dis = Disorder::sample(4, 100 + s);
                hamiltonian_x(&a, &dis).unwrap() * hamiltonian_x(&b, &dis).unwrap()
            })
            .collect();
        let e = Estimate::from_samples(&prods);
        assert!(e.within(target, 4.0, 0.0), "{e:?} vs {target}");
    }

    #[test]
    fn overlap_examples() {
        let r = overlap(&[vec![1.0], vec![1.0]], &[vec![1.0], vec![-1.0]]).unwrap();
        assert_eq!(r.r, vec![0.0]);
        assert!(overlap(&[vec![1.0]], &[vec![1.0], vec![1.0]]).is_err());
        let space = SpinSpace::hypercube(3);
        let mut g = rng(5);
        for _ in 0..1000 {
            let a = random_config(&space, 6, &mut g);
            let b = random_config(&space, 6, &mut g);
            let s = overlap(&a, &a).unwrap();
            assert!(s.is_symmetric(0.0));
            assert!(s.symmetric().min_eigenvalue() >= -1e-12);
            assert!(block_overlap(&a, &b).unwrap().min_eigenvalue() >= -1e-12);
        }
    }

    #[test]
    fn mutual_overlap_dominated_by_equal_self_overlaps() {
        // On the hypercube every self-overlap has unit diagonal; pick pairs
        // whose self-overlaps coincide.
        let space = SpinSpace::hypercube(2);
        let mut g = rng(6);
        let mut checked = 0;
        while checked < 200 {
            let a = random_config(&space, 6, &mut g);
            let b = random_config(&space, 6, &mut g);
            let (ra, rb) = (overlap(&a, &a).unwrap(), overlap(&b, &b).unwrap());
            if ra != rb {
                continue;
            }
            checked += 1;
            assert!(overlap(&a, &b).unwrap().frobenius_norm() <= ra.frobenius_norm() + 1e-12);
        }
    }

    #[test]
    fn sub_blocks_keep_couplings() {
        let dis = Disorder::sample(6, 9);
        let b = dis.sub_block(2, 3).unwrap();
        assert_eq!(b.get(1, 2), dis.get(3, 4));
        assert!(dis.sub_block(4, 3).is_err());
    }

    #[test]
    fn constrained_mass_counts() {
        let s = SpinSpace::rademacher();
        let all = constrained_log_mass(&s, 6, &OverlapConstraint::All).unwrap();
        assert_abs_diff_eq!(all, 6.0 * 2f64.ln(), epsilon = 1e-12);
        let ball = OverlapConstraint::Ball { u: vec![vec![1.0]], eps: 0.01 };
        assert_abs_diff_eq!(constrained_log_mass(&s, 6, &ball).unwrap(), all, epsilon = 1e-12);
        let off = OverlapConstraint::Ball { u: vec![vec![3.0]], eps: 0.1 };
        assert!(constrained_log_mass(&s, 6, &off).is_err());
        // Points 0 and 1 on the line: R = (#ones)/N; ask for R = 1/2.
        let s = SpinSpace::new(vec![vec![0.0], vec![1.0]], vec![1.0, 1.0]).unwrap();
        let half = OverlapConstraint::Ball { u: vec![vec![0.5]], eps: 1e-9 };
        let expected = (20f64).ln();
        assert_abs_diff_eq!(constrained_log_mass(&s, 6, &half).unwrap(), expected, epsilon = 1e-12);
        assert_eq!(feasible_start(&s, 6, &half).unwrap().iter().filter(|&&v| v == 1).count(), 3);
    }

    #[test]
    fn gaussian_discretisation_keeps_mass() {
        let c = SymMatrix::from_rows(&[vec![2.0, 0.3], vec![0.3, 1.5]]).unwrap();
        let mu = AprioriMeasure::gaussian(c, vec![0.1, -0.2]).unwrap();
        let s = SpinSpace::from_measure(&mu, 7).unwrap();
        assert_eq!(s.size(), 49);
        assert_abs_diff_eq!(s.log_mass(), mu.log_mass(), epsilon = 1e-12);
        assert!(s.radius.is_finite());
        assert!(SpinSpace::from_measure(&mu, 1).is_err());
    }
}
