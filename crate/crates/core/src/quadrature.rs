//! Gauss-Hermite rules for the standard normal law.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use gauss_quad::GaussHermite;

/// Nodes and weights with `sum w_i f(z_i) ~ E f(Z)`, `Z ~ N(0, 1)`; weights sum to one.
#[derive(Clone, Debug)]
pub struct NormalRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Cached `m`-point rule, nodes ascending.
pub fn normal_rule(m: usize) -> NormalRule {
    static CACHE: OnceLock<Mutex<HashMap<usize, NormalRule>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(r) = cache.lock().expect("rule cache").get(&m) {
        return r.clone();
    }
    let rule = build(m);
    cache.lock().expect("rule cache").insert(m, rule.clone());
    rule
}

fn build(m: usize) -> NormalRule {
    if m == 1 {
        return NormalRule {
            nodes: vec![0.0],
            weights: vec![1.0],
        };
    }
    let gh = GaussHermite::new(m).expect("at least two nodes");
    let mut pairs: Vec<(f64, f64)> = gh
        .as_node_weight_pairs()
        .iter()
        .map(|&(x, w)| (x * std::f64::consts::SQRT_2, w / std::f64::consts::PI.sqrt()))
        .collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite nodes"));
    let total: f64 = pairs.iter().map(|p| p.1).sum();
    NormalRule {
        nodes: pairs.iter().map(|p| p.0).collect(),
        weights: pairs.iter().map(|p| p.1 / total).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moments() {
        let r = normal_rule(16);
        let m = |p: i32| -> f64 { r.nodes.iter().zip(&r.weights).map(|(z, w)| w * z.powi(p)).sum() };
        assert!((m(0) - 1.0).abs() < 1e-14);
        assert!(m(1).abs() < 1e-13);
        assert!((m(2) - 1.0).abs() < 1e-12);
        assert!((m(4) - 3.0).abs() < 1e-11);
        assert!((m(8) - 105.0).abs() < 1e-8);
        let e: f64 = r.nodes.iter().zip(&r.weights).map(|(z, w)| w * (0.7 * z).exp()).sum();
        assert!((e - (0.245f64).exp()).abs() < 1e-13);
    }
}
