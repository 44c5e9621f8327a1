#![allow(dead_code)]

use std::collections::HashMap;

/// Exact β of the windows `(X_{j−a+1}, …, X_j)` and `(X_{j+k}, …, X_{j+k+b−1})`
/// for the random walk in random scenery with Rademacher steps and scenery,
/// by enumerating every walk and every scenery value on the visited sites.
pub fn scenery_beta_exact(j: usize, k: usize, a: usize, b: usize) -> f64 {
    let past: Vec<usize> = (j + 1 - a..=j).collect();
    let fut: Vec<usize> = (j + k..j + k + b).collect();
    let m = *fut.last().unwrap();
    let mut joint: HashMap<(Vec<i8>, Vec<i8>), f64> = HashMap::new();
    for steps in 0u32..(1 << m) {
        let mut s = vec![0i64];
        for t in 0..m {
            let d = if steps >> t & 1 == 1 { 1 } else { -1 };
            s.push(s[t] + d);
        }
        let mut sites: Vec<i64> = past.iter().chain(&fut).map(|&i| s[i]).collect();
        sites.sort();
        sites.dedup();
        let weight = 0.5f64.powi((m + sites.len()) as i32);
        for scenery in 0u32..(1 << sites.len()) {
            let eta = |site: i64| -> i8 {
                let idx = sites.binary_search(&site).unwrap();
                if scenery >> idx & 1 == 1 {
                    1
                } else {
                    -1
                }
            };
            let pv: Vec<i8> = past.iter().map(|&i| eta(s[i])).collect();
            let fv: Vec<i8> = fut.iter().map(|&i| eta(s[i])).collect();
            *joint.entry((pv, fv)).or_default() += weight;
        }
    }
    let mut pa: HashMap<Vec<i8>, f64> = HashMap::new();
    let mut pb: HashMap<Vec<i8>, f64> = HashMap::new();
    for ((x, y), v) in &joint {
        *pa.entry(x.clone()).or_default() += v;
        *pb.entry(y.clone()).or_default() += v;
    }
    let mut tv = 0.0;
    for (x, px) in &pa {
        for (y, py) in &pb {
            let pxy = joint.get(&(x.clone(), y.clone())).copied().unwrap_or(0.0);
            tv += (pxy - px * py).abs();
        }
    }
    tv / 2.0
}

/// Minimum-cost perfect matching by enumerating permutations (uniform
/// masses, equal support sizes).
pub fn assignment_brute_force(cost: &[Vec<f64>]) -> f64 {
    let n = cost.len();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = f64::INFINITY;
    permute(&mut perm, 0, cost, &mut best);
    best / n as f64
}

fn permute(perm: &mut Vec<usize>, i: usize, cost: &[Vec<f64>], best: &mut f64) {
    if i == perm.len() {
        let c: f64 = perm.iter().enumerate().map(|(a, &b)| cost[a][b]).sum();
        *best = best.min(c);
        return;
    }
    for t in i..perm.len() {
        perm.swap(i, t);
        permute(perm, i + 1, cost, best);
        perm.swap(i, t);
    }
}

pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// `‖N(0,1) − N(μ,1)‖₁ = 2(2Φ(|μ|/2) − 1)`.
pub fn gaussian_shift_l1(mu: f64) -> f64 {
    2.0 * (2.0 * normal_cdf(mu.abs() / 2.0) - 1.0)
}

/// Composite Simpson with a fixed even number of panels.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let n = panels + panels % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(a + i as f64 * h);
    }
    s * h / 3.0
}

/// `δ₂(h) = ρ^h √(2p(1−p))` for `Σ ρ^k ε_{i−k}` with Bernoulli(p) innovations.
pub fn geometric_bernoulli_delta2(rho: f64, p: f64, h: usize) -> f64 {
    rho.powi(h as i32) * (2.0 * p * (1.0 - p)).sqrt()
}

/// `Θ_k = Σ_{h ≥ k} ρ^h E|ε − ε*|`.
pub fn geometric_theta(rho: f64, gini: f64, k: usize) -> f64 {
    gini * rho.powi(k as i32) / (1.0 - rho)
}
