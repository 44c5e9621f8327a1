//! Wasserstein-1 distances under a weighted ℓ¹ metric and
//! Kantorovich–Rubinstein dual probes.

mod simplex;

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::measure::EmpiricalMeasure;
use crate::rng::{streams, StreamKey};

/// Largest bipartite problem accepted for a direct solve.
pub const MAX_CELLS: usize = 1_000_000;

/// `d(x, y) = Σ_m w_m |x_m − y_m|` with positive weights summing to at most one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct WeightedMetric {
    weights: Vec<f64>,
}

impl TryFrom<Vec<f64>> for WeightedMetric {
    type Error = Error;
    fn try_from(w: Vec<f64>) -> Result<Self> {
        WeightedMetric::new(w)
    }
}

impl From<WeightedMetric> for Vec<f64> {
    fn from(m: WeightedMetric) -> Self {
        m.weights
    }
}

impl WeightedMetric {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(invalid("metric needs at least one weight"));
        }
        if weights.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
            return Err(invalid("metric weights must be positive and finite"));
        }
        let total: f64 = weights.iter().sum();
        if total > 1.0 + 1e-12 {
            return Err(invalid(format!("metric weights sum to {total} > 1")));
        }
        Ok(WeightedMetric { weights })
    }

    /// `w_m = 2^{−m}`, m = 1…dim.
    pub fn geometric(dim: usize) -> Self {
        assert!(dim > 0, "metric dimension must be positive");
        WeightedMetric {
            weights: (1..=dim).map(|m| 0.5f64.powi(m as i32)).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    #[inline]
    pub fn distance(&self, x: &[f64], y: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.weights.len());
        debug_assert_eq!(y.len(), self.weights.len());
        self.weights
            .iter()
            .zip(x.iter().zip(y))
            .map(|(w, (a, b))| w * (a - b).abs())
            .sum()
    }

    fn check(&self, p: &EmpiricalMeasure) -> Result<()> {
        if p.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: p.dim(),
            });
        }
        Ok(())
    }
}

/// `w · ∫ |F_P − F_Q|` for one-dimensional measures.
pub fn w1_exact_1d(p: &EmpiricalMeasure, q: &EmpiricalMeasure, w: f64) -> Result<f64> {
    for m in [p, q] {
        if m.dim() != 1 {
            return Err(Error::DimensionMismatch {
                expected: 1,
                actual: m.dim(),
            });
        }
    }
    if !(w > 0.0) {
        return Err(invalid("weight must be positive"));
    }
    let pv: Vec<f64> = p.points().iter().map(|x| x[0]).collect();
    let qv: Vec<f64> = q.points().iter().map(|x| x[0]).collect();
    Ok(w * cdf_l1(&pv, p.masses(), &qv, q.masses()))
}

/// `∫ |F_P − F_Q|` for sorted atoms.
pub(crate) fn cdf_l1(pv: &[f64], pm: &[f64], qv: &[f64], qm: &[f64]) -> f64 {
    let (mut i, mut j) = (0, 0);
    let (mut fp, mut fq) = (0.0f64, 0.0f64);
    let mut acc = 0.0;
    let mut last: Option<f64> = None;
    while i < pv.len() || j < qv.len() {
        let x = match (pv.get(i), qv.get(j)) {
            (Some(a), Some(b)) => a.min(*b),
            (Some(a), None) => *a,
            (None, Some(b)) => *b,
            (None, None) => unreachable!(),
        };
        if let Some(l) = last {
            acc += (fp - fq).abs() * (x - l);
        }
        while i < pv.len() && pv[i] == x {
            fp += pm[i];
            i += 1;
        }
        while j < qv.len() && qv[j] == x {
            fq += qm[j];
            j += 1;
        }
        last = Some(x);
    }
    acc
}

/// Subsampling summary when the support product exceeds the direct-solve cap.
#[derive(Clone, Debug, Serialize)]
pub struct SubsampleSummary {
    pub resamples: usize,
    pub points_per_side: usize,
    /// Standard deviation of the resampled values.
    pub spread: f64,
    /// Standard error of the reported mean.
    pub stderr: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct TransportPlan {
    pub value: f64,
    /// `(source index, target index, mass)` into the supports of P and Q.
    /// Empty when the value comes from subsampling.
    pub coupling: Vec<(usize, usize, f64)>,
    #[serde(skip)]
    pub(crate) potentials: Option<(Vec<f64>, Vec<f64>)>,
    pub subsample: Option<SubsampleSummary>,
}

impl TransportPlan {
    /// Writes the coupling as CSV `source,target,mass`.
    pub fn write_coupling_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["source", "target", "mass"])?;
        for (s, t, m) in &self.coupling {
            w.write_record([s.to_string(), t.to_string(), m.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TransportOptions {
    pub max_support: usize,
    pub resamples: usize,
    pub seed: u64,
}

impl Default for TransportOptions {
    fn default() -> Self {
        TransportOptions {
            max_support: 300,
            resamples: 20,
            seed: 0,
        }
    }
}

fn solve_exact(p: &EmpiricalMeasure, q: &EmpiricalMeasure, metric: &WeightedMetric) -> TransportPlan {
    let cost: Vec<f64> = p
        .points()
        .iter()
        .flat_map(|x| q.points().iter().map(move |y| metric.distance(x, y)))
        .collect();
    let sol = simplex::solve_transport(p.masses(), q.masses(), &cost);
    TransportPlan {
        value: sol.value,
        coupling: sol.flows,
        potentials: Some((sol.u, sol.v)),
        subsample: None,
    }
}

fn resample(m: &EmpiricalMeasure, size: usize, key: &StreamKey) -> EmpiricalMeasure {
    let mut cum = Vec::with_capacity(m.len());
    let mut acc = 0.0;
    for &w in m.masses() {
        acc += w;
        cum.push(acc);
    }
    let pts = (0..size)
        .map(|s| {
            let u = key.uniform(s as i64, 0) * acc;
            let idx = cum.partition_point(|&c| c < u).min(m.len() - 1);
            m.points()[idx].clone()
        })
        .collect();
    EmpiricalMeasure::from_samples(pts).expect("resample of a valid measure")
}

/// Optimal transport between two empirical measures with default options.
pub fn w1_lp(p: &EmpiricalMeasure, q: &EmpiricalMeasure, metric: &WeightedMetric) -> Result<TransportPlan> {
    w1_lp_with(p, q, metric, &TransportOptions::default())
}

pub fn w1_lp_with(
    p: &EmpiricalMeasure,
    q: &EmpiricalMeasure,
    metric: &WeightedMetric,
    opts: &TransportOptions,
) -> Result<TransportPlan> {
    metric.check(p)?;
    metric.check(q)?;
    let direct = p.len() <= opts.max_support && q.len() <= opts.max_support;
    if direct && p.len() * q.len() <= MAX_CELLS {
        return Ok(solve_exact(p, q, metric));
    }
    if opts.resamples < 2 || opts.max_support == 0 {
        return Err(invalid("subsampling needs at least two resamples and a positive support size"));
    }
    let values: Vec<f64> = (0..opts.resamples)
        .map(|r| {
            let kp = StreamKey::new(opts.seed, streams::TRANSPORT, 2 * r as u64);
            let kq = StreamKey::new(opts.seed, streams::TRANSPORT, 2 * r as u64 + 1);
            let ps = if p.len() > opts.max_support { resample(p, opts.max_support, &kp) } else { p.clone() };
            let qs = if q.len() > opts.max_support { resample(q, opts.max_support, &kq) } else { q.clone() };
            solve_exact(&ps, &qs, metric).value
        })
        .collect();
    let k = values.len() as f64;
    let mean = values.iter().sum::<f64>() / k;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0);
    Ok(TransportPlan {
        value: mean,
        coupling: Vec::new(),
        potentials: None,
        subsample: Some(SubsampleSummary {
            resamples: opts.resamples,
            points_per_side: opts.max_support,
            spread: var.sqrt(),
            stderr: (var / k).sqrt(),
        }),
    })
}

/// Families of 1-Lipschitz test functions used as dual lower bounds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeKind {
    Coordinate,
    SeparableCdf,
    AnchorMin,
    AnchorSoftMin,
    LpPotential,
}

#[derive(Clone, Debug, Serialize)]
pub struct DualityReport {
    pub primal: f64,
    pub dual: f64,
    /// `primal − dual`.
    pub gap: f64,
    pub best_probe: ProbeKind,
    pub probes_evaluated: usize,
}

/// Largest `|E_P f − E_Q f|` over the probe family, compared with the primal.
pub fn kr_duality_gap(
    p: &EmpiricalMeasure,
    q: &EmpiricalMeasure,
    metric: &WeightedMetric,
    probe_count: usize,
    seed: u64,
) -> Result<DualityReport> {
    let opts = TransportOptions {
        seed,
        ..TransportOptions::default()
    };
    let plan = w1_lp_with(p, q, metric, &opts)?;
    let mut best = (0.0f64, ProbeKind::Coordinate);
    let mut evaluated = 0usize;
    let mut consider = |value: f64, kind: ProbeKind| {
        evaluated += 1;
        if value.abs() > best.0 {
            best = (value.abs(), kind);
        }
    };
    let diff = |f: &dyn Fn(&[f64]) -> f64| p.expect(f) - q.expect(f);

    let w = metric.weights();
    for m in 0..metric.dim() {
        consider(diff(&|x: &[f64]| w[m] * x[m]), ProbeKind::Coordinate);
    }

    let separable: Vec<Potential1d> = (0..metric.dim()).map(|m| Potential1d::new(p, q, m)).collect();
    consider(
        diff(&|x: &[f64]| separable.iter().enumerate().map(|(m, g)| w[m] * g.eval(x[m])).sum()),
        ProbeKind::SeparableCdf,
    );

    let pool: Vec<&[f64]> = p.points().iter().chain(q.points()).map(Vec::as_slice).collect();
    let key = StreamKey::new(seed, streams::TRANSPORT, u64::MAX);
    for s in 0..probe_count {
        let size = 1 + key.below(s as i64, 0, pool.len().div_ceil(2));
        let anchors: Vec<&[f64]> = (0..size).map(|a| pool[key.below(s as i64, 1 + a as u32, pool.len())]).collect();
        let hard = |x: &[f64]| anchors.iter().map(|a| metric.distance(x, a)).fold(f64::INFINITY, f64::min);
        consider(diff(&hard), ProbeKind::AnchorMin);
        let tau = 0.05 * plan.value.max(1e-12) * (1.0 + (s % 4) as f64);
        let soft = |x: &[f64]| {
            let ds: Vec<f64> = anchors.iter().map(|a| metric.distance(x, a)).collect();
            let d0 = ds.iter().copied().fold(f64::INFINITY, f64::min);
            d0 - tau * ds.iter().map(|d| (-(d - d0) / tau).exp()).sum::<f64>().ln()
        };
        consider(diff(&soft), ProbeKind::AnchorSoftMin);
    }

    if let Some((_, v)) = &plan.potentials {
        let targets = q.points();
        let f = |x: &[f64]| {
            targets
                .iter()
                .zip(v)
                .map(|(z, vj)| metric.distance(x, z) - vj)
                .fold(f64::INFINITY, f64::min)
        };
        consider(diff(&f), ProbeKind::LpPotential);
    }

    Ok(DualityReport {
        primal: plan.value,
        dual: best.0,
        gap: plan.value - best.0,
        best_probe: best.1,
        probes_evaluated: evaluated,
    })
}

/// `g(x) = ∫_{x_0}^{x} sign(F_P − F_Q)` along one coordinate: the optimal
/// 1-D potential for the marginals, 1-Lipschitz.
struct Potential1d {
    knots: Vec<f64>,
    values: Vec<f64>,
    slopes: Vec<f64>,
}

impl Potential1d {
    fn new(p: &EmpiricalMeasure, q: &EmpiricalMeasure, m: usize) -> Self {
        let mut atoms: Vec<(f64, f64)> = p
            .iter()
            .map(|(x, w)| (x[m], w))
            .chain(q.iter().map(|(x, w)| (x[m], -w)))
            .collect();
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut knots = Vec::new();
        let mut values = Vec::new();
        let mut slopes = Vec::new();
        let mut cdf_diff = 0.0;
        let mut g = 0.0;
        let mut idx = 0;
        while idx < atoms.len() {
            let x = atoms[idx].0;
            if let (Some(&lx), Some(&ls)) = (knots.last(), slopes.last()) {
                g += ls * (x - lx);
            }
            while idx < atoms.len() && atoms[idx].0 == x {
                cdf_diff += atoms[idx].1;
                idx += 1;
            }
            knots.push(x);
            values.push(g);
            slopes.push(if cdf_diff > 1e-15 {
                -1.0
            } else if cdf_diff < -1e-15 {
                1.0
            } else {
                0.0
            });
        }
        Potential1d { knots, values, slopes }
    }

    fn eval(&self, x: f64) -> f64 {
        let k = self.knots.partition_point(|&t| t <= x);
        if k == 0 {
            return self.values[0];
        }
        self.values[k - 1] + self.slopes[k - 1] * (x - self.knots[k - 1])
    }
}
