//! Innovation laws, filters `G(t, F_i)` and simulation of triangular arrays
//! `X_{i,n} = G(i/n, F_i)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::{streams, StreamKey};

/// Coefficients below this magnitude are dropped by the default truncation.
pub const TRUNCATION_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InnovationLaw {
    Rademacher,
    Bernoulli { p: f64 },
    Gaussian { mean: f64, stddev: f64 },
    /// Pareto with unit scale, density `shape / x^(shape + 1)` on `[1, ∞)`.
    Pareto { shape: f64 },
}

impl InnovationLaw {
    pub fn standard_gaussian() -> Self {
        InnovationLaw::Gaussian {
            mean: 0.0,
            stddev: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            InnovationLaw::Rademacher => Ok(()),
            InnovationLaw::Bernoulli { p } if p > 0.0 && p < 1.0 => Ok(()),
            InnovationLaw::Bernoulli { p } => Err(invalid(format!("Bernoulli p = {p} outside (0, 1)"))),
            InnovationLaw::Gaussian { mean, stddev } if mean.is_finite() && stddev > 0.0 => Ok(()),
            InnovationLaw::Gaussian { stddev, .. } => {
                Err(invalid(format!("Gaussian stddev = {stddev} must be positive")))
            }
            InnovationLaw::Pareto { shape } if shape > 0.0 => Ok(()),
            InnovationLaw::Pareto { shape } => Err(invalid(format!("Pareto shape = {shape} must be positive"))),
        }
    }

    #[inline]
    pub fn sample(&self, key: &StreamKey, index: i64) -> f64 {
        match *self {
            InnovationLaw::Rademacher => {
                if key.bits(index, 0) >> 63 == 0 {
                    -1.0
                } else {
                    1.0
                }
            }
            InnovationLaw::Bernoulli { p } => {
                if key.uniform(index, 0) < p {
                    1.0
                } else {
                    0.0
                }
            }
            InnovationLaw::Gaussian { mean, stddev } => {
                let u1 = key.uniform(index, 0);
                let u2 = key.uniform(index, 1);
                mean + stddev * (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
            }
            InnovationLaw::Pareto { shape } => key.uniform(index, 0).powf(-1.0 / shape),
        }
    }

    pub fn mean(&self) -> Option<f64> {
        match *self {
            InnovationLaw::Rademacher => Some(0.0),
            InnovationLaw::Bernoulli { p } => Some(p),
            InnovationLaw::Gaussian { mean, .. } => Some(mean),
            InnovationLaw::Pareto { shape } if shape > 1.0 => Some(shape / (shape - 1.0)),
            InnovationLaw::Pareto { .. } => None,
        }
    }

    pub fn has_finite_moment(&self, p: f64) -> bool {
        match *self {
            InnovationLaw::Pareto { shape } => shape > p,
            _ => true,
        }
    }

    /// `E|ε − ε*|` for two independent draws.
    pub fn mean_abs_difference(&self) -> Option<f64> {
        match *self {
            InnovationLaw::Rademacher => Some(1.0),
            InnovationLaw::Bernoulli { p } => Some(2.0 * p * (1.0 - p)),
            InnovationLaw::Gaussian { stddev, .. } => Some(2.0 * stddev / std::f64::consts::PI.sqrt()),
            // Gini mean difference of the unit-scale Pareto law.
            InnovationLaw::Pareto { shape } if shape > 1.0 => {
                Some(2.0 * shape / ((shape - 1.0) * (2.0 * shape - 1.0)))
            }
            InnovationLaw::Pareto { .. } => None,
        }
    }

    pub fn has_density(&self) -> bool {
        matches!(self, InnovationLaw::Gaussian { .. } | InnovationLaw::Pareto { .. })
    }
}

/// Time-varying coefficient `a : [0, 1] → ℝ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CoefFn {
    Constant { value: f64 },
    Linear { start: f64, end: f64 },
    /// `center + amplitude · cos(2πt)`
    Cosine { center: f64, amplitude: f64 },
}

impl CoefFn {
    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            CoefFn::Constant { value } => value,
            CoefFn::Linear { start, end } => start + (end - start) * t,
            CoefFn::Cosine { center, amplitude } => center + amplitude * (std::f64::consts::TAU * t).cos(),
        }
    }

    /// `sup_{t∈[0,1]} |a(t)|`
    pub fn sup_abs(&self) -> f64 {
        match *self {
            CoefFn::Constant { value } => value.abs(),
            CoefFn::Linear { start, end } => start.abs().max(end.abs()),
            CoefFn::Cosine { center, amplitude } => center.abs() + amplitude.abs(),
        }
    }

    pub fn is_constant(&self) -> bool {
        match *self {
            CoefFn::Constant { .. } => true,
            CoefFn::Linear { start, end } => start == end,
            CoefFn::Cosine { amplitude, .. } => amplitude == 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FilterKind {
    /// `G(F_i) = Σ_k ρ^k ε_{i−k}`
    LinearGeometric { rho: f64 },
    /// `G(t, F_i) = Σ_k a(t)^k ε_{i−k}`, the stationary AR(1) frozen at time t.
    TvAr1 { coef: CoefFn },
    /// `G(t, F_i) = ε_i + Σ_{m=1}^{q} b_m(t) ε_{i−m}`
    TvMa { coefs: Vec<CoefFn> },
    IidPassthrough,
    /// `X_i = η_{S_i}` with a simple random walk `S` and scenery `η`; not causal.
    RandomWalkScenery,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    pub process: FilterKind,
    pub innovation: InnovationLaw,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncation_lag: Option<usize>,
    #[serde(default)]
    pub centered: bool,
}

fn default_lag(decay: f64) -> usize {
    if decay == 0.0 {
        0
    } else {
        (TRUNCATION_TOL.ln() / decay.ln()).ceil() as usize
    }
}

impl FilterSpec {
    pub fn new(process: FilterKind, innovation: InnovationLaw) -> Self {
        FilterSpec {
            process,
            innovation,
            truncation_lag: None,
            centered: false,
        }
    }

    pub fn centered(mut self, centered: bool) -> Self {
        self.centered = centered;
        self
    }

    pub fn with_truncation_lag(mut self, lag: usize) -> Self {
        self.truncation_lag = Some(lag);
        self
    }

    pub fn iid(innovation: InnovationLaw) -> Self {
        Self::new(FilterKind::IidPassthrough, innovation)
    }

    pub fn geometric(rho: f64, innovation: InnovationLaw) -> Self {
        Self::new(FilterKind::LinearGeometric { rho }, innovation)
    }

    pub fn ar1(rho: f64, innovation: InnovationLaw) -> Self {
        Self::new(
            FilterKind::TvAr1 {
                coef: CoefFn::Constant { value: rho },
            },
            innovation,
        )
    }

    /// Andrews' non-mixing process with Bernoulli innovations.
    pub fn andrews(rho: f64, p: f64) -> Self {
        Self::geometric(rho, InnovationLaw::Bernoulli { p })
    }

    pub fn random_walk_scenery() -> Self {
        Self::new(FilterKind::RandomWalkScenery, InnovationLaw::Rademacher)
    }

    pub fn is_causal(&self) -> bool {
        !matches!(self.process, FilterKind::RandomWalkScenery)
    }

    pub fn is_linear(&self) -> bool {
        self.is_causal()
    }

    /// Whether `G(t, ·)` does not depend on `t`.
    pub fn is_time_constant(&self) -> bool {
        match &self.process {
            FilterKind::TvAr1 { coef } => coef.is_constant(),
            FilterKind::TvMa { coefs } => coefs.iter().all(CoefFn::is_constant),
            _ => true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.innovation.validate()?;
        match &self.process {
            FilterKind::LinearGeometric { rho } => {
                if let InnovationLaw::Bernoulli { .. } = self.innovation {
                    if !(*rho > 0.0 && *rho <= 0.5) {
                        return Err(invalid(format!(
                            "rho = {rho} outside (0, 1/2] for Bernoulli innovations"
                        )));
                    }
                } else if !(rho.abs() < 1.0) {
                    return Err(invalid(format!("rho = {rho} outside (-1, 1)")));
                }
            }
            FilterKind::TvAr1 { coef } => {
                if !(coef.sup_abs() < 1.0) {
                    return Err(invalid(format!(
                        "AR coefficient reaches |a(t)| = {} ≥ 1",
                        coef.sup_abs()
                    )));
                }
            }
            FilterKind::TvMa { coefs } => {
                if coefs.iter().any(|c| !c.sup_abs().is_finite()) {
                    return Err(invalid("non-finite MA coefficient"));
                }
            }
            FilterKind::IidPassthrough => {}
            FilterKind::RandomWalkScenery => {
                if self.innovation != InnovationLaw::Rademacher {
                    return Err(invalid("random walk in random scenery uses Rademacher steps"));
                }
            }
        }
        Ok(())
    }

    /// Sup over t of the geometric decay rate, for infinite-order filters.
    fn decay(&self) -> Option<f64> {
        match &self.process {
            FilterKind::LinearGeometric { rho } => Some(rho.abs()),
            FilterKind::TvAr1 { coef } => Some(coef.sup_abs()),
            _ => None,
        }
    }

    /// Truncation lag L: the filter reads `ε_{i−L}, …, ε_i`.
    pub fn lag(&self) -> usize {
        if let Some(l) = self.truncation_lag {
            return l;
        }
        match &self.process {
            FilterKind::TvMa { coefs } => coefs.len(),
            _ => self.decay().map(default_lag).unwrap_or(0),
        }
    }

    /// `Σ_{m>L} sup_t |c_m(t)|`, the coefficient mass dropped by truncation.
    pub fn truncation_tail(&self) -> f64 {
        let lag = self.lag();
        match self.decay() {
            Some(a) if a == 0.0 => 0.0,
            Some(a) => a.powi(lag as i32 + 1) / (1.0 - a),
            None => match &self.process {
                FilterKind::TvMa { coefs } => coefs.iter().skip(lag).map(CoefFn::sup_abs).sum(),
                _ => 0.0,
            },
        }
    }

    /// Truncated coefficient vector `(c_0(t), …, c_L(t))`; `None` for non-causal filters.
    pub fn coefficients(&self, t: f64) -> Option<Vec<f64>> {
        let lag = self.lag();
        let coefs = match &self.process {
            FilterKind::LinearGeometric { rho } => powers(*rho, lag),
            FilterKind::TvAr1 { coef } => powers(coef.eval(t), lag),
            FilterKind::TvMa { coefs } => std::iter::once(1.0)
                .chain(coefs.iter().map(|c| c.eval(t)))
                .take(lag + 1)
                .collect(),
            FilterKind::IidPassthrough => vec![1.0],
            FilterKind::RandomWalkScenery => return None,
        };
        Some(coefs)
    }

    /// `sup_t |c_h(t)|` for the untruncated filter.
    pub fn coefficient_envelope(&self, h: usize) -> Option<f64> {
        match &self.process {
            FilterKind::TvMa { coefs } => Some(match h {
                0 => 1.0,
                h if h <= coefs.len() => coefs[h - 1].sup_abs(),
                _ => 0.0,
            }),
            FilterKind::IidPassthrough => Some(if h == 0 { 1.0 } else { 0.0 }),
            FilterKind::RandomWalkScenery => None,
            _ => self.decay().map(|a| a.powi(h as i32)),
        }
    }

    /// `Σ_{h ≥ from} sup_t |c_h(t)|` for the untruncated filter.
    pub fn envelope_tail_sum(&self, from: usize) -> Option<f64> {
        match &self.process {
            FilterKind::TvMa { coefs } => Some((from..=coefs.len()).filter_map(|h| self.coefficient_envelope(h)).sum()),
            FilterKind::IidPassthrough => Some(if from == 0 { 1.0 } else { 0.0 }),
            FilterKind::RandomWalkScenery => None,
            _ => {
                let a = self.decay()?;
                Some(if a == 0.0 {
                    if from == 0 {
                        1.0
                    } else {
                        0.0
                    }
                } else {
                    a.powi(from as i32) / (1.0 - a)
                })
            }
        }
    }

    /// Mean of `G(t, F_i)` for the truncated filter.
    pub fn mean_at(&self, t: f64) -> Result<f64> {
        match self.coefficients(t) {
            None => Ok(0.0),
            Some(c) => {
                let mu = self.innovation.mean().ok_or_else(|| {
                    Error::UndefinedMean(format!("{:?} has no finite mean", self.innovation))
                })?;
                Ok(mu * c.iter().sum::<f64>())
            }
        }
    }

    fn offset_at(&self, t: f64) -> Result<f64> {
        if self.centered {
            self.mean_at(t)
        } else {
            Ok(0.0)
        }
    }

    /// `G(t, F)` evaluated at position `i` of the innovation source.
    pub fn value(&self, t: f64, i: i64, innovations: &impl Innovations) -> Result<f64> {
        let coefs = self.coefficients(t).ok_or_else(|| {
            Error::NoCausalRepresentation("random walk in random scenery has no causal filter".into())
        })?;
        Ok(linear_value(&coefs, i, innovations) - self.offset_at(t)?)
    }
}

fn powers(a: f64, lag: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(lag + 1);
    let mut c = 1.0;
    for _ in 0..=lag {
        out.push(c);
        c *= a;
    }
    out
}

/// Read access to an innovation sequence `(ε_i)_{i∈ℤ}`.
pub trait Innovations {
    fn at(&self, index: i64) -> f64;
}

/// Innovations drawn on demand from the counter generator.
#[derive(Clone, Copy, Debug)]
pub struct InnovationStream<'a> {
    pub law: &'a InnovationLaw,
    pub key: StreamKey,
}

impl Innovations for InnovationStream<'_> {
    #[inline]
    fn at(&self, index: i64) -> f64 {
        self.law.sample(&self.key, index)
    }
}

/// Innovations materialized on a contiguous index range.
#[derive(Clone, Debug, Default)]
pub struct InnovationBuffer {
    lo: i64,
    values: Vec<f64>,
}

impl InnovationBuffer {
    pub fn fill(&mut self, source: &impl Innovations, lo: i64, hi: i64) {
        self.lo = lo;
        self.values.clear();
        self.values.extend((lo..=hi).map(|i| source.at(i)));
    }

    pub fn set(&mut self, index: i64, value: f64) {
        self.values[(index - self.lo) as usize] = value;
    }
}

impl Innovations for InnovationBuffer {
    #[inline]
    fn at(&self, index: i64) -> f64 {
        self.values[(index - self.lo) as usize]
    }
}

/// `Σ_m c_m ε_{i−m}`
#[inline]
pub fn linear_value(coefs: &[f64], i: i64, innovations: &impl Innovations) -> f64 {
    coefs
        .iter()
        .enumerate()
        .map(|(m, c)| c * innovations.at(i - m as i64))
        .sum()
}

/// Random walk in random scenery: `S_0 = 0`, `S_i = S_{i−1} + ε_i`, `X_i = η_{S_i}`.
/// The scenery is keyed by site, so only visited sites are ever drawn.
pub fn scenery_path(walk: &StreamKey, scenery: &StreamKey, n: usize) -> Vec<f64> {
    let mut site = 0i64;
    (1..=n as i64)
        .map(|i| {
            site += InnovationLaw::Rademacher.sample(walk, i) as i64;
            InnovationLaw::Rademacher.sample(scenery, site)
        })
        .collect()
}

/// Simulated replicas of a triangular array, possibly restricted to a subset
/// of the time indices.
#[derive(Clone, Debug, Serialize)]
pub struct PathEnsemble {
    pub n: usize,
    pub replicas: usize,
    pub seed: u64,
    pub filter: FilterSpec,
    /// Stored time indices (1-based, increasing).
    pub columns: Vec<usize>,
    /// Row-major `replicas × columns.len()`.
    #[serde(skip)]
    pub values: Vec<f64>,
    pub truncation_lag: usize,
    pub truncation_tail: f64,
    /// Subtracted mean per stored column (zero when not centered).
    pub center_offsets: Vec<f64>,
    pub warnings: Vec<String>,
}

impl PathEnsemble {
    pub fn width(&self) -> usize {
        self.columns.len()
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let w = self.width();
        &self.values[r * w..(r + 1) * w]
    }

    pub fn position(&self, i: usize) -> Option<usize> {
        self.columns.binary_search(&i).ok()
    }

    pub fn get(&self, r: usize, i: usize) -> Option<f64> {
        self.position(i).map(|c| self.values[r * self.width() + c])
    }

    pub fn column(&self, i: usize) -> Option<Vec<f64>> {
        let c = self.position(i)?;
        let w = self.width();
        Some((0..self.replicas).map(|r| self.values[r * w + c]).collect())
    }

    /// Wide CSV: one row per replica, columns `replica, x<i>…`.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["replica".to_string()];
        header.extend(self.columns.iter().map(|i| format!("x{i}")));
        w.write_record(&header)?;
        for r in 0..self.replicas {
            let mut rec = vec![r.to_string()];
            rec.extend(self.row(r).iter().map(f64::to_string));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Simulate all `n` time indices.
pub fn simulate(filter: &FilterSpec, n: usize, replicas: usize, seed: u64) -> Result<PathEnsemble> {
    let columns: Vec<usize> = (1..=n).collect();
    simulate_columns(filter, n, replicas, seed, &columns)
}

/// Simulate only the requested time indices of each replica. Values agree
/// bit-for-bit with the corresponding entries of [`simulate`].
pub fn simulate_columns(
    filter: &FilterSpec,
    n: usize,
    replicas: usize,
    seed: u64,
    columns: &[usize],
) -> Result<PathEnsemble> {
    filter.validate()?;
    if n == 0 || replicas == 0 {
        return Err(invalid("need n ≥ 1 and at least one replica"));
    }
    let mut cols = columns.to_vec();
    cols.sort_unstable();
    cols.dedup();
    if cols.is_empty() || cols[0] == 0 || *cols.last().unwrap() > n {
        return Err(invalid(format!("columns must lie in 1..={n}")));
    }

    let lag = filter.lag();
    let tail = filter.truncation_tail();
    let mut warnings = Vec::new();
    if tail > TRUNCATION_TOL {
        warnings.push(format!(
            "truncation lag {lag} leaves coefficient tail {tail:.3e} above tolerance {TRUNCATION_TOL:e}"
        ));
    }
    let t_of = |i: usize| i as f64 / n as f64;
    let offsets = cols
        .iter()
        .map(|&i| filter.offset_at(t_of(i)))
        .collect::<Result<Vec<_>>>()?;

    let width = cols.len();
    let mut values = vec![0.0; replicas * width];

    if filter.is_causal() {
        let coefs: Vec<Vec<f64>> = cols.iter().map(|&i| filter.coefficients(t_of(i)).unwrap()).collect();
        let segments = segments(&cols, lag);
        values
            .par_chunks_mut(width)
            .enumerate()
            .for_each_init(InnovationBuffer::default, |buf, (r, row)| {
                let stream = InnovationStream {
                    law: &filter.innovation,
                    key: StreamKey::new(seed, streams::INNOVATION, r as u64),
                };
                for &(lo, hi, first, last) in &segments {
                    buf.fill(&stream, lo, hi);
                    for c in first..last {
                        row[c] = linear_value(&coefs[c], cols[c] as i64, buf) - offsets[c];
                    }
                }
            });
    } else {
        let max_col = *cols.last().unwrap();
        values.par_chunks_mut(width).enumerate().for_each(|(r, row)| {
            let walk = StreamKey::new(seed, streams::INNOVATION, r as u64);
            let scenery = StreamKey::new(seed, streams::SCENERY, r as u64);
            let path = scenery_path(&walk, &scenery, max_col);
            for (c, &i) in cols.iter().enumerate() {
                row[c] = path[i - 1] - offsets[c];
            }
        });
    }

    Ok(PathEnsemble {
        n,
        replicas,
        seed,
        filter: filter.clone(),
        columns: cols,
        values,
        truncation_lag: lag,
        truncation_tail: tail,
        center_offsets: offsets,
        warnings,
    })
}

/// Merge the innovation windows `[i − L, i]` of sorted columns into disjoint
/// segments `(lo, hi, first column, one past last column)`.
fn segments(cols: &[usize], lag: usize) -> Vec<(i64, i64, usize, usize)> {
    let mut out: Vec<(i64, i64, usize, usize)> = Vec::new();
    for (c, &i) in cols.iter().enumerate() {
        let lo = i as i64 - lag as i64;
        let hi = i as i64;
        match out.last_mut() {
            Some(seg) if lo <= seg.1 + 1 => {
                seg.1 = hi;
                seg.3 = c + 1;
            }
            _ => out.push((lo, hi, c, c + 1)),
        }
    }
    out
}

/// Monte-Carlo estimate of `E|X|^p` with a heavy-tail diagnostic.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MomentEstimate {
    pub p: f64,
    pub estimate: f64,
    pub stderr: f64,
    /// Largest single term as a fraction of the sum.
    pub max_share: f64,
    pub converged: bool,
}

/// Moment estimate from raw samples. A sample whose largest term carries more
/// than 5% of the total (or `10/R`, whichever is larger) is flagged as not
/// converging.
pub fn moment_diagnostic(samples: &[f64], p: f64) -> MomentEstimate {
    let r = samples.len() as f64;
    let (mut sum, mut sum_sq, mut max) = (0.0, 0.0, 0.0f64);
    for x in samples {
        let v = x.abs().powf(p);
        sum += v;
        sum_sq += v * v;
        max = max.max(v);
    }
    let mean = sum / r;
    let var = (sum_sq / r - mean * mean).max(0.0);
    let max_share = if sum > 0.0 { max / sum } else { 0.0 };
    let converged = mean.is_finite() && var.is_finite() && max_share <= (10.0 / r).max(0.05);
    MomentEstimate {
        p,
        estimate: mean,
        stderr: (var / r).sqrt(),
        max_share,
        converged,
    }
}

/// `E[|X_{i,n}|^p]` from an ensemble.
pub fn marginal_moment(ensemble: &PathEnsemble, i: usize, p: f64) -> Result<MomentEstimate> {
    if p < 1.0 {
        return Err(invalid(format!("moment order p = {p} < 1")));
    }
    let column = ensemble
        .column(i)
        .ok_or_else(|| invalid(format!("index {i} not simulated (n = {})", ensemble.n)))?;
    let mut est = moment_diagnostic(&column, p);
    if ensemble.filter.is_linear() && !ensemble.filter.innovation.has_finite_moment(p) {
        est.converged = false;
    }
    Ok(est)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bern_geo() -> FilterSpec {
        FilterSpec::andrews(0.5, 0.5).with_truncation_lag(60)
    }

    #[test]
    fn passthrough_reproduces_rademacher_innovations() {
        let f = FilterSpec::iid(InnovationLaw::Rademacher);
        let ens = simulate(&f, 4, 3, 11).unwrap();
        for r in 0..3 {
            let key = StreamKey::new(11, streams::INNOVATION, r as u64);
            for i in 1..=4 {
                let v = ens.get(r, i).unwrap();
                assert!(v == 1.0 || v == -1.0);
                assert_eq!(v, InnovationLaw::Rademacher.sample(&key, i as i64));
            }
        }
    }

    #[test]
    fn geometric_mean_before_centering() {
        let f = bern_geo();
        let ens = simulate_columns(&f, 8, 100_000, 3, &[1]).unwrap();
        let col = ens.column(1).unwrap();
        let m = col.iter().sum::<f64>() / col.len() as f64;
        let sd = (col.iter().map(|x| (x - m).powi(2)).sum::<f64>() / col.len() as f64).sqrt();
        let se = sd / (col.len() as f64).sqrt();
        assert!((m - 1.0).abs() < 3.0 * se, "mean {m} se {se}");
    }

    #[test]
    fn centering_subtracts_analytic_mean() {
        let f = bern_geo().centered(true);
        let ens = simulate_columns(&f, 8, 50_000, 5, &[3]).unwrap();
        assert!((ens.center_offsets[0] - 1.0).abs() < 1e-12);
        let col = ens.column(3).unwrap();
        let m = col.iter().sum::<f64>() / col.len() as f64;
        assert!(m.abs() < 0.02);
    }

    #[test]
    fn scenery_path_follows_the_walk() {
        let walk = StreamKey::new(9, streams::INNOVATION, 0);
        let scenery = StreamKey::new(9, streams::SCENERY, 0);
        let path = scenery_path(&walk, &scenery, 3);
        let mut s = 0i64;
        for (i, x) in path.iter().enumerate() {
            s += InnovationLaw::Rademacher.sample(&walk, i as i64 + 1) as i64;
            assert_eq!(*x, InnovationLaw::Rademacher.sample(&scenery, s));
        }
        let f = FilterSpec::random_walk_scenery();
        let ens = simulate(&f, 3, 1, 9).unwrap();
        assert_eq!(ens.row(0), path.as_slice());
    }

    #[test]
    fn column_subsets_match_full_paths() {
        let f = FilterSpec::ar1(0.6, InnovationLaw::standard_gaussian()).centered(true);
        let full = simulate(&f, 40, 20, 1).unwrap();
        let part = simulate_columns(&f, 40, 20, 1, &[3, 4, 30, 39]).unwrap();
        for r in 0..20 {
            for i in [3, 4, 30, 39] {
                assert_eq!(full.get(r, i), part.get(r, i));
            }
        }
    }

    #[test]
    fn default_truncation_lag() {
        let f = FilterSpec::ar1(0.6, InnovationLaw::standard_gaussian());
        assert_eq!(f.lag(), 55);
        assert!(f.truncation_tail() < 1e-12);
        assert_eq!(FilterSpec::andrews(0.5, 0.5).lag(), 40);
        let short = f.clone().with_truncation_lag(5);
        let ens = simulate(&short, 2, 1, 0).unwrap();
        assert_eq!(ens.warnings.len(), 1);
    }

    #[test]
    fn parameter_validation() {
        assert!(InnovationLaw::Bernoulli { p: 1.0 }.validate().is_err());
        assert!(InnovationLaw::Gaussian { mean: 0.0, stddev: 0.0 }.validate().is_err());
        assert!(InnovationLaw::Pareto { shape: -1.0 }.validate().is_err());
        assert!(FilterSpec::andrews(0.6, 0.5).validate().is_err());
        assert!(FilterSpec::geometric(0.9, InnovationLaw::Rademacher).validate().is_ok());
        assert!(FilterSpec::geometric(1.0, InnovationLaw::Rademacher).validate().is_err());
        assert!(simulate(&FilterSpec::iid(InnovationLaw::Rademacher), 0, 1, 0).is_err());
        let bad_rws = FilterSpec::new(FilterKind::RandomWalkScenery, InnovationLaw::standard_gaussian());
        assert!(bad_rws.validate().is_err());
    }

    #[test]
    fn moments() {
        let f = FilterSpec::iid(InnovationLaw::Rademacher);
        let ens = simulate_columns(&f, 1, 1000, 0, &[1]).unwrap();
        let m = marginal_moment(&ens, 1, 2.0).unwrap();
        assert_eq!(m.estimate, 1.0);
        assert!(m.converged);
        assert!(marginal_moment(&ens, 2, 2.0).is_err());

        let pareto = FilterSpec::iid(InnovationLaw::Pareto { shape: 0.8 });
        let ens = simulate_columns(&pareto, 1, 100_000, 0, &[1]).unwrap();
        let m = marginal_moment(&ens, 1, 1.0).unwrap();
        assert!(!m.converged);
        let centered = FilterSpec::iid(InnovationLaw::Pareto { shape: 0.8 }).centered(true);
        assert!(matches!(simulate(&centered, 2, 2, 0), Err(Error::UndefinedMean(_))));
    }

    #[test]
    fn geometric_moment_is_stable_across_time() {
        let f = bern_geo().centered(true);
        let ens = simulate(&f, 12, 40_000, 8).unwrap();
        let first = marginal_moment(&ens, 1, 1.0).unwrap();
        for i in [4, 8, 12] {
            let m = marginal_moment(&ens, i, 1.0).unwrap();
            assert!(m.converged);
            let se = (m.stderr.powi(2) + first.stderr.powi(2)).sqrt();
            assert!((m.estimate - first.estimate).abs() < 4.0 * se);
        }
    }
}
