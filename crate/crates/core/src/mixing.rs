//! Plug-in estimates of the α- and β-mixing coefficients between a past
//! window `(X_{j−a+1}, …, X_j)` and a future window `(X_{j+k}, …, X_{j+k+b−1})`
//! after quantizing each coordinate.
//!
//! All values are lower bounds of the true coefficients: they only see a
//! finite window through a finite partition. The raw plug-in value on the
//! other hand is biased upward by sampling noise, which is what the bootstrap
//! correction and the null noise floor address.

use std::collections::BTreeMap;
use std::io::Write;

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::processes::{simulate_columns, FilterSpec, PathEnsemble};
use crate::rng::{streams, StreamKey};

/// Largest number of joint cells a table may have.
pub const MAX_JOINT_CELLS: usize = 1 << 24;
/// Side length up to which α is computed by exhaustive subset enumeration.
pub const EXACT_ALPHA_SIDE: usize = 16;

/// Per-coordinate quantization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Quantizer {
    /// Equal-mass bins from the empirical quantiles of the column.
    Quantile { bins: usize },
    /// Binary digit `digit` of `x − origin`: `⌊(x − origin)·2^digit⌋ mod 2`.
    Dyadic {
        digit: u32,
        #[serde(default)]
        origin: f64,
    },
    /// One cell per distinct value (discrete data).
    Exact,
}

impl Default for Quantizer {
    fn default() -> Self {
        Quantizer::Quantile { bins: 8 }
    }
}

struct ColumnCodes {
    codes: Vec<u32>,
    levels: u32,
}

impl Quantizer {
    fn validate(&self) -> Result<()> {
        match self {
            Quantizer::Quantile { bins } if *bins >= 2 => Ok(()),
            Quantizer::Quantile { bins } => Err(invalid(format!("need at least 2 quantile bins, got {bins}"))),
            Quantizer::Dyadic { digit, origin } if *digit <= 52 && origin.is_finite() => Ok(()),
            Quantizer::Dyadic { digit, .. } => Err(invalid(format!("dyadic digit {digit} out of range"))),
            Quantizer::Exact => Ok(()),
        }
    }

    fn quantize(&self, column: &[f64]) -> Result<ColumnCodes> {
        match *self {
            Quantizer::Quantile { bins } => {
                let mut sorted = column.to_vec();
                sorted.sort_by(f64::total_cmp);
                let r = sorted.len();
                let mut cuts: Vec<f64> = (1..bins).map(|b| sorted[(b * r / bins).min(r - 1)]).collect();
                cuts.dedup();
                let codes = column.iter().map(|x| cuts.partition_point(|c| c <= x) as u32).collect();
                Ok(ColumnCodes {
                    codes,
                    levels: cuts.len() as u32 + 1,
                })
            }
            Quantizer::Dyadic { digit, origin } => {
                let scale = (digit as f64).exp2();
                let codes = column
                    .iter()
                    .map(|x| ((x - origin) * scale).floor().rem_euclid(2.0) as u32)
                    .collect();
                Ok(ColumnCodes { codes, levels: 2 })
            }
            Quantizer::Exact => {
                let mut values = column.to_vec();
                values.sort_by(f64::total_cmp);
                values.dedup();
                if values.len() > 4096 {
                    return Err(Error::TooManyCells(values.len()));
                }
                let codes = column
                    .iter()
                    .map(|x| values.partition_point(|v| v < x) as u32)
                    .collect();
                Ok(ColumnCodes {
                    codes,
                    levels: values.len() as u32,
                })
            }
        }
    }
}

/// Joint cell code of each row for the given columns, each quantized
/// separately by `quantizer`.
pub fn window_cells(columns: &[Vec<f64>], quantizer: &Quantizer) -> Result<Vec<u64>> {
    quantizer.validate()?;
    let rows = columns.first().map_or(0, Vec::len);
    let mut out = vec![0u64; rows];
    let mut radix: u128 = 1;
    for column in columns {
        if column.len() != rows {
            return Err(Error::DimensionMismatch {
                expected: rows,
                actual: column.len(),
            });
        }
        let cc = quantizer.quantize(column)?;
        radix *= cc.levels.max(1) as u128;
        if radix > u64::MAX as u128 {
            return Err(Error::TooManyCells(usize::MAX));
        }
        for (o, code) in out.iter_mut().zip(&cc.codes) {
            *o = *o * cc.levels as u64 + *code as u64;
        }
    }
    Ok(out)
}

/// Window sizes and quantizers for one `(j, k)` estimate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WindowSpec {
    /// Past window length `a`.
    pub past: usize,
    /// Future window length `b`.
    pub future: usize,
    pub past_quantizer: Quantizer,
    pub future_quantizer: Quantizer,
    /// Bootstrap replicates for bias and standard error.
    pub bootstrap: usize,
    /// Minimum replicas per nonempty past cell.
    pub min_cell: u64,
}

impl Default for WindowSpec {
    fn default() -> Self {
        WindowSpec {
            past: 2,
            future: 2,
            past_quantizer: Quantizer::default(),
            future_quantizer: Quantizer::default(),
            bootstrap: 50,
            min_cell: 50,
        }
    }
}

impl WindowSpec {
    pub fn with_bins(past: usize, future: usize, bins: usize) -> Self {
        WindowSpec {
            past,
            future,
            past_quantizer: Quantizer::Quantile { bins },
            future_quantizer: Quantizer::Quantile { bins },
            ..WindowSpec::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.past == 0 || self.future == 0 {
            return Err(invalid("window lengths must be positive"));
        }
        self.past_quantizer.validate()?;
        self.future_quantizer.validate()
    }

    pub fn past_columns(&self, j: usize) -> Result<Vec<usize>> {
        if j < self.past {
            return Err(invalid(format!("past window of length {} does not fit before j = {j}", self.past)));
        }
        Ok((j + 1 - self.past..=j).collect())
    }

    pub fn future_columns(&self, j: usize, k: usize, n: usize) -> Result<Vec<usize>> {
        if k == 0 || j + k + self.future - 1 > n {
            return Err(invalid(format!(
                "future window [{}, {}] must lie inside 1..={n} with k ≥ 1",
                j + k,
                j + k + self.future - 1
            )));
        }
        Ok((j + k..j + k + self.future).collect())
    }
}

/// Joint counts of (past cell, future cell) over nonempty cells only.
#[derive(Clone, Debug, PartialEq)]
pub struct ContingencyTable {
    pub rows: usize,
    pub cols: usize,
    /// Row-major `rows × cols`.
    pub counts: Vec<u64>,
    pub row_totals: Vec<u64>,
    pub col_totals: Vec<u64>,
    pub total: u64,
}

fn dense_index(codes: &[u64]) -> (Vec<u64>, Vec<usize>) {
    let mut uniq = codes.to_vec();
    uniq.sort_unstable();
    uniq.dedup();
    let idx = codes.iter().map(|c| uniq.binary_search(c).unwrap()).collect();
    (uniq, idx)
}

impl ContingencyTable {
    pub fn from_codes(past: &[u64], future: &[u64]) -> Result<Self> {
        if past.len() != future.len() || past.is_empty() {
            return Err(invalid("past and future codes must have equal nonzero length"));
        }
        let (ru, ri) = dense_index(past);
        let (cu, ci) = dense_index(future);
        let (rows, cols) = (ru.len(), cu.len());
        if rows.saturating_mul(cols) > MAX_JOINT_CELLS {
            return Err(Error::TooManyCells(rows * cols));
        }
        let mut counts = vec![0u64; rows * cols];
        for (r, c) in ri.iter().zip(&ci) {
            counts[r * cols + c] += 1;
        }
        Ok(Self::from_counts(rows, cols, counts))
    }

    pub fn from_counts(rows: usize, cols: usize, counts: Vec<u64>) -> Self {
        assert_eq!(counts.len(), rows * cols);
        let mut row_totals = vec![0u64; rows];
        let mut col_totals = vec![0u64; cols];
        for r in 0..rows {
            for c in 0..cols {
                let v = counts[r * cols + c];
                row_totals[r] += v;
                col_totals[c] += v;
            }
        }
        let total = row_totals.iter().sum();
        ContingencyTable {
            rows,
            cols,
            counts,
            row_totals,
            col_totals,
            total,
        }
    }

    /// `N²·(p̂_xy − p̂_x p̂_y)` in exact integer arithmetic.
    fn signed(&self) -> Vec<i128> {
        let n = self.total as i128;
        let mut out = Vec::with_capacity(self.rows * self.cols);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.push(self.counts[r * self.cols + c] as i128 * n - self.row_totals[r] as i128 * self.col_totals[c] as i128);
            }
        }
        out
    }

    fn scale(&self) -> f64 {
        let n = self.total as f64;
        n * n
    }

    /// `Σ_x p̂_x d_TV(p̂_{·|x}, p̂_·) = ½ Σ_xy |p̂_xy − p̂_x p̂_y|`.
    pub fn beta(&self) -> f64 {
        let s: i128 = self.signed().iter().map(|v| v.abs()).sum();
        0.5 * s as f64 / self.scale()
    }

    /// β via the conditional-TV form, computed independently of [`beta`](Self::beta).
    pub fn beta_conditional(&self) -> f64 {
        let n = self.total as f64;
        (0..self.rows)
            .map(|r| {
                let nr = self.row_totals[r] as f64;
                if nr == 0.0 {
                    return 0.0;
                }
                let tv: f64 = (0..self.cols)
                    .map(|c| (self.counts[r * self.cols + c] as f64 / nr - self.col_totals[c] as f64 / n).abs())
                    .sum::<f64>()
                    * 0.5;
                nr / n * tv
            })
            .sum()
    }

    /// `sup |P̂(A ∩ B) − P̂(A) P̂(B)|` over unions of cells. Exact when one side
    /// has at most [`EXACT_ALPHA_SIDE`] cells, otherwise a greedy lower bound.
    pub fn alpha(&self, seed: u64) -> AlphaResult {
        let s = self.signed();
        let res = if self.rows.min(self.cols) <= EXACT_ALPHA_SIDE {
            alpha_exact(&s, self.rows, self.cols)
        } else {
            alpha_greedy(&s, self.rows, self.cols, &initial_starts(&s, self.rows, self.cols, seed))
        };
        AlphaResult {
            value: res.0 as f64 / self.scale(),
            exact: self.rows.min(self.cols) <= EXACT_ALPHA_SIDE,
            rows: res.1,
        }
    }

    fn alpha_warm(&self, rows: &[bool]) -> f64 {
        let s = self.signed();
        let v = if self.rows.min(self.cols) <= EXACT_ALPHA_SIDE {
            alpha_exact(&s, self.rows, self.cols).0
        } else {
            alpha_greedy(&s, self.rows, self.cols, &[rows.to_vec()]).0
        };
        v as f64 / self.scale()
    }

    fn probabilities(&self) -> Vec<f64> {
        let n = self.total as f64;
        self.counts.iter().map(|c| *c as f64 / n).collect()
    }

    fn product_probabilities(&self) -> Vec<f64> {
        let n = self.total as f64;
        let mut out = Vec::with_capacity(self.rows * self.cols);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.push(self.row_totals[r] as f64 / n * self.col_totals[c] as f64 / n);
            }
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct AlphaResult {
    pub value: f64,
    pub exact: bool,
    /// Row set `A` of the best event found.
    pub rows: Vec<bool>,
}

/// Given `A`, the best `B` collects the columns with positive mass, so
/// `α = max_A Σ_y (Σ_{x∈A} s_xy)⁺`. Negative deviations are covered by
/// complements because every row and column of `s` sums to zero.
fn alpha_exact(s: &[i128], rows: usize, cols: usize) -> (i128, Vec<bool>) {
    let transpose = cols < rows;
    let (outer, inner) = if transpose { (cols, rows) } else { (rows, cols) };
    let at = |o: usize, i: usize| if transpose { s[i * cols + o] } else { s[o * cols + i] };
    let mut sums = vec![0i128; inner];
    let mut member = vec![false; outer];
    let mut best = (0i128, vec![false; outer]);
    for g in 1u64..(1u64 << outer) {
        let bit = g.trailing_zeros() as usize;
        member[bit] = !member[bit];
        let sign = if member[bit] { 1 } else { -1 };
        for (i, v) in sums.iter_mut().enumerate() {
            *v += sign * at(bit, i);
        }
        let value: i128 = sums.iter().filter(|v| **v > 0).sum();
        if value > best.0 {
            best = (value, member.clone());
        }
    }
    if transpose {
        // Recover the row set from the best column set.
        let cols_set = best.1;
        let row_set = (0..rows)
            .map(|r| (0..cols).filter(|c| cols_set[*c]).map(|c| s[r * cols + c]).sum::<i128>() > 0)
            .collect();
        (best.0, row_set)
    } else {
        best
    }
}

fn initial_starts(s: &[i128], rows: usize, cols: usize, seed: u64) -> Vec<Vec<bool>> {
    let mut starts = Vec::new();
    for r in 0..rows {
        let mut a = vec![false; rows];
        a[r] = true;
        starts.push(a);
    }
    // Single columns as B, turned into their best row sets.
    for c in 0..cols {
        starts.push((0..rows).map(|r| s[r * cols + c] > 0).collect());
    }
    let mut rng = StreamKey::new(seed, streams::SEARCH, 0).sequential();
    for _ in 0..20 {
        starts.push((0..rows).map(|_| rng.gen_bool(0.5)).collect());
    }
    starts
}

/// Alternating maximization over `A` and `B` from each start; a lower bound.
fn alpha_greedy(s: &[i128], rows: usize, cols: usize, starts: &[Vec<bool>]) -> (i128, Vec<bool>) {
    let mut best = (0i128, vec![false; rows]);
    let mut col_sum = vec![0i128; cols];
    let mut row_sum = vec![0i128; rows];
    for start in starts {
        let mut a = start.clone();
        let mut last = i128::MIN;
        for _ in 0..100 {
            col_sum.iter_mut().for_each(|v| *v = 0);
            for r in (0..rows).filter(|r| a[*r]) {
                for c in 0..cols {
                    col_sum[c] += s[r * cols + c];
                }
            }
            let value: i128 = col_sum.iter().filter(|v| **v > 0).sum();
            if value > best.0 {
                best = (value, a.clone());
            }
            if value <= last {
                break;
            }
            last = value;
            let b: Vec<bool> = col_sum.iter().map(|v| *v > 0).collect();
            row_sum.iter_mut().for_each(|v| *v = 0);
            for r in 0..rows {
                for c in (0..cols).filter(|c| b[*c]) {
                    row_sum[r] += s[r * cols + c];
                }
            }
            a = row_sum.iter().map(|v| *v > 0).collect();
        }
    }
    best
}

fn multinomial(probs: &[f64], n: u64, rng: &mut impl Rng) -> Vec<u64> {
    let mut out = vec![0u64; probs.len()];
    let mut remaining = n;
    let mut mass = 1.0f64;
    for (i, p) in probs.iter().enumerate() {
        if remaining == 0 {
            break;
        }
        if i == probs.len() - 1 || mass <= 0.0 {
            out[i] = remaining;
            break;
        }
        let q = (p / mass).clamp(0.0, 1.0);
        let x = if q == 0.0 {
            0
        } else if q == 1.0 {
            remaining
        } else {
            Binomial::new(remaining, q).unwrap().sample(rng)
        };
        out[i] = x;
        remaining -= x;
        mass -= p;
    }
    out
}

/// One estimate for a single placement `(n, j)` and gap `k`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MixingEstimate {
    pub n: usize,
    pub j: usize,
    pub k: usize,
    /// Plug-in values on the quantized table.
    pub beta_raw: f64,
    pub alpha_raw: f64,
    /// Bootstrap bias-corrected values; `alpha_hat ≤ beta_hat / 2` holds exactly.
    pub beta_hat: f64,
    pub alpha_hat: f64,
    pub beta_stderr: f64,
    pub alpha_stderr: f64,
    /// Mean plug-in β over tables resampled from the product of the marginals.
    pub noise_floor: f64,
    /// `max(0, beta_raw − noise_floor)` and α shrunk by the same factor.
    pub beta_lower: f64,
    pub alpha_lower: f64,
    pub alpha_exact: bool,
    pub past_cells: usize,
    pub future_cells: usize,
    pub min_past_count: u64,
    pub replicas: usize,
}

/// Estimator over quantized columns of an ensemble, caching codes per column.
pub struct MixingEstimator<'a> {
    ensemble: &'a PathEnsemble,
    spec: WindowSpec,
    past_codes: BTreeMap<usize, ColumnCodes>,
    future_codes: BTreeMap<usize, ColumnCodes>,
}

impl<'a> MixingEstimator<'a> {
    pub fn new(ensemble: &'a PathEnsemble, spec: WindowSpec) -> Result<Self> {
        spec.validate()?;
        Ok(MixingEstimator {
            ensemble,
            spec,
            past_codes: BTreeMap::new(),
            future_codes: BTreeMap::new(),
        })
    }

    fn window_codes(&mut self, columns: &[usize], past: bool) -> Result<Vec<u64>> {
        let (cache, quantizer) = if past {
            (&mut self.past_codes, &self.spec.past_quantizer)
        } else {
            (&mut self.future_codes, &self.spec.future_quantizer)
        };
        for &c in columns {
            if !cache.contains_key(&c) {
                let column = self
                    .ensemble
                    .column(c)
                    .ok_or_else(|| invalid(format!("column {c} was not simulated")))?;
                cache.insert(c, quantizer.quantize(&column)?);
            }
        }
        let mut radix: u128 = 1;
        for &c in columns {
            radix *= cache[&c].levels.max(1) as u128;
            if radix > u64::MAX as u128 {
                return Err(Error::TooManyCells(usize::MAX));
            }
        }
        let mut out = vec![0u64; self.ensemble.replicas];
        for &c in columns {
            let cc = &cache[&c];
            for (o, code) in out.iter_mut().zip(&cc.codes) {
                *o = *o * cc.levels as u64 + *code as u64;
            }
        }
        Ok(out)
    }

    /// Contingency table for gap `k` after the past window ending at `j`.
    pub fn table(&mut self, j: usize, k: usize) -> Result<ContingencyTable> {
        let past_cols = self.spec.past_columns(j)?;
        let future_cols = self.spec.future_columns(j, k, self.ensemble.n)?;
        let past = self.window_codes(&past_cols, true)?;
        let future = self.window_codes(&future_cols, false)?;
        let table = ContingencyTable::from_codes(&past, &future)?;
        if let Some((cell, &count)) = table.row_totals.iter().enumerate().min_by_key(|(_, c)| **c) {
            if count < self.spec.min_cell {
                return Err(Error::InsufficientCell {
                    cell,
                    count,
                    required: self.spec.min_cell,
                });
            }
        }
        Ok(table)
    }

    pub fn estimate(&mut self, j: usize, k: usize, seed: u64) -> Result<MixingEstimate> {
        let table = self.table(j, k)?;
        Ok(estimate_from_table(&table, self.ensemble.n, j, k, self.spec.bootstrap, seed))
    }
}

/// Bias correction, bootstrap standard errors and null noise floor for one table.
pub fn estimate_from_table(
    table: &ContingencyTable,
    n: usize,
    j: usize,
    k: usize,
    bootstrap: usize,
    seed: u64,
) -> MixingEstimate {
    let tag = ((n as u64) << 40) ^ ((j as u64) << 20) ^ k as u64;
    let beta_raw = table.beta();
    let alpha = table.alpha(seed ^ tag);
    let alpha_raw = alpha.value;

    let (mut beta_hat, mut alpha_hat, mut beta_se, mut alpha_se, mut floor) = (beta_raw, alpha_raw, 0.0, 0.0, 0.0);
    if bootstrap >= 2 {
        let probs = table.probabilities();
        let resampled: Vec<(f64, f64)> = (0..bootstrap)
            .into_par_iter()
            .map(|b| {
                let mut rng = StreamKey::new(seed ^ tag, streams::TABLE_BOOTSTRAP, b as u64).sequential();
                let counts = multinomial(&probs, table.total, &mut rng);
                let t = ContingencyTable::from_counts(table.rows, table.cols, counts);
                (t.beta(), t.alpha_warm(&alpha.rows))
            })
            .collect();
        let bm = resampled.iter().map(|r| r.0).sum::<f64>() / bootstrap as f64;
        let am = resampled.iter().map(|r| r.1).sum::<f64>() / bootstrap as f64;
        let denom = (bootstrap - 1) as f64;
        beta_se = (resampled.iter().map(|r| (r.0 - bm).powi(2)).sum::<f64>() / denom).sqrt();
        alpha_se = (resampled.iter().map(|r| (r.1 - am).powi(2)).sum::<f64>() / denom).sqrt();
        let bias = (bm - beta_raw).max(0.0);
        let lambda = if beta_raw > 0.0 { (bias / beta_raw).min(1.0) } else { 0.0 };
        beta_hat = beta_raw * (1.0 - lambda);
        alpha_hat = alpha_raw * (1.0 - lambda);

        let null = table.product_probabilities();
        floor = (0..bootstrap)
            .into_par_iter()
            .map(|b| {
                let mut rng = StreamKey::new(seed ^ tag, streams::TABLE_NULL, b as u64).sequential();
                let counts = multinomial(&null, table.total, &mut rng);
                ContingencyTable::from_counts(table.rows, table.cols, counts).beta()
            })
            .sum::<f64>()
            / bootstrap as f64;
    }
    let beta_lower = (beta_raw - floor).max(0.0);
    let alpha_lower = if beta_raw > 0.0 {
        alpha_raw * beta_lower / beta_raw
    } else {
        0.0
    };
    MixingEstimate {
        n,
        j,
        k,
        beta_raw,
        alpha_raw,
        beta_hat,
        alpha_hat,
        beta_stderr: beta_se,
        alpha_stderr: alpha_se,
        noise_floor: floor,
        beta_lower,
        alpha_lower,
        alpha_exact: alpha.exact,
        past_cells: table.rows,
        future_cells: table.cols,
        min_past_count: table.row_totals.iter().copied().min().unwrap_or(0),
        replicas: table.total as usize,
    }
}

/// β̂ for one placement, from an existing ensemble.
pub fn beta_hat(ensemble: &PathEnsemble, j: usize, k: usize, spec: &WindowSpec, seed: u64) -> Result<MixingEstimate> {
    MixingEstimator::new(ensemble, spec.clone())?.estimate(j, k, seed)
}

/// α̂ for one placement; the same record as [`beta_hat`].
pub fn alpha_hat(ensemble: &PathEnsemble, j: usize, k: usize, spec: &WindowSpec, seed: u64) -> Result<MixingEstimate> {
    beta_hat(ensemble, j, k, spec, seed)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Placement {
    pub n: usize,
    pub j: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MixingPolicy {
    /// Finite stand-in for the sup over `(n, j)`.
    pub placements: Vec<Placement>,
    pub windows: WindowSpec,
    pub replicas: usize,
    pub seed: u64,
}

impl Default for MixingPolicy {
    fn default() -> Self {
        MixingPolicy {
            placements: vec![Placement { n: 256, j: 128 }],
            windows: WindowSpec::default(),
            replicas: 1_000_000,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct MixingProfile {
    pub policy: MixingPolicy,
    pub gaps: Vec<usize>,
    /// Entry with the largest `beta_hat` over placements, per gap.
    pub entries: Vec<MixingEstimate>,
    pub warnings: Vec<String>,
}

impl MixingProfile {
    pub fn write_json<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer_pretty(out, self)?;
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "k",
            "alpha",
            "beta",
            "stderr_a",
            "stderr_b",
            "n",
            "j",
            "alpha_raw",
            "beta_raw",
            "noise_floor",
            "beta_lower",
            "alpha_exact",
            "past_cells",
            "min_past_count",
        ])?;
        for e in &self.entries {
            w.write_record([
                e.k.to_string(),
                e.alpha_hat.to_string(),
                e.beta_hat.to_string(),
                e.alpha_stderr.to_string(),
                e.beta_stderr.to_string(),
                e.n.to_string(),
                e.j.to_string(),
                e.alpha_raw.to_string(),
                e.beta_raw.to_string(),
                e.noise_floor.to_string(),
                e.beta_lower.to_string(),
                e.alpha_exact.to_string(),
                e.past_cells.to_string(),
                e.min_past_count.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Simulates each placement once and estimates every gap in `gaps`.
pub fn mixing_profile(filter: &FilterSpec, gaps: &[usize], policy: &MixingPolicy) -> Result<MixingProfile> {
    if gaps.is_empty() || policy.placements.is_empty() {
        return Err(invalid("need at least one gap and one placement"));
    }
    policy.windows.validate()?;
    let mut best: Vec<Option<MixingEstimate>> = vec![None; gaps.len()];
    let mut warnings = Vec::new();
    for p in &policy.placements {
        let mut columns = policy.windows.past_columns(p.j)?;
        for &k in gaps {
            columns.extend(policy.windows.future_columns(p.j, k, p.n)?);
        }
        let ensemble = simulate_columns(filter, p.n, policy.replicas, policy.seed, &columns)?;
        warnings.extend(ensemble.warnings.iter().cloned());
        let mut est = MixingEstimator::new(&ensemble, policy.windows.clone())?;
        for (g, &k) in gaps.iter().enumerate() {
            let e = est.estimate(p.j, k, policy.seed)?;
            if best[g].as_ref().map_or(true, |b| e.beta_hat > b.beta_hat) {
                best[g] = Some(e);
            }
        }
    }
    warnings.dedup();
    Ok(MixingProfile {
        policy: policy.clone(),
        gaps: gaps.to_vec(),
        entries: best.into_iter().map(Option::unwrap).collect(),
        warnings,
    })
}
