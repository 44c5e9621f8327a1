//! Monte-Carlo estimation of the physical dependence measure
//! `δ_p(G, i) = sup_t ‖G(t, F_i) − G(t, F_i*)‖_p` and its tail sums
//! `Θ_k = Σ_{h ≥ k} δ₁(G, h)`.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coupling::{replica_streams, CoupledStreams, SwapDescriptor};
use crate::error::{invalid, Error, Result};
use crate::processes::{linear_value, FilterSpec, InnovationBuffer};
use crate::rng::{streams, StreamKey};

pub const MIN_REPLICAS: usize = 1000;

/// How the contribution of lags beyond `H` enters `Θ_k`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailPolicy {
    /// Closed form from the coefficient envelope when available, otherwise
    /// extrapolation.
    #[default]
    Auto,
    /// Always fit a geometric envelope to the last lags.
    Extrapolate,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TailMethod {
    Analytic,
    Extrapolated,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DependencePolicy {
    pub p: f64,
    pub replicas: usize,
    /// Largest lag `H`.
    pub max_lag: usize,
    /// Rescaled times for the sup over `t`; `None` picks the default grid.
    pub t_grid: Option<Vec<f64>>,
    pub bootstrap: usize,
    /// Number of trailing lags used for tail extrapolation.
    pub fit_lags: usize,
    pub min_r_squared: f64,
    pub tail: TailPolicy,
    pub seed: u64,
}

impl Default for DependencePolicy {
    fn default() -> Self {
        DependencePolicy {
            p: 2.0,
            replicas: 10_000,
            max_lag: 30,
            t_grid: None,
            bootstrap: 200,
            fit_lags: 10,
            min_r_squared: 0.9,
            tail: TailPolicy::Auto,
            seed: 0,
        }
    }
}

/// `{0, ¼, ½, ¾, 1}`, or a single point when the filter does not depend on `t`.
pub fn default_t_grid(filter: &FilterSpec) -> Vec<f64> {
    if filter.is_time_constant() {
        vec![0.5]
    } else {
        vec![0.0, 0.25, 0.5, 0.75, 1.0]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DeltaEstimate {
    pub lag: usize,
    pub p: f64,
    pub delta: f64,
    /// Larger of the delta-method and bootstrap standard errors.
    pub stderr: f64,
    pub delta_method_stderr: f64,
    pub bootstrap_stderr: f64,
    /// Grid point attaining the maximum.
    pub argmax_t: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct DependenceProfile {
    pub p: f64,
    pub replicas: usize,
    pub seed: u64,
    pub t_grid: Vec<f64>,
    pub lags: Vec<usize>,
    pub delta_hat: Vec<f64>,
    pub stderr: Vec<f64>,
    /// Order-one estimates used for `Θ`.
    pub delta1_hat: Vec<f64>,
    pub delta1_stderr: Vec<f64>,
    /// `theta_hat[k]` for `k = 0…H`.
    pub theta_hat: Vec<f64>,
    /// Same sum with every `δ₁` replaced by estimate + 3 stderr.
    pub theta_upper: Vec<f64>,
    /// `tail_bound[k]`: contribution of lags not covered by the estimates.
    pub tail_bound: Vec<f64>,
    pub tail_method: TailMethod,
    pub theta_finite: bool,
    pub truncation_lag: usize,
    pub warnings: Vec<String>,
}

impl DependenceProfile {
    pub fn max_lag(&self) -> usize {
        self.lags.len() - 1
    }

    /// JSON record with arrays indexed by lag.
    pub fn write_json<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer_pretty(out, self)?;
        Ok(())
    }

    /// CSV with columns `lag, delta_p, stderr, theta`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["lag", "delta_p", "stderr", "theta"])?;
        for (idx, lag) in self.lags.iter().enumerate() {
            w.write_record([
                lag.to_string(),
                self.delta_hat[idx].to_string(),
                self.stderr[idx].to_string(),
                self.theta_hat[idx].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn check_inputs(filter: &FilterSpec, p: f64, replicas: usize, t_grid: &[f64]) -> Result<()> {
    filter.validate()?;
    if !filter.is_causal() {
        return Err(Error::NoCausalRepresentation(
            "random walk in random scenery has no causal representation; δ_p is undefined".into(),
        ));
    }
    if !(p >= 1.0) || !p.is_finite() {
        return Err(invalid(format!("dependence order p = {p} must be a finite number ≥ 1")));
    }
    if !filter.innovation.has_finite_moment(p) || !filter.innovation.has_finite_moment(1.0) {
        return Err(Error::UndefinedDependenceMeasure(format!(
            "{:?} has no finite moment of order {p}",
            filter.innovation
        )));
    }
    if replicas < MIN_REPLICAS {
        return Err(invalid(format!("need at least {MIN_REPLICAS} replicas, got {replicas}")));
    }
    if t_grid.is_empty() || t_grid.iter().any(|t| !(0.0..=1.0).contains(t)) {
        return Err(invalid("t grid must be a nonempty subset of [0, 1]"));
    }
    Ok(())
}

/// `|G(t, F_h) − G(t, F_h*)|` for `h = 0…max_lag`, lag-major
/// (`out[h * R + r]`). Every lag of a replica shares the same ε and ε*.
fn abs_differences(filter: &FilterSpec, t: f64, max_lag: usize, replicas: usize, seed: u64) -> Vec<f64> {
    let coefs = filter.coefficients(t).expect("causal filter");
    let lag = filter.lag() as i64;
    let rows: Vec<Vec<f64>> = (0..replicas)
        .into_par_iter()
        .map_init(
            || (InnovationBuffer::default(), InnovationBuffer::default()),
            |(base_buf, swap_buf), r| {
                let (base, star) = replica_streams(filter, seed, r);
                let swapped = CoupledStreams {
                    base,
                    star,
                    swap: SwapDescriptor::Single(0),
                };
                base_buf.fill(&base, -lag, max_lag as i64);
                swap_buf.fill(&swapped, -lag, max_lag as i64);
                (0..=max_lag as i64)
                    .map(|h| (linear_value(&coefs, h, base_buf) - linear_value(&coefs, h, swap_buf)).abs())
                    .collect()
            },
        )
        .collect();
    let mut out = vec![0.0; (max_lag + 1) * replicas];
    for (r, row) in rows.iter().enumerate() {
        for (h, v) in row.iter().enumerate() {
            out[h * replicas + r] = *v;
        }
    }
    out
}

fn powered_mean(values: &[f64], p: f64) -> (f64, f64) {
    let n = values.len() as f64;
    let (mut s, mut s2) = (0.0, 0.0);
    for v in values {
        let x = if p == 1.0 { *v } else { v.powf(p) };
        s += x;
        s2 += x * x;
    }
    let m = s / n;
    (m, ((s2 / n - m * m).max(0.0) / n).sqrt())
}

fn root_with_delta_method(m: f64, se_m: f64, p: f64) -> (f64, f64) {
    if m <= 0.0 {
        return (0.0, 0.0);
    }
    let d = m.powf(1.0 / p);
    (d, d / (p * m) * se_m)
}

fn bootstrap_stderr(values: &[f64], p: f64, resamples: usize, seed: u64, salt: u64) -> f64 {
    if resamples < 2 || values.iter().all(|v| *v == 0.0) {
        return 0.0;
    }
    let n = values.len();
    let stats: Vec<f64> = (0..resamples)
        .into_par_iter()
        .map(|b| {
            let key = StreamKey::new(seed ^ salt, streams::BOOTSTRAP, b as u64);
            let mut s = 0.0;
            for r in 0..n {
                let v = values[key.below(r as i64, 0, n)];
                s += if p == 1.0 { v } else { v.powf(p) };
            }
            (s / n as f64).powf(1.0 / p)
        })
        .collect();
    let mean = stats.iter().sum::<f64>() / resamples as f64;
    (stats.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (resamples - 1) as f64).sqrt()
}

/// Estimates for every lag `0…max_lag` and each order in `orders`, maximized over `t_grid`.
fn estimate_lags(
    filter: &FilterSpec,
    orders: &[f64],
    max_lag: usize,
    replicas: usize,
    t_grid: &[f64],
    bootstrap: usize,
    seed: u64,
) -> Vec<Vec<DeltaEstimate>> {
    // First pass: plug-in values for every (t, order, lag).
    let mut best: Vec<Vec<(f64, f64, usize)>> = vec![vec![(-1.0, 0.0, 0); max_lag + 1]; orders.len()];
    for (ti, &t) in t_grid.iter().enumerate() {
        let diffs = abs_differences(filter, t, max_lag, replicas, seed);
        for (oi, &p) in orders.iter().enumerate() {
            for h in 0..=max_lag {
                let (m, se_m) = powered_mean(&diffs[h * replicas..(h + 1) * replicas], p);
                let (d, se) = root_with_delta_method(m, se_m, p);
                if d > best[oi][h].0 {
                    best[oi][h] = (d, se, ti);
                }
            }
        }
    }
    // Second pass: bootstrap only at the maximizing grid point.
    let mut out: Vec<Vec<DeltaEstimate>> = orders
        .iter()
        .enumerate()
        .map(|(oi, &p)| {
            (0..=max_lag)
                .map(|h| {
                    let (d, se, ti) = best[oi][h];
                    DeltaEstimate {
                        lag: h,
                        p,
                        delta: d,
                        stderr: se,
                        delta_method_stderr: se,
                        bootstrap_stderr: 0.0,
                        argmax_t: t_grid[ti],
                    }
                })
                .collect()
        })
        .collect();
    if bootstrap >= 2 {
        for (ti, &t) in t_grid.iter().enumerate() {
            let needed = best.iter().any(|o| o.iter().any(|b| b.2 == ti && b.0 > 0.0));
            if !needed {
                continue;
            }
            let diffs = abs_differences(filter, t, max_lag, replicas, seed);
            for (oi, &p) in orders.iter().enumerate() {
                for h in 0..=max_lag {
                    if best[oi][h].2 != ti || best[oi][h].0 <= 0.0 {
                        continue;
                    }
                    let bs = bootstrap_stderr(&diffs[h * replicas..(h + 1) * replicas], p, bootstrap, seed, h as u64);
                    let e = &mut out[oi][h];
                    e.bootstrap_stderr = bs;
                    e.stderr = e.delta_method_stderr.max(bs);
                }
            }
        }
    }
    out
}

/// `δ̂_p(G, i)`: the maximum over `t_grid` of the plug-in estimate.
pub fn estimate_delta(
    filter: &FilterSpec,
    p: f64,
    i: usize,
    replicas: usize,
    t_grid: &[f64],
    seed: u64,
) -> Result<DeltaEstimate> {
    check_inputs(filter, p, replicas, t_grid)?;
    let all = estimate_lags(filter, &[p], i, replicas, t_grid, 200, seed);
    Ok(all[0][i].clone())
}

/// Full profile over lags `0…H` including `Θ_k`.
pub fn dependence_profile(filter: &FilterSpec, policy: &DependencePolicy) -> Result<DependenceProfile> {
    let t_grid = policy.t_grid.clone().unwrap_or_else(|| default_t_grid(filter));
    check_inputs(filter, policy.p, policy.replicas, &t_grid)?;
    let h_max = policy.max_lag;
    let orders: Vec<f64> = if policy.p == 1.0 { vec![1.0] } else { vec![policy.p, 1.0] };
    let est = estimate_lags(filter, &orders, h_max, policy.replicas, &t_grid, policy.bootstrap, policy.seed);
    let main = &est[0];
    let first = est.last().unwrap();

    let delta1: Vec<f64> = first.iter().map(|e| e.delta).collect();
    let delta1_se: Vec<f64> = first.iter().map(|e| e.stderr).collect();
    let lag_l = filter.lag();
    let mut warnings = Vec::new();

    // Lags past min(H, L) are not represented in the simulation.
    let cut = h_max.min(lag_l) + 1;
    let analytic = match (policy.tail, filter.innovation.mean_abs_difference()) {
        (TailPolicy::Auto, Some(gini)) => filter.envelope_tail_sum(cut).map(|_| gini),
        _ => None,
    };
    let (tail_method, tail_at): (TailMethod, Box<dyn Fn(usize) -> f64>) = match analytic {
        Some(gini) => {
            let f = filter.clone();
            (
                TailMethod::Analytic,
                Box::new(move |k: usize| gini * f.envelope_tail_sum(k.max(cut)).unwrap()),
            )
        }
        None => {
            let (a, b) = fit_geometric_tail(&delta1, policy.fit_lags, policy.min_r_squared)?;
            if lag_l < h_max {
                warnings.push(format!(
                    "truncation lag {lag_l} < H = {h_max}: extrapolated tail ignores lags in ({lag_l}, {h_max}]"
                ));
            }
            (
                TailMethod::Extrapolated,
                Box::new(move |k: usize| {
                    if a == f64::NEG_INFINITY {
                        return 0.0;
                    }
                    let from = k.max(h_max + 1) as f64;
                    (a + b * from).exp() / (1.0 - b.exp())
                }),
            )
        }
    };

    let tail_bound: Vec<f64> = (0..=h_max).map(|k| tail_at(k)).collect();
    let mut theta_hat = vec![0.0; h_max + 1];
    let mut theta_upper = vec![0.0; h_max + 1];
    let (mut acc, mut acc_up) = (0.0, 0.0);
    for k in (0..=h_max).rev() {
        acc += delta1[k];
        acc_up += delta1[k] + 3.0 * delta1_se[k];
        theta_hat[k] = acc + tail_bound[k];
        theta_upper[k] = acc_up + tail_bound[k];
    }
    // Floating-point sums of nonnegative terms already keep Θ nonincreasing.
    let theta_finite = theta_hat[0].is_finite();

    Ok(DependenceProfile {
        p: policy.p,
        replicas: policy.replicas,
        seed: policy.seed,
        t_grid,
        lags: (0..=h_max).collect(),
        delta_hat: main.iter().map(|e| e.delta).collect(),
        stderr: main.iter().map(|e| e.stderr).collect(),
        delta1_hat: delta1,
        delta1_stderr: delta1_se,
        theta_hat,
        theta_upper,
        tail_bound,
        tail_method,
        theta_finite,
        truncation_lag: lag_l,
        warnings,
    })
}

/// Least-squares fit `log δ̂₁[h] ≈ a + b h` on the last `fit_lags` lags.
/// Returns `a = −∞` when every estimate there is zero.
fn fit_geometric_tail(delta1: &[f64], fit_lags: usize, min_r2: f64) -> Result<(f64, f64)> {
    let h_max = delta1.len() - 1;
    let from = (h_max + 1).saturating_sub(fit_lags);
    let window = &delta1[from..];
    if window.iter().all(|d| *d == 0.0) {
        return Ok((f64::NEG_INFINITY, -1.0));
    }
    let pts: Vec<(f64, f64)> = window
        .iter()
        .enumerate()
        .filter(|(_, d)| **d > 0.0)
        .map(|(o, d)| ((from + o) as f64, d.ln()))
        .collect();
    if pts.len() < 3 || pts.len() < window.len() {
        return Err(Error::ExtrapolationRefused(format!(
            "only {} of the last {} lags have positive estimates",
            pts.len(),
            window.len()
        )));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let b = sxy / sxx;
    let a = my - b * mx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    if !(b < 0.0) || r2 < min_r2 {
        return Err(Error::ExtrapolationRefused(format!(
            "log-linear fit on lags {from}..={h_max}: slope {b:.4}, R² = {r2:.4} (need decay and R² ≥ {min_r2})"
        )));
    }
    Ok((a, b))
}

/// `Θ̂_k` from a computed profile; lags beyond `H` use the profile's tail bound.
pub fn theta_tail(profile: &DependenceProfile, k: usize) -> Result<f64> {
    if k <= profile.max_lag() {
        Ok(profile.theta_hat[k])
    } else {
        Err(Error::ExtrapolationRefused(format!(
            "k = {k} exceeds the profile's largest lag {}",
            profile.max_lag()
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::processes::InnovationLaw;

    #[test]
    fn geometric_tail_fit() {
        let d: Vec<f64> = (0..=30).map(|h| 0.5f64.powi(h)).collect();
        let (a, b) = fit_geometric_tail(&d, 10, 0.9).unwrap();
        assert!((b - 0.5f64.ln()).abs() < 1e-12);
        assert!(a.abs() < 1e-10);
        let flat: Vec<f64> = (0..=30).map(|h| 1.0 + (h % 2) as f64).collect();
        assert!(matches!(fit_geometric_tail(&flat, 10, 0.9), Err(Error::ExtrapolationRefused(_))));
        assert_eq!(fit_geometric_tail(&vec![0.0; 31], 10, 0.9).unwrap().0, f64::NEG_INFINITY);
    }

    #[test]
    fn extrapolated_tail_policy() {
        let f = FilterSpec::ar1(0.5, InnovationLaw::standard_gaussian());
        let policy = DependencePolicy {
            p: 1.0,
            replicas: 2000,
            max_lag: 12,
            bootstrap: 0,
            fit_lags: 8,
            tail: TailPolicy::Extrapolate,
            ..DependencePolicy::default()
        };
        let prof = dependence_profile(&f, &policy).unwrap();
        assert_eq!(prof.tail_method, TailMethod::Extrapolated);
        // δ₁ is exactly proportional to ρ^h on common random numbers.
        let exact_tail = prof.delta1_hat[0] * 0.5f64.powi(13) / 0.5;
        assert!((prof.tail_bound[0] - exact_tail).abs() < 1e-9 * exact_tail.max(1.0));
    }

    #[test]
    fn refuses_bad_inputs() {
        let f = FilterSpec::ar1(0.5, InnovationLaw::standard_gaussian());
        assert!(estimate_delta(&f, 2.0, 1, 10, &[0.5], 0).is_err());
        assert!(estimate_delta(&f, 0.5, 1, 1000, &[0.5], 0).is_err());
        assert!(matches!(
            estimate_delta(&FilterSpec::random_walk_scenery(), 1.0, 1, 1000, &[0.5], 0),
            Err(Error::NoCausalRepresentation(_))
        ));
        let heavy = FilterSpec::iid(InnovationLaw::Pareto { shape: 0.8 });
        assert!(matches!(
            estimate_delta(&heavy, 1.0, 0, 1000, &[0.5], 0),
            Err(Error::UndefinedDependenceMeasure(_))
        ));
    }
}
