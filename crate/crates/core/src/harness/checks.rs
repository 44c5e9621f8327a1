//! Transport and mollifier checks run by the harness.

use std::collections::BTreeMap;
use std::io::Write;

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::coupling::tilde_ensemble;
use crate::error::{invalid, Result};
use crate::measure::EmpiricalMeasure;
use crate::mixing::{window_cells, Quantizer};
use crate::mollify::{
    compute_kernel_constants, interpolation_check, mollified_difference_check, smoothing_error_check, BoundReport,
    DensitySpec, InterpolationReport, KernelConstants, MeasureSpec,
};
use crate::physdep::DependenceProfile;
use crate::processes::FilterSpec;
use crate::rng::{streams, StreamKey};
use crate::transport::{kr_duality_gap, w1_lp, WeightedMetric};

const LP_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TransportCheckConfig {
    pub n: usize,
    pub j: usize,
    pub gaps: Vec<usize>,
    pub replicas: usize,
    /// Number of trailing past coordinates defining the conditioning cells.
    pub past_window: usize,
    pub quantizer: Quantizer,
    /// Paired rows drawn per cell for each LP.
    pub max_support: usize,
    pub resamples: usize,
    pub probes: usize,
}

impl Default for TransportCheckConfig {
    fn default() -> Self {
        TransportCheckConfig {
            n: 64,
            j: 32,
            gaps: vec![1, 2, 4],
            replicas: 20_000,
            past_window: 1,
            quantizer: Quantizer::Quantile { bins: 4 },
            max_support: 300,
            resamples: 5,
            probes: 32,
        }
    }
}

/// One LP on a paired subsample of a past cell.
#[derive(Clone, Debug, Serialize)]
pub struct CellRow {
    pub k: usize,
    pub cell: u64,
    pub count: usize,
    pub resample: usize,
    /// `W_{1,d}` between the subsampled future block and its coupled copy.
    pub w1: f64,
    /// Mean `d(X̄, X̃)` over the same rows, the cost of the identity pairing.
    pub coupling_cost: f64,
    pub holds: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct GapRow {
    pub k: usize,
    pub mean_distance: f64,
    pub stderr: f64,
    /// `Θ̂_k` upper evaluation, when a dependence profile is available.
    pub theta_upper: Option<f64>,
    pub holds: bool,
    pub duality_gap: f64,
    pub dual_over_primal: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct TransportCheckReport {
    pub config: TransportCheckConfig,
    pub cells: Vec<CellRow>,
    pub gaps: Vec<GapRow>,
    pub holds: bool,
}

impl TransportCheckReport {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["k", "cell", "count", "resample", "w1", "coupling_cost", "holds"])?;
        for r in &self.cells {
            w.write_record([
                r.k.to_string(),
                r.cell.to_string(),
                r.count.to_string(),
                r.resample.to_string(),
                r.w1.to_string(),
                r.coupling_cost.to_string(),
                r.holds.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_gap_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["k", "mean_distance", "stderr", "theta_upper", "holds", "duality_gap"])?;
        for r in &self.gaps {
            w.write_record([
                r.k.to_string(),
                r.mean_distance.to_string(),
                r.stderr.to_string(),
                r.theta_upper.map_or(String::new(), |t| t.to_string()),
                r.holds.to_string(),
                r.duality_gap.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Conditional transport check: within each quantized past cell the
/// `W_{1,d}` distance between the future block and its coupled copy is at
/// most the identity-pairing cost, and `E d(X̄, X̃) ≤ Θ_k`.
pub fn transport_check(
    filter: &FilterSpec,
    config: &TransportCheckConfig,
    weights: Option<&[f64]>,
    profile: Option<&DependenceProfile>,
    seed: u64,
) -> Result<TransportCheckReport> {
    if config.past_window == 0 || config.past_window > config.j {
        return Err(invalid("past_window must lie in 1..=j"));
    }
    if config.max_support < 2 || config.resamples == 0 {
        return Err(invalid("need max_support ≥ 2 and at least one resample"));
    }
    let mut cells_out = Vec::new();
    let mut gaps_out = Vec::new();
    for &k in &config.gaps {
        let ens = tilde_ensemble(filter, config.j, k, config.n, config.replicas, seed)?;
        let nu = ens.future_width();
        let metric = match weights {
            Some(w) => WeightedMetric::new(w.to_vec())?,
            None => WeightedMetric::geometric(nu),
        };
        let (mean_d, se) = ens.mean_distance(&metric)?;
        let columns: Vec<Vec<f64>> = (config.j - config.past_window..config.j)
            .map(|c| ens.past_rows().map(|r| r[c]).collect())
            .collect();
        let codes = window_cells(&columns, &config.quantizer)?;
        let mut by_cell: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
        for (r, c) in codes.iter().enumerate() {
            by_cell.entry(*c).or_default().push(r);
        }
        let x: Vec<&[f64]> = ens.future_rows().map(|(a, _)| a).collect();
        let xt: Vec<&[f64]> = ens.future_rows().map(|(_, b)| b).collect();
        let mut first_pair = None;
        for (cell, rows) in &by_cell {
            for s in 0..config.resamples {
                let key = StreamKey::new(seed, streams::TRANSPORT, (k as u64) << 40 | cell << 8 | s as u64);
                let mut rng = key.sequential();
                let take = config.max_support.min(rows.len());
                let picked: Vec<usize> = sample(&mut rng, rows.len(), take).into_iter().map(|i| rows[i]).collect();
                let p = EmpiricalMeasure::from_samples(picked.iter().map(|&r| x[r].to_vec()).collect())?;
                let q = EmpiricalMeasure::from_samples(picked.iter().map(|&r| xt[r].to_vec()).collect())?;
                let plan = w1_lp(&p, &q, &metric)?;
                let cost = picked.iter().map(|&r| metric.distance(x[r], xt[r])).sum::<f64>() / take as f64;
                cells_out.push(CellRow {
                    k,
                    cell: *cell,
                    count: rows.len(),
                    resample: s,
                    w1: plan.value,
                    coupling_cost: cost,
                    holds: plan.value <= cost + LP_TOL,
                });
                if first_pair.is_none() {
                    first_pair = Some((p, q));
                }
            }
        }
        let (duality_gap, ratio) = match first_pair {
            Some((p, q)) => {
                let rep = kr_duality_gap(&p, &q, &metric, config.probes, seed)?;
                (rep.gap, if rep.primal > 0.0 { rep.dual / rep.primal } else { 1.0 })
            }
            None => (0.0, 1.0),
        };
        let theta_upper = profile.and_then(|pr| pr.theta_upper.get(k).copied());
        gaps_out.push(GapRow {
            k,
            mean_distance: mean_d,
            stderr: se,
            theta_upper,
            holds: theta_upper.map_or(true, |t| mean_d <= t + 3.0 * se) && duality_gap >= -LP_TOL,
            duality_gap,
            dual_over_primal: ratio,
        });
    }
    let holds = cells_out.iter().all(|c| c.holds) && gaps_out.iter().all(|g| g.holds);
    Ok(TransportCheckReport {
        config: config.clone(),
        cells: cells_out,
        gaps: gaps_out,
        holds,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MollifyCheckConfig {
    pub eps: Vec<f64>,
    /// Mean shifts `μ` for the pairs `N(0, 1)` vs `N(μ, 1)`.
    pub shifts: Vec<f64>,
    /// Include the ν = 2 product densities.
    pub two_dimensional: bool,
}

impl Default for MollifyCheckConfig {
    fn default() -> Self {
        MollifyCheckConfig {
            eps: vec![0.0, 0.02, 0.05, 0.1, 0.2, 0.5],
            shifts: vec![0.1, 0.2, 0.5],
            two_dimensional: true,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct NamedBound {
    pub name: String,
    pub report: BoundReport,
}

#[derive(Clone, Debug, Serialize)]
pub struct ShiftInterpolation {
    pub shift: f64,
    pub report: InterpolationReport,
}

#[derive(Clone, Debug, Serialize)]
pub struct MollifyCheckReport {
    pub kernel: KernelConstants,
    pub smoothing: Vec<NamedBound>,
    pub differences: Vec<NamedBound>,
    pub interpolation: Vec<ShiftInterpolation>,
    pub holds: bool,
}

impl MollifyCheckReport {
    pub fn write_interpolation_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["shift", "w1", "D", "lhs", "bound", "eps_star", "holds", "locally_optimal"])?;
        for s in &self.interpolation {
            let r = &s.report;
            w.write_record([
                s.shift.to_string(),
                r.w1.to_string(),
                r.d.to_string(),
                r.lhs.to_string(),
                r.bound.to_string(),
                r.eps_star.to_string(),
                r.holds.to_string(),
                r.locally_optimal.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// The smoothing, mollified-difference and interpolation bounds on the
/// Gaussian and Laplace test matrix.
pub fn mollify_check(config: &MollifyCheckConfig) -> Result<MollifyCheckReport> {
    let kernel = compute_kernel_constants()?;
    let unit = WeightedMetric::new(vec![1.0])?;
    let pair = WeightedMetric::new(vec![0.5, 0.25])?;
    let laplace = DensitySpec::Laplace1d {
        location: 0.0,
        scale: 1.0,
    };
    let mut cases = vec![
        ("gaussian_1d", DensitySpec::standard_gaussian(1), unit.clone()),
        ("laplace_1d", laplace.clone(), unit.clone()),
    ];
    if config.two_dimensional {
        cases.push(("gaussian_2d", DensitySpec::standard_gaussian(2), pair.clone()));
        cases.push((
            "laplace_2d",
            DensitySpec::Product {
                factors: vec![laplace.clone(), laplace],
            },
            pair,
        ));
    }
    let mut smoothing = Vec::new();
    for (name, f, m) in &cases {
        smoothing.push(NamedBound {
            name: (*name).to_string(),
            report: smoothing_error_check(f, &config.eps, m)?,
        });
    }
    let positive: Vec<f64> = config.eps.iter().copied().filter(|e| *e > 0.0).collect();
    let mut differences = Vec::new();
    let mut interpolation = Vec::new();
    let base = DensitySpec::gaussian_1d(0.0, 1.0);
    for &mu in &config.shifts {
        let shifted = DensitySpec::gaussian_1d(mu, 1.0);
        differences.push(NamedBound {
            name: format!("gaussian_shift_{mu}"),
            report: mollified_difference_check(
                &MeasureSpec::Density(base.clone()),
                &MeasureSpec::Density(shifted.clone()),
                &positive,
                &unit,
            )?,
        });
        interpolation.push(ShiftInterpolation {
            shift: mu,
            report: interpolation_check(&base, &shifted, &unit, None)?,
        });
    }
    let holds = smoothing.iter().all(|s| s.report.holds())
        && differences.iter().all(|s| s.report.holds())
        && interpolation.iter().all(|s| s.report.holds && s.report.locally_optimal);
    Ok(MollifyCheckReport {
        kernel,
        smoothing,
        differences,
        interpolation,
        holds,
    })
}
