//! Product-bump mollification, the smoothing and mollified-difference
//! inequalities, the interpolation bound `‖p − q‖₁² ≤ 8 C₁ C₂ D W₁`, and the
//! derivative functionals `D₁`, `D₂` for Gaussian blocks.
//!
//! One-dimensional laws are handled semi-analytically: mollified densities
//! and distribution functions are single integrals against the bump, and an
//! `L¹` distance `∫|a p − b q|` is a sum of distribution-function increments
//! between the sign changes of `a p − b q`.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::measure::EmpiricalMeasure;
use crate::quadrature::{simpson_panels, tanh_sinh, tanh_sinh_split};
use crate::transport::{cdf_l1, w1_lp, WeightedMetric};

/// `c` in `φ(x) = c·exp(−1/(1 − x²))`.
pub const BUMP_NORMALIZER: f64 = 2.252_283_621_043_581;
/// `C_{φ,1} = ∫|φ′|` (= 2c/e).
pub const C_PHI_1: f64 = 1.657_137_679_738_210_3;
/// `C_{φ,2} = ∫|x| φ(x) dx`.
pub const C_PHI_2: f64 = 0.334_453_997_709_975_33;
/// Tolerance declared for the kernel constants and kernel identities.
pub const KERNEL_TOL: f64 = 1e-10;

const INNER_TOL: f64 = 1e-14;
const SCAN_NODES: usize = 20_001;

/// `φ(x)`, supported on `(−1, 1)`.
#[inline]
pub fn bump(x: f64) -> f64 {
    let s = 1.0 - x * x;
    if s <= 0.0 {
        0.0
    } else {
        BUMP_NORMALIZER * (-1.0 / s).exp()
    }
}

/// `φ′(x) = −2x φ(x) / (1 − x²)²`.
#[inline]
pub fn bump_derivative(x: f64) -> f64 {
    let s = 1.0 - x * x;
    if s <= 0.0 {
        0.0
    } else {
        -2.0 * x * bump(x) / (s * s)
    }
}

/// `∫_{−1}^{z} φ`.
pub fn bump_cdf(z: f64) -> f64 {
    if z <= -1.0 {
        0.0
    } else if z >= 1.0 {
        1.0
    } else if z <= 0.0 {
        tanh_sinh(bump, -1.0, z, INNER_TOL).unwrap_or(f64::NAN)
    } else {
        1.0 - tanh_sinh(bump, z, 1.0, INNER_TOL).unwrap_or(f64::NAN)
    }
}

/// `Φ_ε^{(w)}(x) = Π_m φ(x_m / (ε w_m)) / (ε w_m)`.
pub fn product_kernel(x: &[f64], eps: f64, metric: &WeightedMetric) -> f64 {
    x.iter()
        .zip(metric.weights())
        .map(|(xm, w)| {
            let h = eps * w;
            bump(xm / h) / h
        })
        .product()
}

/// Kernel constants recomputed by quadrature.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct KernelConstants {
    pub normalizer: f64,
    pub c_phi_1: f64,
    pub c_phi_2: f64,
}

pub fn compute_kernel_constants() -> Result<KernelConstants> {
    let raw = |x: f64| {
        let s = 1.0 - x * x;
        if s <= 0.0 {
            0.0
        } else {
            (-1.0 / s).exp()
        }
    };
    let z = tanh_sinh(raw, -1.0, 1.0, 1e-15)?;
    let c = 1.0 / z;
    let c1 = tanh_sinh_split(|x| bump_derivative(x).abs() * c / BUMP_NORMALIZER, -1.0, 1.0, &[0.0], 1e-15)?;
    let c2 = tanh_sinh_split(|x| x.abs() * raw(x) * c, -1.0, 1.0, &[0.0], 1e-15)?;
    Ok(KernelConstants {
        normalizer: c,
        c_phi_1: c1,
        c_phi_2: c2,
    })
}

fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// A probability law on the line with a density (or its mollification).
pub trait Line: Sync {
    fn pdf(&self, x: f64) -> f64;
    fn cdf(&self, x: f64) -> f64;
    /// Interval carrying all but a negligible (< 1e−12) amount of mass.
    fn range(&self) -> (f64, f64);
    /// Points where the density is not differentiable.
    fn kinks(&self) -> Vec<f64> {
        Vec::new()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponent {
    pub weight: f64,
    pub mean: f64,
    pub stddev: f64,
}

/// One-dimensional factor of a density.
#[derive(Clone, Debug, PartialEq)]
pub enum Factor {
    Gaussian { mean: f64, stddev: f64 },
    Laplace { location: f64, scale: f64 },
    Mixture(Vec<MixtureComponent>),
}

impl Factor {
    pub fn pdf_derivative(&self, x: f64) -> f64 {
        match self {
            Factor::Gaussian { mean, stddev } => {
                let z = (x - mean) / stddev;
                -z * normal_pdf(z) / (stddev * stddev)
            }
            Factor::Laplace { location, scale } => {
                let d = x - location;
                -d.signum() * (-d.abs() / scale).exp() / (2.0 * scale * scale)
            }
            Factor::Mixture(cs) => cs
                .iter()
                .map(|c| c.weight * Factor::Gaussian { mean: c.mean, stddev: c.stddev }.pdf_derivative(x))
                .sum(),
        }
    }

    /// `‖f′‖₁` in closed form where available.
    pub fn derivative_l1_closed_form(&self) -> Option<f64> {
        match self {
            Factor::Gaussian { stddev, .. } => Some((2.0 / std::f64::consts::PI).sqrt() / stddev),
            Factor::Laplace { scale, .. } => Some(1.0 / scale),
            Factor::Mixture(_) => None,
        }
    }

    /// `‖f′‖₁` by quadrature of `|f′|`, split at the sign changes of `f′`.
    pub fn derivative_l1_quadrature(&self) -> Result<f64> {
        let (lo, hi) = self.range();
        let mut breaks = self.kinks();
        breaks.extend(sign_changes(|x| self.pdf_derivative(x), lo, hi, SCAN_NODES, true));
        Ok(simpson_panels(|x| self.pdf_derivative(x).abs(), lo, hi, &breaks, 1e-13, 1e-12, 1 << 24)?.value)
    }

    pub fn derivative_l1(&self) -> Result<f64> {
        match self.derivative_l1_closed_form() {
            Some(v) => Ok(v),
            None => self.derivative_l1_quadrature(),
        }
    }
}

impl Line for Factor {
    fn pdf(&self, x: f64) -> f64 {
        match self {
            Factor::Gaussian { mean, stddev } => normal_pdf((x - mean) / stddev) / stddev,
            Factor::Laplace { location, scale } => (-(x - location).abs() / scale).exp() / (2.0 * scale),
            Factor::Mixture(cs) => cs.iter().map(|c| c.weight * normal_pdf((x - c.mean) / c.stddev) / c.stddev).sum(),
        }
    }

    fn cdf(&self, x: f64) -> f64 {
        match self {
            Factor::Gaussian { mean, stddev } => normal_cdf((x - mean) / stddev),
            Factor::Laplace { location, scale } => {
                let d = (x - location) / scale;
                if d < 0.0 {
                    0.5 * d.exp()
                } else {
                    1.0 - 0.5 * (-d).exp()
                }
            }
            Factor::Mixture(cs) => cs.iter().map(|c| c.weight * normal_cdf((x - c.mean) / c.stddev)).sum(),
        }
    }

    fn range(&self) -> (f64, f64) {
        match self {
            Factor::Gaussian { mean, stddev } => (mean - 8.5 * stddev, mean + 8.5 * stddev),
            Factor::Laplace { location, scale } => (location - 30.0 * scale, location + 30.0 * scale),
            Factor::Mixture(cs) => cs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), c| {
                (lo.min(c.mean - 8.5 * c.stddev), hi.max(c.mean + 8.5 * c.stddev))
            }),
        }
    }

    fn kinks(&self) -> Vec<f64> {
        match self {
            Factor::Laplace { location, .. } => vec![*location],
            _ => Vec::new(),
        }
    }
}

/// `f_h(x) = ∫ f(x − h u) φ(u) du` for a base law `f`.
pub struct Mollified<'a> {
    pub base: &'a dyn Line,
    pub h: f64,
}

impl Mollified<'_> {
    fn smooth(&self, x: f64, g: impl Fn(f64) -> f64) -> f64 {
        let breaks: Vec<f64> = self.base.kinks().iter().map(|k| (x - k) / self.h).collect();
        tanh_sinh_split(|u| g(x - self.h * u) * bump(u), -1.0, 1.0, &breaks, INNER_TOL).unwrap_or(f64::NAN)
    }
}

impl Line for Mollified<'_> {
    fn pdf(&self, x: f64) -> f64 {
        self.smooth(x, |y| self.base.pdf(y))
    }

    fn cdf(&self, x: f64) -> f64 {
        self.smooth(x, |y| self.base.cdf(y))
    }

    fn range(&self) -> (f64, f64) {
        let (lo, hi) = self.base.range();
        (lo - self.h, hi + self.h)
    }
}

/// Mollified atoms `Σ_i m_i φ((x − a_i)/h)/h`.
pub struct MollifiedAtoms {
    atoms: Vec<f64>,
    masses: Vec<f64>,
    h: f64,
}

impl MollifiedAtoms {
    pub fn new(measure: &EmpiricalMeasure, h: f64) -> Result<Self> {
        if measure.dim() != 1 {
            return Err(Error::DimensionMismatch {
                expected: 1,
                actual: measure.dim(),
            });
        }
        Ok(MollifiedAtoms {
            atoms: measure.points().iter().map(|p| p[0]).collect(),
            masses: measure.masses().to_vec(),
            h,
        })
    }

    fn window(&self, x: f64) -> std::ops::Range<usize> {
        let lo = self.atoms.partition_point(|a| *a <= x - self.h);
        let hi = self.atoms.partition_point(|a| *a < x + self.h);
        lo..hi
    }
}

impl Line for MollifiedAtoms {
    fn pdf(&self, x: f64) -> f64 {
        self.window(x)
            .map(|i| self.masses[i] * bump((x - self.atoms[i]) / self.h) / self.h)
            .sum()
    }

    fn cdf(&self, x: f64) -> f64 {
        let w = self.window(x);
        let below: f64 = self.masses[..w.start].iter().sum();
        below + w.map(|i| self.masses[i] * bump_cdf((x - self.atoms[i]) / self.h)).sum::<f64>()
    }

    fn range(&self) -> (f64, f64) {
        (self.atoms[0] - self.h, self.atoms[self.atoms.len() - 1] + self.h)
    }
}

/// Locations where `g` changes sign on a uniform scan of `[lo, hi]`,
/// located by linear interpolation (and bisection when `refine`).
fn sign_changes(g: impl Fn(f64) -> f64, lo: f64, hi: f64, nodes: usize, refine: bool) -> Vec<f64> {
    let step = (hi - lo) / (nodes - 1) as f64;
    let mut out = Vec::new();
    let mut prev = (lo, g(lo));
    for i in 1..nodes {
        let x = lo + i as f64 * step;
        let v = g(x);
        if v != 0.0 {
            if prev.1 != 0.0 && (v > 0.0) != (prev.1 > 0.0) {
                out.push(if refine {
                    bisect(&g, prev.0, x, prev.1)
                } else {
                    prev.0 + (x - prev.0) * prev.1 / (prev.1 - v)
                });
            }
            prev = (x, v);
        }
    }
    out
}

fn bisect(g: impl Fn(f64) -> f64, mut a: f64, mut b: f64, ga: f64) -> f64 {
    let pos = ga > 0.0;
    for _ in 0..100 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        if (g(m) > 0.0) == pos {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// Cached density values of two laws on a common scan grid, split into runs
/// on which `atan2(p, q)` is monotone. The sign of `a p − b q` is the sign of
/// `atan2(p, q) − atan2(b, a)`, so each run holds at most one sign change.
struct ScanGrid<'a> {
    p: &'a dyn Line,
    q: &'a dyn Line,
    xs: Vec<f64>,
    pv: Vec<f64>,
    qv: Vec<f64>,
    theta: Vec<f64>,
    /// `(start, end, increasing)` index ranges, inclusive.
    runs: Vec<(usize, usize, bool)>,
}

impl<'a> ScanGrid<'a> {
    fn new(p: &'a dyn Line, q: &'a dyn Line, resolution: f64) -> Self {
        let (a, b) = p.range();
        let (c, d) = q.range();
        let (lo, hi) = (a.min(c), b.max(d));
        let nodes = (((hi - lo) / resolution).ceil() as usize + 1).clamp(SCAN_NODES, 4_000_001);
        let step = (hi - lo) / (nodes - 1) as f64;
        let mut xs: Vec<f64> = (0..nodes).map(|i| lo + i as f64 * step).collect();
        xs.extend(p.kinks().into_iter().chain(q.kinks()).filter(|k| *k > lo && *k < hi));
        xs.sort_by(f64::total_cmp);
        xs.dedup();
        use rayon::prelude::*;
        let pv: Vec<f64> = xs.par_iter().map(|x| p.pdf(*x)).collect();
        let qv: Vec<f64> = xs.par_iter().map(|x| q.pdf(*x)).collect();
        let theta: Vec<f64> = pv
            .iter()
            .zip(&qv)
            .map(|(p, q)| if *p <= 0.0 && *q <= 0.0 { f64::NAN } else { p.max(0.0).atan2(q.max(0.0)) })
            .collect();
        let mut runs = Vec::new();
        let mut i = 0;
        while i < theta.len() {
            if theta[i].is_nan() {
                i += 1;
                continue;
            }
            let start = i;
            let mut dir: Option<bool> = None;
            while i + 1 < theta.len() && !theta[i + 1].is_nan() {
                let d = theta[i + 1] - theta[i];
                if d != 0.0 {
                    match dir {
                        None => dir = Some(d > 0.0),
                        Some(up) if up != (d > 0.0) => break,
                        _ => {}
                    }
                }
                i += 1;
            }
            runs.push((start, i, dir.unwrap_or(true)));
            if i == start {
                i += 1;
            }
        }
        ScanGrid {
            p,
            q,
            xs,
            pv,
            qv,
            theta,
            runs,
        }
    }

    /// Root of `a p − b q` between grid nodes `i` and `i + 1`, from the cubic
    /// through the four nearest cached values.
    fn refine(&self, i: usize, a: f64, b: f64) -> f64 {
        let g = |j: usize| a * self.pv[j] - b * self.qv[j];
        let (x0, x1) = (self.xs[i], self.xs[i + 1]);
        let (g0, g1) = (g(i), g(i + 1));
        if g0 == 0.0 {
            return x0;
        }
        if g1 == 0.0 {
            return x1;
        }
        let lo = i.saturating_sub(1);
        let hi = (i + 2).min(self.xs.len() - 1);
        let idx: Vec<usize> = (lo..=hi).collect();
        let poly = |x: f64| -> f64 {
            idx.iter()
                .map(|&j| {
                    let l: f64 = idx
                        .iter()
                        .filter(|&&m| m != j)
                        .map(|&m| (x - self.xs[m]) / (self.xs[j] - self.xs[m]))
                        .product();
                    g(j) * l
                })
                .sum()
        };
        let (mut l, mut r) = (x0, x1);
        let pos = g0 > 0.0;
        for _ in 0..60 {
            let m = 0.5 * (l + r);
            if (poly(m) > 0.0) == pos {
                l = m;
            } else {
                r = m;
            }
        }
        0.5 * (l + r)
    }

    fn roots(&self, a: f64, b: f64) -> Vec<f64> {
        let target = b.atan2(a);
        let mut roots = Vec::new();
        for &(s, e, up) in &self.runs {
            let (t0, t1) = (self.theta[s], self.theta[e]);
            let (min, max) = if up { (t0, t1) } else { (t1, t0) };
            if !(min < target && target < max) {
                continue;
            }
            // First index in the run past the threshold.
            let k = s + self.theta[s..=e].partition_point(|t| if up { *t <= target } else { *t >= target });
            roots.push(self.refine(k - 1, a, b));
        }
        // Across a stretch where both densities vanish the ratio jumps, so a
        // sign change there falls between runs. Any point of the gap will do.
        for w in self.runs.windows(2) {
            let (e, s) = (w[0].1, w[1].0);
            if s > e + 1 {
                let before = self.theta[e] - target;
                let after = self.theta[s] - target;
                if before != 0.0 && after != 0.0 && (before > 0.0) != (after > 0.0) {
                    roots.push(self.xs[e + 1]);
                }
            }
        }
        roots.sort_by(f64::total_cmp);
        roots
    }

    /// `∫ |a p − b q|` as a sum of distribution-function increments over the
    /// sign-constant pieces of `a p − b q`.
    fn weighted_l1(&self, a: f64, b: f64) -> f64 {
        if a <= 0.0 || b <= 0.0 {
            return a.abs() + b.abs();
        }
        let mut total = 0.0;
        let mut last = 0.0; // a F_p − b F_q at −∞
        for r in self.roots(a, b) {
            let cur = a * self.p.cdf(r) - b * self.q.cdf(r);
            total += (cur - last).abs();
            last = cur;
        }
        total + (a - b - last).abs()
    }
}

fn resolution_for(h_min: f64) -> f64 {
    (h_min / 16.0).min(5e-3)
}

/// `∫|p − q|` for two one-dimensional laws.
pub fn l1_distance_1d(p: &dyn Line, q: &dyn Line, resolution: f64) -> f64 {
    ScanGrid::new(p, q, resolution).weighted_l1(1.0, 1.0)
}

/// `∫∫ |p₁(x)p₂(y) − q₁(x)q₂(y)| dx dy`.
pub fn l1_distance_product_2d(
    p: [&dyn Line; 2],
    q: [&dyn Line; 2],
    resolution: f64,
) -> Result<f64> {
    let inner = ScanGrid::new(p[1], q[1], resolution);
    let outer = ScanGrid::new(p[0], q[0], resolution);
    // The integrand is singular where p₁(x)/q₁(x) meets an extremum of the
    // inner ratio; those points become panel ends.
    let mut extrema: Vec<f64> = inner
        .runs
        .iter()
        .flat_map(|&(s, e, _)| [inner.theta[s], inner.theta[e]])
        .collect();
    extrema.sort_by(f64::total_cmp);
    extrema.dedup_by(|a, b| (*a - *b).abs() <= 1e-12);
    if extrema.len() > 256 {
        return Err(Error::QuadratureNonConvergence(format!(
            "inner density ratio has {} local extrema",
            extrema.len()
        )));
    }
    let mut breaks = p[0].kinks();
    breaks.extend(q[0].kinks());
    for t in extrema {
        breaks.extend(outer.roots(t.sin(), t.cos()));
    }
    let (lo, hi) = (outer.xs[0], outer.xs[outer.xs.len() - 1]);
    tanh_sinh_split(|x| inner.weighted_l1(p[0].pdf(x), q[0].pdf(x)), lo, hi, &breaks, 1e-12)
}

fn nan_check(v: f64, what: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::QuadratureNonConvergence(format!("{what} is not finite")))
    }
}

/// Analytic test densities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum DensitySpec {
    GaussianNd { mean: Vec<f64>, cov: Vec<Vec<f64>> },
    Laplace1d { location: f64, scale: f64 },
    GaussianMixture1d { components: Vec<MixtureComponent> },
    /// Independent coordinates with the given one-dimensional factors.
    Product { factors: Vec<DensitySpec> },
}

impl DensitySpec {
    pub fn gaussian_1d(mean: f64, stddev: f64) -> Self {
        DensitySpec::GaussianNd {
            mean: vec![mean],
            cov: vec![vec![stddev * stddev]],
        }
    }

    pub fn standard_gaussian(dim: usize) -> Self {
        DensitySpec::GaussianNd {
            mean: vec![0.0; dim],
            cov: (0..dim).map(|i| (0..dim).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            DensitySpec::GaussianNd { mean, .. } => mean.len(),
            DensitySpec::Product { factors } => factors.iter().map(DensitySpec::dim).sum(),
            _ => 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            DensitySpec::GaussianNd { mean, cov } => {
                if mean.is_empty() || cov.len() != mean.len() || cov.iter().any(|r| r.len() != mean.len()) {
                    return Err(invalid("Gaussian mean and covariance shapes disagree"));
                }
                let m = cov_matrix(cov);
                if (m.clone() - m.transpose()).abs().max() > 1e-12 * m.abs().max().max(1.0) {
                    return Err(invalid("covariance is not symmetric"));
                }
                if m.cholesky().is_none() {
                    return Err(invalid("covariance is not positive definite"));
                }
                Ok(())
            }
            DensitySpec::Laplace1d { scale, location } if *scale > 0.0 && location.is_finite() => Ok(()),
            DensitySpec::Laplace1d { .. } => Err(invalid("Laplace scale must be positive")),
            DensitySpec::GaussianMixture1d { components } => {
                let total: f64 = components.iter().map(|c| c.weight).sum();
                if components.is_empty()
                    || components.iter().any(|c| !(c.weight >= 0.0) || !(c.stddev > 0.0))
                    || (total - 1.0).abs() > 1e-12
                {
                    return Err(invalid("mixture needs nonnegative weights summing to one and positive stddevs"));
                }
                Ok(())
            }
            DensitySpec::Product { factors } => {
                if factors.is_empty() {
                    return Err(invalid("product needs at least one factor"));
                }
                factors.iter().try_for_each(DensitySpec::validate)
            }
        }
    }

    /// One-dimensional factors, when the density has independent coordinates.
    pub fn factors(&self) -> Result<Vec<Factor>> {
        self.validate()?;
        match self {
            DensitySpec::GaussianNd { mean, cov } => {
                let off_diagonal = (0..mean.len()).any(|i| (0..mean.len()).any(|j| i != j && cov[i][j] != 0.0));
                if off_diagonal {
                    return Err(Error::Unsupported(
                        "correlated Gaussian is not a product density; use mollify_density on a grid".into(),
                    ));
                }
                Ok(mean
                    .iter()
                    .enumerate()
                    .map(|(i, m)| Factor::Gaussian {
                        mean: *m,
                        stddev: cov[i][i].sqrt(),
                    })
                    .collect())
            }
            DensitySpec::Laplace1d { location, scale } => Ok(vec![Factor::Laplace {
                location: *location,
                scale: *scale,
            }]),
            DensitySpec::GaussianMixture1d { components } => Ok(vec![Factor::Mixture(components.clone())]),
            DensitySpec::Product { factors } => {
                let mut out = Vec::new();
                for f in factors {
                    out.extend(f.factors()?);
                }
                Ok(out)
            }
        }
    }

    /// `‖∂_m f‖₁` for `m = 1…ν`.
    pub fn derivative_l1(&self) -> Result<Vec<f64>> {
        if let DensitySpec::GaussianNd { cov, .. } = self {
            self.validate()?;
            let precision = cov_matrix(cov).try_inverse().ok_or_else(|| invalid("singular covariance"))?;
            return Ok((0..precision.nrows())
                .map(|m| (2.0 / std::f64::consts::PI * precision[(m, m)]).sqrt())
                .collect());
        }
        self.factors()?.iter().map(Factor::derivative_l1).collect()
    }

    /// Density at a point (any family, including correlated Gaussians).
    pub fn pdf(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: x.len(),
            });
        }
        match self {
            DensitySpec::GaussianNd { mean, cov } => {
                let m = cov_matrix(cov);
                let chol = m.cholesky().ok_or_else(|| invalid("covariance is not positive definite"))?;
                let z = DVector::from_iterator(x.len(), x.iter().zip(mean).map(|(a, b)| a - b));
                let sol = chol.solve(&z);
                let quad = z.dot(&sol);
                let det = chol.determinant();
                let nu = x.len() as f64;
                Ok((-0.5 * quad).exp() / ((2.0 * std::f64::consts::PI).powf(nu) * det).sqrt())
            }
            _ => {
                let fs = self.factors()?;
                Ok(fs.iter().zip(x).map(|(f, xm)| f.pdf(*xm)).product())
            }
        }
    }

    /// Box carrying all but a negligible amount of mass.
    pub fn bounding_box(&self) -> Result<Vec<(f64, f64)>> {
        match self {
            DensitySpec::GaussianNd { mean, cov } => {
                self.validate()?;
                Ok(mean
                    .iter()
                    .enumerate()
                    .map(|(i, m)| (m - 8.5 * cov[i][i].sqrt(), m + 8.5 * cov[i][i].sqrt()))
                    .collect())
            }
            _ => Ok(self.factors()?.iter().map(Line::range).collect()),
        }
    }
}

fn cov_matrix(cov: &[Vec<f64>]) -> DMatrix<f64> {
    let n = cov.len();
    DMatrix::from_fn(n, n, |i, j| cov[i][j])
}

/// One row of a bound check: `lhs ≤ rhs`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundRow {
    pub eps: f64,
    pub lhs: f64,
    pub rhs: f64,
    /// `lhs / rhs` (zero when both vanish).
    pub ratio: f64,
    pub holds: bool,
}

impl BoundRow {
    fn new(eps: f64, lhs: f64, rhs: f64, tol: f64) -> Self {
        let ratio = if rhs > 0.0 {
            lhs / rhs
        } else if lhs <= 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        BoundRow {
            eps,
            lhs,
            rhs,
            ratio,
            holds: ratio <= 1.0 + tol,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundReport {
    pub check: String,
    pub tolerance: f64,
    pub rows: Vec<BoundRow>,
}

impl BoundReport {
    pub fn holds(&self) -> bool {
        self.rows.iter().all(|r| r.holds)
    }

    pub fn max_ratio(&self) -> f64 {
        self.rows.iter().map(|r| r.ratio).fold(0.0, f64::max)
    }

    /// CSV with columns `eps, lhs, rhs, ratio`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["eps", "lhs", "rhs", "ratio"])?;
        for r in &self.rows {
            w.write_record([r.eps.to_string(), r.lhs.to_string(), r.rhs.to_string(), r.ratio.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Tolerance on `lhs/rhs − 1` for the analytic bound checks.
pub const BOUND_TOL: f64 = 1e-6;

fn check_eps(eps: f64) -> Result<()> {
    if !(eps >= 0.0) || !eps.is_finite() {
        return Err(invalid(format!("ε = {eps} must be a finite nonnegative number")));
    }
    Ok(())
}

fn check_metric(dim: usize, metric: &WeightedMetric) -> Result<()> {
    if metric.dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: metric.dim(),
        });
    }
    if dim > 2 {
        return Err(Error::Unsupported(format!(
            "semi-analytic L¹ checks support ν ≤ 2, got ν = {dim}"
        )));
    }
    Ok(())
}

/// `∫ |Π p_m − Π q_m|` for product laws with ν ≤ 2.
fn product_l1(p: &[&dyn Line], q: &[&dyn Line], resolution: f64) -> Result<f64> {
    match p.len() {
        1 => nan_check(l1_distance_1d(p[0], q[0], resolution), "L¹ distance"),
        2 => nan_check(l1_distance_product_2d([p[0], p[1]], [q[0], q[1]], resolution)?, "L¹ distance"),
        n => Err(Error::Unsupported(format!("ν = {n}"))),
    }
}

/// Smoothing error `‖f − f_ε‖₁` against `C_{φ,2} ε Σ w_m ‖∂_m f‖₁`.
pub fn smoothing_error_check(f: &DensitySpec, eps_grid: &[f64], metric: &WeightedMetric) -> Result<BoundReport> {
    let factors = f.factors()?;
    check_metric(factors.len(), metric)?;
    let deriv = f.derivative_l1()?;
    let weighted: f64 = deriv.iter().zip(metric.weights()).map(|(d, w)| d * w).sum();
    let mut rows = Vec::new();
    for &eps in eps_grid {
        check_eps(eps)?;
        let rhs = C_PHI_2 * eps * weighted;
        if eps == 0.0 {
            rows.push(BoundRow::new(eps, 0.0, rhs, BOUND_TOL));
            continue;
        }
        let moll: Vec<Mollified> = factors
            .iter()
            .zip(metric.weights())
            .map(|(fm, w)| Mollified { base: fm, h: eps * w })
            .collect();
        let p: Vec<&dyn Line> = factors.iter().map(|x| x as &dyn Line).collect();
        let q: Vec<&dyn Line> = moll.iter().map(|x| x as &dyn Line).collect();
        let h_min = moll.iter().map(|m| m.h).fold(f64::INFINITY, f64::min);
        let lhs = product_l1(&p, &q, resolution_for(h_min))?;
        rows.push(BoundRow::new(eps, lhs, rhs, BOUND_TOL));
    }
    Ok(BoundReport {
        check: "smoothing_error".into(),
        tolerance: BOUND_TOL,
        rows,
    })
}

/// Either an analytic density or a finitely supported measure.
#[derive(Clone, Debug)]
pub enum MeasureSpec {
    Density(DensitySpec),
    Empirical(EmpiricalMeasure),
}

impl MeasureSpec {
    pub fn dim(&self) -> usize {
        match self {
            MeasureSpec::Density(d) => d.dim(),
            MeasureSpec::Empirical(e) => e.dim(),
        }
    }
}

/// `W_{1,d}` between two measures: exact for 1-D and product laws (the
/// weighted ℓ¹ cost separates over coordinates), LP for multivariate
/// empirical pairs.
pub fn wasserstein(p: &MeasureSpec, q: &MeasureSpec, metric: &WeightedMetric) -> Result<f64> {
    if p.dim() != q.dim() || p.dim() != metric.dim() {
        return Err(Error::DimensionMismatch {
            expected: metric.dim(),
            actual: if p.dim() != metric.dim() { p.dim() } else { q.dim() },
        });
    }
    match (p, q) {
        (MeasureSpec::Empirical(a), MeasureSpec::Empirical(b)) => {
            if a.dim() == 1 {
                let av: Vec<f64> = a.points().iter().map(|x| x[0]).collect();
                let bv: Vec<f64> = b.points().iter().map(|x| x[0]).collect();
                Ok(metric.weights()[0] * cdf_l1(&av, a.masses(), &bv, b.masses()))
            } else {
                Ok(w1_lp(a, b, metric)?.value)
            }
        }
        (MeasureSpec::Density(a), MeasureSpec::Density(b)) => {
            let fa = a.factors()?;
            let fb = b.factors()?;
            let mut total = 0.0;
            for ((x, y), w) in fa.iter().zip(&fb).zip(metric.weights()) {
                total += w * cdf_distance(x, y, &[])?;
            }
            Ok(total)
        }
        (MeasureSpec::Density(d), MeasureSpec::Empirical(e)) | (MeasureSpec::Empirical(e), MeasureSpec::Density(d)) => {
            if e.dim() != 1 {
                return Err(Error::Unsupported("density-vs-empirical W₁ only for ν = 1".into()));
            }
            let f = &d.factors()?[0];
            let atoms: Vec<f64> = e.points().iter().map(|x| x[0]).collect();
            let masses = e.masses().to_vec();
            let step = StepCdf { atoms: &atoms, masses: &masses };
            Ok(metric.weights()[0] * cdf_distance(f, &step, &atoms)?)
        }
    }
}

struct StepCdf<'a> {
    atoms: &'a [f64],
    masses: &'a [f64],
}

impl Line for StepCdf<'_> {
    fn pdf(&self, _x: f64) -> f64 {
        0.0
    }
    fn cdf(&self, x: f64) -> f64 {
        let k = self.atoms.partition_point(|a| *a <= x);
        self.masses[..k].iter().sum()
    }
    fn range(&self) -> (f64, f64) {
        (self.atoms[0], self.atoms[self.atoms.len() - 1])
    }
}

/// `∫ |F_P − F_Q|` by Simpson between the sign changes of `F_P − F_Q`.
fn cdf_distance(p: &dyn Line, q: &dyn Line, extra_breaks: &[f64]) -> Result<f64> {
    let (a, b) = p.range();
    let (c, d) = q.range();
    let (lo, hi) = (a.min(c), b.max(d));
    if lo == hi {
        return Ok(0.0);
    }
    let mut breaks = extra_breaks.to_vec();
    breaks.extend(p.kinks());
    breaks.extend(q.kinks());
    breaks.extend(sign_changes(|x| p.cdf(x) - q.cdf(x), lo, hi, SCAN_NODES, true));
    Ok(simpson_panels(|x| (p.cdf(x) - q.cdf(x)).abs(), lo, hi, &breaks, 1e-13, 1e-11, 1 << 24)?.value)
}

enum Owned {
    Factor(Factor),
    Atoms(EmpiricalMeasure),
}

fn owned_lines(m: &MeasureSpec) -> Result<Vec<Owned>> {
    match m {
        MeasureSpec::Density(d) => Ok(d.factors()?.into_iter().map(Owned::Factor).collect()),
        MeasureSpec::Empirical(e) if e.dim() == 1 => Ok(vec![Owned::Atoms(e.clone())]),
        MeasureSpec::Empirical(_) => Err(Error::Unsupported(
            "mollified differences of multivariate empirical measures are not supported".into(),
        )),
    }
}

fn mollify_owned<'a>(o: &'a Owned, h: f64) -> Result<Box<dyn Line + 'a>> {
    Ok(match o {
        Owned::Factor(f) => Box::new(Mollified { base: f, h }),
        Owned::Atoms(e) => Box::new(MollifiedAtoms::new(e, h)?),
    })
}

/// `‖p_ε − q_ε‖₁` against `(C_{φ,1}/ε) W_{1,d}(P, Q)`.
pub fn mollified_difference_check(
    p: &MeasureSpec,
    q: &MeasureSpec,
    eps_grid: &[f64],
    metric: &WeightedMetric,
) -> Result<BoundReport> {
    check_metric(p.dim(), metric)?;
    let w1 = wasserstein(p, q, metric)?;
    let po = owned_lines(p)?;
    let qo = owned_lines(q)?;
    let mut rows = Vec::new();
    for &eps in eps_grid {
        check_eps(eps)?;
        if eps == 0.0 {
            return Err(invalid("the mollified-difference bound needs ε > 0"));
        }
        let hs: Vec<f64> = metric.weights().iter().map(|w| eps * w).collect();
        let pl = po.iter().zip(&hs).map(|(o, h)| mollify_owned(o, *h)).collect::<Result<Vec<_>>>()?;
        let ql = qo.iter().zip(&hs).map(|(o, h)| mollify_owned(o, *h)).collect::<Result<Vec<_>>>()?;
        let pr: Vec<&dyn Line> = pl.iter().map(|b| b.as_ref()).collect();
        let qr: Vec<&dyn Line> = ql.iter().map(|b| b.as_ref()).collect();
        let h_min = hs.iter().copied().fold(f64::INFINITY, f64::min);
        let lhs = product_l1(&pr, &qr, resolution_for(h_min))?;
        rows.push(BoundRow::new(eps, lhs, C_PHI_1 / eps * w1, BOUND_TOL));
    }
    Ok(BoundReport {
        check: "mollified_difference".into(),
        tolerance: BOUND_TOL,
        rows,
    })
}

/// `8 C_{φ,1} C_{φ,2}`.
pub fn interpolation_constant() -> f64 {
    8.0 * C_PHI_1 * C_PHI_2
}

/// `(8 C_{φ,1} C_{φ,2} D W, ε*)` with `ε* = √(C_{φ,1} W / (2 D C_{φ,2}))`.
pub fn interpolation_bound(w1: f64, d: f64) -> Result<(f64, f64)> {
    if !(d > 0.0) || !d.is_finite() {
        return Err(invalid(format!("D = {d} must be positive")));
    }
    if !(w1 >= 0.0) {
        return Err(invalid(format!("W₁ = {w1} must be nonnegative")));
    }
    Ok((interpolation_constant() * d * w1, (C_PHI_1 * w1 / (2.0 * d * C_PHI_2)).sqrt()))
}

/// `2 C_{φ,2} ε D + C_{φ,1} W / ε`, the bound on `‖p − q‖₁` before optimizing ε.
pub fn split_bound(eps: f64, w1: f64, d: f64) -> f64 {
    2.0 * C_PHI_2 * eps * d + C_PHI_1 * w1 / eps
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InterpolationReport {
    pub w1: f64,
    pub d: f64,
    /// Measured `‖p − q‖₁`.
    pub l1: f64,
    /// `‖p − q‖₁²`.
    pub lhs: f64,
    pub bound: f64,
    pub eps_star: f64,
    pub holds: bool,
    /// `split_bound` at `ε*` and at `ε*·(1 ∓ 0.25)`.
    pub split_at_star: f64,
    pub split_below: f64,
    pub split_above: f64,
    pub locally_optimal: bool,
}

/// Measured `‖p − q‖₁²` against the interpolation bound. `d` defaults to
/// `max(Σ w_m ‖∂_m p‖₁, Σ w_m ‖∂_m q‖₁)`.
pub fn interpolation_check(
    p: &DensitySpec,
    q: &DensitySpec,
    metric: &WeightedMetric,
    d: Option<f64>,
) -> Result<InterpolationReport> {
    let fp = p.factors()?;
    let fq = q.factors()?;
    check_metric(fp.len(), metric)?;
    if fq.len() != fp.len() {
        return Err(Error::DimensionMismatch {
            expected: fp.len(),
            actual: fq.len(),
        });
    }
    let d = match d {
        Some(d) => d,
        None => {
            let weighted = |s: &DensitySpec| -> Result<f64> {
                Ok(s.derivative_l1()?.iter().zip(metric.weights()).map(|(a, w)| a * w).sum())
            };
            weighted(p)?.max(weighted(q)?)
        }
    };
    let w1 = wasserstein(&MeasureSpec::Density(p.clone()), &MeasureSpec::Density(q.clone()), metric)?;
    let pl: Vec<&dyn Line> = fp.iter().map(|x| x as &dyn Line).collect();
    let ql: Vec<&dyn Line> = fq.iter().map(|x| x as &dyn Line).collect();
    let l1 = product_l1(&pl, &ql, 1e-3)?;
    let (bound, eps_star) = interpolation_bound(w1, d)?;
    let lhs = l1 * l1;
    let (g0, gm, gp) = if w1 > 0.0 {
        (
            split_bound(eps_star, w1, d),
            split_bound(0.75 * eps_star, w1, d),
            split_bound(1.25 * eps_star, w1, d),
        )
    } else {
        (0.0, 0.0, 0.0)
    };
    Ok(InterpolationReport {
        w1,
        d,
        l1,
        lhs,
        bound,
        eps_star,
        holds: lhs <= bound * (1.0 + BOUND_TOL),
        split_at_star: g0,
        split_below: gm,
        split_above: gp,
        locally_optimal: g0 <= gm && g0 <= gp,
    })
}

/// Derivative functionals of a Gaussian future block.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DFunctionals {
    pub nu: usize,
    /// From the marginal covariance of the future block.
    pub d1: f64,
    /// From the conditional covariance given the past block.
    pub d2: f64,
}

impl DFunctionals {
    pub fn d(&self) -> f64 {
        self.d1.max(self.d2)
    }
}

fn weighted_root_diag(precision_diag: impl Iterator<Item = f64>, metric: &WeightedMetric) -> f64 {
    precision_diag
        .zip(metric.weights())
        .map(|(p, w)| w * (2.0 / std::f64::consts::PI * p).sqrt())
        .sum()
}

/// `Σ w_m ‖∂_m p‖₁ = Σ w_m √(2/π (Σ⁻¹)_mm)` for a centered Gaussian density
/// with covariance `cov`.
pub fn gaussian_derivative_functional(cov: &DMatrix<f64>, metric: &WeightedMetric) -> Result<f64> {
    if cov.nrows() != cov.ncols() || metric.dim() != cov.nrows() {
        return Err(Error::DimensionMismatch {
            expected: cov.nrows(),
            actual: metric.dim(),
        });
    }
    let prec = cov
        .clone()
        .cholesky()
        .ok_or_else(|| invalid("covariance is not positive definite"))?
        .inverse();
    Ok(weighted_root_diag(prec.diagonal().iter().copied(), metric))
}

/// `D₁ = Σ w_m √(2/π (Σ_F⁻¹)_mm)` and `D₂` likewise with the Schur complement
/// `Σ_F − Σ_FP Σ_P⁻¹ Σ_PF`. `cov` is the joint covariance with the past block first.
pub fn gaussian_d(cov: &DMatrix<f64>, past_dim: usize, metric: &WeightedMetric) -> Result<DFunctionals> {
    let total = cov.nrows();
    if cov.ncols() != total || past_dim >= total {
        return Err(invalid("joint covariance must be square and contain a nonempty future block"));
    }
    let nu = total - past_dim;
    if metric.dim() != nu {
        return Err(Error::DimensionMismatch {
            expected: nu,
            actual: metric.dim(),
        });
    }
    let future = cov.view((past_dim, past_dim), (nu, nu)).into_owned();
    let prec = future
        .clone()
        .cholesky()
        .ok_or_else(|| invalid("future covariance is not positive definite"))?
        .inverse();
    let d1 = weighted_root_diag(prec.diagonal().iter().copied(), metric);
    let d2 = if past_dim == 0 {
        d1
    } else {
        let past = cov.view((0, 0), (past_dim, past_dim)).into_owned();
        let cross = cov.view((past_dim, 0), (nu, past_dim)).into_owned();
        let past_chol = past.cholesky().ok_or_else(|| invalid("past covariance is not positive definite"))?;
        let schur = &future - &cross * past_chol.solve(&cross.transpose());
        let cprec = schur
            .cholesky()
            .ok_or_else(|| invalid("conditional covariance is not positive definite"))?
            .inverse();
        weighted_root_diag(cprec.diagonal().iter().copied(), metric)
    };
    Ok(DFunctionals { nu, d1, d2 })
}

/// Stationary autocovariance matrix of `X_i = ρ X_{i−1} + σ ε_i` at the given times.
pub fn ar1_covariance(rho: f64, sigma: f64, times: &[i64]) -> DMatrix<f64> {
    let g0 = sigma * sigma / (1.0 - rho * rho);
    DMatrix::from_fn(times.len(), times.len(), |a, b| g0 * rho.powi((times[a] - times[b]).unsigned_abs() as i32))
}

/// `D₁`, `D₂` for a stationary AR(1) block of length `ν` starting `k` steps
/// after the last past observation, from the tridiagonal precision matrix.
/// The past enters only through `X_j` (Markov property).
pub fn ar1_d(rho: f64, sigma: f64, k: usize, nu: usize, metric: &WeightedMetric) -> Result<DFunctionals> {
    if !(rho.abs() < 1.0) || !(sigma > 0.0) || k == 0 || nu == 0 {
        return Err(invalid("need |ρ| < 1, σ > 0, k ≥ 1 and ν ≥ 1"));
    }
    if metric.dim() != nu {
        return Err(Error::DimensionMismatch {
            expected: nu,
            actual: metric.dim(),
        });
    }
    let s2 = sigma * sigma;
    let r2 = rho * rho;
    let interior = (1.0 + r2) / s2;
    let stationary_var = s2 / (1.0 - r2);
    let cond_var = s2 * (1.0 - rho.powi(2 * k as i32)) / (1.0 - r2);
    let diag = |first_var: f64| -> Vec<f64> {
        if nu == 1 {
            return vec![1.0 / first_var];
        }
        let mut d = vec![interior; nu];
        d[0] = 1.0 / first_var + r2 / s2;
        d[nu - 1] = 1.0 / s2;
        d
    };
    Ok(DFunctionals {
        nu,
        d1: weighted_root_diag(diag(stationary_var).into_iter(), metric),
        d2: weighted_root_diag(diag(cond_var).into_iter(), metric),
    })
}

/// Numerical `Σ w_m ‖∂_m p‖₁ = Σ w_m E|∂_m log p(X)|` from samples, using a
/// Gaussian product kernel density estimate and central differences of
/// `log p̂`. Returned together with a reliability warning.
pub fn kde_d(samples: &[Vec<f64>], metric: &WeightedMetric) -> Result<(f64, String)> {
    let nu = metric.dim();
    if samples.len() < 20 {
        return Err(invalid("need at least 20 samples for a kernel estimate"));
    }
    if samples.iter().any(|s| s.len() != nu) {
        return Err(Error::DimensionMismatch {
            expected: nu,
            actual: samples.iter().find(|s| s.len() != nu).unwrap().len(),
        });
    }
    let n_fit = (samples.len() / 2).min(2000);
    let fit = &samples[..n_fit];
    let eval = &samples[n_fit..(n_fit + 2000).min(samples.len())];
    // Silverman's rule per coordinate.
    let bw: Vec<f64> = (0..nu)
        .map(|m| {
            let mean = fit.iter().map(|s| s[m]).sum::<f64>() / n_fit as f64;
            let sd = (fit.iter().map(|s| (s[m] - mean).powi(2)).sum::<f64>() / (n_fit - 1) as f64).sqrt();
            1.06 * sd.max(1e-12) * (n_fit as f64).powf(-1.0 / (nu as f64 + 4.0))
        })
        .collect();
    let log_density = |x: &[f64]| -> f64 {
        let s: f64 = fit
            .iter()
            .map(|c| {
                (-0.5 * x.iter().zip(c).zip(&bw).map(|((a, b), h)| ((a - b) / h).powi(2)).sum::<f64>()).exp()
            })
            .sum();
        s.max(f64::MIN_POSITIVE).ln()
    };
    let mut total = 0.0;
    for (m, w) in metric.weights().iter().enumerate() {
        let step = 0.1 * bw[m];
        let mean_abs = eval
            .iter()
            .map(|x| {
                let mut up = x.clone();
                let mut dn = x.clone();
                up[m] += step;
                dn[m] -= step;
                ((log_density(&up) - log_density(&dn)) / (2.0 * step)).abs()
            })
            .sum::<f64>()
            / eval.len() as f64;
        total += w * mean_abs;
    }
    Ok((
        total,
        format!(
            "D from a kernel density estimate ({} fit / {} evaluation samples); not a certified bound",
            n_fit,
            eval.len()
        ),
    ))
}

/// A density tabulated on a uniform grid in ν ≤ 3 dimensions (row-major, last axis fastest).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GriddedDensity {
    pub lo: Vec<f64>,
    pub step: Vec<f64>,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

const MAX_GRID_CELLS: usize = 20_000_000;

impl GriddedDensity {
    /// Tabulate `spec` over its bounding box with the given spacing per axis.
    pub fn from_spec(spec: &DensitySpec, step: &[f64]) -> Result<Self> {
        let bbox = spec.bounding_box()?;
        if step.len() != bbox.len() || bbox.len() > 3 {
            return Err(invalid("grid needs one step per axis and ν ≤ 3"));
        }
        if step.iter().any(|s| !(*s > 0.0)) {
            return Err(invalid("grid steps must be positive"));
        }
        let shape: Vec<usize> = bbox
            .iter()
            .zip(step)
            .map(|((a, b), s)| ((b - a) / s).ceil() as usize + 1)
            .collect();
        let cells: usize = shape.iter().product();
        if cells > MAX_GRID_CELLS {
            return Err(Error::TooManyCells(cells));
        }
        let lo: Vec<f64> = bbox.iter().map(|b| b.0).collect();
        let mut g = GriddedDensity {
            lo,
            step: step.to_vec(),
            shape,
            values: vec![0.0; cells],
        };
        let mut x = vec![0.0; g.dim()];
        for idx in 0..cells {
            g.point(idx, &mut x);
            g.values[idx] = spec.pdf(&x)?;
        }
        Ok(g)
    }

    pub fn dim(&self) -> usize {
        self.shape.len()
    }

    fn point(&self, mut idx: usize, out: &mut [f64]) {
        for m in (0..self.dim()).rev() {
            let i = idx % self.shape[m];
            idx /= self.shape[m];
            out[m] = self.lo[m] + i as f64 * self.step[m];
        }
    }

    fn cell_volume(&self) -> f64 {
        self.step.iter().product()
    }

    /// Riemann mass `Σ f · Π step`.
    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.cell_volume()
    }

    /// Reflection about the grid center along every axis.
    pub fn reflected(&self) -> Vec<f64> {
        let mut v = self.values.clone();
        v.reverse();
        v
    }
}

/// Coordinatewise discrete convolution with `Φ_ε^{(w)}`. The grid is padded
/// by the kernel half-width so no mass leaves it, and the sampled kernel is
/// normalized to unit sum so mass is preserved up to rounding.
pub fn mollify_density(f: &GriddedDensity, eps: f64, metric: &WeightedMetric) -> Result<GriddedDensity> {
    if !(eps > 0.0) {
        return Err(invalid("ε must be positive"));
    }
    if metric.dim() != f.dim() {
        return Err(Error::DimensionMismatch {
            expected: f.dim(),
            actual: metric.dim(),
        });
    }
    if f.dim() > 3 {
        return Err(Error::Unsupported("gridded convolution supports ν ≤ 3".into()));
    }
    let mut cur = f.clone();
    for (m, w) in metric.weights().iter().enumerate() {
        let h = eps * w;
        let step = f.step[m];
        if h < 3.0 * step {
            return Err(Error::GridTooCoarse(format!(
                "kernel half-width ε·w_{} = {h:.3e} is under 3 grid steps ({step:.3e})",
                m + 1
            )));
        }
        let r = (h / step).floor() as usize;
        let mut kernel: Vec<f64> = (0..=2 * r).map(|i| bump((i as f64 - r as f64) * step / h)).collect();
        let ks: f64 = kernel.iter().sum();
        kernel.iter_mut().for_each(|k| *k /= ks);
        cur = convolve_axis(&cur, m, &kernel, r);
    }
    Ok(cur)
}

fn convolve_axis(g: &GriddedDensity, axis: usize, kernel: &[f64], r: usize) -> GriddedDensity {
    let mut shape = g.shape.clone();
    shape[axis] += 2 * r;
    let mut lo = g.lo.clone();
    lo[axis] -= r as f64 * g.step[axis];
    let inner: usize = g.shape[axis + 1..].iter().product();
    let outer: usize = g.shape[..axis].iter().product();
    let (n_old, n_new) = (g.shape[axis], shape[axis]);
    let mut values = vec![0.0; outer * n_new * inner];
    for o in 0..outer {
        for i in 0..n_old {
            for (t, kv) in kernel.iter().enumerate() {
                // Source index i lands at new index i + t (kernel centered at r).
                let dst = (o * n_new + i + t) * inner;
                let src = (o * n_old + i) * inner;
                for c in 0..inner {
                    values[dst + c] += kv * g.values[src + c];
                }
            }
        }
    }
    GriddedDensity {
        lo,
        step: g.step.clone(),
        shape,
        values,
    }
}
