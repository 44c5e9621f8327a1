//! Coupled innovation streams: a base sequence ε, an independent copy ε*, and
//! a descriptor of which indices read from the copy.
//!
//! * single swap: `F_i* = (…, ε_{−1}, ε_0*, ε_1, …, ε_i)`
//! * block swap: `F_i^{(k,ℓ)}` reads ε* on `[i−ℓ−k, i−ℓ]`
//! * tilde process: every index `≤ j` reads ε*, making the coupled future
//!   block independent of `(X_1, …, X_j)`.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::processes::{linear_value, FilterSpec, InnovationBuffer, InnovationStream, Innovations};
use crate::rng::{streams, StreamKey};
use crate::transport::WeightedMetric;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum SwapDescriptor {
    None,
    Single(i64),
    /// Inclusive block `[lo, hi]`.
    Block { lo: i64, hi: i64 },
    /// Every index `≤ j`.
    UpTo(i64),
}

impl SwapDescriptor {
    #[inline]
    pub fn contains(&self, index: i64) -> bool {
        match *self {
            SwapDescriptor::None => false,
            SwapDescriptor::Single(i) => index == i,
            SwapDescriptor::Block { lo, hi } => lo <= index && index <= hi,
            SwapDescriptor::UpTo(j) => index <= j,
        }
    }

    /// Swap set of `F_{j+i}^{(ℓ, i)}`: the block `[j − ℓ, j]`; `ℓ = −1` is the
    /// unswapped filtration.
    pub fn telescoping(j: i64, ell: i64) -> Self {
        if ell < 0 {
            SwapDescriptor::None
        } else {
            SwapDescriptor::Block { lo: j - ell, hi: j }
        }
    }
}

/// ε outside the swap set, ε* inside it.
#[derive(Clone, Copy, Debug)]
pub struct CoupledStreams<B, S> {
    pub base: B,
    pub star: S,
    pub swap: SwapDescriptor,
}

impl<B: Innovations, S: Innovations> Innovations for CoupledStreams<B, S> {
    #[inline]
    fn at(&self, index: i64) -> f64 {
        if self.swap.contains(index) {
            self.star.at(index)
        } else {
            self.base.at(index)
        }
    }
}

/// Base and star streams of replica `r`.
pub fn replica_streams(filter: &FilterSpec, seed: u64, r: usize) -> (InnovationStream<'_>, InnovationStream<'_>) {
    (
        InnovationStream {
            law: &filter.innovation,
            key: StreamKey::new(seed, streams::INNOVATION, r as u64),
        },
        InnovationStream {
            law: &filter.innovation,
            key: StreamKey::new(seed, streams::STAR, r as u64),
        },
    )
}

fn require_causal(filter: &FilterSpec) -> Result<()> {
    filter.validate()?;
    if filter.is_causal() {
        Ok(())
    } else {
        Err(Error::NoCausalRepresentation(
            "random walk in random scenery admits no causal filter; coupling is undefined".into(),
        ))
    }
}

fn centered_offset(filter: &FilterSpec, t: f64) -> Result<f64> {
    if filter.centered {
        filter.mean_at(t)
    } else {
        Ok(0.0)
    }
}

/// Paired draws `(G(t, F_i), G(t, F_i*))`.
#[derive(Clone, Debug, Serialize)]
pub struct PairedSamples {
    pub t: f64,
    pub lag: usize,
    pub base: Vec<f64>,
    pub coupled: Vec<f64>,
}

impl PairedSamples {
    pub fn differences(&self) -> impl Iterator<Item = f64> + '_ {
        self.base.iter().zip(&self.coupled).map(|(a, b)| a - b)
    }

    pub fn mean_abs_difference(&self) -> (f64, f64) {
        mean_and_stderr(self.differences().map(f64::abs))
    }
}

pub(crate) fn mean_and_stderr(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut n, mut s, mut s2) = (0usize, 0.0, 0.0);
    for v in values {
        n += 1;
        s += v;
        s2 += v * v;
    }
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let m = s / n as f64;
    let var = (s2 / n as f64 - m * m).max(0.0);
    (m, (var / n as f64).sqrt())
}

pub fn single_swap_pair(filter: &FilterSpec, t: f64, lag: usize, replicas: usize, seed: u64) -> Result<PairedSamples> {
    require_causal(filter)?;
    if !(0.0..=1.0).contains(&t) {
        return Err(invalid(format!("rescaled time t = {t} outside [0, 1]")));
    }
    let coefs = filter.coefficients(t).unwrap();
    let offset = centered_offset(filter, t)?;
    let i = lag as i64;
    let (base, coupled): (Vec<f64>, Vec<f64>) = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let (b, s) = replica_streams(filter, seed, r);
            let swapped = CoupledStreams {
                base: b,
                star: s,
                swap: SwapDescriptor::Single(0),
            };
            (
                linear_value(&coefs, i, &b) - offset,
                linear_value(&coefs, i, &swapped) - offset,
            )
        })
        .unzip();
    Ok(PairedSamples {
        t,
        lag,
        base,
        coupled,
    })
}

fn check_block(j: usize, k: usize, n: usize) -> Result<()> {
    if j < 1 || j > n || k < 1 || k + j > n {
        return Err(invalid(format!(
            "need 1 ≤ j ≤ n and 1 ≤ k ≤ n − j (j = {j}, k = {k}, n = {n})"
        )));
    }
    Ok(())
}

/// Paired future blocks `G(t, F_{j+i}^{(ℓ−1, i)})` vs `G(t, F_{j+i}^{(ℓ, i)})` for
/// `i = k, …, n − j`. The two filtrations differ only at index `j − ℓ`.
#[derive(Clone, Debug, Serialize)]
pub struct BlockSwapSamples {
    pub j: usize,
    pub k: usize,
    pub n: usize,
    pub ell: usize,
    /// Time indices `j + i` of the block coordinates.
    pub indices: Vec<usize>,
    /// Row-major `replicas × indices.len()`.
    pub before: Vec<f64>,
    pub after: Vec<f64>,
}

impl BlockSwapSamples {
    pub fn width(&self) -> usize {
        self.indices.len()
    }

    /// Mean and standard error of `|before − after|` per block coordinate.
    pub fn mean_abs_difference(&self) -> Vec<(f64, f64)> {
        let w = self.width();
        (0..w)
            .map(|c| {
                mean_and_stderr(
                    self.before
                        .chunks(w)
                        .zip(self.after.chunks(w))
                        .map(|(a, b)| (a[c] - b[c]).abs()),
                )
            })
            .collect()
    }
}

#[allow(clippy::too_many_arguments)]
pub fn block_swap_pair(
    filter: &FilterSpec,
    j: usize,
    k: usize,
    n: usize,
    ell: usize,
    replicas: usize,
    seed: u64,
) -> Result<BlockSwapSamples> {
    require_causal(filter)?;
    check_block(j, k, n)?;
    let indices: Vec<usize> = (j + k..=n).collect();
    let prepared = prepare(filter, n, &indices)?;
    let before_swap = SwapDescriptor::telescoping(j as i64, ell as i64 - 1);
    let after_swap = SwapDescriptor::telescoping(j as i64, ell as i64);
    let (before, after) = coupled_blocks(filter, &prepared, &indices, replicas, seed, before_swap, after_swap);
    Ok(BlockSwapSamples {
        j,
        k,
        n,
        ell,
        indices,
        before,
        after,
    })
}

struct Prepared {
    coefs: Vec<Vec<f64>>,
    offsets: Vec<f64>,
    lag: usize,
}

fn prepare(filter: &FilterSpec, n: usize, indices: &[usize]) -> Result<Prepared> {
    let t = |i: usize| i as f64 / n as f64;
    Ok(Prepared {
        coefs: indices.iter().map(|&i| filter.coefficients(t(i)).unwrap()).collect(),
        offsets: indices
            .iter()
            .map(|&i| centered_offset(filter, t(i)))
            .collect::<Result<_>>()?,
        lag: filter.lag(),
    })
}

fn coupled_blocks(
    filter: &FilterSpec,
    prepared: &Prepared,
    indices: &[usize],
    replicas: usize,
    seed: u64,
    left: SwapDescriptor,
    right: SwapDescriptor,
) -> (Vec<f64>, Vec<f64>) {
    let w = indices.len();
    let mut a = vec![0.0; replicas * w];
    let mut b = vec![0.0; replicas * w];
    if w == 0 {
        return (a, b);
    }
    let lo = indices[0] as i64 - prepared.lag as i64;
    let hi = *indices.last().unwrap() as i64;
    a.par_chunks_mut(w)
        .zip(b.par_chunks_mut(w))
        .enumerate()
        .for_each_init(
            || (InnovationBuffer::default(), InnovationBuffer::default()),
            |(base_buf, star_buf), (r, (row_a, row_b))| {
                let (base, star) = replica_streams(filter, seed, r);
                base_buf.fill(&base, lo, hi);
                star_buf.fill(&star, lo, hi);
                let sa = CoupledStreams {
                    base: &*base_buf,
                    star: &*star_buf,
                    swap: left,
                };
                let sb = CoupledStreams {
                    base: &*base_buf,
                    star: &*star_buf,
                    swap: right,
                };
                for (c, &i) in indices.iter().enumerate() {
                    row_a[c] = linear_value(&prepared.coefs[c], i as i64, &sa) - prepared.offsets[c];
                    row_b[c] = linear_value(&prepared.coefs[c], i as i64, &sb) - prepared.offsets[c];
                }
            },
        );
    (a, b)
}

impl<T: Innovations + ?Sized> Innovations for &T {
    #[inline]
    fn at(&self, index: i64) -> f64 {
        (**self).at(index)
    }
}

/// Realizations of `(past, X̄, X̃)`: the past block `(X_1, …, X_j)`, the future
/// block `X̄ = (X_{j+k}, …, X_n)` and its coupled copy `X̃`, which reads ε* at
/// every index `≤ j`.
#[derive(Clone, Debug, Serialize)]
pub struct CoupledEnsemble {
    pub j: usize,
    pub k: usize,
    pub n: usize,
    pub replicas: usize,
    /// Row-major `replicas × j`.
    pub past: Vec<f64>,
    /// Row-major `replicas × (n − j − k + 1)`.
    pub x: Vec<f64>,
    pub x_tilde: Vec<f64>,
}

impl CoupledEnsemble {
    pub fn future_width(&self) -> usize {
        self.n + 1 - self.j - self.k
    }

    pub fn future_rows(&self) -> impl Iterator<Item = (&[f64], &[f64])> {
        let w = self.future_width();
        self.x.chunks(w).zip(self.x_tilde.chunks(w))
    }

    pub fn past_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.past.chunks(self.j)
    }

    /// Mean and standard error of `d(X̄, X̃)`.
    pub fn mean_distance(&self, metric: &WeightedMetric) -> Result<(f64, f64)> {
        if metric.dim() != self.future_width() {
            return Err(Error::DimensionMismatch {
                expected: self.future_width(),
                actual: metric.dim(),
            });
        }
        Ok(mean_and_stderr(self.future_rows().map(|(a, b)| metric.distance(a, b))))
    }
}

pub fn tilde_ensemble(filter: &FilterSpec, j: usize, k: usize, n: usize, replicas: usize, seed: u64) -> Result<CoupledEnsemble> {
    require_causal(filter)?;
    check_block(j, k, n)?;
    let future: Vec<usize> = (j + k..=n).collect();
    let past_idx: Vec<usize> = (1..=j).collect();
    let prepared = prepare(filter, n, &future)?;
    let (x, x_tilde) = coupled_blocks(
        filter,
        &prepared,
        &future,
        replicas,
        seed,
        SwapDescriptor::None,
        SwapDescriptor::UpTo(j as i64),
    );
    let past_prepared = prepare(filter, n, &past_idx)?;
    let (past, _) = coupled_blocks(
        filter,
        &past_prepared,
        &past_idx,
        replicas,
        seed,
        SwapDescriptor::None,
        SwapDescriptor::None,
    );
    Ok(CoupledEnsemble {
        j,
        k,
        n,
        replicas,
        past,
        x,
        x_tilde,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::processes::{simulate, InnovationLaw};

    fn andrews() -> FilterSpec {
        FilterSpec::andrews(0.5, 0.5)
    }

    #[test]
    fn swap_locality() {
        let f = andrews();
        let (b, s) = replica_streams(&f, 3, 0);
        let c = CoupledStreams {
            base: b,
            star: s,
            swap: SwapDescriptor::Block { lo: -3, hi: 2 },
        };
        for i in -20..20 {
            if (-3..=2).contains(&i) {
                assert_eq!(c.at(i).to_bits(), s.at(i).to_bits());
            } else {
                assert_eq!(c.at(i).to_bits(), b.at(i).to_bits());
            }
        }
    }

    #[test]
    fn passthrough_pairs_identical_after_lag_zero() {
        let f = FilterSpec::iid(InnovationLaw::standard_gaussian());
        let pairs = single_swap_pair(&f, 0.5, 1, 500, 1).unwrap();
        assert!(pairs.differences().all(|d| d == 0.0));
        let pairs0 = single_swap_pair(&f, 0.5, 0, 500, 1).unwrap();
        assert!(pairs0.differences().any(|d| d != 0.0));
    }

    #[test]
    fn geometric_difference_is_scaled_innovation_difference() {
        let f = FilterSpec::geometric(0.7, InnovationLaw::standard_gaussian());
        let lag = 3;
        let pairs = single_swap_pair(&f, 0.0, lag, 200, 5).unwrap();
        for (r, d) in pairs.differences().enumerate() {
            let (b, s) = replica_streams(&f, 5, r);
            let expected = 0.7f64.powi(lag as i32) * (b.at(0) - s.at(0));
            assert!((d - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn bernoulli_single_swap_mean() {
        let pairs = single_swap_pair(&andrews(), 0.0, 2, 200_000, 2).unwrap();
        let (m, se) = pairs.mean_abs_difference();
        assert!((m - 0.125).abs() < 3.0 * se, "{m} ± {se}");
    }

    #[test]
    fn rejects_scenery() {
        let f = FilterSpec::random_walk_scenery();
        assert!(matches!(single_swap_pair(&f, 0.0, 1, 10, 0), Err(Error::NoCausalRepresentation(_))));
        assert!(tilde_ensemble(&f, 2, 1, 5, 10, 0).is_err());
    }

    #[test]
    fn block_swap_single_coefficient() {
        let s = block_swap_pair(&andrews(), 5, 1, 8, 1, 200_000, 4).unwrap();
        let (m, se) = s.mean_abs_difference()[0];
        assert!((m - 0.125).abs() < 3.0 * se, "{m} ± {se}");
    }

    #[test]
    fn block_swap_beyond_memory_is_identical() {
        let f = FilterSpec::geometric(0.5, InnovationLaw::standard_gaussian());
        let lag = f.lag();
        let s = block_swap_pair(&f, 3, 1, 6, lag, 100, 0).unwrap();
        assert_eq!(s.before, s.after);
    }

    #[test]
    fn tilde_passthrough_equals_future() {
        let f = FilterSpec::iid(InnovationLaw::standard_gaussian());
        let e = tilde_ensemble(&f, 4, 1, 9, 100, 0).unwrap();
        assert_eq!(e.x, e.x_tilde);
    }

    #[test]
    fn tilde_base_block_matches_simulation() {
        let f = FilterSpec::ar1(0.6, InnovationLaw::standard_gaussian()).centered(true);
        let e = tilde_ensemble(&f, 4, 2, 9, 30, 6).unwrap();
        let ens = simulate(&f, 9, 30, 6).unwrap();
        for r in 0..30 {
            assert_eq!(&e.past[r * 4..(r + 1) * 4], &ens.row(r)[..4]);
            assert_eq!(&e.x[r * 4..(r + 1) * 4], &ens.row(r)[5..]);
        }
    }
}
