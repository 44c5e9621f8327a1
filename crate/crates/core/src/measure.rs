use std::cmp::Ordering;

use serde::Serialize;

use crate::error::{invalid, Error, Result};

/// Finitely supported probability measure on ℝ^ν.
///
/// Support points are stored in lexicographic order with duplicates merged,
/// and masses are normalized to sum to one.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EmpiricalMeasure {
    dim: usize,
    points: Vec<Vec<f64>>,
    masses: Vec<f64>,
}

fn lex(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

impl EmpiricalMeasure {
    pub fn new(points: Vec<Vec<f64>>, masses: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(invalid("empirical measure needs at least one support point"));
        }
        if points.len() != masses.len() {
            return Err(invalid(format!("{} points but {} masses", points.len(), masses.len())));
        }
        let dim = points[0].len();
        if dim == 0 {
            return Err(invalid("zero-dimensional support point"));
        }
        for p in &points {
            if p.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: p.len(),
                });
            }
            if p.iter().any(|x| !x.is_finite()) {
                return Err(invalid("non-finite support point"));
            }
        }
        if masses.iter().any(|m| !(*m >= 0.0) || !m.is_finite()) {
            return Err(invalid("masses must be finite and nonnegative"));
        }
        let total: f64 = masses.iter().sum();
        if !(total > 0.0) {
            return Err(invalid("total mass is zero"));
        }

        let mut order: Vec<usize> = (0..points.len()).collect();
        order.sort_by(|&a, &b| lex(&points[a], &points[b]));
        let mut merged_points: Vec<Vec<f64>> = Vec::with_capacity(points.len());
        let mut merged_masses: Vec<f64> = Vec::with_capacity(points.len());
        for idx in order {
            if masses[idx] == 0.0 {
                continue;
            }
            match merged_points.last() {
                Some(last) if lex(last, &points[idx]).is_eq() => {
                    *merged_masses.last_mut().unwrap() += masses[idx];
                }
                _ => {
                    merged_points.push(points[idx].clone());
                    merged_masses.push(masses[idx]);
                }
            }
        }
        for m in &mut merged_masses {
            *m /= total;
        }
        Ok(EmpiricalMeasure {
            dim,
            points: merged_points,
            masses: merged_masses,
        })
    }

    /// Uniform weights on the given samples.
    pub fn from_samples(samples: Vec<Vec<f64>>) -> Result<Self> {
        let n = samples.len();
        Self::new(samples, vec![1.0; n])
    }

    pub fn from_values_1d(values: &[f64], masses: &[f64]) -> Result<Self> {
        Self::new(values.iter().map(|v| vec![*v]).collect(), masses.to_vec())
    }

    pub fn dirac(point: Vec<f64>) -> Result<Self> {
        Self::new(vec![point], vec![1.0])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], f64)> {
        self.points.iter().map(Vec::as_slice).zip(self.masses.iter().copied())
    }

    pub(crate) fn check_same_dim(&self, other: &Self) -> Result<()> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: other.dim,
            });
        }
        Ok(())
    }

    /// Expectation of `f` under the measure.
    pub fn expect(&self, f: impl Fn(&[f64]) -> f64) -> f64 {
        self.iter().map(|(x, m)| m * f(x)).sum()
    }
}

/// Total variation distance `½ Σ |P(x) − Q(x)|` over the union of supports.
pub fn tv_distance(p: &EmpiricalMeasure, q: &EmpiricalMeasure) -> Result<f64> {
    p.check_same_dim(q)?;
    let (mut i, mut j) = (0, 0);
    let mut acc = 0.0;
    while i < p.len() || j < q.len() {
        let ord = match (p.points.get(i), q.points.get(j)) {
            (Some(a), Some(b)) => lex(a, b),
            (Some(_), None) => Ordering::Less,
            _ => Ordering::Greater,
        };
        match ord {
            Ordering::Less => {
                acc += p.masses[i];
                i += 1;
            }
            Ordering::Greater => {
                acc += q.masses[j];
                j += 1;
            }
            Ordering::Equal => {
                acc += (p.masses[i] - q.masses[j]).abs();
                i += 1;
                j += 1;
            }
        }
    }
    Ok(0.5 * acc)
}
