//! Finite metric measure spaces.
//!
//! A [`MetricMeasureSpace`] is a finite set of distinct points together with a
//! distance and a positive mass per point. The masses stand in for
//! one-dimensional Hausdorff measure: curve generators assign each sample its
//! share of arclength, so sums over points approximate integrals against
//! length measure.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::stream_rng;
use crate::sum::neumaier_sum;

/// Exhaustive triangle checks are run up to this many points.
const EXHAUSTIVE_TRIANGLE_LIMIT: usize = 500;
const SAMPLED_TRIANGLE_CHECKS: usize = 100_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Metric {
    /// Row-major coordinates, `dim` values per point.
    Euclidean { dim: usize, coords: Vec<f64> },
    /// Row-major `n x n` distance matrix.
    ExplicitMatrix { n: usize, entries: Vec<f64> },
    /// `d(x, y) = base(x, y)^exponent` with `exponent` in `(0, 1]`.
    Snowflake { base: Box<Metric>, exponent: f64 },
}

impl Metric {
    fn len(&self) -> usize {
        match self {
            Metric::Euclidean { dim, coords } => coords.len() / (*dim).max(1),
            Metric::ExplicitMatrix { n, .. } => *n,
            Metric::Snowflake { base, .. } => base.len(),
        }
    }

    #[inline]
    fn eval(&self, i: usize, j: usize) -> f64 {
        match self {
            Metric::Euclidean { dim, coords } => {
                let a = &coords[i * dim..(i + 1) * dim];
                let b = &coords[j * dim..(j + 1) * dim];
                let mut acc = 0.0;
                for (x, y) in a.iter().zip(b) {
                    let t = x - y;
                    acc += t * t;
                }
                acc.sqrt()
            }
            Metric::ExplicitMatrix { n, entries } => entries[i * n + j],
            Metric::Snowflake { base, exponent } => {
                let d = base.eval(i, j);
                if *exponent == 1.0 {
                    d
                } else {
                    d.powf(*exponent)
                }
            }
        }
    }

    fn scaled(&self, factor: f64) -> Metric {
        match self {
            Metric::Euclidean { dim, coords } => Metric::Euclidean {
                dim: *dim,
                coords: coords.iter().map(|c| c * factor).collect(),
            },
            Metric::ExplicitMatrix { n, entries } => Metric::ExplicitMatrix {
                n: *n,
                entries: entries.iter().map(|d| d * factor).collect(),
            },
            Metric::Snowflake { base, exponent } => Metric::Snowflake {
                base: Box::new(base.scaled(factor.powf(1.0 / exponent))),
                exponent: *exponent,
            },
        }
    }

    pub fn is_euclidean(&self) -> bool {
        matches!(self, Metric::Euclidean { .. })
    }
}

/// A set of point indices backed by a membership mask.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PointSet {
    mask: Vec<bool>,
}

impl PointSet {
    pub fn empty(len: usize) -> Self {
        PointSet { mask: vec![false; len] }
    }

    pub fn full(len: usize) -> Self {
        PointSet { mask: vec![true; len] }
    }

    pub fn from_indices(len: usize, indices: impl IntoIterator<Item = usize>) -> Result<Self> {
        let mut mask = vec![false; len];
        for i in indices {
            *mask.get_mut(i).ok_or(Error::IndexOutOfRange { index: i, len })? = true;
        }
        Ok(PointSet { mask })
    }

    pub fn from_mask(mask: Vec<bool>) -> Self {
        PointSet { mask }
    }

    #[inline]
    pub fn contains(&self, i: usize) -> bool {
        self.mask.get(i).copied().unwrap_or(false)
    }

    pub fn insert(&mut self, i: usize) {
        self.mask[i] = true;
    }

    pub fn universe_len(&self) -> usize {
        self.mask.len()
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.mask.iter().any(|&b| b)
    }

    pub fn indices(&self) -> Vec<usize> {
        self.mask.iter().enumerate().filter_map(|(i, &b)| b.then_some(i)).collect()
    }

    pub fn intersection(&self, other: &PointSet) -> PointSet {
        PointSet {
            mask: self.mask.iter().zip(&other.mask).map(|(a, b)| *a && *b).collect(),
        }
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }
}

/// Empirical bounds on `mass(Ball(x, r)) / r`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegularityReport {
    pub ratio_min: f64,
    pub ratio_max: f64,
    pub samples: Vec<RegularitySample>,
    pub scale_range: (f64, f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegularitySample {
    pub point: usize,
    pub radius: f64,
    pub ratio: f64,
}

impl RegularityReport {
    /// `ratio_max / ratio_min`, the spread of the empirical regularity constants.
    pub fn spread(&self) -> f64 {
        self.ratio_max / self.ratio_min
    }
}

/// Triangle excess of three pairwise distances: the smallest value of
/// `d(a, m) + d(m, b) - d(a, b)` over the choice of middle point `m`.
///
/// The minimizing middle point is the one opposite the longest side, so the
/// value is `(short + medium) - long`. Sorting first makes the result
/// bit-identical under every permutation of the arguments. Excesses within
/// rounding error of the longest side are reported as exactly zero.
#[inline]
pub fn triangle_excess(d0: f64, d1: f64, d2: f64) -> f64 {
    let (lo, hi) = if d0 <= d1 { (d0, d1) } else { (d1, d0) };
    let (mid, long) = if hi <= d2 { (hi, d2) } else { (d2, hi) };
    let (a, b) = if lo <= mid { (lo, mid) } else { (mid, lo) };
    let excess = (a + b) - long;
    if excess <= ROUNDING_FLOOR * long {
        0.0
    } else {
        excess
    }
}

/// Distances carry a few ulps of error each; a collinear triple can show an
/// excess of that order.
const ROUNDING_FLOOR: f64 = 16.0 * f64::EPSILON;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricMeasureSpace {
    metric: Metric,
    weights: Vec<f64>,
    diameter: f64,
}

impl MetricMeasureSpace {
    /// Points in `R^dim`, given as row-major coordinates.
    pub fn euclidean(dim: usize, coords: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("dimension must be positive"));
        }
        if !coords.len().is_multiple_of(dim) {
            return Err(Error::invalid(format!(
                "{} coordinates do not divide into points of dimension {dim}",
                coords.len()
            )));
        }
        if let Some(c) = coords.iter().find(|c| !c.is_finite()) {
            return Err(Error::invalid(format!("non-finite coordinate {c}")));
        }
        Self::build(Metric::Euclidean { dim, coords }, weights)
    }

    /// An explicit distance matrix. The triangle inequality is checked on every
    /// triple up to 500 points and on a fixed sample of triples beyond that.
    pub fn from_matrix(entries: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        let n = weights.len();
        if entries.len() != n * n {
            return Err(Error::invalid(format!(
                "distance matrix has {} entries, expected {n}x{n}",
                entries.len()
            )));
        }
        for i in 0..n {
            if entries[i * n + i] != 0.0 {
                return Err(Error::NotAMetric(format!("d({i},{i}) = {} != 0", entries[i * n + i])));
            }
            for j in (i + 1)..n {
                let (a, b) = (entries[i * n + j], entries[j * n + i]);
                if !a.is_finite() || a <= 0.0 {
                    return Err(Error::NotAMetric(format!("d({i},{j}) = {a} is not positive")));
                }
                if a != b {
                    return Err(Error::NotAMetric(format!("d({i},{j}) = {a} but d({j},{i}) = {b}")));
                }
            }
        }
        let d = |i: usize, j: usize| entries[i * n + j];
        let check = |i: usize, j: usize, k: usize| -> Result<()> {
            let slack = 1e-12 * (d(i, j) + d(j, k));
            if d(i, k) > d(i, j) + d(j, k) + slack {
                return Err(Error::NotAMetric(format!(
                    "triangle inequality fails: d({i},{k}) = {} > d({i},{j}) + d({j},{k}) = {}",
                    d(i, k),
                    d(i, j) + d(j, k)
                )));
            }
            Ok(())
        };
        if n <= EXHAUSTIVE_TRIANGLE_LIMIT {
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        check(i, j, k)?;
                    }
                }
            }
        } else {
            let mut rng = stream_rng(0, "triangle-check");
            for _ in 0..SAMPLED_TRIANGLE_CHECKS {
                let (i, j, k) = (rng.random_range(0..n), rng.random_range(0..n), rng.random_range(0..n));
                check(i, j, k)?;
            }
        }
        Self::build(Metric::ExplicitMatrix { n, entries }, weights)
    }

    /// Replaces `d` with `d^exponent`, which is again a metric for
    /// `exponent` in `(0, 1]`.
    pub fn snowflake(self, exponent: f64) -> Result<Self> {
        if !(exponent > 0.0 && exponent <= 1.0) {
            return Err(Error::invalid(format!("snowflake exponent {exponent} not in (0, 1]")));
        }
        let metric = Metric::Snowflake {
            base: Box::new(self.metric),
            exponent,
        };
        Self::build(metric, self.weights)
    }

    fn build(metric: Metric, weights: Vec<f64>) -> Result<Self> {
        let n = metric.len();
        if weights.len() != n {
            return Err(Error::invalid(format!("{} weights for {n} points", weights.len())));
        }
        if let Some((i, w)) = weights.iter().enumerate().find(|(_, w)| !(w.is_finite() && **w > 0.0)) {
            return Err(Error::invalid(format!("weight {w} of point {i} is not positive")));
        }
        let mut diameter: f64 = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                let d = metric.eval(i, j);
                if d <= 0.0 {
                    return Err(Error::invalid(format!("points {i} and {j} coincide")));
                }
                diameter = diameter.max(d);
            }
        }
        Ok(MetricMeasureSpace {
            metric,
            weights,
            diameter,
        })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn metric(&self) -> &Metric {
        &self.metric
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn diameter(&self) -> f64 {
        self.diameter
    }

    pub fn total_mass(&self) -> f64 {
        neumaier_sum(self.weights.iter().copied())
    }

    /// Coordinates of point `i` when the space (or the base of a snowflake)
    /// is Euclidean.
    pub fn coords(&self, i: usize) -> Option<&[f64]> {
        let mut m = &self.metric;
        loop {
            match m {
                Metric::Euclidean { dim, coords } => return coords.get(i * dim..(i + 1) * dim),
                Metric::Snowflake { base, .. } => m = base,
                Metric::ExplicitMatrix { .. } => return None,
            }
        }
    }

    /// The same space with every distance and every mass multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor.is_finite() && factor > 0.0) {
            return Err(Error::invalid(format!("scale factor {factor} is not positive")));
        }
        Self::build(self.metric.scaled(factor), self.weights.iter().map(|w| w * factor).collect())
    }

    fn check_index(&self, i: usize) -> Result<()> {
        if i < self.len() {
            Ok(())
        } else {
            Err(Error::IndexOutOfRange {
                index: i,
                len: self.len(),
            })
        }
    }

    pub fn distance(&self, i: usize, j: usize) -> Result<f64> {
        self.check_index(i)?;
        self.check_index(j)?;
        Ok(self.d(i, j))
    }

    /// Unchecked distance; panics on out-of-range indices.
    #[inline]
    pub fn d(&self, i: usize, j: usize) -> f64 {
        if i == j {
            0.0
        } else {
            self.metric.eval(i, j)
        }
    }

    pub fn excess_delta(&self, i: usize, j: usize, k: usize) -> Result<f64> {
        self.check_index(i)?;
        self.check_index(j)?;
        self.check_index(k)?;
        Ok(self.delta(i, j, k))
    }

    #[inline]
    pub(crate) fn delta(&self, i: usize, j: usize, k: usize) -> f64 {
        triangle_excess(self.d(i, j), self.d(j, k), self.d(i, k))
    }

    /// Closed ball `{j : d(center, j) <= radius}` in increasing index order.
    pub fn ball(&self, center: usize, radius: f64) -> Result<Vec<usize>> {
        self.check_index(center)?;
        if !(radius >= 0.0) {
            return Err(Error::invalid(format!("radius {radius} is negative")));
        }
        Ok((0..self.len()).filter(|&j| self.d(center, j) <= radius).collect())
    }

    pub fn set_mass(&self, subset: &[usize]) -> Result<f64> {
        for &i in subset {
            self.check_index(i)?;
        }
        Ok(self.mass_of(subset))
    }

    #[inline]
    pub(crate) fn mass_of(&self, subset: &[usize]) -> f64 {
        neumaier_sum(subset.iter().map(|&i| self.weights[i]))
    }

    pub fn dist_to_set(&self, i: usize, subset: &[usize]) -> Result<f64> {
        self.check_index(i)?;
        if subset.is_empty() {
            return Err(Error::EmptySet("distance to an empty set"));
        }
        let mut best = f64::INFINITY;
        for &j in subset {
            self.check_index(j)?;
            best = best.min(self.d(i, j));
        }
        Ok(best)
    }

    /// Samples `(x, r)` with `x` uniform over points and `r` log-uniform in
    /// `[r_min, r_max]`, recording `mass(Ball(x, r)) / r`.
    pub fn check_ahlfors_regularity(&self, r_min: f64, r_max: f64, sample_budget: usize, seed: u64) -> Result<RegularityReport> {
        if self.len() < 2 || self.diameter <= 0.0 {
            return Err(Error::Degenerate(format!(
                "regularity needs at least two distinct points, got {}",
                self.len()
            )));
        }
        if !(r_min > 0.0 && r_min < r_max && r_max.is_finite()) {
            return Err(Error::invalid(format!("radius range [{r_min}, {r_max}] is empty")));
        }
        if sample_budget == 0 {
            return Err(Error::invalid("sample budget must be positive"));
        }
        let mut rng = stream_rng(seed, "ahlfors-regularity");
        let (lo, hi) = (r_min.ln(), r_max.ln());
        let mut samples = Vec::with_capacity(sample_budget);
        let (mut ratio_min, mut ratio_max) = (f64::INFINITY, 0.0f64);
        for _ in 0..sample_budget {
            let point = rng.random_range(0..self.len());
            let radius = rng.random_range(lo..=hi).exp();
            let mass = neumaier_sum(
                (0..self.len())
                    .filter(|&j| self.d(point, j) <= radius)
                    .map(|j| self.weights[j]),
            );
            let ratio = mass / radius;
            ratio_min = ratio_min.min(ratio);
            ratio_max = ratio_max.max(ratio);
            samples.push(RegularitySample { point, radius, ratio });
        }
        Ok(RegularityReport {
            ratio_min,
            ratio_max,
            samples,
            scale_range: (r_min, r_max),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plane(points: &[(f64, f64)]) -> MetricMeasureSpace {
        let coords = points.iter().flat_map(|&(x, y)| [x, y]).collect();
        MetricMeasureSpace::euclidean(2, coords, vec![1.0; points.len()]).unwrap()
    }

    fn line(xs: &[f64]) -> MetricMeasureSpace {
        MetricMeasureSpace::euclidean(1, xs.to_vec(), vec![1.0; xs.len()]).unwrap()
    }

    #[test]
    fn distance_examples() {
        let s = plane(&[(0.0, 0.0), (3.0, 4.0)]);
        assert_eq!(s.distance(0, 1).unwrap(), 5.0);
        assert_eq!(s.distance(1, 1).unwrap(), 0.0);
        let snow = line(&[0.0, 4.0]).snowflake(0.5).unwrap();
        assert_eq!(snow.distance(0, 1).unwrap(), 2.0);
        assert!(matches!(s.distance(0, 2), Err(Error::IndexOutOfRange { index: 2, len: 2 })));
    }

    #[test]
    fn excess_examples() {
        let s = plane(&[(0.0, 0.0), (1.0, 0.0), (2.0, 0.0), (1.0, 1.0), (5.0, 0.0)]);
        assert_eq!(s.excess_delta(0, 1, 2).unwrap(), 0.0);
        assert_eq!(s.excess_delta(0, 0, 4).unwrap(), 0.0);
        // (0,0),(1,1),(2,0): middle (1,1) gives 2*sqrt(2) - 2, the others 2 + sqrt(2) - sqrt(2) = 2.
        let expected = 2.0 * 2f64.sqrt() - 2.0;
        assert!((s.excess_delta(0, 3, 2).unwrap() - expected).abs() < 1e-15);
        assert!((expected - 0.8284271).abs() < 1e-7);

        let snow = line(&[0.0, 1.0, 2.0]).snowflake(0.5).unwrap();
        // distances 1, 1, sqrt(2): middle 1 gives 2 - sqrt(2).
        let expected = 2.0 - 2f64.sqrt();
        assert!((snow.excess_delta(0, 1, 2).unwrap() - expected).abs() < 1e-15);
        assert!((expected - 0.5857864).abs() < 1e-7);
    }

    #[test]
    fn excess_brute_force_agreement() {
        let s = plane(&[(0.3, -1.0), (2.5, 0.7), (-0.4, 1.9)]);
        let d = |a: usize, b: usize| s.distance(a, b).unwrap();
        let brute = [(0, 1, 2), (1, 0, 2), (0, 2, 1)]
            .iter()
            .map(|&(a, m, b)| d(a, m) + d(m, b) - d(a, b))
            .fold(f64::INFINITY, f64::min);
        assert!((s.excess_delta(0, 1, 2).unwrap() - brute).abs() < 1e-14);
    }

    #[test]
    fn ball_examples() {
        let xs: Vec<f64> = (0..11).map(|i| i as f64 / 10.0).collect();
        let s = line(&xs);
        assert_eq!(s.ball(5, 0.0).unwrap(), vec![5]);
        assert_eq!(s.ball(5, s.diameter()).unwrap().len(), 11);
        let direct: Vec<usize> = (0..xs.len()).filter(|&j| (0.25..=0.75).contains(&xs[j])).collect();
        assert_eq!(s.ball(5, 0.25).unwrap(), direct);
        assert_eq!(direct, vec![3, 4, 5, 6, 7]);
        assert!(s.ball(5, -1.0).is_err());
    }

    #[test]
    fn mass_and_dist_examples() {
        let n = 10;
        let xs: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let s = MetricMeasureSpace::euclidean(1, xs, vec![1.0 / n as f64; n]).unwrap();
        assert_eq!(s.set_mass(&[]).unwrap(), 0.0);
        let all: Vec<usize> = (0..n).collect();
        assert!((s.set_mass(&all).unwrap() - 1.0).abs() < 1e-12);
        let (a, b) = all.split_at(4);
        assert!((s.set_mass(a).unwrap() + s.set_mass(b).unwrap() - s.set_mass(&all).unwrap()).abs() < 1e-15);

        let seg = line(&[0.0, 1.0, 0.3]);
        assert!((seg.dist_to_set(2, &[0, 1]).unwrap() - 0.3).abs() < 1e-15);
        assert_eq!(seg.dist_to_set(0, &[0, 1]).unwrap(), 0.0);
        assert!(matches!(seg.dist_to_set(0, &[]), Err(Error::EmptySet(_))));
    }

    #[test]
    fn matrix_validation() {
        let ok = vec![0.0, 1.0, 2.0, 1.0, 0.0, 1.0, 2.0, 1.0, 0.0];
        let s = MetricMeasureSpace::from_matrix(ok, vec![1.0; 3]).unwrap();
        assert_eq!(s.diameter(), 2.0);
        let bad = vec![0.0, 1.0, 3.0, 1.0, 0.0, 1.0, 3.0, 1.0, 0.0];
        assert!(matches!(
            MetricMeasureSpace::from_matrix(bad, vec![1.0; 3]),
            Err(Error::NotAMetric(_))
        ));
        let asym = vec![0.0, 1.0, 1.5, 0.0];
        assert!(MetricMeasureSpace::from_matrix(asym, vec![1.0; 2]).is_err());
    }

    #[test]
    fn construction_errors() {
        assert!(MetricMeasureSpace::euclidean(2, vec![0.0, 0.0, 0.0, 0.0], vec![1.0, 1.0]).is_err());
        assert!(MetricMeasureSpace::euclidean(1, vec![0.0, 1.0], vec![1.0, 0.0]).is_err());
        assert!(MetricMeasureSpace::euclidean(1, vec![0.0, 1.0], vec![1.0]).is_err());
        assert!(line(&[0.0, 1.0]).snowflake(1.5).is_err());
    }

    #[test]
    fn regularity_examples() {
        let n = 1000;
        let xs: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
        let s = MetricMeasureSpace::euclidean(1, xs, vec![1.0 / n as f64; n]).unwrap();
        let rep = s.check_ahlfors_regularity(0.02, 0.5, 2000, 7).unwrap();
        assert!(rep.ratio_min >= 0.5 && rep.ratio_max <= 2.5, "{rep:?}");
        assert!(rep
            .samples
            .iter()
            .all(|x| x.ratio >= rep.ratio_min && x.ratio <= rep.ratio_max));
        assert_eq!(rep, s.check_ahlfors_regularity(0.02, 0.5, 2000, 7).unwrap());

        let single = line(&[0.0]);
        assert!(matches!(
            single.check_ahlfors_regularity(0.1, 1.0, 10, 0),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn scaling_multiplies_distances_and_masses() {
        let s = plane(&[(0.0, 0.0), (1.0, 2.0), (3.0, -1.0)]).snowflake(0.5).unwrap();
        let t = s.scaled(7.3).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let rel = (t.d(i, j) - 7.3 * s.d(i, j)).abs() / (1.0 + s.d(i, j));
                assert!(rel < 1e-12);
            }
            assert!((t.weight(i) - 7.3 * s.weight(i)).abs() < 1e-12);
        }
    }
}
