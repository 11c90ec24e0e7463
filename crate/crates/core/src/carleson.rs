//! Triple-sum flatness coefficients and their Carleson totals.
//!
//! For a finite set `S` with masses, the triple sum is
//! `T(S) = sum over ordered (x1, x2, x3) in S^3 of delta(x1, x2, x3) w1 w2 w3`
//! and `beta3(Q) = T(members(Q)) / nominal_diam(Q)^3`. Small sets are summed
//! exactly; larger ones are estimated by Monte Carlo over mass-weighted
//! triples.

use std::collections::BTreeMap;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cubes::{BallFamily, Cube, Filtration};
use crate::error::{Error, Result};
use crate::metric::{triangle_excess, MetricMeasureSpace, PointSet};
use crate::rng::stream_rng;
use crate::sum::{neumaier_sum, NeumaierSum};

/// Sets at least this large split their exact sum across threads.
const PARALLEL_ROWS: usize = 128;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    /// Sets with at most this many points are summed exactly.
    pub exact_cutoff: usize,
    pub mc_samples: usize,
    pub seed: u64,
    /// Independent Monte Carlo batches; with one batch the standard error
    /// comes from the sample variance.
    pub repeats: usize,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            exact_cutoff: 300,
            mc_samples: 100_000,
            seed: 0,
            repeats: 1,
        }
    }
}

impl EstimatorConfig {
    /// Exact summation regardless of size.
    pub fn exact() -> Self {
        EstimatorConfig {
            exact_cutoff: usize::MAX,
            ..Self::default()
        }
    }

    /// Monte Carlo for every set with more than one point.
    pub fn monte_carlo(samples: usize, seed: u64) -> Self {
        EstimatorConfig {
            exact_cutoff: 1,
            mc_samples: samples,
            seed,
            repeats: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.exact_cutoff == 0 || self.mc_samples == 0 || self.repeats == 0 {
            return Err(Error::invalid(format!(
                "estimator needs exact_cutoff, mc_samples and repeats >= 1 (got {}, {}, {})",
                self.exact_cutoff, self.mc_samples, self.repeats
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Exact,
    Mc,
}

/// A normalized triple sum with its provenance. `stderr` is 0 for exact sums.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Beta3 {
    pub beta3: f64,
    pub method: Method,
    pub stderr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CarlesonReport {
    pub per_cube: BTreeMap<String, Beta3>,
    pub per_scale: BTreeMap<i32, f64>,
    pub total: f64,
    pub normalizer: f64,
    pub ratio: f64,
    pub config: EstimatorConfig,
}

impl CarlesonReport {
    fn assemble(terms: Vec<(String, i32, Beta3)>, normalizer: f64, config: EstimatorConfig) -> Self {
        let mut scales: BTreeMap<i32, NeumaierSum> = BTreeMap::new();
        for (_, k, t) in &terms {
            scales.entry(*k).or_default().add(t.beta3);
        }
        let per_scale: BTreeMap<i32, f64> = scales.into_iter().map(|(k, s)| (k, s.value())).collect();
        let total = neumaier_sum(per_scale.values().copied());
        CarlesonReport {
            per_cube: terms.into_iter().map(|(id, _, t)| (id, t)).collect(),
            per_scale,
            total,
            normalizer,
            ratio: total / normalizer,
            config,
        }
    }

    /// `scale,count,sum,normalized_sum` rows, coarsest scale first.
    pub fn scale_rows(&self) -> Vec<(i32, usize, f64, f64)> {
        let mut counts: BTreeMap<i32, usize> = BTreeMap::new();
        for id in self.per_cube.keys() {
            if let Some(k) = id.split(':').nth(1).and_then(|k| k.parse().ok()) {
                *counts.entry(k).or_default() += 1;
            }
        }
        self.per_scale
            .iter()
            .map(|(&k, &sum)| (k, counts.get(&k).copied().unwrap_or(0), sum, sum / self.normalizer))
            .collect()
    }
}

/// Exact `T(points)` over ordered triples.
pub fn exact_triple_sum(space: &MetricMeasureSpace, points: &[usize]) -> f64 {
    let m = points.len();
    if m < 3 {
        return 0.0;
    }
    let w: Vec<f64> = points.iter().map(|&p| space.weight(p)).collect();
    let mut dist = vec![0.0; m * m];
    for i in 0..m {
        for j in i + 1..m {
            let d = space.d(points[i], points[j]);
            dist[i * m + j] = d;
            dist[j * m + i] = d;
        }
    }
    let row = |i: usize| {
        let di = &dist[i * m..(i + 1) * m];
        let mut acc = NeumaierSum::default();
        for j in i + 1..m {
            let dij = di[j];
            let dj = &dist[j * m..(j + 1) * m];
            let mut inner = 0.0;
            for k in j + 1..m {
                inner += triangle_excess(dij, dj[k], di[k]) * w[k];
            }
            acc.add(inner * w[j]);
        }
        acc.value() * w[i]
    };
    let rows: Vec<f64> = if m >= PARALLEL_ROWS {
        (0..m).into_par_iter().map(row).collect()
    } else {
        (0..m).map(row).collect()
    };
    6.0 * neumaier_sum(rows)
}

/// Monte Carlo estimate of `T(points)` and its standard error. Triples are
/// drawn independently with probability proportional to mass, so
/// `mass^3 * mean(delta)` is unbiased.
pub fn mc_triple_sum(space: &MetricMeasureSpace, points: &[usize], config: &EstimatorConfig, stream: &str) -> Result<(f64, f64)> {
    if points.len() < 3 {
        return Ok((0.0, 0.0));
    }
    let w: Vec<f64> = points.iter().map(|&p| space.weight(p)).collect();
    let mass = neumaier_sum(w.iter().copied());
    let pick = WeightedIndex::new(&w).map_err(|e| Error::invalid(format!("sampling weights: {e}")))?;
    let mut rng = stream_rng(config.seed, stream);
    let batches = config.repeats.max(1);
    let per_batch = config.mc_samples.div_ceil(batches);
    let mass3 = mass * mass * mass;
    let mut batch_means = Vec::with_capacity(batches);
    let mut all = NeumaierSum::default();
    let mut all_sq = NeumaierSum::default();
    for _ in 0..batches {
        let mut s = NeumaierSum::default();
        for _ in 0..per_batch {
            let a = points[pick.sample(&mut rng)];
            let b = points[pick.sample(&mut rng)];
            let c = points[pick.sample(&mut rng)];
            let d = triangle_excess(space.d(a, b), space.d(b, c), space.d(a, c));
            s.add(d);
            all_sq.add(d * d);
        }
        all.add(s.value());
        batch_means.push(s.value() / per_batch as f64);
    }
    let total = (per_batch * batches) as f64;
    let mean = all.value() / total;
    let stderr = if batches > 1 {
        let var = neumaier_sum(batch_means.iter().map(|b| (b - mean) * (b - mean))) / (batches - 1) as f64;
        (var / batches as f64).sqrt()
    } else {
        let var = ((all_sq.value() - total * mean * mean) / (total - 1.0)).max(0.0);
        (var / total).sqrt()
    };
    Ok((mass3 * mean, mass3 * stderr))
}

fn triple_sum(space: &MetricMeasureSpace, points: &[usize], config: &EstimatorConfig, stream: &str, diam: f64) -> Result<Beta3> {
    let norm = diam * diam * diam;
    if points.len() <= config.exact_cutoff {
        Ok(Beta3 {
            beta3: exact_triple_sum(space, points) / norm,
            method: Method::Exact,
            stderr: 0.0,
        })
    } else {
        let (value, stderr) = mc_triple_sum(space, points, config, stream)?;
        Ok(Beta3 {
            beta3: value / norm,
            method: Method::Mc,
            stderr: stderr / norm,
        })
    }
}

pub fn beta3_cube(space: &MetricMeasureSpace, cube: &Cube, config: &EstimatorConfig) -> Result<Beta3> {
    config.validate()?;
    if cube.members.is_empty() {
        return Err(Error::EmptySet("beta3 of an empty cube"));
    }
    triple_sum(space, &cube.members, config, &format!("beta3:{}", cube.id), cube.nominal_diam)
}

/// Points of `domain` within `a_prime * nominal_diam` of the cube.
pub fn enlarged_domain(space: &MetricMeasureSpace, cube: &Cube, domain: &PointSet, a_prime: f64) -> Vec<usize> {
    let reach = a_prime * cube.nominal_diam;
    domain
        .indices()
        .into_iter()
        .filter(|&x| cube.members.iter().any(|&q| space.d(x, q) <= reach))
        .collect()
}

/// `T` over the part of `domain` within `a_prime * nominal_diam(Q)` of `Q`,
/// normalized by `nominal_diam(Q)^3`. An empty effective domain gives 0.
pub fn beta3_enlarged(
    space: &MetricMeasureSpace,
    cube: &Cube,
    domain: &PointSet,
    a_prime: f64,
    config: &EstimatorConfig,
) -> Result<Beta3> {
    config.validate()?;
    if !(a_prime >= 0.0) {
        return Err(Error::invalid(format!("A' = {a_prime} must be nonnegative")));
    }
    if domain.universe_len() != space.len() {
        return Err(Error::invalid("domain set is over a different space"));
    }
    let points = enlarged_domain(space, cube, domain, a_prime);
    triple_sum(
        space,
        &points,
        config,
        &format!("beta3-enlarged:{}:{a_prime}", cube.id),
        cube.nominal_diam,
    )
}

/// Sum of `beta3` over `q0` and every cube below it; normalized by
/// `nominal_diam(q0)`.
pub fn carleson_sum_cubes(
    space: &MetricMeasureSpace,
    filtration: &Filtration,
    q0: usize,
    config: &EstimatorConfig,
) -> Result<CarlesonReport> {
    config.validate()?;
    if q0 >= filtration.cubes.len() {
        return Err(Error::IndexOutOfRange {
            index: q0,
            len: filtration.cubes.len(),
        });
    }
    let tree = filtration.subtree(q0);
    let terms: Vec<(String, i32, Beta3)> = tree
        .par_iter()
        .map(|&c| {
            let cube = filtration.cube(c);
            beta3_cube(space, cube, config).map(|b| (cube.id.clone(), cube.scale, b))
        })
        .collect::<Result<_>>()?;
    Ok(CarlesonReport::assemble(terms, filtration.cube(q0).nominal_diam, *config))
}

/// Sum over family balls `B` whose points all lie in `Ball(x, 2r)` of
/// `T(B) / diam(B)^3` with `diam(B) = 2 radius(B)`; normalized by `r`.
pub fn carleson_sum_balls(
    space: &MetricMeasureSpace,
    family: &BallFamily,
    x: usize,
    r: f64,
    config: &EstimatorConfig,
) -> Result<CarlesonReport> {
    config.validate()?;
    space.distance(x, x)?;
    if !(r > 0.0 && r <= space.diameter()) {
        return Err(Error::invalid(format!("radius {r} not in (0, {}]", space.diameter())));
    }
    let outer = 2.0 * r;
    let mut inside = Vec::new();
    for b in &family.balls {
        let members = space.ball(b.center, b.radius)?;
        if members.iter().all(|&p| space.d(x, p) <= outer) {
            inside.push((b, members));
        }
    }
    let terms: Vec<(String, i32, Beta3)> = inside
        .par_iter()
        .map(|(b, members)| {
            let id = format!("b:{}:{}", b.scale, b.center);
            triple_sum(space, members, config, &id, 2.0 * b.radius).map(|t| (id, b.scale, t))
        })
        .collect::<Result<_>>()?;
    Ok(CarlesonReport::assemble(terms, r, *config))
}

/// `dist(x, set)` for every point.
pub fn distances_to(space: &MetricMeasureSpace, set: &PointSet) -> Result<Vec<f64>> {
    let targets = set.indices();
    if targets.is_empty() {
        return Err(Error::EmptySet("distance to an empty set"));
    }
    Ok((0..space.len())
        .into_par_iter()
        .map(|p| {
            if set.contains(p) {
                0.0
            } else {
                targets.iter().map(|&t| space.d(p, t)).fold(f64::INFINITY, f64::min)
            }
        })
        .collect())
}

/// Over cubes `Q` under `q1` that meet `etilde`, the sum of
/// `nominal_diam(Q)^-1 * sum_{x in Q, x in e_set} dist(x, etilde) w(x)`.
pub fn dist_carleson_sum(
    space: &MetricMeasureSpace,
    e_set: &PointSet,
    etilde: &PointSet,
    filtration: &Filtration,
    q1: usize,
) -> Result<f64> {
    if q1 >= filtration.cubes.len() {
        return Err(Error::IndexOutOfRange {
            index: q1,
            len: filtration.cubes.len(),
        });
    }
    let dist = distances_to(space, etilde)?;
    let mut acc = NeumaierSum::default();
    for c in filtration.subtree(q1) {
        let cube = filtration.cube(c);
        if cube.members.iter().any(|&p| etilde.contains(p)) {
            acc.add(dist_term(space, cube, e_set, &dist));
        }
    }
    Ok(acc.value())
}

fn dist_term(space: &MetricMeasureSpace, cube: &Cube, e_set: &PointSet, dist: &[f64]) -> f64 {
    neumaier_sum(
        cube.members
            .iter()
            .filter(|&&p| e_set.contains(p))
            .map(|&p| dist[p] * space.weight(p)),
    ) / cube.nominal_diam
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApproxRecord {
    pub lhs: f64,
    pub dist_term: f64,
    pub enlarged_term: f64,
    pub ratio: f64,
}

/// Compares `beta3(Q)` with the distance of `Q` to `etilde` plus the
/// enlarged triple sum over `etilde`.
pub fn approx_decomposition_check(
    space: &MetricMeasureSpace,
    cube: &Cube,
    etilde: &PointSet,
    a_prime: f64,
    config: &EstimatorConfig,
) -> Result<ApproxRecord> {
    let dist = distances_to(space, etilde)?;
    approx_with_distances(space, cube, etilde, &dist, a_prime, config)
}

/// As [`approx_decomposition_check`] with `dist(., etilde)` precomputed.
pub fn approx_with_distances(
    space: &MetricMeasureSpace,
    cube: &Cube,
    etilde: &PointSet,
    dist: &[f64],
    a_prime: f64,
    config: &EstimatorConfig,
) -> Result<ApproxRecord> {
    let lhs = beta3_cube(space, cube, config)?.beta3;
    let dist_term = dist_term(space, cube, &PointSet::full(space.len()), dist);
    let enlarged_term = beta3_enlarged(space, cube, etilde, a_prime, config)?.beta3;
    let denom = dist_term + enlarged_term;
    let ratio = if denom > 0.0 {
        lhs / denom
    } else if lhs > 0.0 {
        f64::INFINITY
    } else {
        0.0
    };
    Ok(ApproxRecord {
        lhs,
        dist_term,
        enlarged_term,
        ratio,
    })
}

/// `beta3_enlarged(Q, e_set, 1) / nominal_diam(Q)`.
pub fn alpha_of_cube(space: &MetricMeasureSpace, cube: &Cube, e_set: &PointSet, config: &EstimatorConfig) -> Result<f64> {
    Ok(beta3_enlarged(space, cube, e_set, 1.0, config)?.beta3 / cube.nominal_diam)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cubes::cube_id;
    use crate::generators::gen_segment;

    fn cube_of(members: Vec<usize>, diam: f64) -> Cube {
        Cube {
            id: cube_id(0, members[0]),
            scale: 0,
            center: members[0],
            members,
            parent: None,
            children: vec![],
            nominal_diam: diam,
            actual_diam: diam,
            mass: 0.0,
        }
    }

    fn brute(space: &MetricMeasureSpace, pts: &[usize]) -> f64 {
        let mut s = 0.0;
        for &a in pts {
            for &b in pts {
                for &c in pts {
                    s += space.excess_delta(a, b, c).unwrap() * space.weight(a) * space.weight(b) * space.weight(c);
                }
            }
        }
        s
    }

    #[test]
    fn three_point_cube() {
        let s = MetricMeasureSpace::euclidean(2, vec![0.0, 0.0, 1.0, 1.0, 2.0, 0.0], vec![1.0; 3]).unwrap();
        let q = cube_of(vec![0, 1, 2], 4.0);
        let b = beta3_cube(&s, &q, &EstimatorConfig::exact()).unwrap();
        // only the six triples through all three points are non-degenerate
        let expected = 6.0 * (2.0 * 2f64.sqrt() - 2.0) / 64.0;
        assert!((b.beta3 - expected).abs() < 1e-15);
        assert!((b.beta3 - brute(&s, &[0, 1, 2]) / 64.0).abs() < 1e-15);
        assert_eq!(b.method, Method::Exact);
    }

    #[test]
    fn collinear_and_singleton_cubes_vanish() {
        let s = gen_segment(40).unwrap();
        let q = cube_of((0..40).collect(), 1.0);
        assert!(beta3_cube(&s, &q, &EstimatorConfig::exact()).unwrap().beta3.abs() < 1e-12);
        let one = cube_of(vec![7], 0.1);
        assert_eq!(beta3_cube(&s, &one, &EstimatorConfig::exact()).unwrap().beta3, 0.0);
        let empty = Cube { members: vec![], ..one };
        assert!(beta3_cube(&s, &empty, &EstimatorConfig::default()).is_err());
    }

    #[test]
    fn enlarged_on_own_members_is_plain() {
        let s = crate::generators::gen_circle(30).unwrap();
        let q = cube_of((3..17).collect(), 0.2);
        let own = PointSet::from_indices(30, q.members.clone()).unwrap();
        let cfg = EstimatorConfig::exact();
        for a in [0.0, 1.0, 5.0] {
            assert_eq!(
                beta3_enlarged(&s, &q, &own, a, &cfg).unwrap(),
                beta3_cube(&s, &q, &cfg).unwrap()
            );
        }
        let far = PointSet::from_indices(30, [25]).unwrap();
        assert_eq!(beta3_enlarged(&s, &q, &far, 0.01, &cfg).unwrap().beta3, 0.0);
    }

    #[test]
    fn mc_tracks_exact() {
        let s = crate::generators::gen_circle(60).unwrap();
        let pts: Vec<usize> = (0..60).collect();
        let exact = exact_triple_sum(&s, &pts);
        let (est, se) = mc_triple_sum(&s, &pts, &EstimatorConfig::monte_carlo(20_000, 4), "t").unwrap();
        assert!((est - exact).abs() < 4.0 * se, "{est} vs {exact} ± {se}");
        let batched = EstimatorConfig {
            repeats: 10,
            ..EstimatorConfig::monte_carlo(20_000, 4)
        };
        let (est, se) = mc_triple_sum(&s, &pts, &batched, "t").unwrap();
        assert!(se > 0.0 && (est - exact).abs() < 5.0 * se);
    }

    #[test]
    fn config_validation() {
        assert!(EstimatorConfig {
            mc_samples: 0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(EstimatorConfig::default().validate().is_ok());
    }
}
