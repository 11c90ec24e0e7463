//! Reference sets: rectifiable curves, a purely unrectifiable Cantor set, and
//! curve-plus-garbage sets with a designated big piece.
//!
//! Curve samples carry their share of arclength as mass, Cantor points carry
//! their self-similar mass.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cubes::Cube;
use crate::error::{Error, Result};
use crate::metric::{MetricMeasureSpace, PointSet};
use crate::rng::stream_rng;

/// Number of linear pieces in a random Lipschitz profile.
const LIPSCHITZ_PIECES: usize = 16;
/// Number of garbage fragments attached to the big piece.
const GARBAGE_FRAGMENTS: usize = 32;

fn plane(points: &[[f64; 2]], weights: Vec<f64>) -> Result<MetricMeasureSpace> {
    let coords = points.iter().flat_map(|p| p.iter().copied()).collect();
    MetricMeasureSpace::euclidean(2, coords, weights)
}

/// `n` evenly spaced points on `[0, 1] x {0}`, mass `1/n` each.
pub fn gen_segment(n: usize) -> Result<MetricMeasureSpace> {
    if n < 2 {
        return Err(Error::invalid(format!("a segment needs at least 2 points, got {n}")));
    }
    let pts: Vec<[f64; 2]> = (0..n).map(|i| [i as f64 / (n - 1) as f64, 0.0]).collect();
    plane(&pts, vec![1.0 / n as f64; n])
}

/// `n` evenly spaced points on the circle of circumference 1, mass `1/n` each.
pub fn gen_circle(n: usize) -> Result<MetricMeasureSpace> {
    if n < 3 {
        return Err(Error::invalid(format!("a circle needs at least 3 points, got {n}")));
    }
    let radius = 1.0 / (2.0 * PI);
    let pts: Vec<[f64; 2]> = (0..n)
        .map(|i| {
            let t = 2.0 * PI * i as f64 / n as f64;
            [radius * t.cos(), radius * t.sin()]
        })
        .collect();
    plane(&pts, vec![1.0 / n as f64; n])
}

/// A piecewise-linear `L`-Lipschitz function on `[0, 1]` with `f(0) = 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct LipschitzProfile {
    slopes: Vec<f64>,
    /// `f` at the left end of each piece.
    offsets: Vec<f64>,
}

impl LipschitzProfile {
    pub fn random(lipschitz: f64, seed: u64) -> Self {
        let mut rng = stream_rng(seed, "lipschitz-profile");
        let slopes: Vec<f64> = (0..LIPSCHITZ_PIECES)
            .map(|_| {
                if lipschitz == 0.0 {
                    0.0
                } else {
                    rng.random_range(-lipschitz..=lipschitz)
                }
            })
            .collect();
        let width = 1.0 / LIPSCHITZ_PIECES as f64;
        let mut offsets = Vec::with_capacity(LIPSCHITZ_PIECES);
        let mut y = 0.0;
        for s in &slopes {
            offsets.push(y);
            y += s * width;
        }
        LipschitzProfile { slopes, offsets }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let width = 1.0 / self.slopes.len() as f64;
        let j = ((x / width) as usize).min(self.slopes.len() - 1);
        self.offsets[j] + self.slopes[j] * (x - j as f64 * width)
    }

    pub fn arclength(&self) -> f64 {
        let width = 1.0 / self.slopes.len() as f64;
        self.slopes.iter().map(|s| width * (1.0 + s * s).sqrt()).sum()
    }

    /// The point at arclength `t` along the graph.
    pub fn at_arclength(&self, mut t: f64) -> [f64; 2] {
        let width = 1.0 / self.slopes.len() as f64;
        for (j, s) in self.slopes.iter().enumerate() {
            let len = width * (1.0 + s * s).sqrt();
            if t <= len || j + 1 == self.slopes.len() {
                let dx = (t / len).min(1.0) * width;
                let x = j as f64 * width + dx;
                return [x, self.offsets[j] + s * dx];
            }
            t -= len;
        }
        unreachable!("profile has at least one piece")
    }

    /// `n` samples evenly spaced in arclength, with midpoint-rule arclength masses.
    fn sample(&self, n: usize) -> (Vec<[f64; 2]>, Vec<f64>) {
        let total = self.arclength();
        let h = total / (n - 1) as f64;
        let pts = (0..n).map(|i| self.at_arclength(i as f64 * h)).collect();
        let mut w = vec![h; n];
        w[0] = h / 2.0;
        w[n - 1] = h / 2.0;
        (pts, w)
    }
}

/// The graph of a random `L`-Lipschitz function over `[0, 1]`, sampled at `n`
/// points evenly spaced in arclength. The function depends only on
/// `(L, seed)`, so larger `n` samples the same curve more finely.
pub fn gen_lipschitz_graph(n: usize, lipschitz: f64, seed: u64) -> Result<MetricMeasureSpace> {
    if n < 2 {
        return Err(Error::invalid(format!("a graph needs at least 2 points, got {n}")));
    }
    if !(lipschitz >= 0.0 && lipschitz.is_finite()) {
        return Err(Error::invalid(format!(
            "Lipschitz constant {lipschitz} is not a non-negative number"
        )));
    }
    let profile = LipschitzProfile::random(lipschitz, seed);
    let (pts, w) = profile.sample(n);
    for (i, a) in pts.iter().enumerate() {
        for b in &pts[i + 1..] {
            let rise = (a[1] - b[1]).abs();
            let run = (a[0] - b[0]).abs();
            if rise > lipschitz * run * (1.0 + 1e-9) + 1e-15 {
                return Err(Error::invalid(format!("sampled graph is not {lipschitz}-Lipschitz")));
            }
        }
    }
    plane(&pts, w)
}

/// Vertices of a Koch-type curve over the unit segment. Each segment is
/// replaced by four of relative length `1 / (2 (1 + cos angle))`, the middle
/// two forming a tent at `angle`; `angle = pi/3` is the classic curve.
pub fn gen_koch(level: u32, angle: f64) -> Result<MetricMeasureSpace> {
    if !(angle > 0.0 && angle < PI / 2.0) {
        return Err(Error::invalid(format!("Koch angle {angle} not in (0, pi/2)")));
    }
    if level > 8 {
        return Err(Error::invalid(format!("Koch level {level} is too deep")));
    }
    let r = 1.0 / (2.0 * (1.0 + angle.cos()));
    let (sin, cos) = angle.sin_cos();
    let mut pts = vec![[0.0, 0.0], [1.0, 0.0]];
    for _ in 0..level {
        let mut next = Vec::with_capacity(4 * pts.len());
        for w in pts.windows(2) {
            let (p, q) = (w[0], w[1]);
            let v = [q[0] - p[0], q[1] - p[1]];
            let a = [p[0] + r * v[0], p[1] + r * v[1]];
            let peak = [a[0] + r * (cos * v[0] - sin * v[1]), a[1] + r * (sin * v[0] + cos * v[1])];
            let b = [p[0] + (1.0 - r) * v[0], p[1] + (1.0 - r) * v[1]];
            next.extend_from_slice(&[p, a, peak, b]);
        }
        next.push(*pts.last().unwrap());
        pts = next;
    }
    let edge = |i: usize| ((pts[i + 1][0] - pts[i][0]).powi(2) + (pts[i + 1][1] - pts[i][1]).powi(2)).sqrt();
    let n = pts.len();
    let w: Vec<f64> = (0..n)
        .map(|i| {
            let left = if i > 0 { edge(i - 1) } else { 0.0 };
            let right = if i + 1 < n { edge(i) } else { 0.0 };
            (left + right) / 2.0
        })
        .collect();
    plane(&pts, w)
}

/// Centers of the `4^g` squares of generation `g` of the four-corner Cantor
/// set in the unit square, mass `4^-g` each.
pub fn gen_four_corner_cantor(generation: u32) -> Result<MetricMeasureSpace> {
    if generation == 0 {
        return Err(Error::invalid("Cantor generation must be at least 1"));
    }
    if generation > 8 {
        return Err(Error::invalid(format!("Cantor generation {generation} is too deep")));
    }
    let count = 4usize.pow(generation);
    let side = 0.25f64.powi(generation as i32);
    let pts: Vec<[f64; 2]> = (0..count)
        .map(|mut idx| {
            let mut corner = [0.0, 0.0];
            let mut step = 0.75;
            for _ in 0..generation {
                let digit = idx % 4;
                idx /= 4;
                corner[0] += step * (digit & 1) as f64;
                corner[1] += step * (digit >> 1) as f64;
                step /= 4.0;
            }
            [corner[0] + side / 2.0, corner[1] + side / 2.0]
        })
        .collect();
    plane(&pts, vec![side; count])
}

/// A curve with attached garbage, and which of its points lie on the curve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BigPieceSet {
    pub space: MetricMeasureSpace,
    /// Every point of the set.
    pub e_labels: PointSet,
    /// Points on the designated Lipschitz curve.
    pub etilde_labels: PointSet,
    /// Length of the garbage fragments; below a few multiples of this, cubes
    /// centered on garbage need not meet the curve.
    pub resolution: f64,
}

/// The graph of a random 1-Lipschitz function (the big piece) with
/// `GARBAGE_FRAGMENTS` vertical segments attached above evenly spaced points
/// of it. Fragment length is chosen so the curve carries a `theta` share of
/// the total mass; `theta = 1` gives the bare curve. About `theta * n` samples
/// go to the curve and the rest to the fragments, at matching spacing.
pub fn gen_bpli_union(theta: f64, n: usize, seed: u64) -> Result<BigPieceSet> {
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(Error::invalid(format!("theta {theta} not in (0, 1]")));
    }
    let profile = LipschitzProfile::random(1.0, seed);
    let total = profile.arclength();
    let (curve_n, garbage_n) = if theta == 1.0 {
        (n, 0)
    } else {
        let c = ((theta * n as f64).round() as usize).max(2);
        (c, n.saturating_sub(c))
    };
    if curve_n < 2 || (theta < 1.0 && garbage_n < GARBAGE_FRAGMENTS) {
        return Err(Error::invalid(format!("n = {n} is too small for theta = {theta}")));
    }
    let (mut pts, mut w) = profile.sample(curve_n);
    let mut resolution = 0.0;
    if garbage_n > 0 {
        let length = total * (1.0 - theta) / (theta * GARBAGE_FRAGMENTS as f64);
        resolution = length;
        for j in 0..GARBAGE_FRAGMENTS {
            let m = garbage_n / GARBAGE_FRAGMENTS + usize::from(j < garbage_n % GARBAGE_FRAGMENTS);
            let x = (j as f64 + 0.5) / GARBAGE_FRAGMENTS as f64;
            let base = profile.eval(x);
            let step = length / m as f64;
            for i in 0..m {
                pts.push([x, base + (i as f64 + 0.5) * step]);
                w.push(step);
            }
        }
    }
    let len = pts.len();
    let space = plane(&pts, w)?;
    Ok(BigPieceSet {
        space,
        e_labels: PointSet::full(len),
        etilde_labels: PointSet::from_mask((0..len).map(|i| i < curve_n).collect()),
        resolution,
    })
}

/// Whether the part of `E ∩ Ẽ` inside `cube` has mass at least
/// `theta * nominal_diam(cube)`.
pub fn check_big_piece(space: &MetricMeasureSpace, e_set: &PointSet, etilde_set: &PointSet, cube: &Cube, theta: f64) -> bool {
    let shared: Vec<usize> = cube
        .members
        .iter()
        .copied()
        .filter(|&p| e_set.contains(p) && etilde_set.contains(p))
        .collect();
    space.mass_of(&shared) >= theta * cube.nominal_diam
}
