//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the lines print in order; the process
//! exits nonzero if any criterion fails.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use carleson::carleson::{
    approx_with_distances, carleson_sum_cubes, dist_carleson_sum, distances_to, exact_triple_sum, mc_triple_sum, EstimatorConfig,
    Method,
};
use carleson::cli::{classify, measure_rung, Rung, Trend, DEFAULT_A, DEFAULT_A_PRIME};
use carleson::cubes::{build_filtration, build_nets, default_scale_range, validate_filtration, Filtration};
use carleson::generators::{gen_bpli_union, gen_circle, gen_four_corner_cantor, gen_koch, gen_lipschitz_graph, gen_segment};
use carleson::jns::{generate_instance, verify_jns, Style};
use carleson::metric::{MetricMeasureSpace, PointSet};
use carleson::rng::stream_rng;
use rand::Rng;

/// Generation 2..5 root ratios of the four-corner Cantor set, exact.
const CANTOR_BASELINE: [f64; 4] = [
    0.12696054274387744,
    0.16701528179127229,
    0.2190786194455323,
    0.2756145436481775,
];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn filtration(space: &MetricMeasureSpace, seed: u64) -> Filtration {
    let (k0, k1) = default_scale_range(space, None);
    build_filtration(space, &build_nets(space, k0, k1, seed).unwrap(), 1).unwrap()
}

/// `max / min` over a pair, 1 when both vanish.
fn factor(a: f64, b: f64) -> f64 {
    const TINY: f64 = 1e-9;
    if a <= TINY && b <= TINY {
        1.0
    } else {
        a.max(b) / a.min(b)
    }
}

/// The corpus of rectifiable sets at size `n`, with the curve part of each.
fn corpus(n: usize) -> Vec<(String, MetricMeasureSpace, PointSet)> {
    let full = |name: &str, s: MetricMeasureSpace| {
        let e = PointSet::full(s.len());
        (name.to_string(), s, e)
    };
    let b = gen_bpli_union(0.5, n, 0).unwrap();
    vec![
        full("segment", gen_segment(n).unwrap()),
        full("circle", gen_circle(n).unwrap()),
        full("lipschitz-0.5", gen_lipschitz_graph(n, 0.5, 0).unwrap()),
        full("lipschitz-1", gen_lipschitz_graph(n, 1.0, 0).unwrap()),
        full("lipschitz-2", gen_lipschitz_graph(n, 2.0, 0).unwrap()),
        ("bpli".to_string(), b.space, b.etilde_labels),
    ]
}

fn brute_delta(d: [f64; 3]) -> f64 {
    // d = [d(x,y), d(y,z), d(x,z)]; try each point as the middle one.
    let [xy, yz, xz] = d;
    (xy + yz - xz).min(xy + xz - yz).min(xz + yz - xy).max(0.0)
}

fn delta_suite() -> Outcome {
    const TRIPLES: usize = 100_000;
    const TOL: f64 = 1e-9;
    let mut rng = stream_rng(1, "acceptance-delta");
    let n = 200;
    let mut coords = Vec::new();
    for _ in 0..2 * n {
        coords.push(rng.random::<f64>());
    }
    let plane = MetricMeasureSpace::euclidean(2, coords.clone(), vec![1.0; n]).unwrap();
    let mut l1 = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            l1[i * n + j] = (coords[2 * i] - coords[2 * j]).abs() + (coords[2 * i + 1] - coords[2 * j + 1]).abs();
        }
    }
    let matrix = MetricMeasureSpace::from_matrix(l1, vec![1.0; n]).unwrap();
    let snow = plane.clone().snowflake(0.5).unwrap();
    let mut bad = Vec::new();
    for (kind, s) in [("euclidean", &plane), ("matrix", &matrix), ("snowflake", &snow)] {
        let scale = s.diameter();
        let mut failures = 0usize;
        for _ in 0..TRIPLES {
            let (x, y, z, w) = (
                rng.random_range(0..n),
                rng.random_range(0..n),
                rng.random_range(0..n),
                rng.random_range(0..n),
            );
            let v = s.excess_delta(x, y, z).unwrap();
            let oracle = brute_delta([s.d(x, y), s.d(y, z), s.d(x, z)]);
            let perms = [(x, z, y), (y, x, z), (y, z, x), (z, x, y), (z, y, x)];
            let symmetric = perms
                .iter()
                .all(|&(a, b, c)| (s.excess_delta(a, b, c).unwrap() - v).abs() <= TOL * scale);
            let moved = s.excess_delta(w, y, z).unwrap();
            let lipschitz = (moved - v).abs() <= 2.0 * s.d(x, w) * (1.0 + TOL) + TOL * scale;
            if !(v >= 0.0 && (v - oracle).abs() <= TOL * scale && symmetric && lipschitz) {
                failures += 1;
            }
        }
        if failures > 0 {
            bad.push(format!("{kind}: {failures}"));
        }
    }
    // Ordered collinear triples on a tilted line.
    let t: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let (c, sn) = (0.3f64.cos(), 0.3f64.sin());
    let line: Vec<f64> = t.iter().flat_map(|&u| [0.2 + u * c, -0.1 + u * sn]).collect();
    let line = MetricMeasureSpace::euclidean(2, line, vec![1.0; n]).unwrap();
    let collinear = (0..TRIPLES)
        .filter(|_| {
            let (x, y, z) = (rng.random_range(0..n), rng.random_range(0..n), rng.random_range(0..n));
            line.excess_delta(x, y, z).unwrap() > TOL * line.diameter()
        })
        .count();
    if collinear > 0 {
        bad.push(format!("collinear: {collinear}"));
    }
    outcome(
        bad.is_empty(),
        format!("3 metric kinds x {TRIPLES} triples, failures [{}]", bad.join(", ")),
    )
}

fn filtration_suite() -> Outcome {
    let mut spaces: Vec<(String, MetricMeasureSpace)> = Vec::new();
    for n in [256, 512, 1024, 2048] {
        for (name, s, _) in corpus(n) {
            spaces.push((format!("{name}/{n}"), s));
        }
        for theta in [0.2, 0.8] {
            spaces.push((format!("bpli-{theta}/{n}"), gen_bpli_union(theta, n, 3).unwrap().space));
        }
    }
    for g in 1..=5 {
        spaces.push((format!("cantor/{g}"), gen_four_corner_cantor(g).unwrap()));
    }
    for level in 1..=5 {
        for angle in [0.2, std::f64::consts::FRAC_PI_3, 1.4] {
            spaces.push((format!("koch-{angle:.2}/{level}"), gen_koch(level, angle).unwrap()));
        }
    }
    let mut broken = Vec::new();
    for (name, s) in &spaces {
        for seed in [0, 1] {
            let v = validate_filtration(s, &filtration(s, seed));
            if !v.is_empty() {
                broken.push(format!("{name} seed {seed}: {} ({})", v.len(), v[0].detail));
            }
        }
    }
    outcome(
        broken.is_empty(),
        format!("{} spaces x 2 seeds, violations in [{}]", spaces.len(), broken.join("; ")),
    )
}

struct Ladder {
    set: String,
    rungs: Vec<Rung>,
}

/// Root ratios across the size ladder, exact up to 512 points and Monte
/// Carlo above; every Monte Carlo rung is checked against the exact sum.
fn rectifiable_ladders() -> (Vec<Ladder>, Vec<String>) {
    let mut ladders: BTreeMap<String, Vec<Rung>> = BTreeMap::new();
    let mut disagreements = Vec::new();
    for n in [256, 512, 1024, 2048] {
        for (name, s, _) in corpus(n) {
            let config = if n <= 512 {
                EstimatorConfig::exact()
            } else {
                EstimatorConfig::default()
            };
            let (rung, report) = measure_rung(&s, n, &config, DEFAULT_A).unwrap();
            if n > 512 {
                let f = filtration(&s, config.seed);
                let (mut mc, mut exact, mut var) = (0.0, 0.0, 0.0);
                for cube in &f.cubes {
                    let b = report.per_cube[&cube.id];
                    if b.method == Method::Mc {
                        mc += b.beta3;
                        var += b.stderr * b.stderr;
                        exact += exact_triple_sum(&s, &cube.members) / cube.nominal_diam.powi(3);
                    }
                }
                if (mc - exact).abs() > 3.0 * var.sqrt() + 1e-12 * exact {
                    disagreements.push(format!("{name}/{n}: mc {mc:.6} exact {exact:.6} sigma {:.2e}", var.sqrt()));
                }
            }
            ladders.entry(name).or_default().push(rung);
        }
    }
    let ladders = ladders.into_iter().map(|(set, rungs)| Ladder { set, rungs }).collect();
    (ladders, disagreements)
}

fn rectifiable_boundedness(ladders: &[Ladder], disagreements: &[String]) -> Outcome {
    let mut lines = Vec::new();
    let mut pass = disagreements.is_empty();
    for l in ladders {
        let ratios: Vec<f64> = l.rungs.iter().map(|r| r.root_ratio).collect();
        let (spread, _, trend) = classify(&ratios);
        pass &= trend == Trend::Bounded && ratios.iter().all(|r| r.is_finite());
        lines.push(format!("{} {:.3} ({})", l.set, spread, fmt(&ratios)));
    }
    outcome(
        pass,
        format!(
            "spread <= 1.5: {}; mc disagreements [{}]",
            lines.join(", "),
            disagreements.join("; ")
        ),
    )
}

fn fmt(values: &[f64]) -> String {
    values.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>().join(" ")
}

fn cantor_growth() -> Outcome {
    let ratios: Vec<f64> = (2..=5)
        .map(|g| {
            let s = gen_four_corner_cantor(g).unwrap();
            let f = filtration(&s, 0);
            carleson_sum_cubes(&s, &f, f.root().unwrap(), &EstimatorConfig::exact())
                .unwrap()
                .ratio
        })
        .collect();
    let (_, slope, _) = classify(&ratios);
    let increasing = ratios.windows(2).all(|w| w[1] > w[0]);
    let pinned = ratios.iter().zip(CANTOR_BASELINE).all(|(r, b)| (r - b).abs() <= 1e-9 * b);
    outcome(
        increasing && slope > 0.1 * ratios[0] && pinned,
        format!(
            "g=2..5 ratios {}, slope {slope:.4} > {:.4}, matches baseline: {pinned}",
            fmt(&ratios),
            0.1 * ratios[0]
        ),
    )
}

fn jns_suite() -> Outcome {
    const INSTANCES: usize = 1000;
    let trees: Vec<Filtration> = vec![
        filtration(&gen_segment(32).unwrap(), 0),
        filtration(&gen_segment(128).unwrap(), 1),
        filtration(&gen_circle(64).unwrap(), 0),
        filtration(&gen_four_corner_cantor(3).unwrap(), 0),
        filtration(&gen_koch(3, std::f64::consts::FRAC_PI_3).unwrap(), 0),
        filtration(&gen_lipschitz_graph(100, 2.0, 4).unwrap(), 0),
        filtration(&gen_bpli_union(0.5, 128, 2).unwrap().space, 0),
    ];
    let styles = [
        Style::Uniform { budget: 0.5 },
        Style::Uniform { budget: 2.0 },
        Style::Uniform { budget: 8.0 },
        Style::Sparse,
        Style::Adversarial,
    ];
    let ns = [0.5, 1.0, 3.0];
    let etas = [0.2, 0.5, 0.8];
    let (mut bound_failures, mut decay_failures, mut worst) = (0usize, 0usize, 0.0f64);
    for i in 0..INSTANCES {
        let tree = &trees[i % trees.len()];
        let style = styles[(i / trees.len()) % styles.len()];
        let (n, eta) = (ns[i % 3], etas[(i / 3) % 3]);
        let inst = generate_instance(tree, style, n, eta, i as u64).unwrap();
        let report = verify_jns(&inst).unwrap();
        if !report.pass {
            bound_failures += 1;
        }
        worst = worst.max(report.worst_ratio / report.bound);
        let prep = inst.prepare().unwrap();
        for q0 in 0..tree.cubes.len() {
            let layers = prep.stopping_time_decomposition(q0).unwrap();
            let mass = |layer: &Vec<usize>| layer.iter().map(|&c| tree.cube(c).mass).sum::<f64>();
            for w in layers.windows(2) {
                if mass(&w[1]) > (1.0 - eta) * mass(&w[0]) * (1.0 + 1e-12) {
                    decay_failures += 1;
                }
            }
        }
    }
    outcome(
        bound_failures == 0 && decay_failures == 0,
        format!(
            "{INSTANCES} instances, bound failures {bound_failures}, layer decay failures {decay_failures}, max packing/bound {worst:.3}"
        ),
    )
}

/// Largest decomposition ratio over cubes meeting the curve part.
fn approx_max(space: &MetricMeasureSpace, etilde: &PointSet) -> f64 {
    let f = filtration(space, 0);
    let dist = distances_to(space, etilde).unwrap();
    let config = EstimatorConfig::default();
    f.cubes
        .iter()
        .filter(|c| c.members.iter().any(|&p| etilde.contains(p)))
        .map(|c| {
            approx_with_distances(space, c, etilde, &dist, DEFAULT_A_PRIME, &config)
                .unwrap()
                .ratio
        })
        .fold(0.0, f64::max)
}

fn approx_stability() -> Outcome {
    let mut maxima: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for n in [2048, 4096, 8192] {
        for (name, s, etilde) in corpus(n) {
            maxima.entry(name).or_default().push(approx_max(&s, &etilde));
        }
    }
    let pass = maxima
        .values()
        .all(|m| m.iter().all(|v| v.is_finite()) && m.windows(2).all(|w| factor(w[0], w[1]) <= 2.0));
    let small: Vec<f64> = [256, 512, 1024]
        .iter()
        .map(|&n| {
            let b = gen_bpli_union(0.5, n, 0).unwrap();
            approx_max(&b.space, &b.etilde_labels)
        })
        .collect();
    let lines: Vec<String> = maxima.iter().map(|(k, v)| format!("{k} {}", fmt(v))).collect();
    outcome(
        pass,
        format!(
            "max ratio at n=2048,4096,8192: {}; bpli at n=256,512,1024 (not asserted): {}",
            lines.join(", "),
            fmt(&small)
        ),
    )
}

fn distance_series() -> Outcome {
    const C: f64 = 16.0;
    let mut worst = (0.0f64, String::new());
    let mut mismatch = 0usize;
    let mut spaces = Vec::new();
    for n in [256, 512, 1024, 2048] {
        for (name, s, etilde) in corpus(n) {
            spaces.push((format!("{name}/{n}"), s, etilde));
        }
        for seed in [1, 2] {
            for theta in [0.3, 0.5, 0.7] {
                let b = gen_bpli_union(theta, n, seed).unwrap();
                spaces.push((format!("bpli-{theta}-s{seed}/{n}"), b.space, b.etilde_labels));
            }
        }
    }
    for (name, s, etilde) in &spaces {
        let f = filtration(s, 0);
        let e = PointSet::full(s.len());
        let dist = distances_to(s, etilde).unwrap();
        // Subtree sums, finest level first.
        let mut sums: Vec<f64> = f
            .cubes
            .iter()
            .map(|c| {
                if c.members.iter().any(|&p| etilde.contains(p)) {
                    c.members.iter().map(|&p| dist[p] * s.weight(p)).sum::<f64>() / c.nominal_diam
                } else {
                    0.0
                }
            })
            .collect();
        for level in f.levels.iter().rev() {
            for &q in level {
                if let Some(p) = f.cube(q).parent {
                    sums[p] += sums[q];
                }
            }
        }
        let root = f.root().unwrap();
        for q in [root].into_iter().chain(f.levels[1].iter().copied()) {
            let api = dist_carleson_sum(s, &e, etilde, &f, q).unwrap();
            if (api - sums[q]).abs() > 1e-9 * api.max(1e-300) {
                mismatch += 1;
            }
        }
        for (q, c) in f.cubes.iter().enumerate() {
            if c.members.iter().any(|&p| etilde.contains(p)) {
                let ratio = sums[q] / c.nominal_diam;
                if ratio > worst.0 {
                    worst = (ratio, format!("{name} {}", c.id));
                }
            }
        }
    }
    outcome(
        worst.0 <= C && mismatch == 0,
        format!(
            "{} spaces, max sum/diam {:.3} at {} (C = {C}), oracle mismatches {mismatch}",
            spaces.len(),
            worst.0,
            worst.1
        ),
    )
}

fn ball_cube(ladders: &[Ladder]) -> Outcome {
    let mut worst = (1.0f64, String::new());
    for l in ladders {
        for r in &l.rungs {
            let f = factor(r.ball_ratio, r.root_ratio);
            if f > worst.0 {
                worst = (f, format!("{}/{}", l.set, r.size));
            }
        }
    }
    outcome(worst.0 <= 8.0, format!("max ball/cube factor {:.3} at {}", worst.0, worst.1))
}

fn determinism_and_calibration() -> Outcome {
    let s = gen_bpli_union(0.5, 1024, 0).unwrap().space;
    let f = filtration(&s, 0);
    let config = EstimatorConfig {
        exact_cutoff: 100,
        mc_samples: 20_000,
        seed: 7,
        repeats: 1,
    };
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| serde_json::to_string(&carleson_sum_cubes(&s, &f, f.root().unwrap(), &config).unwrap()).unwrap())
    };
    let identical = run(1) == run(4);

    const TRIALS: u64 = 200;
    let small = gen_bpli_union(0.5, 256, 1).unwrap().space;
    let f = filtration(&small, 0);
    let cubes: Vec<_> = f.cubes.iter().filter(|c| (3..=300).contains(&c.members.len())).collect();
    let exact: Vec<f64> = cubes.iter().map(|c| exact_triple_sum(&small, &c.members)).collect();
    let (mut inside, mut total) = (0usize, 0usize);
    for trial in 0..TRIALS {
        let config = EstimatorConfig::monte_carlo(2000, trial);
        for (c, &e) in cubes.iter().zip(&exact) {
            let (v, se) = mc_triple_sum(&small, &c.members, &config, &format!("beta3:{}", c.id)).unwrap();
            total += 1;
            if (v - e).abs() <= 3.0 * se + 1e-12 * e {
                inside += 1;
            }
        }
    }
    let share = inside as f64 / total as f64;
    outcome(
        identical && share >= 0.95,
        format!(
            "1 vs 4 threads identical: {identical}; mc within 3 sigma on {:.2}% of {total} cube trials",
            100.0 * share
        ),
    )
}

fn report(number: usize, title: &str, time: Duration, o: &Outcome) -> bool {
    println!(
        "criterion {number}: {} {title} [{:.1}s] {}",
        if o.pass { "PASS" } else { "FAIL" },
        time.as_secs_f64(),
        o.detail
    );
    o.pass
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let t = Instant::now();
    let v = f();
    (v, t.elapsed())
}

fn main() {
    let mut all = true;
    let mut check = |number: usize, title: &str, limit: Option<Duration>, (o, time): (Outcome, Duration)| {
        let o = match limit {
            Some(limit) if time > limit => outcome(false, format!("{} (over the {}s budget)", o.detail, limit.as_secs())),
            _ => o,
        };
        all &= report(number, title, time, &o);
    };
    check(1, "triangle excess", Some(Duration::from_secs(10)), timed(delta_suite));
    check(
        2,
        "filtration invariants",
        Some(Duration::from_secs(30)),
        timed(filtration_suite),
    );
    let ((ladders, disagreements), ladder_time) = timed(rectifiable_ladders);
    check(
        3,
        "rectifiable boundedness",
        Some(Duration::from_secs(600)),
        (rectifiable_boundedness(&ladders, &disagreements), ladder_time),
    );
    check(4, "cantor growth", Some(Duration::from_secs(600)), timed(cantor_growth));
    check(5, "packing bound N/eta^2", Some(Duration::from_secs(60)), timed(jns_suite));
    check(6, "decomposition stability", None, timed(approx_stability));
    check(7, "distance series", None, timed(distance_series));
    check(8, "ball/cube comparability", None, (ball_cube(&ladders), Duration::ZERO));
    check(9, "determinism and calibration", None, timed(determinism_and_calibration));
    if !all {
        std::process::exit(1);
    }
}
