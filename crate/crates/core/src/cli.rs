//! The `carleson` command line.
//!
//! Exit codes: 0 on success, 1 when a check fails (filtration violations, a
//! violated packing bound), 2 on bad arguments or unreadable input.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::carleson::{
    approx_with_distances, carleson_sum_balls, carleson_sum_cubes, distances_to, ApproxRecord, CarlesonReport, EstimatorConfig,
};
use crate::cubes::{
    build_filtration, build_nets, default_scale_range, multiresolution_balls, validate_filtration, Filtration, NetHierarchy,
};
use crate::error::{Error, Result};
use crate::generators::{gen_bpli_union, gen_circle, gen_four_corner_cantor, gen_koch, gen_lipschitz_graph, gen_segment};
use crate::io;
use crate::jns::{generate_instance, verify_jns, JnsInstance, Style};
use crate::metric::{MetricMeasureSpace, PointSet};

pub const DEFAULT_A: f64 = 4.0;
pub const DEFAULT_A_PRIME: f64 = 2.0 * DEFAULT_A;

#[derive(Parser, Debug)]
#[command(
    name = "carleson",
    version,
    about = "Multiscale triangle-excess Carleson sums on point clouds"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a generated point cloud as CSV.
    Generate(GenerateArgs),
    /// Build a cube filtration, validate it and dump its cubes as JSON.
    Cubes(CubesArgs),
    /// Carleson sum of beta3 over the cubes (or balls) of a point cloud.
    Analyze(AnalyzeArgs),
    /// Check the packing lemma on an instance file or a generated one.
    Jns(JnsArgs),
    /// Empirical Ahlfors-regularity ratios mass(Ball(x, r)) / r.
    Regularity(RegularityArgs),
    /// Normalized Carleson totals across a size ladder, classified as
    /// bounded or growing.
    TheoremCheck(TheoremArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Segment,
    Circle,
    Lipschitz,
    Koch,
    Cantor,
    Bpli,
}

#[derive(Args, Debug)]
struct GenerateArgs {
    kind: Kind,
    /// Point count; the level for koch, the generation for cantor.
    size: u32,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    lipschitz: f64,
    #[arg(long, default_value_t = std::f64::consts::FRAC_PI_3)]
    angle: f64,
    #[arg(long, default_value_t = 0.5)]
    theta: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug, Clone)]
struct InputArgs {
    /// Point-cloud CSV, or a distance matrix with --matrix.
    input: PathBuf,
    #[arg(long)]
    matrix: bool,
    /// Weights sidecar for --matrix; defaults to <input>.weights.csv.
    #[arg(long)]
    weights: Option<PathBuf>,
    /// Replace d by d^s.
    #[arg(long)]
    snowflake: Option<f64>,
}

impl InputArgs {
    fn load(&self) -> Result<MetricMeasureSpace> {
        let space = if self.matrix {
            let weights = self
                .weights
                .clone()
                .unwrap_or_else(|| self.input.with_extension("weights.csv"));
            io::read_matrix(&self.input, &weights)?
        } else {
            io::read_points(&self.input)?
        };
        match self.snowflake {
            Some(s) => space.snowflake(s),
            None => Ok(space),
        }
    }
}

#[derive(Args, Debug, Clone)]
struct FiltrationArgs {
    /// Number of scales, coarsest first; default runs until every point is
    /// its own net point.
    #[arg(long)]
    scales: Option<usize>,
    /// Which shifted filtration, 1-based.
    #[arg(long, default_value_t = 1)]
    shift: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl FiltrationArgs {
    fn build(&self, space: &MetricMeasureSpace) -> Result<(NetHierarchy, Filtration)> {
        let (k0, k1) = default_scale_range(space, self.scales);
        let nets = build_nets(space, k0, k1, self.seed)?;
        let f = build_filtration(space, &nets, self.shift)?;
        Ok((nets, f))
    }
}

#[derive(Args, Debug)]
struct CubesArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    filtration: FiltrationArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Estimator {
    Exact,
    Mc,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Form {
    Cubes,
    Balls,
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    filtration: FiltrationArgs,
    /// `exact` sums every set exactly; `mc` samples sets above --exact-cutoff.
    #[arg(long, value_enum, default_value_t = Estimator::Mc)]
    estimator: Estimator,
    #[arg(long, default_value_t = 300)]
    exact_cutoff: usize,
    #[arg(long, default_value_t = 100_000)]
    mc_samples: usize,
    #[arg(long, default_value_t = 1)]
    repeats: usize,
    #[arg(long, value_enum, default_value_t = Form::Cubes)]
    form: Form,
    /// Ball inflation for --form balls.
    #[arg(long = "A", default_value_t = DEFAULT_A)]
    a: f64,
    /// Enlargement for the decomposition check.
    #[arg(long = "A-prime")]
    a_prime: Option<f64>,
    /// Ball-form center; defaults to the root cube's center.
    #[arg(long)]
    x: Option<usize>,
    /// Ball-form radius; defaults to the root cube's nominal diameter.
    #[arg(long)]
    r: Option<f64>,
    /// Labels sidecar (`e,etilde`); defaults to <input>.labels.csv when present.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Per-cube decomposition records against the labelled curve.
    #[arg(long)]
    approx_out: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-scale CSV `scale,count,sum,normalized_sum`.
    #[arg(long)]
    scales_csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct JnsArgs {
    /// Instance JSON `{tree, alpha, N, eta}`.
    instance: Option<PathBuf>,
    /// `style,seed`, e.g. `sparse,3` or `uniform:0.8,1`.
    #[arg(long)]
    generate: Option<String>,
    /// Point cloud whose filtration carries the generated instance; defaults
    /// to a 256-point circle.
    #[arg(long)]
    points: Option<PathBuf>,
    #[arg(long = "N", default_value_t = 1.0)]
    n: f64,
    #[arg(long, default_value_t = 0.5)]
    eta: f64,
    /// Also write the generated instance.
    #[arg(long)]
    dump_instance: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RegularityArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Defaults to diameter / 256.
    #[arg(long)]
    r_min: Option<f64>,
    /// Defaults to the diameter.
    #[arg(long)]
    r_max: Option<f64>,
    #[arg(long, default_value_t = 2000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TheoremArgs {
    /// segment, circle, lipschitz-<L>, bpli, koch, cantor, or bpli-corpus for
    /// the rectifiable ladder. Repeatable.
    #[arg(long = "set")]
    sets: Vec<String>,
    /// Point counts for sized sets.
    #[arg(long, value_delimiter = ',', default_values_t = [256usize, 512, 1024, 2048])]
    sizes: Vec<usize>,
    /// Generations for cantor and levels for koch, as `a..b` (inclusive).
    #[arg(long, default_value = "2..5")]
    gens: String,
    /// Sets up to this many points are summed exactly.
    #[arg(long, default_value_t = 512)]
    exact_upto: usize,
    #[arg(long, default_value_t = 300)]
    exact_cutoff: usize,
    #[arg(long, default_value_t = 100_000)]
    mc_samples: usize,
    #[arg(long = "A", default_value_t = DEFAULT_A)]
    a: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    scales_csv: Option<PathBuf>,
}

/// Runs the command line and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    if let Some(threads) = std::env::var("MC_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads.max(1)).build_global();
    }
    let outcome = match cli.command {
        Command::Generate(a) => generate(a),
        Command::Cubes(a) => cubes(a),
        Command::Analyze(a) => analyze(a),
        Command::Jns(a) => jns(a),
        Command::Regularity(a) => regularity(a),
        Command::TheoremCheck(a) => theorem(a),
    };
    match outcome {
        Ok(Outcome::Ok) => 0,
        Ok(Outcome::Failed(msg)) => {
            eprintln!("check failed: {msg}");
            1
        }
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

enum Outcome {
    Ok,
    Failed(String),
}

fn emit<T: Serialize>(out: Option<&Path>, value: &T) -> Result<()> {
    match out {
        Some(path) => io::write_json(path, value),
        None => {
            println!("{}", serde_json::to_string_pretty(value)?);
            Ok(())
        }
    }
}

/// A generated set with its curve labels when it has any.
pub fn generate_set(
    kind: Kind,
    size: u32,
    lipschitz: f64,
    angle: f64,
    theta: f64,
    seed: u64,
) -> Result<(MetricMeasureSpace, Option<(PointSet, PointSet)>)> {
    let n = size as usize;
    Ok(match kind {
        Kind::Segment => (gen_segment(n)?, None),
        Kind::Circle => (gen_circle(n)?, None),
        Kind::Lipschitz => (gen_lipschitz_graph(n, lipschitz, seed)?, None),
        Kind::Koch => (gen_koch(size, angle)?, None),
        Kind::Cantor => (gen_four_corner_cantor(size)?, None),
        Kind::Bpli => {
            let b = gen_bpli_union(theta, n, seed)?;
            (b.space, Some((b.e_labels, b.etilde_labels)))
        }
    })
}

fn generate(a: GenerateArgs) -> Result<Outcome> {
    let (space, labels) = generate_set(a.kind, a.size, a.lipschitz, a.angle, a.theta, a.seed)?;
    io::write_points(&a.out, &space)?;
    if let Some((e, t)) = labels {
        io::write_labels(&io::labels_path(&a.out), &e, &t)?;
    }
    Ok(Outcome::Ok)
}

fn cubes(a: CubesArgs) -> Result<Outcome> {
    let space = a.input.load()?;
    let (_, f) = a.filtration.build(&space)?;
    emit(a.out.as_deref(), &f.cube_records())?;
    let violations = validate_filtration(&space, &f);
    for v in &violations {
        eprintln!("{} {:?}: {} (measured {})", v.cube, v.invariant, v.detail, v.measured);
    }
    Ok(if violations.is_empty() {
        Outcome::Ok
    } else {
        Outcome::Failed(format!("{} filtration violation(s)", violations.len()))
    })
}

fn write_scales(path: &Path, report: &CarlesonReport) -> Result<()> {
    io::write_csv(path, &["scale", "count", "sum", "normalized_sum"], report.scale_rows())
}

fn analyze(a: AnalyzeArgs) -> Result<Outcome> {
    let space = a.input.load()?;
    let (nets, f) = a.filtration.build(&space)?;
    let config = EstimatorConfig {
        exact_cutoff: match a.estimator {
            Estimator::Exact => usize::MAX,
            Estimator::Mc => a.exact_cutoff,
        },
        mc_samples: a.mc_samples,
        seed: a.filtration.seed,
        repeats: a.repeats,
    };
    config.validate()?;
    let root = f.root().ok_or_else(|| Error::invalid("filtration has no single root"))?;
    let report = match a.form {
        Form::Cubes => carleson_sum_cubes(&space, &f, root, &config)?,
        Form::Balls => {
            let family = multiresolution_balls(&nets, a.a)?;
            let x = a.x.unwrap_or(f.cube(root).center);
            let r = a.r.unwrap_or(f.cube(root).nominal_diam.min(space.diameter()));
            carleson_sum_balls(&space, &family, x, r, &config)?
        }
    };
    emit(a.out.as_deref(), &report)?;
    if let Some(path) = &a.scales_csv {
        write_scales(path, &report)?;
    }
    if let Some(path) = &a.approx_out {
        let labels = match &a.labels {
            Some(p) => p.clone(),
            None => io::labels_path(&a.input.input),
        };
        let (_, etilde) = io::read_labels(&labels, space.len())?;
        let dist = distances_to(&space, &etilde)?;
        let a_prime = a.a_prime.unwrap_or(2.0 * a.a);
        let mut records: BTreeMap<String, ApproxRecord> = BTreeMap::new();
        for cube in &f.cubes {
            if cube.members.iter().any(|&p| etilde.contains(p)) {
                records.insert(
                    cube.id.clone(),
                    approx_with_distances(&space, cube, &etilde, &dist, a_prime, &config)?,
                );
            }
        }
        io::write_json(path, &records)?;
    }
    Ok(Outcome::Ok)
}

fn jns(a: JnsArgs) -> Result<Outcome> {
    let instance: JnsInstance = match (&a.instance, &a.generate) {
        (Some(path), None) => io::read_json(path)?,
        (None, Some(spec)) => {
            let (style, seed) = spec
                .rsplit_once(',')
                .ok_or_else(|| Error::invalid(format!("--generate expects style,seed; got {spec:?}")))?;
            let style: Style = style.parse()?;
            let seed: u64 = seed.parse().map_err(|_| Error::invalid(format!("bad seed {seed:?}")))?;
            let space = match &a.points {
                Some(p) => io::read_points(p)?,
                None => gen_circle(256)?,
            };
            let (k0, k1) = default_scale_range(&space, None);
            let f = build_filtration(&space, &build_nets(&space, k0, k1, seed)?, 1)?;
            let inst = generate_instance(&f, style, a.n, a.eta, seed)?;
            if let Some(path) = &a.dump_instance {
                io::write_json(path, &inst)?;
            }
            inst
        }
        _ => return Err(Error::invalid("give either an instance file or --generate")),
    };
    let report = verify_jns(&instance)?;
    emit(a.out.as_deref(), &report)?;
    Ok(if report.pass {
        Outcome::Ok
    } else {
        Outcome::Failed(format!("{:?}", report.status))
    })
}

fn regularity(a: RegularityArgs) -> Result<Outcome> {
    let space = a.input.load()?;
    let r_max = a.r_max.unwrap_or(space.diameter());
    let r_min = a.r_min.unwrap_or(space.diameter() / 256.0);
    let report = space.check_ahlfors_regularity(r_min, r_max, a.samples, a.seed)?;
    emit(a.out.as_deref(), &report)?;
    Ok(Outcome::Ok)
}

/// One rung of a size ladder.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rung {
    /// Point count, or generation / level for self-similar sets.
    pub size: usize,
    pub points: usize,
    /// Cube-form ratio at the root.
    pub root_ratio: f64,
    /// Largest cube-form ratio over the root and the cubes of the next two
    /// scales.
    pub sup_cube_ratio: f64,
    pub sup_q0: String,
    /// Ball-form ratio centered at the root center with radius `diam / 2`.
    pub ball_ratio: f64,
    pub filtration_violations: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Trend {
    Bounded,
    Growing,
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SetSummary {
    pub set: String,
    pub rungs: Vec<Rung>,
    /// max / min of the root ratio over the ladder (1 when all vanish).
    pub spread: f64,
    /// Least-squares slope of the root ratio against the rung index.
    pub slope: f64,
    pub trend: Trend,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoremSummary {
    pub sets: Vec<SetSummary>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TheoremConfig {
    pub sets: Vec<String>,
    pub sizes: Vec<usize>,
    pub gens: Vec<u32>,
    pub exact_upto: usize,
    pub config: EstimatorConfig,
    pub a: f64,
}

/// Root ratios below this count as zero.
const NEGLIGIBLE: f64 = 1e-9;

/// Ratios stable within this factor count as bounded.
pub const BOUNDED_SPREAD: f64 = 1.5;

fn parse_range(s: &str) -> Result<Vec<u32>> {
    let bad = || Error::invalid(format!("expected a range a..b, got {s:?}"));
    let (a, b) = s.split_once("..").ok_or_else(bad)?;
    let (a, b): (u32, u32) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
    if a > b {
        return Err(bad());
    }
    Ok((a..=b).collect())
}

fn expand_sets(sets: &[String]) -> Vec<String> {
    sets.iter()
        .flat_map(|s| match s.as_str() {
            "bpli-corpus" => ["segment", "circle", "lipschitz-0.5", "lipschitz-1", "lipschitz-2", "bpli"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            _ => vec![s.clone()],
        })
        .collect()
}

fn build_set(name: &str, size: usize, seed: u64) -> Result<MetricMeasureSpace> {
    let n = size;
    match name {
        "segment" => gen_segment(n),
        "circle" => gen_circle(n),
        "bpli" => Ok(gen_bpli_union(0.5, n, seed)?.space),
        "cantor" => gen_four_corner_cantor(size as u32),
        "koch" => gen_koch(size as u32, std::f64::consts::FRAC_PI_3),
        other => match other.strip_prefix("lipschitz-").map(str::parse::<f64>) {
            Some(Ok(l)) => gen_lipschitz_graph(n, l, seed),
            _ => Err(Error::invalid(format!("unknown set {other:?}"))),
        },
    }
}

/// The cube-form and ball-form sums of one set at one size.
pub fn measure_rung(space: &MetricMeasureSpace, size: usize, config: &EstimatorConfig, a: f64) -> Result<(Rung, CarlesonReport)> {
    let (k0, k1) = default_scale_range(space, None);
    let nets = build_nets(space, k0, k1, config.seed)?;
    let f = build_filtration(space, &nets, 1)?;
    let violations = validate_filtration(space, &f).len();
    let root = f.root().ok_or_else(|| Error::invalid("filtration has no single root"))?;
    let report = carleson_sum_cubes(space, &f, root, config)?;
    let mut sup = (report.ratio, f.cube(root).id.clone());
    for level in f.levels.iter().skip(1).take(2) {
        for &q in level {
            let cube = f.cube(q);
            let total: f64 = crate::sum::neumaier_sum(f.subtree(q).iter().map(|&c| report.per_cube[&f.cube(c).id].beta3));
            let ratio = total / cube.nominal_diam;
            if ratio > sup.0 {
                sup = (ratio, cube.id.clone());
            }
        }
    }
    let family = multiresolution_balls(&nets, a)?;
    let balls = carleson_sum_balls(space, &family, f.cube(root).center, space.diameter() / 2.0, config)?;
    Ok((
        Rung {
            size,
            points: space.len(),
            root_ratio: report.ratio,
            sup_cube_ratio: sup.0,
            sup_q0: sup.1,
            ball_ratio: balls.ratio,
            filtration_violations: violations,
        },
        report,
    ))
}

/// Spread, slope and trend of a ladder of ratios.
pub fn classify(values: &[f64]) -> (f64, f64, Trend) {
    if values.is_empty() {
        return (1.0, 0.0, Trend::Inconclusive);
    }
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let spread = if max <= NEGLIGIBLE { 1.0 } else { max / min };
    let m = values.len() as f64;
    let mean_x = (m - 1.0) / 2.0;
    let mean_y = values.iter().sum::<f64>() / m;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, &y) in values.iter().enumerate() {
        let dx = i as f64 - mean_x;
        sxy += dx * (y - mean_y);
        sxx += dx * dx;
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let increasing = values.windows(2).all(|w| w[1] > w[0]);
    let trend = if spread <= BOUNDED_SPREAD {
        Trend::Bounded
    } else if increasing && slope > 0.1 * values[0] {
        Trend::Growing
    } else {
        Trend::Inconclusive
    };
    (spread, slope, trend)
}

/// Scale rows `set,size,scale,count,sum,normalized_sum` for every rung.
pub type ScaleRow = (String, usize, i32, usize, f64, f64);

pub fn theorem_check(cfg: &TheoremConfig) -> Result<(TheoremSummary, Vec<ScaleRow>)> {
    let mut sets = Vec::new();
    let mut rows = Vec::new();
    for name in expand_sets(&cfg.sets) {
        let ladder: Vec<usize> = if name == "cantor" || name == "koch" {
            cfg.gens.iter().map(|&g| g as usize).collect()
        } else {
            cfg.sizes.clone()
        };
        let mut rungs = Vec::new();
        for size in ladder {
            let space = build_set(&name, size, cfg.config.seed)?;
            let config = if space.len() <= cfg.exact_upto {
                EstimatorConfig {
                    exact_cutoff: usize::MAX,
                    ..cfg.config
                }
            } else {
                cfg.config
            };
            let (rung, report) = measure_rung(&space, size, &config, cfg.a)?;
            for (k, count, sum, norm) in report.scale_rows() {
                rows.push((name.clone(), size, k, count, sum, norm));
            }
            rungs.push(rung);
        }
        let ratios: Vec<f64> = rungs.iter().map(|r| r.root_ratio).collect();
        let (spread, slope, trend) = classify(&ratios);
        sets.push(SetSummary {
            set: name,
            rungs,
            spread,
            slope,
            trend,
        });
    }
    Ok((TheoremSummary { sets }, rows))
}

fn theorem(a: TheoremArgs) -> Result<Outcome> {
    let cfg = TheoremConfig {
        sets: a.sets,
        sizes: a.sizes,
        gens: parse_range(&a.gens)?,
        exact_upto: a.exact_upto,
        config: EstimatorConfig {
            exact_cutoff: a.exact_cutoff,
            mc_samples: a.mc_samples,
            seed: a.seed,
            repeats: 1,
        },
        a: a.a,
    };
    cfg.config.validate()?;
    let (summary, rows) = theorem_check(&cfg)?;
    emit(a.out.as_deref(), &summary)?;
    if let Some(path) = &a.scales_csv {
        io::write_csv(path, &["set", "size", "scale", "count", "sum", "normalized_sum"], rows)?;
    }
    let broken: usize = summary
        .sets
        .iter()
        .flat_map(|s| &s.rungs)
        .map(|r| r.filtration_violations)
        .sum();
    Ok(if broken == 0 {
        Outcome::Ok
    } else {
        Outcome::Failed(format!("{broken} filtration violation(s)"))
    })
}
