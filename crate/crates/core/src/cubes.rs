//! Separated nets, the multiresolution ball family and dyadic cube filtrations.
//!
//! Scales are `s_k = diameter * 2^-k`. The scale-`k` net is a maximal
//! `s_k`-separated set, and nets are nested: every scale-`k` net point is also
//! a net point at every finer scale.
//!
//! Cubes are built top-down. Before any cube is cut, every point within
//! `s_j / 8` of a scale-`j` net point is glued to that net point, for every
//! scale `j`; the glued components at scale `k` and finer are never split by a
//! scale-`k` boundary. Within a parent cube each component then joins the net
//! point it contains, or else the nearest net point of the next scale whose
//! parent is the same cube. Gluing is what guarantees the inner ball of every
//! cube; separation and covering of the nets keep cubes within a few scales of
//! their centers.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::MetricMeasureSpace;
use crate::rng::permutation_ranks;

/// Ratio between consecutive scales.
pub const SCALE_RATIO: f64 = 0.5;
/// Radius factor of the ball around a cube center that must lie inside the cube.
pub const INNER_CONTAINMENT: f64 = 1.0 / 8.0;
/// Radius factor of the ball around a cube center that must contain the cube.
pub const OUTER_CONTAINMENT: f64 = 4.0;
/// Default number of shifted filtrations.
pub const DEFAULT_FILTRATION_COUNT: usize = 3;

/// Relative slack when comparing a distance against a scale.
const SCALE_EPS: f64 = 1e-9;
/// Distances within this relative gap are treated as ties.
const TIE_EPS: f64 = 1e-12;

pub fn nominal_scale(diameter: f64, k: i32) -> f64 {
    diameter * SCALE_RATIO.powi(k)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetInsertion {
    /// Repeatedly add the point farthest from the current net.
    #[default]
    FarthestPoint,
    /// Scan points in index order and add any point not yet covered.
    IndexOrder,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetLevel {
    pub k: i32,
    pub scale: f64,
    /// Net points in insertion order.
    pub net: Vec<usize>,
    /// Nearest net point of every point.
    pub assignment: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetHierarchy {
    pub k_min: i32,
    pub k_max: i32,
    pub diameter: f64,
    pub ratio: f64,
    pub seed: u64,
    pub insertion: NetInsertion,
    pub levels: Vec<NetLevel>,
}

/// `true` if `(d, rank)` is a strictly better assignment than `(best, best_rank)`.
#[inline]
fn closer(d: f64, rank: usize, best: f64, best_rank: usize) -> bool {
    if (d - best).abs() <= TIE_EPS * d.max(best) {
        rank < best_rank
    } else {
        d < best
    }
}

/// Tie-breaking ranks for filtration `shift` (1-based). Index-order nets break
/// ties by index on the first filtration.
fn tie_ranks(n: usize, seed: u64, insertion: NetInsertion, shift: usize) -> Vec<usize> {
    if shift <= 1 && insertion == NetInsertion::IndexOrder {
        (0..n).collect()
    } else if shift <= 1 {
        permutation_ranks(n, seed, "net-ties")
    } else {
        permutation_ranks(n, seed, &format!("net-ties-shift-{shift}"))
    }
}

/// Nested nets at scales `k_min..=k_max` by farthest-point insertion.
pub fn build_nets(space: &MetricMeasureSpace, k_min: i32, k_max: i32, seed: u64) -> Result<NetHierarchy> {
    build_nets_with(space, k_min, k_max, seed, NetInsertion::FarthestPoint)
}

pub fn build_nets_with(
    space: &MetricMeasureSpace,
    k_min: i32,
    k_max: i32,
    seed: u64,
    insertion: NetInsertion,
) -> Result<NetHierarchy> {
    let n = space.len();
    if n < 2 || space.diameter() <= 0.0 {
        return Err(Error::Degenerate(format!("cannot build nets on {n} point(s)")));
    }
    if k_min > k_max {
        return Err(Error::invalid(format!("k_min {k_min} exceeds k_max {k_max}")));
    }
    let rank = tie_ranks(n, seed, insertion, 1);
    let first = match insertion {
        // an endpoint of a diametral pair; the seed picks among tied points
        NetInsertion::FarthestPoint => {
            let reach = |p: usize| (0..n).map(|q| space.d(p, q)).fold(0.0, f64::max);
            let cut = space.diameter() * (1.0 - TIE_EPS);
            (0..n).filter(|&p| reach(p) >= cut).min_by_key(|&p| rank[p]).unwrap()
        }
        NetInsertion::IndexOrder => 0,
    };
    let mut in_net = vec![false; n];
    let mut net = vec![first];
    in_net[first] = true;
    let mut nearest = vec![first; n];
    let mut dist: Vec<f64> = (0..n).map(|p| space.d(p, first)).collect();

    let add = |q: usize, net: &mut Vec<usize>, in_net: &mut Vec<bool>, nearest: &mut Vec<usize>, dist: &mut Vec<f64>| {
        net.push(q);
        in_net[q] = true;
        for p in 0..n {
            let d = space.d(p, q);
            if closer(d, rank[q], dist[p], rank[nearest[p]]) {
                dist[p] = d;
                nearest[p] = q;
            }
        }
    };

    let mut levels = Vec::with_capacity((k_max - k_min + 1) as usize);
    for k in k_min..=k_max {
        let scale = nominal_scale(space.diameter(), k);
        let threshold = scale * (1.0 + SCALE_EPS);
        match insertion {
            NetInsertion::FarthestPoint => loop {
                let mut far = None;
                let mut far_d = threshold;
                for p in 0..n {
                    if in_net[p] {
                        continue;
                    }
                    let better = match far {
                        None => dist[p] > far_d,
                        Some(f) => dist[p] > far_d || (dist[p] == far_d && rank[p] < rank[f]),
                    };
                    if better {
                        far = Some(p);
                        far_d = dist[p];
                    }
                }
                match far {
                    Some(q) => add(q, &mut net, &mut in_net, &mut nearest, &mut dist),
                    None => break,
                }
            },
            NetInsertion::IndexOrder => {
                for p in 0..n {
                    if !in_net[p] && dist[p] > threshold {
                        add(p, &mut net, &mut in_net, &mut nearest, &mut dist);
                    }
                }
            }
        }
        levels.push(NetLevel {
            k,
            scale,
            net: net.clone(),
            assignment: nearest.clone(),
        });
    }
    Ok(NetHierarchy {
        k_min,
        k_max,
        diameter: space.diameter(),
        ratio: SCALE_RATIO,
        seed,
        insertion,
        levels,
    })
}

/// The coarsest scale index is 0; the finest is the first scale below the
/// minimum pairwise distance (so every point is a net point), capped at
/// `max_levels - 1` when given.
pub fn default_scale_range(space: &MetricMeasureSpace, max_levels: Option<usize>) -> (i32, i32) {
    let n = space.len();
    let mut min_d = f64::INFINITY;
    for i in 0..n {
        for j in (i + 1)..n {
            min_d = min_d.min(space.d(i, j));
        }
    }
    let mut k_max = 0;
    while nominal_scale(space.diameter(), k_max) * (1.0 + 2.0 * SCALE_EPS) >= min_d && k_max < 60 {
        k_max += 1;
    }
    if let Some(m) = max_levels {
        k_max = k_max.min(m.max(1) as i32 - 1);
    }
    (0, k_max)
}

impl NetHierarchy {
    pub fn level(&self, k: i32) -> Option<&NetLevel> {
        self.levels.get(usize::try_from(k - self.k_min).ok()?)
    }

    /// Checks separation, covering and nesting; returns one message per failure.
    pub fn check(&self, space: &MetricMeasureSpace) -> Vec<String> {
        let mut problems = Vec::new();
        for (idx, level) in self.levels.iter().enumerate() {
            let lo = level.scale * (1.0 - SCALE_EPS);
            let hi = level.scale * (1.0 + SCALE_EPS);
            for (a, &p) in level.net.iter().enumerate() {
                for &q in &level.net[a + 1..] {
                    if space.d(p, q) < lo {
                        problems.push(format!(
                            "scale {}: net points {p} and {q} closer than {}",
                            level.k, level.scale
                        ));
                    }
                }
            }
            for (p, &c) in level.assignment.iter().enumerate() {
                if space.d(p, c) > hi {
                    problems.push(format!(
                        "scale {}: point {p} is {} from its net point",
                        level.k,
                        space.d(p, c)
                    ));
                }
            }
            if idx > 0 {
                let prev = &self.levels[idx - 1].net;
                if level.net[..prev.len()] != prev[..] {
                    problems.push(format!("scale {}: net does not extend the coarser net", level.k));
                }
            }
        }
        problems
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilyBall {
    pub center: usize,
    pub radius: f64,
    pub scale: i32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BallFamily {
    pub inflation: f64,
    pub balls: Vec<FamilyBall>,
}

/// One ball of radius `inflation * s_k` per net point and scale.
pub fn multiresolution_balls(hierarchy: &NetHierarchy, inflation: f64) -> Result<BallFamily> {
    if !(inflation >= 1.0 && inflation.is_finite()) {
        return Err(Error::invalid(format!("ball inflation {inflation} must be at least 1")));
    }
    let balls = hierarchy
        .levels
        .iter()
        .flat_map(|level| {
            level.net.iter().map(move |&center| FamilyBall {
                center,
                radius: inflation * level.scale,
                scale: level.k,
            })
        })
        .collect();
    Ok(BallFamily { inflation, balls })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cube {
    /// `k:<scale>:<center>`.
    pub id: String,
    pub scale: i32,
    pub center: usize,
    /// Sorted point indices.
    pub members: Vec<usize>,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    pub nominal_diam: f64,
    pub actual_diam: f64,
    pub mass: f64,
}

pub fn cube_id(scale: i32, center: usize) -> String {
    format!("k:{scale}:{center}")
}

/// A dyadic filtration: a tree of cubes, one partition of the point set per
/// scale. Cube indices refer to positions in `cubes`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Filtration {
    pub shift: usize,
    pub filtration_count: usize,
    pub k_min: i32,
    pub k_max: i32,
    pub point_count: usize,
    pub cubes: Vec<Cube>,
    /// Cube indices per scale, coarsest first.
    pub levels: Vec<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CubeRecord {
    pub id: String,
    pub scale: i32,
    pub center: usize,
    pub parent: Option<String>,
    pub member_count: usize,
    pub nominal_diam: f64,
    pub actual_diam: f64,
    pub mass: f64,
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}

fn nearest_to_group(space: &MetricMeasureSpace, group: &[usize], candidates: &[usize], rank: &[usize]) -> usize {
    let gap = |z: usize| group.iter().map(|&p| space.d(p, z)).fold(f64::INFINITY, f64::min);
    let mut best = candidates[0];
    let mut best_d = gap(best);
    for &z in &candidates[1..] {
        let d = gap(z);
        if closer(d, rank[z], best_d, rank[best]) {
            best = z;
            best_d = d;
        }
    }
    best
}

fn group_reach(space: &MetricMeasureSpace, group: &[usize], z: usize) -> f64 {
    group.iter().map(|&p| space.d(p, z)).fold(0.0, f64::max)
}

/// Scale index below which `group` and `z` already share ancestors, if the
/// group may be moved under `z` at every finer scale without splitting a
/// glued component.
fn relocate(
    ancestors: &[Vec<usize>],
    components: &[Vec<usize>],
    component_size: &[HashMap<usize, usize>],
    group: &[usize],
    z: usize,
    l: usize,
) -> Option<usize> {
    let p = group[0];
    let split = (0..l).rev().find(|&j| ancestors[j][p] == ancestors[j][z])?;
    if split + 1 < l && component_size[split + 1][&components[split + 1][p]] != group.len() {
        return None;
    }
    Some(split)
}

fn max_pairwise(space: &MetricMeasureSpace, members: &[usize]) -> f64 {
    let mut best: f64 = 0.0;
    for (a, &p) in members.iter().enumerate() {
        for &q in &members[a + 1..] {
            best = best.max(space.d(p, q));
        }
    }
    best
}

/// Builds shifted filtration `shift` (1-based) from a hierarchy. Shifts differ
/// only in how ties between equidistant net points are broken.
pub fn build_filtration(space: &MetricMeasureSpace, hierarchy: &NetHierarchy, shift: usize) -> Result<Filtration> {
    build_filtration_with_count(space, hierarchy, shift, DEFAULT_FILTRATION_COUNT.max(shift))
}

pub fn build_filtration_with_count(
    space: &MetricMeasureSpace,
    hierarchy: &NetHierarchy,
    shift: usize,
    filtration_count: usize,
) -> Result<Filtration> {
    let n = space.len();
    if shift == 0 || shift > filtration_count {
        return Err(Error::invalid(format!("shift {shift} not in 1..={filtration_count}")));
    }
    if hierarchy.levels.first().map(|l| l.assignment.len()) != Some(n) {
        return Err(Error::invalid("hierarchy was built on a different space"));
    }
    if hierarchy.levels[0].net.len() != 1 {
        return Err(Error::invalid(format!(
            "coarsest scale {} has {} net points; a filtration needs a single root",
            hierarchy.k_min,
            hierarchy.levels[0].net.len()
        )));
    }
    let rank = tie_ranks(n, hierarchy.seed, hierarchy.insertion, shift);
    let depth = hierarchy.levels.len();

    // components[l]: points glued together by the inner balls of net points
    // at scales l and finer. A component never straddles a cube boundary at
    // scale l or coarser.
    let mut components: Vec<Vec<usize>> = vec![Vec::new(); depth];
    let mut glue = UnionFind::new(n);
    for l in (0..depth).rev() {
        let level = &hierarchy.levels[l];
        let inner = INNER_CONTAINMENT * level.scale;
        for &z in &level.net {
            for p in 0..n {
                if p != z && space.d(p, z) <= inner {
                    glue.union(p, z);
                }
            }
        }
        components[l] = (0..n).map(|p| glue.find(p)).collect();
    }

    let mut component_size: Vec<HashMap<usize, usize>> = vec![HashMap::new(); depth];
    for l in 0..depth {
        for &c in &components[l] {
            *component_size[l].entry(c).or_default() += 1;
        }
    }

    // ancestors[l][p]: scale-l net point whose cube holds p.
    let mut ancestors: Vec<Vec<usize>> = vec![Vec::new(); depth];
    ancestors[0] = vec![hierarchy.levels[0].net[0]; n];
    for l in 1..depth {
        let net = &hierarchy.levels[l].net;
        let scale = hierarchy.levels[l].scale;
        let mut children: HashMap<usize, Vec<usize>> = HashMap::new();
        for &z in net {
            children.entry(ancestors[l - 1][z]).or_default().push(z);
        }
        let mut groups: HashMap<usize, Vec<usize>> = HashMap::new();
        for (p, &c) in components[l].iter().enumerate() {
            groups.entry(c).or_default().push(p);
        }
        let mut is_net = vec![false; n];
        for &z in net {
            is_net[z] = true;
        }
        let mut roots: Vec<usize> = groups.keys().copied().collect();
        roots.sort_unstable();
        let mut anc = vec![usize::MAX; n];
        for root in roots {
            let group = &groups[&root];
            // a component holding net points goes to the best-ranked of them
            let own = group.iter().copied().filter(|&p| is_net[p]).min_by_key(|&p| rank[p]);
            let target = match own {
                Some(z) => z,
                None => {
                    let candidates = &children[&ancestors[l - 1][group[0]]];
                    let target = nearest_to_group(space, group, candidates, &rank);
                    let reach = group_reach(space, group, target);
                    if reach > 2.0 * scale {
                        let z = nearest_to_group(space, group, net, &rank);
                        match relocate(&ancestors, &components, &component_size, group, z, l) {
                            Some(split) if group_reach(space, group, z) < reach => {
                                for row in &mut ancestors[split + 1..l] {
                                    let to = row[z];
                                    for &p in group {
                                        row[p] = to;
                                    }
                                }
                                z
                            }
                            _ => target,
                        }
                    } else {
                        target
                    }
                }
            };
            for &p in group {
                anc[p] = target;
            }
        }
        ancestors[l] = anc;
    }

    let mut cubes = Vec::new();
    let mut levels = Vec::with_capacity(depth);
    let mut index_of: Vec<HashMap<usize, usize>> = vec![HashMap::new(); depth];
    for (l, level) in hierarchy.levels.iter().enumerate() {
        let mut centers = level.net.clone();
        centers.sort_unstable();
        let mut members_of: HashMap<usize, Vec<usize>> = centers.iter().map(|&c| (c, Vec::new())).collect();
        for (p, &c) in ancestors[l].iter().enumerate() {
            members_of.get_mut(&c).expect("ancestor is a net point").push(p);
        }
        let mut ids = Vec::with_capacity(centers.len());
        for c in centers {
            let members = members_of.remove(&c).unwrap();
            let parent = if l == 0 {
                None
            } else {
                Some(index_of[l - 1][&ancestors[l - 1][c]])
            };
            let idx = cubes.len();
            cubes.push(Cube {
                id: cube_id(level.k, c),
                scale: level.k,
                center: c,
                actual_diam: max_pairwise(space, &members),
                mass: space.mass_of(&members),
                members,
                parent,
                children: Vec::new(),
                nominal_diam: level.scale,
            });
            if let Some(par) = parent {
                cubes[par].children.push(idx);
            }
            index_of[l].insert(c, idx);
            ids.push(idx);
        }
        levels.push(ids);
    }
    Ok(Filtration {
        shift,
        filtration_count,
        k_min: hierarchy.k_min,
        k_max: hierarchy.k_max,
        point_count: n,
        cubes,
        levels,
    })
}

impl Filtration {
    pub fn root(&self) -> Option<usize> {
        match self.levels.first() {
            Some(top) if top.len() == 1 => Some(top[0]),
            _ => None,
        }
    }

    pub fn cube(&self, idx: usize) -> &Cube {
        &self.cubes[idx]
    }

    pub fn find(&self, id: &str) -> Option<usize> {
        self.cubes.iter().position(|c| c.id == id)
    }

    /// `q` and all its descendants, parents before children.
    pub fn subtree(&self, q: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![q];
        while let Some(c) = stack.pop() {
            out.push(c);
            stack.extend(self.cubes[c].children.iter().rev());
        }
        out
    }

    /// The childless cube holding each point.
    pub fn point_leaves(&self) -> Result<Vec<usize>> {
        let mut leaf = vec![usize::MAX; self.point_count];
        for (idx, cube) in self.cubes.iter().enumerate() {
            if cube.children.is_empty() {
                for &p in &cube.members {
                    let slot = leaf.get_mut(p).ok_or(Error::IndexOutOfRange {
                        index: p,
                        len: self.point_count,
                    })?;
                    if *slot != usize::MAX {
                        return Err(Error::invalid(format!("point {p} lies in two leaf cubes")));
                    }
                    *slot = idx;
                }
            }
        }
        if let Some(p) = leaf.iter().position(|&l| l == usize::MAX) {
            return Err(Error::invalid(format!("point {p} lies in no leaf cube")));
        }
        Ok(leaf)
    }

    pub fn cube_records(&self) -> Vec<CubeRecord> {
        self.cubes
            .iter()
            .map(|c| CubeRecord {
                id: c.id.clone(),
                scale: c.scale,
                center: c.center,
                parent: c.parent.map(|p| self.cubes[p].id.clone()),
                member_count: c.members.len(),
                nominal_diam: c.nominal_diam,
                actual_diam: c.actual_diam,
                mass: c.mass,
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Invariant {
    Structure,
    Partition,
    Nesting,
    InnerContainment,
    OuterContainment,
    Diameter,
    Mass,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub cube: String,
    pub invariant: Invariant,
    pub measured: f64,
    pub detail: String,
}

/// Every broken filtration invariant, as one [`Violation`] per cube and invariant.
pub fn validate_filtration(space: &MetricMeasureSpace, filtration: &Filtration) -> Vec<Violation> {
    let n = space.len();
    let mut out = Vec::new();
    let mut push = |cube: &str, invariant, measured: f64, detail: String| {
        out.push(Violation {
            cube: cube.to_string(),
            invariant,
            measured,
            detail,
        })
    };
    if filtration.point_count != n {
        push(
            "filtration",
            Invariant::Structure,
            filtration.point_count as f64,
            format!("built for {} points, space has {n}", filtration.point_count),
        );
        return out;
    }
    let cubes = &filtration.cubes;
    match filtration.root() {
        None => push(
            "filtration",
            Invariant::Structure,
            filtration.levels.first().map_or(0, |l| l.len()) as f64,
            "top scale is not a single root cube".into(),
        ),
        Some(r) if cubes[r].members.len() != n => push(
            &cubes[r].id,
            Invariant::Structure,
            cubes[r].members.len() as f64,
            format!("root holds {} of {n} points", cubes[r].members.len()),
        ),
        _ => {}
    }

    for (idx, cube) in cubes.iter().enumerate() {
        if cube.members.is_empty() {
            push(&cube.id, Invariant::Structure, 0.0, "empty cube".into());
            continue;
        }
        if let Some(&p) = cube.members.iter().find(|&&p| p >= n) {
            push(&cube.id, Invariant::Structure, p as f64, format!("member {p} out of range"));
            continue;
        }
        match cube.parent {
            None if cube.scale != filtration.k_min => push(
                &cube.id,
                Invariant::Structure,
                cube.scale as f64,
                "cube below the top scale has no parent".into(),
            ),
            Some(p) if p >= cubes.len() => push(&cube.id, Invariant::Structure, p as f64, "parent index out of range".into()),
            Some(p) => {
                let parent = &cubes[p];
                if parent.scale + 1 != cube.scale {
                    push(
                        &cube.id,
                        Invariant::Structure,
                        parent.scale as f64,
                        format!("parent {} is not one scale up", parent.id),
                    );
                }
                if !parent.children.contains(&idx) {
                    push(
                        &cube.id,
                        Invariant::Structure,
                        p as f64,
                        format!("parent {} does not list this cube", parent.id),
                    );
                }
                let mut pm = vec![false; n];
                for &m in &parent.members {
                    if m < n {
                        pm[m] = true;
                    }
                }
                let outside = cube.members.iter().filter(|&&m| !pm[m]).count();
                if outside > 0 {
                    push(
                        &cube.id,
                        Invariant::Nesting,
                        outside as f64,
                        format!("{outside} member(s) outside parent {}", parent.id),
                    );
                }
            }
            None => {}
        }
        for &c in &cube.children {
            if cubes.get(c).and_then(|ch| ch.parent) != Some(idx) {
                push(
                    &cube.id,
                    Invariant::Structure,
                    c as f64,
                    format!("child {c} does not point back"),
                );
            }
        }
        if !cube.children.is_empty() {
            let total: usize = cube
                .children
                .iter()
                .filter_map(|&c| cubes.get(c))
                .map(|c| c.members.len())
                .sum();
            if total != cube.members.len() {
                push(
                    &cube.id,
                    Invariant::Nesting,
                    total as f64,
                    format!("children hold {total} points, cube holds {}", cube.members.len()),
                );
            }
        }

        let s = cube.nominal_diam;
        let center = cube.center;
        if center >= n {
            push(&cube.id, Invariant::Structure, center as f64, "center out of range".into());
            continue;
        }
        let mut mm = vec![false; n];
        for &m in &cube.members {
            mm[m] = true;
        }
        let inner = INNER_CONTAINMENT * s;
        let missing: Vec<usize> = (0..n).filter(|&p| !mm[p] && space.d(center, p) <= inner).collect();
        if !missing.is_empty() {
            let closest = missing.iter().map(|&p| space.d(center, p)).fold(f64::INFINITY, f64::min);
            push(
                &cube.id,
                Invariant::InnerContainment,
                closest / s,
                format!("{} point(s) within {inner} of the center lie outside", missing.len()),
            );
        }
        let reach = cube.members.iter().map(|&m| space.d(center, m)).fold(0.0, f64::max);
        if reach > OUTER_CONTAINMENT * s * (1.0 + SCALE_EPS) {
            push(
                &cube.id,
                Invariant::OuterContainment,
                reach / s,
                format!("member at distance {reach} > {} s", OUTER_CONTAINMENT),
            );
        }
        let diam = max_pairwise(space, &cube.members);
        if diam > 2.0 * OUTER_CONTAINMENT * s * (1.0 + SCALE_EPS) {
            push(
                &cube.id,
                Invariant::Diameter,
                diam / s,
                format!("diameter {diam} exceeds {} s", 2.0 * OUTER_CONTAINMENT),
            );
        }
        if (diam - cube.actual_diam).abs() > 1e-12 * diam.max(1e-300) {
            push(
                &cube.id,
                Invariant::Diameter,
                cube.actual_diam,
                format!("recorded diameter {} but measured {diam}", cube.actual_diam),
            );
        }
        let mass = space.mass_of(&cube.members);
        if (mass - cube.mass).abs() > 1e-12 * mass {
            push(
                &cube.id,
                Invariant::Mass,
                cube.mass,
                format!("recorded mass {} but measured {mass}", cube.mass),
            );
        }
    }

    for (l, level) in filtration.levels.iter().enumerate() {
        let mut seen = vec![0usize; n];
        for &c in level {
            if let Some(cube) = cubes.get(c) {
                for &m in &cube.members {
                    if m < n {
                        seen[m] += 1;
                    }
                }
            }
        }
        let bad = seen.iter().filter(|&&k| k != 1).count();
        if bad > 0 {
            let scale = filtration.k_min + l as i32;
            push(
                &format!("scale:{scale}"),
                Invariant::Partition,
                bad as f64,
                format!("{bad} point(s) not covered exactly once"),
            );
        }
    }
    out
}

/// Cubes whose members all lie in the closed ball `Ball(x, 2r)`.
pub fn cubes_in_ball(space: &MetricMeasureSpace, filtration: &Filtration, x: usize, r: f64) -> Result<Vec<usize>> {
    if x >= space.len() {
        return Err(Error::IndexOutOfRange {
            index: x,
            len: space.len(),
        });
    }
    if !(r > 0.0) {
        return Err(Error::invalid(format!("radius {r} must be positive")));
    }
    let reach = 2.0 * r;
    Ok(filtration
        .cubes
        .iter()
        .enumerate()
        .filter(|(_, c)| c.members.iter().all(|&m| space.d(x, m) <= reach))
        .map(|(i, _)| i)
        .collect())
}
