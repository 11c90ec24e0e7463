//! The John–Nirenberg–Strömberg packing lemma on a tree of cubes.
//!
//! If for every cube `Q0` at least an `eta` fraction of its mass sees a
//! vertical `alpha` sum of at most `N`, then `sum_{Q in Q0} alpha(Q) mass(Q)`
//! is at most `(N / eta^2) mass(Q0)`. Chains stop at the finest scale of the
//! tree. Point masses are recovered from the leaf cubes, split evenly when a
//! leaf holds more than one point.

use std::collections::BTreeMap;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cubes::Filtration;
use crate::error::{Error, Result};
use crate::rng::stream_rng;
use crate::sum::NeumaierSum;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JnsInstance {
    pub tree: Filtration,
    /// Cube id to coefficient.
    pub alpha: BTreeMap<String, f64>,
    #[serde(rename = "N")]
    pub n: f64,
    pub eta: f64,
}

/// An instance checked and indexed by cube position.
#[derive(Clone, Debug)]
pub struct Prepared<'a> {
    pub tree: &'a Filtration,
    pub alpha: Vec<f64>,
    pub n: f64,
    pub eta: f64,
    leaf: Vec<usize>,
    weight: Vec<f64>,
}

impl JnsInstance {
    pub fn new(tree: Filtration, alpha: BTreeMap<String, f64>, n: f64, eta: f64) -> Result<Self> {
        let inst = JnsInstance { tree, alpha, n, eta };
        inst.prepare()?;
        Ok(inst)
    }

    pub fn prepare(&self) -> Result<Prepared<'_>> {
        if !(self.n > 0.0 && self.n.is_finite()) {
            return Err(Error::invalid(format!("N = {} must be positive", self.n)));
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(Error::invalid(format!("eta = {} not in (0, 1]", self.eta)));
        }
        let cubes = &self.tree.cubes;
        let mut alpha = Vec::with_capacity(cubes.len());
        for cube in cubes {
            let a = *self
                .alpha
                .get(&cube.id)
                .ok_or_else(|| Error::invalid(format!("alpha missing for cube {}", cube.id)))?;
            if !(a >= 0.0 && a.is_finite()) {
                return Err(Error::invalid(format!(
                    "alpha({}) = {a} must be finite and nonnegative",
                    cube.id
                )));
            }
            alpha.push(a);
        }
        if self.alpha.len() != cubes.len() {
            return Err(Error::invalid("alpha names cubes that are not in the tree"));
        }
        for (i, cube) in cubes.iter().enumerate() {
            if let Some(p) = cube.parent {
                if !cubes.get(p).is_some_and(|par| par.children.contains(&i)) {
                    return Err(Error::invalid(format!("cube {} has an inconsistent parent", cube.id)));
                }
            }
        }
        self.tree.root().ok_or_else(|| Error::invalid("tree has no single root"))?;
        let leaf = self.tree.point_leaves()?;
        let weight = leaf.iter().map(|&c| cubes[c].mass / cubes[c].members.len() as f64).collect();
        Ok(Prepared {
            tree: &self.tree,
            alpha,
            n: self.n,
            eta: self.eta,
            leaf,
            weight,
        })
    }

    pub fn cube_index(&self, id: &str) -> Result<usize> {
        self.tree
            .find(id)
            .ok_or_else(|| Error::invalid(format!("no cube {id} in the tree")))
    }
}

impl Prepared<'_> {
    fn contains(&self, q0: usize, x: usize) -> bool {
        self.tree.cube(q0).members.binary_search(&x).is_ok()
    }

    /// Sum of alpha along the chain from `q0` down to the leaf holding `x`,
    /// accumulated from the leaf upward.
    pub fn vertical_sum(&self, x: usize, q0: usize) -> Result<f64> {
        if q0 >= self.tree.cubes.len() || x >= self.leaf.len() || !self.contains(q0, x) {
            return Err(Error::invalid(format!("point {x} is not in cube #{q0}")));
        }
        let mut s = 0.0;
        let mut c = self.leaf[x];
        loop {
            s += self.alpha[c];
            if c == q0 {
                return Ok(s);
            }
            c = self.tree.cube(c).parent.expect("chain reaches q0");
        }
    }

    /// Good-mass fraction of every cube at once.
    pub fn good_fractions(&self) -> Vec<f64> {
        let m = self.tree.cubes.len();
        let mut good = vec![NeumaierSum::default(); m];
        let mut total = vec![NeumaierSum::default(); m];
        for x in 0..self.leaf.len() {
            let w = self.weight[x];
            let mut s = 0.0;
            let mut c = Some(self.leaf[x]);
            while let Some(q) = c {
                s += self.alpha[q];
                total[q].add(w);
                if s <= self.n {
                    good[q].add(w);
                }
                c = self.tree.cube(q).parent;
            }
        }
        good.iter()
            .zip(&total)
            .map(|(g, t)| if t.value() > 0.0 { g.value() / t.value() } else { 0.0 })
            .collect()
    }

    /// `(good_mass_fraction, holds)` for one cube.
    pub fn check_hypothesis(&self, q0: usize) -> Result<(f64, bool)> {
        let cube = self.tree.cubes.get(q0).ok_or(Error::IndexOutOfRange {
            index: q0,
            len: self.tree.cubes.len(),
        })?;
        if cube.members.is_empty() {
            return Err(Error::EmptySet("hypothesis on an empty cube"));
        }
        let mut good = NeumaierSum::default();
        let mut total = NeumaierSum::default();
        for &x in &cube.members {
            total.add(self.weight[x]);
            if self.vertical_sum(x, q0)? <= self.n {
                good.add(self.weight[x]);
            }
        }
        let fraction = good.value() / total.value();
        Ok((fraction, fraction >= self.eta))
    }

    /// `sum alpha(Q) mass(Q)` over `Q` in the subtree of every cube, finest
    /// scale first so each value is `alpha mass` plus its children's values.
    pub fn packing_sums(&self) -> Vec<f64> {
        let cubes = &self.tree.cubes;
        let mut out = vec![0.0; cubes.len()];
        for level in self.tree.levels.iter().rev() {
            for &c in level {
                let mut acc = NeumaierSum::default();
                acc.add(self.alpha[c] * cubes[c].mass);
                for &ch in &cubes[c].children {
                    acc.add(out[ch]);
                }
                out[c] = acc.value();
            }
        }
        out
    }

    pub fn packing_sum(&self, q0: usize) -> Result<f64> {
        if q0 >= self.tree.cubes.len() {
            return Err(Error::IndexOutOfRange {
                index: q0,
                len: self.tree.cubes.len(),
            });
        }
        Ok(self.packing_sums()[q0])
    }

    /// Stopping layers below `q0`. Layer `j + 1` holds the maximal cubes
    /// strictly inside a layer-`j` cube `R` where the alpha sum over the chain
    /// strictly below `R` first exceeds `N`.
    pub fn stopping_time_decomposition(&self, q0: usize) -> Result<Vec<Vec<usize>>> {
        if q0 >= self.tree.cubes.len() {
            return Err(Error::IndexOutOfRange {
                index: q0,
                len: self.tree.cubes.len(),
            });
        }
        let mut layers = vec![vec![q0]];
        loop {
            let mut next = Vec::new();
            for &r in layers.last().unwrap() {
                let mut stack: Vec<(usize, f64)> = self.tree.cube(r).children.iter().rev().map(|&c| (c, 0.0)).collect();
                while let Some((c, above)) = stack.pop() {
                    let s = above + self.alpha[c];
                    if s > self.n {
                        next.push(c);
                    } else {
                        stack.extend(self.tree.cube(c).children.iter().rev().map(|&ch| (ch, s)));
                    }
                }
            }
            if next.is_empty() {
                return Ok(layers);
            }
            layers.push(next);
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JnsStatus {
    Pass,
    BoundViolated,
    HypothesisFailed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JnsReport {
    pub status: JnsStatus,
    pub pass: bool,
    /// max over Q0 of packing_sum(Q0) / mass(Q0).
    pub worst_ratio: f64,
    pub worst_q0: String,
    /// N / eta^2.
    pub bound: f64,
    pub hypothesis_holds: bool,
    pub min_good_fraction: f64,
    pub min_good_q0: String,
    /// Cubes where the hypothesis fails, in tree order.
    pub hypothesis_failures: Vec<String>,
    pub cube_count: usize,
}

pub fn verify_jns(instance: &JnsInstance) -> Result<JnsReport> {
    let prep = instance.prepare()?;
    let cubes = &instance.tree.cubes;
    let fractions = prep.good_fractions();
    let failures: Vec<String> = fractions
        .iter()
        .enumerate()
        .filter(|(_, &f)| f < prep.eta)
        .map(|(c, _)| cubes[c].id.clone())
        .collect();
    let (min_c, min_f) = fractions
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::INFINITY), |best, (c, f)| if f < best.1 { (c, f) } else { best });
    let sums = prep.packing_sums();
    let ratios: Vec<f64> = (0..cubes.len())
        .into_par_iter()
        .map(|c| if cubes[c].mass > 0.0 { sums[c] / cubes[c].mass } else { 0.0 })
        .collect();
    let (worst_c, worst) = ratios
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (c, r)| if r > best.1 { (c, r) } else { best });
    let bound = prep.n / (prep.eta * prep.eta);
    let hypothesis_holds = failures.is_empty();
    let status = if !hypothesis_holds {
        JnsStatus::HypothesisFailed
    } else if worst <= bound {
        JnsStatus::Pass
    } else {
        JnsStatus::BoundViolated
    };
    Ok(JnsReport {
        status,
        pass: status == JnsStatus::Pass,
        worst_ratio: worst,
        worst_q0: cubes[worst_c].id.clone(),
        bound,
        hypothesis_holds,
        min_good_fraction: min_f,
        min_good_q0: cubes[min_c].id.clone(),
        hypothesis_failures: failures,
        cube_count: cubes.len(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Style {
    /// Independent values in `[0, budget N / depth]` on every cube.
    Uniform { budget: f64 },
    /// Values in `[0, N]` on one random antichain.
    Sparse,
    /// Bad mass at the root pushed to just under `1 - eta`.
    Adversarial,
}

impl FromStr for Style {
    type Err = Error;

    /// `uniform`, `uniform:<budget>`, `sparse` or `adversarial`.
    fn from_str(s: &str) -> Result<Self> {
        match s.split_once(':') {
            None if s == "uniform" => Ok(Style::Uniform { budget: 2.0 }),
            None if s == "sparse" => Ok(Style::Sparse),
            None if s == "adversarial" => Ok(Style::Adversarial),
            Some(("uniform", b)) => {
                let budget: f64 = b.parse().map_err(|_| Error::invalid(format!("bad uniform budget {b:?}")))?;
                if !(budget >= 0.0 && budget.is_finite()) {
                    return Err(Error::invalid(format!("uniform budget {budget} must be nonnegative")));
                }
                Ok(Style::Uniform { budget })
            }
            _ => Err(Error::invalid(format!(
                "unknown style {s:?}; expected uniform[:budget], sparse or adversarial"
            ))),
        }
    }
}

/// Random alpha of the given style, scaled down on failing subtrees until
/// the hypothesis holds at every cube.
pub fn generate_instance(filtration: &Filtration, style: Style, n: f64, eta: f64, seed: u64) -> Result<JnsInstance> {
    let cubes = &filtration.cubes;
    let root = filtration.root().ok_or_else(|| Error::invalid("tree has no single root"))?;
    let mut rng = stream_rng(seed, "jns-instance");
    let mut alpha = vec![0.0; cubes.len()];
    match style {
        Style::Uniform { budget } => {
            let cap = budget * n / filtration.levels.len() as f64;
            for a in alpha.iter_mut() {
                *a = rng.random::<f64>() * cap;
            }
        }
        Style::Sparse => {
            let p = 1.0 / (1.0 + filtration.levels.len() as f64 / 2.0);
            let mut stack = vec![root];
            while let Some(c) = stack.pop() {
                if rng.random::<f64>() < p || cubes[c].children.is_empty() {
                    alpha[c] = rng.random::<f64>() * n;
                } else {
                    stack.extend(&cubes[c].children);
                }
            }
        }
        Style::Adversarial => {
            // alpha(root) + b > N marks exactly the chosen cubes bad at the
            // root, while every smaller Q0 sees at most b <= N.
            let a = n * (0.5 + 0.1 * (1.0 - rng.random::<f64>()));
            let b = n - a + (a - n / 2.0) * rng.random::<f64>().max(1e-3);
            alpha[root] = a;
            let target = (1.0 - eta) * cubes[root].mass;
            let mut leaves: Vec<usize> = (0..cubes.len()).filter(|&c| cubes[c].children.is_empty()).collect();
            leaves.shuffle(&mut rng);
            let mut taken = NeumaierSum::default();
            for c in leaves {
                if taken.value() + cubes[c].mass <= target {
                    taken.add(cubes[c].mass);
                    alpha[c] = b;
                }
            }
        }
    }
    let mut instance = JnsInstance {
        tree: filtration.clone(),
        alpha: BTreeMap::new(),
        n,
        eta,
    };
    let ids: Vec<String> = cubes.iter().map(|c| c.id.clone()).collect();
    instance.alpha = ids.iter().cloned().zip(alpha.iter().copied()).collect();
    loop {
        let fractions = instance.prepare()?.good_fractions();
        let failing: Vec<usize> = (0..cubes.len()).filter(|&c| fractions[c] < eta).collect();
        if failing.is_empty() {
            return Ok(instance);
        }
        for c in failing {
            for q in filtration.subtree(c) {
                alpha[q] *= 0.9;
            }
        }
        instance.alpha = ids.iter().cloned().zip(alpha.iter().copied()).collect();
    }
}
