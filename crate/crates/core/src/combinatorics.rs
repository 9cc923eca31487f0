//! Exact finite-domain machinery on `X = [1:N]`: brute-force bracketing and
//! one-sided oracles, the two-phase finite-class learner, and the sparse,
//! tensorised-threshold and rectangle bracket constructions.
//!
//! Masses are exact rationals: a [`FiniteMeasure`] carries integer weights over
//! a common denominator, so identities are checked by equality.

use std::fmt;

use num_rational::Ratio;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Mass = Ratio<u64>;

/// A `{0,1}`-valued function on `[1:N]`, stored 0-indexed.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FiniteConcept {
    pub bits: Vec<bool>,
}

impl FiniteConcept {
    pub fn new(bits: Vec<bool>) -> Self {
        Self { bits }
    }

    pub fn constant(n: usize, value: bool) -> Self {
        Self { bits: vec![value; n] }
    }

    /// Low `n` bits of `mask`, least significant first.
    pub fn from_mask(n: usize, mask: u64) -> Self {
        Self { bits: (0..n).map(|i| mask >> i & 1 == 1).collect() }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn complement(&self) -> Self {
        Self { bits: self.bits.iter().map(|b| !b).collect() }
    }

    /// Pointwise `self <= other`.
    pub fn le(&self, other: &Self) -> bool {
        self.bits.iter().zip(&other.bits).all(|(a, b)| !a || *b)
    }

    pub fn support(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits.iter().enumerate().filter(|(_, b)| **b).map(|(i, _)| i)
    }
}

impl fmt::Display for FiniteConcept {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.bits {
            f.write_str(if *b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl std::str::FromStr for FiniteConcept {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::Validation(format!("invalid bit `{other}` in concept"))),
            })
            .collect::<Result<_>>()
            .map(Self::new)
    }
}

/// A deduplicated, nonempty set of concepts on a common domain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "ClassFile", into = "ClassFile")]
pub struct FiniteClass {
    name: String,
    n: usize,
    concepts: Vec<FiniteConcept>,
}

#[derive(Serialize, Deserialize)]
struct ClassFile {
    name: String,
    #[serde(rename = "N")]
    n: usize,
    concepts: Vec<String>,
}

impl TryFrom<ClassFile> for FiniteClass {
    type Error = Error;

    fn try_from(f: ClassFile) -> Result<Self> {
        let concepts = f.concepts.iter().map(|s| s.parse()).collect::<Result<Vec<_>>>()?;
        let class = FiniteClass::new(f.name, concepts)?;
        if class.n != f.n {
            return Err(Error::Validation(format!("concepts have length {}, N = {}", class.n, f.n)));
        }
        Ok(class)
    }
}

impl From<FiniteClass> for ClassFile {
    fn from(c: FiniteClass) -> Self {
        ClassFile { name: c.name, n: c.n, concepts: c.concepts.iter().map(|h| h.to_string()).collect() }
    }
}

impl FiniteClass {
    /// Deduplicates while keeping first-occurrence order.
    pub fn new(name: impl Into<String>, concepts: Vec<FiniteConcept>) -> Result<Self> {
        let Some(first) = concepts.first() else {
            return Err(Error::Validation("a concept class must be nonempty".into()));
        };
        let n = first.len();
        if concepts.iter().any(|h| h.len() != n) {
            return Err(Error::Validation("all concepts must share the domain size".into()));
        }
        let mut seen = std::collections::HashSet::new();
        let concepts = concepts.into_iter().filter(|h| seen.insert(h.clone())).collect();
        Ok(Self { name: name.into(), n, concepts })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn domain_size(&self) -> usize {
        self.n
    }

    pub fn concepts(&self) -> &[FiniteConcept] {
        &self.concepts
    }

    pub fn len(&self) -> usize {
        self.concepts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.concepts.is_empty()
    }

    /// Adds the constant functions 0 and 1.
    pub fn with_constants(&self) -> Self {
        let mut c = self.concepts.clone();
        c.push(FiniteConcept::constant(self.n, false));
        c.push(FiniteConcept::constant(self.n, true));
        Self::new(self.name.clone(), c).expect("nonempty")
    }

    /// Adds the complement of every concept.
    pub fn complement_closed(&self) -> Self {
        let mut c = self.concepts.clone();
        c.extend(self.concepts.iter().map(FiniteConcept::complement));
        Self::new(self.name.clone(), c).expect("nonempty")
    }

    pub fn contains(&self, h: &FiniteConcept) -> bool {
        self.concepts.contains(h)
    }
}

/// A probability measure on `[1:N]` as integer weights over their total.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FiniteMeasure {
    weights: Vec<u64>,
}

impl FiniteMeasure {
    pub fn new(weights: Vec<u64>) -> Result<Self> {
        if weights.is_empty() || weights.iter().all(|&w| w == 0) {
            return Err(Error::Validation("a measure needs positive total weight".into()));
        }
        Ok(Self { weights })
    }

    pub fn uniform(n: usize) -> Self {
        Self { weights: vec![1; n] }
    }

    /// Uniform on the points where `c` is 1.
    pub fn uniform_on(c: &FiniteConcept) -> Result<Self> {
        Self::new(c.bits.iter().map(|&b| b as u64).collect())
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[u64] {
        &self.weights
    }

    pub fn total(&self) -> u64 {
        self.weights.iter().sum()
    }

    pub fn point(&self, i: usize) -> Mass {
        Ratio::new(self.weights[i], self.total())
    }

    /// Exact mass of `{i : pred(i)}`.
    pub fn mass_where(&self, mut pred: impl FnMut(usize) -> bool) -> Mass {
        let num = (0..self.weights.len()).filter(|&i| pred(i)).map(|i| self.weights[i]).sum();
        Ratio::new(num, self.total())
    }

    /// `mu(a != b)`.
    pub fn disagreement(&self, a: &FiniteConcept, b: &FiniteConcept) -> Mass {
        self.mass_where(|i| a.bits[i] != b.bits[i])
    }

    pub fn sample(&self, rng: &mut impl Rng) -> usize {
        let mut r = rng.gen_range(0..self.total());
        for (i, &w) in self.weights.iter().enumerate() {
            if r < w {
                return i;
            }
            r -= w;
        }
        unreachable!("sample below total weight")
    }
}

fn check_domain(g: &FiniteConcept, mu: &FiniteMeasure, h: &FiniteClass) -> Result<()> {
    if g.len() != mu.len() || g.len() != h.domain_size() {
        return Err(Error::Validation(format!(
            "domain mismatch: g has {}, mu has {}, H has {}",
            g.len(),
            mu.len(),
            h.domain_size()
        )));
    }
    Ok(())
}

/// `L(g, mu, H)`: the least `mu(h != g)` over `h in H` with `h <= g`, and a witness
/// (first in class order among minimisers).
pub fn inefficiency_below(
    g: &FiniteConcept,
    mu: &FiniteMeasure,
    h: &FiniteClass,
) -> Result<(Mass, FiniteConcept)> {
    check_domain(g, mu, h)?;
    let mut best: Option<(Mass, &FiniteConcept)> = None;
    for c in h.concepts().iter().filter(|c| (*c).le(g)) {
        let m = mu.disagreement(c, g);
        if best.as_ref().is_none_or(|(b, _)| m < *b) {
            best = Some((m, c));
        }
    }
    best.map(|(m, c)| (m, c.clone()))
        .ok_or_else(|| Error::Infeasible("no hypothesis lies below g".into()))
}

/// An ordered pair `h- <= g <= h+` with its exact usage.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FiniteBracket {
    pub lower: FiniteConcept,
    pub upper: FiniteConcept,
    pub usage: Mass,
}

impl FiniteBracket {
    pub fn contains(&self, g: &FiniteConcept) -> bool {
        self.lower.le(g) && g.le(&self.upper)
    }
}

/// `B(g, mu, H)`: the least `mu(h1 != h2)` over pairs in `H` with `h1 <= g <= h2`,
/// found by exhaustive search over all feasible pairs.
pub fn optimal_bracket(g: &FiniteConcept, mu: &FiniteMeasure, h: &FiniteClass) -> Result<FiniteBracket> {
    check_domain(g, mu, h)?;
    let lows: Vec<&FiniteConcept> = h.concepts().iter().filter(|c| (*c).le(g)).collect();
    let highs: Vec<&FiniteConcept> = h.concepts().iter().filter(|c| g.le(c)).collect();
    let mut best: Option<(Mass, &FiniteConcept, &FiniteConcept)> = None;
    for lo in &lows {
        for hi in &highs {
            let m = mu.disagreement(lo, hi);
            if best.as_ref().is_none_or(|(b, _, _)| m < *b) {
                best = Some((m, lo, hi));
            }
        }
    }
    best.map(|(usage, lo, hi)| FiniteBracket { lower: lo.clone(), upper: hi.clone(), usage })
        .ok_or_else(|| Error::Infeasible("no hypothesis pair brackets g".into()))
}

/// A labelled draw `(point, g(point))`.
pub type Sample = (usize, bool);

/// Result of the two-phase learner, with the phase-1 survivors for diagnostics.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OslOutcome {
    pub hypothesis: FiniteConcept,
    /// Indices into the class of `H_lambda-hat`, the hypotheses kept by testing.
    pub kept: Vec<usize>,
}

/// Two-phase one-sided learner for a finite class.
///
/// Testing keeps `{h : l-hat(h) < lambda/2}` where `l-hat` is the empirical
/// `mu(h = 1, g = 0)` on `testing`; optimisation returns the kept `h` with least
/// empirical `mu(h = 0, g = 1)` on `optimising` (first in class order on ties).
pub fn finite_osl_learn(
    testing: &[Sample],
    optimising: &[Sample],
    h: &FiniteClass,
    lambda: f64,
) -> Result<OslOutcome> {
    if testing.is_empty() || optimising.is_empty() {
        return Err(Error::Validation("both sample halves must be nonempty".into()));
    }
    let m1 = testing.len() as f64;
    let kept: Vec<usize> = h
        .concepts()
        .iter()
        .enumerate()
        .filter(|(_, c)| {
            let leaks = testing.iter().filter(|&&(x, g)| c.bits[x] && !g).count();
            (leaks as f64) < lambda / 2.0 * m1
        })
        .map(|(i, _)| i)
        .collect();
    let misses = |c: &FiniteConcept| optimising.iter().filter(|&&(x, g)| !c.bits[x] && g).count();
    let best = kept
        .iter()
        .copied()
        .min_by_key(|&i| (misses(&h.concepts()[i]), i))
        .ok_or_else(|| Error::Infeasible("every hypothesis failed the leakage test".into()))?;
    Ok(OslOutcome { hypothesis: h.concepts()[best].clone(), kept })
}

/// Testing sample size `ceil(24/lambda * ln(4|H|/delta))`.
pub fn osl_m1(lambda: f64, class_size: usize, delta: f64) -> usize {
    (24.0 / lambda * (4.0 * class_size as f64 / delta).ln()).ceil() as usize
}

/// Optimisation sample size `ceil(2/eps^2 * ln(4|H|/delta))`.
pub fn osl_m2(eps: f64, class_size: usize, delta: f64) -> usize {
    (2.0 / (eps * eps) * (4.0 * class_size as f64 / delta).ln()).ceil() as usize
}

/// Sparse construction: `h-` marks the `d` heaviest points of `g`'s support
/// (ties to the smaller index), `h+ = 1`. `d` is clamped to the support size.
pub fn sparse_bracket(g: &FiniteConcept, mu: &FiniteMeasure, d: usize) -> Result<FiniteBracket> {
    if g.len() != mu.len() {
        return Err(Error::Validation("g and mu disagree on the domain size".into()));
    }
    let mut support: Vec<usize> = g.support().collect();
    support.sort_by(|&a, &b| mu.weights()[b].cmp(&mu.weights()[a]).then(a.cmp(&b)));
    let mut lower = FiniteConcept::constant(g.len(), false);
    for &i in support.iter().take(d) {
        lower.bits[i] = true;
    }
    let upper = FiniteConcept::constant(g.len(), true);
    let usage = mu.disagreement(&lower, &upper);
    Ok(FiniteBracket { lower, upper, usage })
}

/// Per-block threshold positions `k_i` if `g` is a tensorised threshold over
/// `blocks` equal blocks (`g = 1` exactly from offset `k_i` on within block `i`).
pub fn block_thresholds(g: &FiniteConcept, blocks: usize) -> Result<Vec<usize>> {
    if blocks == 0 || !g.len().is_multiple_of(blocks) {
        return Err(Error::Validation(format!("{blocks} blocks do not divide N = {}", g.len())));
    }
    let s = g.len() / blocks;
    (0..blocks)
        .map(|b| {
            let part = &g.bits[b * s..(b + 1) * s];
            let k = part.iter().position(|&v| v).unwrap_or(s);
            if part[k..].iter().all(|&v| v) {
                Ok(k)
            } else {
                Err(Error::Validation(format!("block {b} of g is not a threshold")))
            }
        })
        .collect()
}

/// A tensorised threshold from per-block positions.
pub fn tensor_threshold(block_size: usize, ks: &[usize]) -> FiniteConcept {
    FiniteConcept::new(ks.iter().flat_map(|&k| (0..block_size).map(move |j| j >= k)).collect())
}

/// Tensorised-threshold construction: `g`'s threshold on the `d - 1` heaviest
/// blocks (ties to the smaller index), constants 0 (below) and 1 (above) on
/// the remaining blocks collated into one set. `d` is clamped to `[1, blocks]`.
pub fn tensor_threshold_bracket(
    g: &FiniteConcept,
    mu: &FiniteMeasure,
    blocks: usize,
    d: usize,
) -> Result<FiniteBracket> {
    if g.len() != mu.len() {
        return Err(Error::Validation("g and mu disagree on the domain size".into()));
    }
    block_thresholds(g, blocks)?;
    let s = g.len() / blocks;
    let block_mass = |b: usize| -> u64 { mu.weights()[b * s..(b + 1) * s].iter().sum() };
    let mut order: Vec<usize> = (0..blocks).collect();
    order.sort_by(|&a, &b| block_mass(b).cmp(&block_mass(a)).then(a.cmp(&b)));
    let keep = d.clamp(1, blocks) - 1;
    let mut lower = FiniteConcept::constant(g.len(), false);
    let mut upper = FiniteConcept::constant(g.len(), true);
    for &b in order.iter().take(keep) {
        for i in b * s..(b + 1) * s {
            lower.bits[i] = g.bits[i];
            upper.bits[i] = g.bits[i];
        }
    }
    let usage = mu.disagreement(&lower, &upper);
    Ok(FiniteBracket { lower, upper, usage })
}

/// The class the tensorised construction draws from: thresholds on at most
/// `d - 1` blocks and a single constant on the union of the other blocks.
pub fn tensor_class(block_size: usize, blocks: usize, d: usize) -> FiniteClass {
    let n = block_size * blocks;
    let mut concepts = Vec::new();
    let budget = d.clamp(1, blocks) - 1;
    for chosen in 0u64..(1 << blocks) {
        if chosen.count_ones() as usize > budget {
            continue;
        }
        let picked: Vec<usize> = (0..blocks).filter(|b| chosen >> b & 1 == 1).collect();
        for rest in [false, true] {
            // Odometer over threshold positions on the picked blocks.
            let mut ks = vec![0usize; picked.len()];
            loop {
                let mut bits = vec![rest; n];
                for (&b, &k) in picked.iter().zip(&ks) {
                    for j in 0..block_size {
                        bits[b * block_size + j] = j >= k;
                    }
                }
                concepts.push(FiniteConcept::new(bits));
                let Some(pos) = ks.iter().position(|&k| k < block_size) else { break };
                ks[pos] += 1;
                ks[..pos].iter_mut().for_each(|k| *k = 0);
            }
        }
    }
    FiniteClass::new(format!("tensor-thresholds(s={block_size}, D={blocks}, d={d})"), concepts)
        .expect("constants are always present")
}

/// Axis-aligned rectangle of grid cells `[x0, x1) x [y0, y1)` carrying g's value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledRect {
    pub x0: usize,
    pub x1: usize,
    pub y0: usize,
    pub y1: usize,
    pub label: bool,
}

impl LabeledRect {
    pub fn cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (self.x0..self.x1).flat_map(move |x| (self.y0..self.y1).map(move |y| (x, y)))
    }

    pub fn area(&self) -> usize {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }
}

/// Measure on a `width x height` grid of cells; cell `(x, y)` is point `y * width + x`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridMeasure {
    pub width: usize,
    pub height: usize,
    pub mu: FiniteMeasure,
}

impl GridMeasure {
    pub fn new(width: usize, height: usize, mu: FiniteMeasure) -> Result<Self> {
        if mu.len() != width * height {
            return Err(Error::Validation("grid measure has the wrong number of cells".into()));
        }
        Ok(Self { width, height, mu })
    }

    pub fn index(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }
}

/// The cloud `g` induced by a partition into labelled rectangles.
pub fn partition_concept(parts: &[LabeledRect], grid: &GridMeasure) -> Result<FiniteConcept> {
    let mut owner: Vec<Option<usize>> = vec![None; grid.width * grid.height];
    for (p, r) in parts.iter().enumerate() {
        if r.x0 >= r.x1 || r.y0 >= r.y1 || r.x1 > grid.width || r.y1 > grid.height {
            return Err(Error::Validation(format!("rectangle {p} is empty or off the grid")));
        }
        for (x, y) in r.cells() {
            let slot = &mut owner[grid.index(x, y)];
            if let Some(q) = slot {
                return Err(Error::Validation(format!("rectangles {q} and {p} overlap")));
            }
            *slot = Some(p);
        }
    }
    if owner.iter().any(Option::is_none) {
        return Err(Error::Validation("rectangles do not cover the grid".into()));
    }
    Ok(FiniteConcept::new(owner.iter().map(|o| parts[o.expect("covered")].label).collect()))
}

/// Rectangle construction: `h-` is the union of the `kappa` heaviest 1-parts,
/// `h+` the complement of the `kappa` heaviest 0-parts.
pub fn rectangle_bracket(parts: &[LabeledRect], grid: &GridMeasure, kappa: usize) -> Result<FiniteBracket> {
    let g = partition_concept(parts, grid)?;
    let n = grid.width * grid.height;
    let mass = |r: &LabeledRect| -> u64 { r.cells().map(|(x, y)| grid.mu.weights()[grid.index(x, y)]).sum() };
    let heaviest = |label: bool| -> Vec<usize> {
        let mut idx: Vec<usize> = (0..parts.len()).filter(|&p| parts[p].label == label).collect();
        idx.sort_by(|&a, &b| mass(&parts[b]).cmp(&mass(&parts[a])).then(a.cmp(&b)));
        idx.truncate(kappa);
        idx
    };
    let mut lower = FiniteConcept::constant(n, false);
    for p in heaviest(true) {
        parts[p].cells().for_each(|(x, y)| lower.bits[grid.index(x, y)] = true);
    }
    let mut upper = FiniteConcept::constant(n, true);
    for p in heaviest(false) {
        parts[p].cells().for_each(|(x, y)| upper.bits[grid.index(x, y)] = false);
    }
    let b = FiniteBracket { usage: grid.mu.disagreement(&lower, &upper), lower, upper };
    if !b.contains(&g) {
        return Err(Error::Validation("constructed rectangle bracket does not contain g".into()));
    }
    Ok(b)
}

/// A random decoupling instance: `g`, a random rational measure, and a
/// complement-closed class with constants of at most `max_class` concepts.
pub fn random_instance(
    rng: &mut impl Rng,
    max_n: usize,
    max_class: usize,
) -> (FiniteConcept, FiniteMeasure, FiniteClass) {
    let n = rng.gen_range(1..=max_n);
    let full = if n >= 64 { u64::MAX } else { (1u64 << n) - 1 };
    let base = rng.gen_range(0..=(max_class.saturating_sub(2) / 2));
    let concepts: Vec<FiniteConcept> =
        (0..base).map(|_| FiniteConcept::from_mask(n, rng.gen_range(0..=full))).collect();
    let class = if concepts.is_empty() {
        FiniteClass::new("random", vec![FiniteConcept::constant(n, false)]).expect("nonempty")
    } else {
        FiniteClass::new("random", concepts).expect("nonempty")
    }
    .with_constants()
    .complement_closed();
    let g = FiniteConcept::from_mask(n, rng.gen_range(0..=full));
    let mut weights: Vec<u64> = (0..n).map(|_| rng.gen_range(0..=12)).collect();
    if weights.iter().all(|&w| w == 0) {
        weights[rng.gen_range(0..n)] = 1;
    }
    (g, FiniteMeasure::new(weights).expect("positive"), class)
}
