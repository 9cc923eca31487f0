//! Exact and statistical verification suites.
//!
//! Each suite is seeded, returns one [`CaseResult`] per checked case, and
//! passes only if every case passes.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use num_bigint::BigUint;
use num_rational::Ratio;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::bracketing::{binom_tail_inv, gating_to_bracket, select_certified, usage, BudgetClassifier};
use crate::combinatorics::{
    block_thresholds, finite_osl_learn, inefficiency_below, optimal_bracket, osl_m1, osl_m2, random_instance,
    rectangle_bracket, sparse_bracket, tensor_class, tensor_threshold, tensor_threshold_bracket, FiniteClass,
    FiniteConcept, FiniteMeasure, GridMeasure, LabeledRect, Sample,
};
use crate::datasets::{Dataset, FeatureMap};
use crate::error::{Error, Result};
use crate::geometry::{polygon_budget, ConvexPolygon, WeightedSample};
use crate::models::PredictorModel;
use crate::oneside::{OneSidedCandidate, Side};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Decoupling,
    Gating,
    OslPac,
    Polygon,
    Constructions,
    Binom,
}

impl Suite {
    pub const ALL: [Suite; 6] =
        [Suite::Decoupling, Suite::Gating, Suite::OslPac, Suite::Polygon, Suite::Constructions, Suite::Binom];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Decoupling => "decoupling",
            Suite::Gating => "gating",
            Suite::OslPac => "osl-pac",
            Suite::Polygon => "polygon",
            Suite::Constructions => "constructions",
            Suite::Binom => "binom",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::Validation(format!("unknown suite `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseResult {
    pub name: String,
    pub passed: bool,
    pub detail: Value,
}

impl CaseResult {
    fn new(name: impl Into<String>, passed: bool, detail: Value) -> Self {
        Self { name: name.into(), passed, detail }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub seed: u64,
    pub passed: bool,
    pub cases_passed: usize,
    pub cases_total: usize,
    pub cases: Vec<CaseResult>,
}

impl SuiteReport {
    fn new(suite: Suite, seed: u64, cases: Vec<CaseResult>) -> Self {
        let cases_passed = cases.iter().filter(|c| c.passed).count();
        Self { suite, seed, passed: cases_passed == cases.len(), cases_passed, cases_total: cases.len(), cases }
    }
}

pub fn run_suite(suite: Suite, seed: u64) -> Result<SuiteReport> {
    log::info!("running verification suite {suite} with seed {seed}");
    let cases = match suite {
        Suite::Decoupling => decoupling_cases(seed, 200, 10, 64)?,
        Suite::Gating => gating_cases(seed, 100)?,
        Suite::OslPac => {
            vec![osl_pac_case(seed, 500)?, certified_selection_case(seed, 500)?]
        }
        Suite::Polygon => polygon_cases(seed, 100, 10_000)?,
        Suite::Constructions => {
            let mut c = sparse_cases()?;
            c.extend(tensor_cases(seed)?);
            c.extend(rectangle_cases(seed, 50)?);
            c
        }
        Suite::Binom => binom_cases(),
    };
    Ok(SuiteReport::new(suite, seed, cases))
}

fn seeded(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn ratio_json(r: Ratio<u64>) -> Value {
    json!(format!("{}/{}", r.numer(), r.denom()))
}

/// `B = L(g) + L(1 - g)` by two independent enumerations, exactly.
pub fn decoupling_cases(seed: u64, instances: usize, max_n: usize, max_class: usize) -> Result<Vec<CaseResult>> {
    (0..instances)
        .into_par_iter()
        .map(|k| {
            let mut rng = seeded(seed, k as u64);
            let (g, mu, h) = random_instance(&mut rng, max_n, max_class);
            let b = optimal_bracket(&g, &mu, &h)?;
            let (l0, _) = inefficiency_below(&g, &mu, &h)?;
            let (l1, _) = inefficiency_below(&g.complement(), &mu, &h)?;
            let ok = b.usage == l0 + l1 && b.contains(&g) && h.len() <= max_class;
            Ok(CaseResult::new(
                format!("instance-{k}"),
                ok,
                json!({ "N": g.len(), "class_size": h.len(), "g": g.to_string(),
                        "bracket": ratio_json(b.usage), "below": ratio_json(l0), "above": ratio_json(l1) }),
            ))
        })
        .collect()
}

fn random_linear(rng: &mut impl Rng, k: usize) -> PredictorModel {
    PredictorModel {
        feature_map: FeatureMap::Identity,
        weights: (0..k).map(|_| rng.gen_range(-2.0..2.0)).collect(),
        bias: rng.gen_range(-1.0..1.0),
        threshold: rng.gen_range(0.2..0.8),
        complemented: false,
    }
}

/// Random points with a random cloud, random measure, and random linear gate
/// and predictor; the bracket must reproduce the gated classifier exactly.
pub fn gating_cases(seed: u64, fixtures: usize) -> Result<Vec<CaseResult>> {
    (0..fixtures)
        .map(|k| {
            let mut rng = seeded(seed, k as u64);
            let n = rng.gen_range(20..200);
            let rows: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)]).collect();
            let labels: Vec<bool> = (0..n).map(|_| rng.gen()).collect();
            let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
            let total: f64 = raw.iter().sum();
            let mut weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
            let drift: f64 = 1.0 - weights.iter().sum::<f64>();
            weights[0] += drift;
            let d = Dataset::with_weights(vec!["x".into(), "y".into()], rows, labels, weights, FeatureMap::Identity)?;
            let (gamma, pi) = (random_linear(&mut rng, 2), random_linear(&mut rng, 2));
            let c = BudgetClassifier::new(gating_to_bracket(gamma.clone().into(), pi.clone().into()));
            let mut pointwise = true;
            for i in 0..d.len() {
                let x = d.row(i);
                let gated = if gamma.decide(x) { (pi.decide(x), false) } else { (d.label(i), true) };
                pointwise &= c.predict(x, d.label(i)) == gated;
            }
            let bracket_usage = usage(&c.bracket, &d);
            let gated_usage = d.mass_where(|i| !gamma.decide(d.row(i)));
            Ok(CaseResult::new(
                format!("fixture-{k}"),
                pointwise && bracket_usage == gated_usage,
                json!({ "rows": n, "pointwise": pointwise, "bracket_usage": bracket_usage, "gated_usage": gated_usage }),
            ))
        })
        .collect()
}

/// Ground truth for the certified-selection check: `M` points `i/M` on a line
/// with a random measure and a noisy step cloud.
struct LineTruth {
    xs: Vec<f64>,
    g: Vec<bool>,
    mu: FiniteMeasure,
}

impl LineTruth {
    const M: usize = 400;

    fn new(rng: &mut impl Rng) -> Self {
        let m = Self::M;
        let xs: Vec<f64> = (0..m).map(|i| i as f64 / m as f64).collect();
        let g = xs.iter().map(|&x| (x >= 0.5) != (rng.gen::<f64>() < 0.05)).collect();
        let mu = FiniteMeasure::new((0..m).map(|_| rng.gen_range(1..=20)).collect()).expect("positive");
        Self { xs, g, mu }
    }

    /// `1{x > t}` for thresholds strictly between grid points; the first and
    /// last are the constants 1 and 0.
    fn candidates(&self, side: Side) -> Vec<OneSidedCandidate> {
        let m = Self::M as f64;
        (0..=Self::M / 10 + 1)
            .map(|j| {
                let t = (j as f64 * 10.0 - 0.5) / m;
                let model = PredictorModel {
                    feature_map: FeatureMap::Identity,
                    weights: vec![1.0],
                    bias: -t,
                    threshold: 0.5,
                    complemented: false,
                };
                OneSidedCandidate { xi: t, side, model, train_leakage: f64::NAN, train_miss: f64::NAN }
            })
            .collect()
    }

    fn sample(&self, rng: &mut impl Rng, n: usize) -> Result<Dataset> {
        let idx: Vec<usize> = (0..n).map(|_| self.mu.sample(rng)).collect();
        Dataset::new(
            vec!["x".into()],
            idx.iter().map(|&i| vec![self.xs[i]]).collect(),
            idx.iter().map(|&i| self.g[i]).collect(),
            FeatureMap::Identity,
        )
    }

    fn mass(&self, pred: impl Fn(usize) -> bool) -> f64 {
        let m = self.mu.mass_where(pred);
        *m.numer() as f64 / *m.denom() as f64
    }
}

/// Fraction of `runs` certified selections (`zeta = delta = 0.1`, `|V| = 1000`)
/// whose output is truly a `zeta`-approximate bracket containing `g`:
/// `mu(h- > h+) <= zeta/2` and `mu(h- <= g <= h+) >= 1 - zeta`.
pub fn certified_selection_rate(seed: u64, runs: usize) -> Result<(f64, usize)> {
    let (zeta, delta) = (0.1, 0.1);
    let truth = LineTruth::new(&mut seeded(seed, u64::MAX));
    let below = truth.candidates(Side::Below);
    let above = truth.candidates(Side::Above);
    let outcomes: Vec<bool> = (0..runs)
        .into_par_iter()
        .map(|r| {
            let v = truth.sample(&mut seeded(seed, r as u64), 1000)?;
            let sel = select_certified(&below, &above, &v, zeta, delta)?;
            let (lo, hi) = (&sel.bracket.lower, &sel.bracket.upper);
            let at = |i: usize| [truth.xs[i]];
            let disorder = truth.mass(|i| lo.decide(&at(i)) && !hi.decide(&at(i)));
            let outside = truth.mass(|i| {
                let g = truth.g[i];
                (lo.decide(&at(i)) && !g) || (g && !hi.decide(&at(i)))
            });
            Ok(disorder <= zeta / 2.0 && outside <= zeta)
        })
        .collect::<Result<_>>()?;
    let hits = outcomes.iter().filter(|&&b| b).count();
    Ok((hits as f64 / runs as f64, hits))
}

pub fn certified_selection_case(seed: u64, runs: usize) -> Result<CaseResult> {
    let (rate, hits) = certified_selection_rate(seed, runs)?;
    Ok(CaseResult::new(
        "certified-selection",
        rate >= 0.85,
        json!({ "runs": runs, "hits": hits, "rate": rate, "required": 0.85, "zeta": 0.1, "delta": 0.1 }),
    ))
}

/// A domain of `n` points with a random cloud and a class of 32 concepts built
/// as noisy copies of `g` (plus the constant 0), so true leakages spread
/// around the interesting range.
fn osl_fixture(rng: &mut impl Rng) -> (FiniteConcept, FiniteMeasure, FiniteClass) {
    let n = 24;
    let g = FiniteConcept::new((0..n).map(|_| rng.gen()).collect());
    let mu = FiniteMeasure::new((0..n).map(|_| rng.gen_range(1..=10)).collect()).expect("positive");
    let mut concepts = vec![FiniteConcept::constant(n, false)];
    while concepts.len() < 32 {
        let drop = rng.gen_range(0.0..0.6);
        let add = rng.gen_range(0.0..0.4);
        let h = FiniteConcept::new(
            g.bits.iter().map(|&b| if b { rng.gen::<f64>() >= drop } else { rng.gen::<f64>() < add }).collect(),
        );
        if !concepts.contains(&h) {
            concepts.push(h);
        }
    }
    (g, mu, FiniteClass::new("noisy-copies", concepts).expect("nonempty"))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OslPacRates {
    pub guarantee: f64,
    pub sandwich: f64,
    pub m1: usize,
    pub m2: usize,
    /// Concepts with true leakage in `(lambda/4, 3lambda/4]`, where testing may go either way.
    pub ambiguous: usize,
}

/// Over `trials` fresh draws: how often the learner's output has true leakage
/// `<= lambda` and excess miss `<= eps` over the best zero-leakage concept,
/// and how often `H_{lambda/4} ⊂ Ĥ_lambda ⊂ H_{3lambda/4}` holds.
pub fn osl_pac_rates(seed: u64, trials: usize) -> Result<OslPacRates> {
    let (lambda, eps, delta) = (0.2, 0.2, 0.1);
    let (g, mu, h) = osl_fixture(&mut seeded(seed, u64::MAX));
    let (m1, m2) = (osl_m1(lambda, h.len(), delta), osl_m2(eps, h.len(), delta));
    let to_f = |r: Ratio<u64>| *r.numer() as f64 / *r.denom() as f64;
    let leak: Vec<f64> = h.concepts().iter().map(|c| to_f(mu.mass_where(|i| c.bits[i] && !g.bits[i]))).collect();
    let miss: Vec<f64> = h.concepts().iter().map(|c| to_f(mu.mass_where(|i| !c.bits[i] && g.bits[i]))).collect();
    let best_exact = (0..h.len()).filter(|&i| leak[i] == 0.0).map(|i| miss[i]).fold(f64::INFINITY, f64::min);
    let outcomes: Vec<(bool, bool)> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = seeded(seed, t as u64);
            let mut draw = |k: usize| -> Vec<Sample> {
                (0..k).map(|_| {
                    let x = mu.sample(&mut rng);
                    (x, g.bits[x])
                }).collect()
            };
            let testing = draw(m1);
            let optimising = draw(m2);
            let out = finite_osl_learn(&testing, &optimising, &h, lambda)?;
            let i = h.concepts().iter().position(|c| *c == out.hypothesis).expect("returned from class");
            let guarantee = leak[i] <= lambda && miss[i] - best_exact <= eps;
            let kept = |j: usize| out.kept.binary_search(&j).is_ok();
            let sandwich = (0..h.len()).all(|j| (leak[j] > lambda / 4.0 || kept(j)) && (!kept(j) || leak[j] <= 0.75 * lambda));
            Ok((guarantee, sandwich))
        })
        .collect::<Result<_>>()?;
    let rate = |f: fn(&(bool, bool)) -> bool| outcomes.iter().filter(|o| f(o)).count() as f64 / trials as f64;
    let ambiguous = leak.iter().filter(|&&l| l > lambda / 4.0 && l <= 0.75 * lambda).count();
    Ok(OslPacRates { guarantee: rate(|o| o.0), sandwich: rate(|o| o.1), m1, m2, ambiguous })
}

pub fn osl_pac_case(seed: u64, trials: usize) -> Result<CaseResult> {
    let r = osl_pac_rates(seed, trials)?;
    Ok(CaseResult::new(
        "osl-pac",
        r.m1 == 859 && r.m2 == 358 && r.guarantee >= 0.9 && r.sandwich >= 0.9,
        json!({ "trials": trials, "m1": r.m1, "m2": r.m2, "guarantee_rate": r.guarantee,
                "sandwich_rate": r.sandwich, "required": 0.9, "ambiguous_concepts": r.ambiguous }),
    ))
}

/// Random convex polygons with `D` in `[6, 12]`, `d` in `{4, 5}` and
/// `samples` uniform points on `[-1.5, 1.5]^2`.
pub fn polygon_cases(seed: u64, polygons: usize, samples: usize) -> Result<Vec<CaseResult>> {
    (0..polygons)
        .into_par_iter()
        .map(|k| {
            let mut rng = seeded(seed, k as u64);
            let big_d = rng.gen_range(6..=12);
            let d = rng.gen_range(4..=5);
            let p = ConvexPolygon::random(&mut rng, big_d)?;
            let s = WeightedSample::uniform_box(&mut rng, samples, -1.5, 1.5)?;
            let b = polygon_budget(&p, &s, d)?;
            Ok(CaseResult::new(
                format!("polygon-{k}"),
                b.usage <= b.bound + 0.02,
                json!({ "D": b.big_d, "d": b.d, "usage": b.usage, "bound": b.bound, "polygon": p }),
            ))
        })
        .collect()
}

/// Sparse construction on uniform-support measures: usage exactly `1 - d/D`.
pub fn sparse_cases() -> Result<Vec<CaseResult>> {
    let mut out = Vec::new();
    for n in 1..=10usize {
        for big_d in 1..=n {
            // Support on the last `D` points, so indices do not line up with the support.
            let g = FiniteConcept::new((0..n).map(|i| i >= n - big_d).collect());
            let mu = FiniteMeasure::uniform_on(&g)?;
            for d in 0..=big_d {
                let b = sparse_bracket(&g, &mu, d)?;
                let expected = Ratio::new((big_d - d) as u64, big_d as u64);
                out.push(CaseResult::new(
                    format!("sparse-N{n}-D{big_d}-d{d}"),
                    b.usage == expected && b.contains(&g),
                    json!({ "usage": ratio_json(b.usage), "expected": ratio_json(expected) }),
                ));
            }
        }
    }
    Ok(out)
}

/// Number of concepts [`tensor_class`] enumerates before deduplication.
fn tensor_enumeration_size(s: usize, blocks: usize, d: usize) -> u128 {
    let choose = |n: u128, k: u128| (0..k).fold(1u128, |acc, i| acc * (n - i) / (i + 1));
    (0..d.clamp(1, blocks))
        .map(|k| 2 * choose(blocks as u128, k as u128) * (s as u128 + 1).pow(k as u32))
        .sum()
}

/// Tensorised thresholds on uniform measures, `N = sD <= 12`: the construction
/// stays within `1 - (d-1)/D` and never beats the exhaustive optimum over
/// its own class.
pub fn tensor_cases(seed: u64) -> Result<Vec<CaseResult>> {
    let mut rng = seeded(seed, 7);
    let mut out = Vec::new();
    for blocks in 1..=12usize {
        for s in 1..=12 / blocks {
            let n = s * blocks;
            let mu = FiniteMeasure::uniform(n);
            let mut all: Vec<Vec<usize>> = vec![vec![]];
            for _ in 0..blocks {
                all = all.into_iter().flat_map(|ks| (0..=s).map(move |k| [ks.clone(), vec![k]].concat())).collect();
            }
            all.shuffle(&mut rng);
            all.truncate(12);
            for d in 1..=blocks {
                let class = (tensor_enumeration_size(s, blocks, d) <= 3000).then(|| tensor_class(s, blocks, d));
                for ks in &all {
                    let g = tensor_threshold(s, ks);
                    debug_assert_eq!(block_thresholds(&g, blocks)?, *ks);
                    let b = tensor_threshold_bracket(&g, &mu, blocks, d)?;
                    let bound = Ratio::new((blocks - d + 1) as u64, blocks as u64);
                    let mut ok = b.contains(&g) && b.usage <= bound;
                    let mut detail = json!({ "g": g.to_string(), "usage": ratio_json(b.usage), "bound": ratio_json(bound) });
                    if let Some(h) = &class {
                        let opt = optimal_bracket(&g, &mu, h)?;
                        ok &= h.contains(&b.lower) && h.contains(&b.upper) && opt.usage <= b.usage;
                        detail["optimal"] = ratio_json(opt.usage);
                        detail["class_size"] = json!(h.len());
                    }
                    out.push(CaseResult::new(format!("tensor-s{s}-D{blocks}-d{d}-{g}"), ok, detail));
                }
            }
        }
    }
    Ok(out)
}

/// Guillotine partition of `[x0,x1) x [y0,y1)` into rectangles of at least
/// `min_area` cells with random labels.
fn guillotine(rng: &mut impl Rng, r: (usize, usize, usize, usize), min_area: usize, out: &mut Vec<LabeledRect>) {
    let (x0, x1, y0, y1) = r;
    let (w, h) = (x1 - x0, y1 - y0);
    let mut cuts = Vec::new();
    for c in 1..w {
        if c * h >= min_area && (w - c) * h >= min_area {
            cuts.push((true, x0 + c));
        }
    }
    for c in 1..h {
        if w * c >= min_area && w * (h - c) >= min_area {
            cuts.push((false, y0 + c));
        }
    }
    if cuts.is_empty() || rng.gen::<f64>() < 0.15 {
        out.push(LabeledRect { x0, x1, y0, y1, label: rng.gen() });
        return;
    }
    let &(vertical, at) = cuts.choose(rng).expect("nonempty");
    if vertical {
        guillotine(rng, (x0, at, y0, y1), min_area, out);
        guillotine(rng, (at, x1, y0, y1), min_area, out);
    } else {
        guillotine(rng, (x0, x1, y0, at), min_area, out);
        guillotine(rng, (x0, x1, at, y1), min_area, out);
    }
}

/// V-regular grid fixtures on `[0,1]^2` (`p = 2`): parts of volume at least `V`,
/// cell density at least `rho`. With `kappa = floor(d/2p - 1) <= 1/V`, the
/// rectangle construction must satisfy `usage <= 1 - rho kappa V / 3`.
pub fn rectangle_cases(seed: u64, fixtures: usize) -> Result<Vec<CaseResult>> {
    const W: usize = 12;
    const P: usize = 2;
    (0..fixtures)
        .map(|k| {
            let mut rng = seeded(seed, 1_000 + k as u64);
            let min_area = rng.gen_range(4..=24);
            let mut parts = Vec::new();
            guillotine(&mut rng, (0, W, 0, W), min_area, &mut parts);
            let v = min_area as f64 / (W * W) as f64;
            let base = rng.gen_range(1..=20u64);
            let weights: Vec<u64> = (0..W * W).map(|_| base + rng.gen_range(0..=10)).collect();
            let total: u64 = weights.iter().sum();
            let rho = (W * W) as f64 * base as f64 / total as f64;
            let grid = GridMeasure::new(W, W, FiniteMeasure::new(weights)?)?;
            let kappa = rng.gen_range(1..=((1.0 / v).floor() as usize).min(6));
            let d = 2 * P * (kappa + 1);
            assert_eq!((d as f64 / (2 * P) as f64 - 1.0).floor() as usize, kappa);
            let b = rectangle_bracket(&parts, &grid, kappa)?;
            let usage = *b.usage.numer() as f64 / *b.usage.denom() as f64;
            let bound = 1.0 - rho * kappa as f64 * v / 3.0;
            Ok(CaseResult::new(
                format!("rectangles-{k}"),
                usage <= bound,
                json!({ "parts": parts.len(), "V": v, "rho": rho, "kappa": kappa, "d": d, "usage": usage, "bound": bound }),
            ))
        })
        .collect()
}

/// Largest `k` with `P[Bin(n, a/100) <= k] <= b/100`, by exact integer
/// arithmetic: `100 * sum_{i<=k} C(n,i) a^i (100-a)^(n-i) <= b * 100^n`.
pub fn exact_tail_index(n: u64, a: u64, b: u64) -> Option<u64> {
    let hundred = BigUint::from(100u32);
    let rhs = BigUint::from(b) * hundred.pow(n as u32);
    let mut cdf = BigUint::from(0u32);
    let mut choose = BigUint::from(1u32);
    let mut best = None;
    for i in 0..=n {
        if i > 0 {
            choose = choose * (n - i + 1) / i;
        }
        let term = &choose * BigUint::from(a).pow(i as u32) * BigUint::from(100 - a).pow((n - i) as u32);
        cdf += term;
        if &cdf * &hundred <= rhs {
            best = Some(i);
        } else {
            break;
        }
    }
    best
}

/// `binom_tail_inv` against the exact oracle for `n <= 200`,
/// `p in {0.01, ..., 0.50}`, `delta in {0.01, 0.05, 0.1}`; one case per `(p, delta)`.
pub fn binom_cases() -> Vec<CaseResult> {
    let grid: Vec<(u64, u64)> = (1..=50).flat_map(|a| [1u64, 5, 10].map(|b| (a, b))).collect();
    grid.into_par_iter()
        .map(|(a, b)| {
            let (p, delta) = (a as f64 / 100.0, b as f64 / 100.0);
            let mismatches: Vec<Value> = (1..=200u64)
                .filter_map(|n| {
                    let want = exact_tail_index(n, a, b);
                    let got = binom_tail_inv(n, p, delta).k_star;
                    (want != got).then(|| json!({ "n": n, "exact": want, "got": got }))
                })
                .collect();
            CaseResult::new(format!("binom-p{p}-delta{delta}"), mismatches.is_empty(), json!({ "mismatches": mismatches }))
        })
        .collect()
}

/// Pass/fail counts per suite, for summaries.
pub fn summarize(reports: &[SuiteReport]) -> BTreeMap<String, (usize, usize)> {
    reports.iter().map(|r| (r.suite.to_string(), (r.cases_passed, r.cases_total))).collect()
}
