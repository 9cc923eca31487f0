//! Brackets `[h-, h+]`, the budget classifier they induce, and model selection.
//!
//! The budget classifier predicts locally where `h-(x) = h+(x)` and queries the
//! cloud elsewhere; the measure of the disagreement region is the usage.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datasets::{synthetic_label, Dataset};
use crate::error::{Error, Result};
use crate::models::PredictorModel;
use crate::oneside::{leakage, OneSidedCandidate, Side};

/// A `{0,1}`-valued local hypothesis: a thresholded linear model or a boolean
/// composition of hypotheses (needed to express gated classifiers as brackets).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Hypothesis {
    Linear(PredictorModel),
    Constant { constant: bool },
    /// `max(p, 1 - p) >= at_least` for the model's score `p`.
    Confident { confidence_of: PredictorModel, at_least: f64 },
    Not { not: Box<Hypothesis> },
    And { and: Box<(Hypothesis, Hypothesis)> },
    Or { or: Box<(Hypothesis, Hypothesis)> },
}

impl Hypothesis {
    pub fn decide(&self, x: &[f64]) -> bool {
        match self {
            Hypothesis::Linear(m) => m.decide(x),
            Hypothesis::Constant { constant } => *constant,
            Hypothesis::Confident { confidence_of, at_least } => {
                let p = confidence_of.score(x);
                p.max(1.0 - p) >= *at_least
            }
            Hypothesis::Not { not } => !not.decide(x),
            Hypothesis::And { and } => and.0.decide(x) && and.1.decide(x),
            Hypothesis::Or { or } => or.0.decide(x) || or.1.decide(x),
        }
    }

    pub fn not(self) -> Self {
        Hypothesis::Not { not: Box::new(self) }
    }

    pub fn and(self, other: Hypothesis) -> Self {
        Hypothesis::And { and: Box::new((self, other)) }
    }

    pub fn or(self, other: Hypothesis) -> Self {
        Hypothesis::Or { or: Box::new((self, other)) }
    }
}

impl From<PredictorModel> for Hypothesis {
    fn from(m: PredictorModel) -> Self {
        Hypothesis::Linear(m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bracket {
    pub lower: Hypothesis,
    pub upper: Hypothesis,
    /// Measured `mu(h- > h+)` on the set the bracket was assembled on.
    pub ordering_violation: f64,
}

impl Bracket {
    /// Builds a bracket and measures its ordering violation on `d`.
    pub fn measured(lower: Hypothesis, upper: Hypothesis, d: &Dataset) -> Self {
        let ordering_violation = ordering_violation(&lower, &upper, d);
        Self { lower, upper, ordering_violation }
    }

    /// `[0, 1]`: defer everywhere.
    pub fn always_defer() -> Self {
        Self {
            lower: Hypothesis::Constant { constant: false },
            upper: Hypothesis::Constant { constant: true },
            ordering_violation: 0.0,
        }
    }

    #[inline]
    pub fn defers(&self, x: &[f64]) -> bool {
        self.lower.decide(x) != self.upper.decide(x)
    }
}

pub fn ordering_violation(lower: &Hypothesis, upper: &Hypothesis, d: &Dataset) -> f64 {
    d.mass_where(|i| {
        let x = d.row(i);
        lower.decide(x) && !upper.decide(x)
    })
}

/// The μ-size of the bracket: weighted fraction of rows where the sides disagree.
pub fn usage(b: &Bracket, d: &Dataset) -> f64 {
    d.mass_where(|i| b.defers(d.row(i)))
}

/// Source of ground-truth cloud decisions for arbitrary feature rows.
pub trait Cloud: Sync {
    fn query(&self, x: &[f64]) -> bool;
}

/// The synthetic quartic cloud; reads `(x, y)` from the first two columns,
/// which both the identity and conic maps preserve.
#[derive(Debug, Clone, Copy, Default)]
pub struct SyntheticCloud;

impl Cloud for SyntheticCloud {
    fn query(&self, x: &[f64]) -> bool {
        synthetic_label(x[0], x[1])
    }
}

/// `c_[h-,h+]`: local prediction on `{h- = h+}`, the cloud elsewhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetClassifier {
    pub bracket: Bracket,
}

impl BudgetClassifier {
    pub fn new(bracket: Bracket) -> Self {
        Self { bracket }
    }

    /// Returns `(prediction, used_cloud)`.
    pub fn predict(&self, x: &[f64], cloud_label: bool) -> (bool, bool) {
        let hi = self.bracket.upper.decide(x);
        if self.bracket.lower.decide(x) == hi {
            (hi, false)
        } else {
            (cloud_label, true)
        }
    }

    /// As [`predict`](Self::predict), querying `cloud` only on deferral.
    pub fn predict_with(&self, x: &[f64], cloud: &dyn Cloud) -> (bool, bool) {
        let hi = self.bracket.upper.decide(x);
        if self.bracket.lower.decide(x) == hi {
            (hi, false)
        } else {
            (cloud.query(x), true)
        }
    }

    /// Weighted agreement between the budget classifier and the cloud labels.
    pub fn accuracy_vs_cloud(&self, d: &Dataset) -> f64 {
        d.mass_where(|i| self.predict(d.row(i), d.label(i)).0 == d.label(i))
    }
}

/// Outcome of the binomial lower-tail inversion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailInversion {
    /// `max{k : F_{n,p}(k) <= delta}`, if any `k` qualifies.
    pub k_star: Option<u64>,
    /// `p - k*/n`, or `p` when infeasible.
    pub slack: f64,
}

impl TailInversion {
    pub fn feasible(&self) -> bool {
        self.k_star.is_some()
    }
}

/// Inverts the lower tail of `Binomial(n, p)` at level `delta`.
///
/// If at most `k*` of `n` draws fall in an event, its probability exceeds `p`
/// with chance at most `delta`; `p - k*/n` is the slack between the empirical
/// threshold and `p`. The CDF is summed exactly in log space.
pub fn binom_tail_inv(n: u64, p: f64, delta: f64) -> TailInversion {
    assert!(n >= 1, "binom_tail_inv needs n >= 1");
    assert!(p > 0.0 && p < 1.0 && delta > 0.0 && delta < 1.0);
    let (lp, lq) = (p.ln(), (-p).ln_1p());
    let ldelta = delta.ln();
    // log C(n, k) p^k q^(n-k), updated incrementally.
    let mut log_pmf = n as f64 * lq;
    let mut log_cdf = log_pmf;
    let mut k_star = None;
    for k in 0..=n {
        if k > 0 {
            log_pmf += ((n - k + 1) as f64 / k as f64).ln() + lp - lq;
            let (a, b) = if log_cdf > log_pmf { (log_cdf, log_pmf) } else { (log_pmf, log_cdf) };
            log_cdf = a + (b - a).exp().ln_1p();
        }
        if log_cdf <= ldelta {
            k_star = Some(k);
        } else {
            break;
        }
    }
    let slack = match k_star {
        Some(k) => p - k as f64 / n as f64,
        None => p,
    };
    TailInversion { k_star, slack }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub zeta: f64,
    pub delta: f64,
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub bracket: Bracket,
    pub below_xi: f64,
    pub above_xi: f64,
    /// Thresholds applied to the below and above models' underlying scores.
    pub thresholds: (f64, f64),
    pub validation_usage: f64,
    pub validation_accuracy: f64,
    pub certificate: Option<Certificate>,
}

impl SelectionResult {
    pub fn classifier(&self) -> BudgetClassifier {
        BudgetClassifier::new(self.bracket.clone())
    }

    pub fn save_json(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load_json(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// Certified selection with confidence `1 - delta` for a `zeta`-approximate bracket.
///
/// Per side, a candidate is admissible when its validation leakage is at most
/// `zeta/2 - slack`, the slack coming from [`binom_tail_inv`] at level
/// `delta / (2 |Xi|)`. Among admissible candidates the smallest validation
/// disagreement `mu_V(h != g)` wins. If the two winners overlap in order by
/// more than `zeta/2 + slack`, admissible pairs are tried by total disagreement.
pub fn select_certified(
    below: &[OneSidedCandidate],
    above: &[OneSidedCandidate],
    v: &Dataset,
    zeta: f64,
    delta: f64,
) -> Result<SelectionResult> {
    if below.is_empty() || above.is_empty() {
        return Err(Error::Validation("candidate lists must be nonempty".into()));
    }
    if !(zeta > 0.0 && zeta <= 1.0) || !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Validation("need zeta in (0, 1] and delta in (0, 1)".into()));
    }
    let grid = below.len().max(above.len()) as f64;
    let inv = binom_tail_inv(v.len() as u64, (zeta / 2.0).min(0.5), delta / (2.0 * grid));
    let slack = inv.slack;
    if !inv.feasible() {
        return Err(Error::CertificationInfeasible { slack });
    }
    let limit = zeta / 2.0 - slack + 1e-12;

    let admissible = |cands: &[OneSidedCandidate], side: Side| -> Vec<(f64, usize)> {
        let mut out: Vec<(f64, usize)> = cands
            .iter()
            .enumerate()
            .filter(|(_, c)| leakage(side, |x| c.model.decide(x), v) <= limit)
            .map(|(i, c)| (v.mass_where(|r| c.model.decide(v.row(r)) != v.label(r)), i))
            .collect();
        out.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        out
    };
    let lo = admissible(below, Side::Below);
    let hi = admissible(above, Side::Above);
    if lo.is_empty() || hi.is_empty() {
        return Err(Error::CertificationInfeasible { slack });
    }

    let mut pairs: Vec<(f64, usize, usize)> =
        lo.iter().flat_map(|&(m0, i)| hi.iter().map(move |&(m1, j)| (m0 + m1, i, j))).collect();
    // The per-side winners come first; the rest is a fallback ordering.
    pairs.sort_by(|a, b| {
        let first = |p: &(f64, usize, usize)| !(p.1 == lo[0].1 && p.2 == hi[0].1);
        first(a).cmp(&first(b)).then(a.0.total_cmp(&b.0)).then((a.1, a.2).cmp(&(b.1, b.2)))
    });
    for (_, i, j) in pairs {
        let (b, a) = (&below[i], &above[j]);
        let bracket =
            Bracket::measured(b.model.clone().into(), a.model.clone().into(), v);
        if bracket.ordering_violation <= zeta / 2.0 + slack + 1e-12 {
            let c = BudgetClassifier::new(bracket);
            return Ok(SelectionResult {
                validation_usage: usage(&c.bracket, v),
                validation_accuracy: c.accuracy_vs_cloud(v),
                bracket: c.bracket,
                below_xi: b.xi,
                above_xi: a.xi,
                thresholds: (b.model.threshold, a.model.threshold),
                certificate: Some(Certificate { zeta, delta, slack }),
            });
        }
    }
    Err(Error::CertificationInfeasible { slack })
}

/// Thresholds on a candidate's underlying score making its training leakage
/// exactly `i` rows, for `i = 0..=max_i` (fewer if there are fewer leak rows).
///
/// Leak rows are the `g = 0` rows for a below model and the `g = 1` rows for an
/// above model; in both cases a leak row leaks when its underlying score
/// exceeds the threshold. Each threshold is the midpoint between the `i`-th
/// highest leak score and the next larger training score (1 if none), so
/// leakage is exactly `i` barring tied scores.
pub fn leakage_thresholds(c: &OneSidedCandidate, train: &Dataset, max_i: usize) -> Vec<f64> {
    let leak_label = c.side == Side::Above;
    let mut all: Vec<f64> = train.rows().map(|x| c.model.raw_score(x)).collect();
    let mut leaks: Vec<f64> = (0..train.len())
        .filter(|&r| train.label(r) == leak_label)
        .map(|r| all[r])
        .collect();
    all.sort_by(|a, b| b.total_cmp(a));
    leaks.sort_by(|a, b| b.total_cmp(a));
    (0..=max_i.min(leaks.len()))
        .map(|i| {
            let v = leaks.get(i).copied().unwrap_or(0.0);
            let above = all.partition_point(|&s| s > v);
            let next = if above == 0 { 1.0 } else { all[above - 1] };
            0.5 * (v + next)
        })
        .collect()
}

#[derive(Debug, Clone, Copy)]
struct Tuple {
    usage: f64,
    accuracy: f64,
    bi: usize,
    ai: usize,
    i: usize,
}

fn better(a: &Tuple, b: &Tuple, below: &[OneSidedCandidate], above: &[OneSidedCandidate]) -> Ordering {
    a.usage
        .total_cmp(&b.usage)
        .then(b.accuracy.total_cmp(&a.accuracy))
        .then(below[a.bi].xi.total_cmp(&below[b.bi].xi))
        .then(above[a.ai].xi.total_cmp(&above[b.ai].xi))
        .then((a.bi, a.ai, a.i).cmp(&(b.bi, b.ai, b.i)))
}

type Prepared = Vec<(Vec<f64>, Vec<f64>)>;

/// Every (pair, i) tuple of the empirical scan with its validation metrics,
/// plus per-candidate thresholds and validation scores.
fn empirical_tuples(
    below: &[OneSidedCandidate],
    above: &[OneSidedCandidate],
    train: &Dataset,
    v: &Dataset,
    target_accuracy: f64,
) -> Result<(Vec<Tuple>, Prepared, Prepared)> {
    if below.is_empty() || above.is_empty() {
        return Err(Error::Validation("candidate lists must be nonempty".into()));
    }
    if !(target_accuracy > 0.0 && target_accuracy < 1.0) {
        return Err(Error::Validation("target accuracy must lie in (0, 1)".into()));
    }
    let alpha = 1.0 - target_accuracy;
    let max_i = (alpha * train.len() as f64 + 1e-9).floor() as usize;

    let prepare = |cands: &[OneSidedCandidate]| -> Vec<(Vec<f64>, Vec<f64>)> {
        cands
            .par_iter()
            .map(|c| {
                let taus = leakage_thresholds(c, train, max_i);
                let scores = (0..v.len()).map(|r| c.model.raw_score(v.row(r))).collect();
                (taus, scores)
            })
            .collect()
    };
    let lo = prepare(below);
    let hi = prepare(above);
    let labels = v.labels();
    let weights = v.weights();

    let evaluate = |bi: usize, ai: usize, i: usize| -> Option<Tuple> {
        let (tl, sl) = (&lo[bi].0, &lo[bi].1);
        let (ta, sa) = (&hi[ai].0, &hi[ai].1);
        let (tau_b, tau_a) = (*tl.get(i)?, *ta.get(i)?);
        let (mut usage, mut wrong) = (0.0, 0.0);
        for r in 0..labels.len() {
            let l = sl[r] > tau_b;
            let u = !(sa[r] > tau_a);
            if l != u {
                usage += weights[r];
            } else if u != labels[r] {
                wrong += weights[r];
            }
        }
        Some(Tuple { usage, accuracy: 1.0 - wrong, bi, ai, i })
    };

    let all: Vec<Tuple> = (0..below.len())
        .into_par_iter()
        .flat_map_iter(|bi| {
            (0..above.len()).flat_map(move |ai| (0..=max_i).filter_map(move |i| evaluate(bi, ai, i)))
        })
        .collect();

    Ok((all, lo, hi))
}

/// Empirical selection for a target accuracy `1 - alpha`.
///
/// For every (below, above) pair and every `i in 0..=floor(alpha T)` both
/// sides are re-thresholded to leak exactly `i` training rows; the tuple of
/// minimum validation usage with validation accuracy `>= target` wins. Ties go
/// to higher accuracy, then lower multipliers.
pub fn select_empirical(
    below: &[OneSidedCandidate],
    above: &[OneSidedCandidate],
    train: &Dataset,
    v: &Dataset,
    target_accuracy: f64,
) -> Result<SelectionResult> {
    let (all, lo, hi) = empirical_tuples(below, above, train, v, target_accuracy)?;
    let best = all
        .iter()
        .filter(|t| t.accuracy >= target_accuracy)
        .min_by(|a, b| better(a, b, below, above));
    let Some(t) = best else {
        let best_accuracy = all.iter().map(|t| t.accuracy).fold(0.0, f64::max);
        return Err(Error::TargetUnattainable { target: target_accuracy, best_accuracy });
    };
    Ok(assemble(t, below, above, &lo, &hi, v))
}

/// The most accurate tuple of the empirical scan (ties to lower usage); the
/// fallback reported when no tuple reaches the target.
pub fn select_most_accurate(
    below: &[OneSidedCandidate],
    above: &[OneSidedCandidate],
    train: &Dataset,
    v: &Dataset,
    target_accuracy: f64,
) -> Result<SelectionResult> {
    let (all, lo, hi) = empirical_tuples(below, above, train, v, target_accuracy)?;
    let t = all
        .iter()
        .min_by(|a, b| {
            b.accuracy.total_cmp(&a.accuracy).then(better(a, b, below, above))
        })
        .expect("scan includes i = 0 for every pair");
    Ok(assemble(t, below, above, &lo, &hi, v))
}

fn assemble(
    t: &Tuple,
    below: &[OneSidedCandidate],
    above: &[OneSidedCandidate],
    lo: &[(Vec<f64>, Vec<f64>)],
    hi: &[(Vec<f64>, Vec<f64>)],
    v: &Dataset,
) -> SelectionResult {
    let (tau_b, tau_a) = (lo[t.bi].0[t.i], hi[t.ai].0[t.i]);
    let lower = below[t.bi].model.with_threshold(tau_b);
    let upper = above[t.ai].model.with_threshold(tau_a);
    let bracket = Bracket::measured(lower.into(), upper.into(), v);
    let c = BudgetClassifier::new(bracket);
    SelectionResult {
        validation_usage: usage(&c.bracket, v),
        validation_accuracy: c.accuracy_vs_cloud(v),
        bracket: c.bracket,
        below_xi: below[t.bi].xi,
        above_xi: above[t.ai].xi,
        thresholds: (tau_b, tau_a),
        certificate: None,
    }
}

/// The bracket `[gamma pi, gamma pi + 1 - gamma]` of a gated classifier.
pub fn gating_to_bracket(gamma: Hypothesis, pi: Hypothesis) -> Bracket {
    let lower = gamma.clone().and(pi.clone());
    let upper = gamma.not().or(pi);
    Bracket { lower, upper, ordering_violation: 0.0 }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::FeatureMap;
    use crate::models::PredictorModel;
    use proptest::prelude::*;

    fn constant(b: bool) -> Hypothesis {
        Hypothesis::Constant { constant: b }
    }

    /// Rows `0..n` with the index as the only feature.
    fn indexed(labels: Vec<bool>) -> Dataset {
        let rows = (0..labels.len()).map(|i| vec![i as f64]).collect();
        Dataset::new(vec!["i".into()], rows, labels, FeatureMap::Identity).unwrap()
    }

    /// `x < t` as a linear model over the index feature.
    fn below_cut(t: f64) -> PredictorModel {
        PredictorModel {
            feature_map: FeatureMap::Identity,
            weights: vec![-1.0],
            bias: t,
            threshold: 0.5,
            complemented: false,
        }
    }

    fn candidate(model: PredictorModel, side: Side, xi: f64) -> OneSidedCandidate {
        OneSidedCandidate { xi, side, model, train_leakage: 0.0, train_miss: 0.0 }
    }

    #[test]
    fn usage_examples() {
        let d = indexed(vec![true, false, true, false]);
        let h = Hypothesis::Linear(below_cut(1.5));
        assert_eq!(usage(&Bracket::measured(h.clone(), h.clone(), &d), &d), 0.0);
        assert_eq!(usage(&Bracket::always_defer(), &d), 1.0);
        let b = Bracket::measured(Hypothesis::Linear(below_cut(1.5)), Hypothesis::Linear(below_cut(2.5)), &d);
        assert_eq!(usage(&b, &d), 0.25);
    }

    #[test]
    fn predict_branches() {
        let agree = BudgetClassifier::new(Bracket {
            lower: constant(true),
            upper: constant(true),
            ordering_violation: 0.0,
        });
        assert_eq!(agree.predict(&[0.0], false), (true, false));
        let defer = BudgetClassifier::new(Bracket::always_defer());
        assert_eq!(defer.predict(&[0.0], false), (false, true));
        let d = indexed(vec![true, false, false]);
        assert_eq!(defer.accuracy_vs_cloud(&d), 1.0);
    }

    #[test]
    fn binom_tail_inv_examples() {
        let t = binom_tail_inv(100, 0.05, 0.05);
        assert_eq!(t.k_star, Some(1));
        assert!((t.slack - 0.04).abs() < 1e-15);
        let t = binom_tail_inv(1, 0.5, 0.4);
        assert_eq!(t, TailInversion { k_star: None, slack: 0.5 });
    }

    #[test]
    fn certified_prefers_zero_leakage_constant() {
        let labels: Vec<bool> = (0..2000).map(|i| i % 2 == 0).collect();
        let v = indexed(labels);
        let ones = PredictorModel::constant(1, FeatureMap::Identity, true);
        let zeros = PredictorModel::constant(1, FeatureMap::Identity, false);
        let below = vec![candidate(ones.clone(), Side::Below, 0.0), candidate(zeros.clone(), Side::Below, 1.0)];
        let above = vec![candidate(ones, Side::Above, 0.0)];
        let r = select_certified(&below, &above, &v, 0.1, 0.1).unwrap();
        assert_eq!(r.below_xi, 1.0);
        assert!((r.validation_usage - 1.0).abs() < 1e-9);
        let cert = r.certificate.unwrap();
        assert!(cert.slack >= 0.0 && cert.slack < 0.05);
    }

    #[test]
    fn certified_reports_infeasibility() {
        let v = indexed(vec![true, false]);
        let ones = PredictorModel::constant(1, FeatureMap::Identity, true);
        let below = vec![candidate(ones.clone(), Side::Below, 0.0)];
        let above = vec![candidate(ones, Side::Above, 0.0)];
        assert!(matches!(
            select_certified(&below, &above, &v, 0.1, 0.1),
            Err(Error::CertificationInfeasible { .. })
        ));
    }

    #[test]
    fn zero_leak_thresholds_leak_nothing_on_train() {
        let labels: Vec<bool> = (0..40).map(|i| i < 22).collect();
        let d = indexed(labels);
        let slope = PredictorModel { weights: vec![-0.3], bias: 6.0, ..below_cut(0.0) };
        let lo = candidate(slope.clone(), Side::Below, 0.0);
        let hi = candidate(slope.complement(), Side::Above, 0.0);
        for c in [&lo, &hi] {
            let taus = leakage_thresholds(c, &d, 5);
            for (i, &t) in taus.iter().enumerate() {
                let m = c.model.with_threshold(t);
                let leaked = leakage(c.side, |x| m.decide(x), &d);
                assert!((leaked - i as f64 / 40.0).abs() < 1e-12, "side {:?} i {i}", c.side);
            }
        }
    }

    #[test]
    fn empirical_selection_on_threshold_task() {
        let labels: Vec<bool> = (0..200).map(|i| i < 120).collect();
        let d = indexed(labels);
        let m = PredictorModel { weights: vec![-0.05], bias: 6.0, ..below_cut(0.0) };
        let below = vec![candidate(m.clone(), Side::Below, 0.0)];
        let flip = PredictorModel { weights: vec![0.05], bias: -6.0, ..m.clone() };
        let above = vec![candidate(flip.complement(), Side::Above, 0.0)];
        let r = select_empirical(&below, &above, &d, &d, 0.99).unwrap();
        assert!(r.validation_accuracy >= 0.99);
        assert!(r.validation_usage <= 0.01 + 1e-12, "{}", r.validation_usage);
        assert!(r.certificate.is_none());
        let unreachable = select_empirical(&below, &above, &d, &indexed(vec![false; 200]), 0.999);
        assert!(matches!(unreachable, Err(Error::TargetUnattainable { .. })));
    }

    #[test]
    fn gating_examples() {
        let pi = Hypothesis::Linear(below_cut(2.5));
        let d = indexed(vec![true, true, false, false, true]);
        let local = gating_to_bracket(constant(true), pi.clone());
        assert_eq!(usage(&local, &d), 0.0);
        for x in d.rows() {
            assert_eq!(local.lower.decide(x), pi.decide(x));
        }
        let cloud = gating_to_bracket(constant(false), pi);
        assert_eq!(usage(&cloud, &d), 1.0);
    }

    #[test]
    fn selection_result_json_roundtrip() {
        let b = gating_to_bracket(Hypothesis::Linear(below_cut(3.0)), constant(true));
        let r = SelectionResult {
            bracket: b,
            below_xi: 1.5,
            above_xi: 2.0,
            thresholds: (0.25, 0.75),
            validation_usage: 0.1,
            validation_accuracy: 0.99,
            certificate: Some(Certificate { zeta: 0.1, delta: 0.1, slack: 0.01 }),
        };
        let back: SelectionResult = serde_json::from_str(&serde_json::to_string(&r).unwrap()).unwrap();
        assert_eq!(back, r);
    }

    fn bits(n: usize) -> impl Strategy<Value = Vec<bool>> {
        prop::collection::vec(any::<bool>(), n)
    }

    fn table(b: Vec<bool>) -> Hypothesis {
        // Decision table over the index feature, as a disjunction of unit windows.
        b.iter().enumerate().filter(|(_, &v)| v).fold(constant(false), |acc, (i, _)| {
            let window = Hypothesis::Linear(below_cut(i as f64 + 0.5))
                .and(Hypothesis::Linear(below_cut(i as f64 - 0.5)).not());
            acc.or(window)
        })
    }

    proptest! {
        #[test]
        fn decoupling_at_empirical_level(g in bits(10), a in bits(10), b in bits(10)) {
            // Enforce containment h- <= g <= h+.
            let lo: Vec<bool> = g.iter().zip(&a).map(|(g, a)| *g && *a).collect();
            let hi: Vec<bool> = g.iter().zip(&b).map(|(g, b)| *g || *b).collect();
            let d = indexed(g.clone());
            let br = Bracket::measured(table(lo.clone()), table(hi.clone()), &d);
            let miss = |h: &[bool]| d.mass_where(|i| h[i] != g[i]);
            prop_assert!((usage(&br, &d) - (miss(&lo) + miss(&hi))).abs() < 1e-12);
            prop_assert_eq!(br.ordering_violation, 0.0);
        }

        #[test]
        fn gating_is_ordered_and_equivalent(g in bits(10), gamma in bits(10), pi in bits(10)) {
            let d = indexed(g.clone());
            let br = gating_to_bracket(table(gamma.clone()), table(pi.clone()));
            let c = BudgetClassifier::new(br.clone());
            for i in 0..10 {
                let x = d.row(i);
                prop_assert!(!br.lower.decide(x) || br.upper.decide(x));
                let gated = if gamma[i] { pi[i] } else { g[i] };
                prop_assert_eq!(c.predict(x, g[i]).0, gated);
            }
            prop_assert_eq!(usage(&br, &d), d.mass_where(|i| !gamma[i]));
        }

        #[test]
        fn accuracy_union_bound(g in bits(10), lo in bits(10), hi in bits(10)) {
            let d = indexed(g.clone());
            let c = BudgetClassifier::new(Bracket::measured(table(lo.clone()), table(hi.clone()), &d));
            let leak_b = d.mass_where(|i| lo[i] && !g[i]);
            let leak_a = d.mass_where(|i| !hi[i] && g[i]);
            prop_assert!(c.accuracy_vs_cloud(&d) >= 1.0 - leak_b - leak_a - 1e-12);
        }

        #[test]
        fn tail_index_is_monotone(n in 1u64..200, a in 1u32..50, di in 0usize..3) {
            let delta = [0.01, 0.05, 0.1][di];
            let p = a as f64 / 100.0;
            let k = |n, p| binom_tail_inv(n, p, delta).k_star.map_or(-1, |k| k as i64);
            prop_assert!(k(n + 1, p) >= k(n, p));
            prop_assert!(k(n, p + 0.01) >= k(n, p));
            let t = binom_tail_inv(n, p, delta);
            prop_assert!(t.slack >= 0.0 && t.slack <= p);
        }
    }
}
