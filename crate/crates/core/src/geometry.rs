//! Convex polygons and their inner/outer `d`-gon approximations.
//!
//! Measures are weighted point clouds; every mass below is a fraction of the
//! cloud's total weight.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point = [f64; 2];

/// Slack for orientation and membership predicates.
pub const EPS: f64 = 1e-9;
/// Side extensions meeting farther out than this are treated as non-extendable.
pub const FAR: f64 = 1e6;

fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1]]
}

fn cross(a: Point, b: Point) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

/// Twice the signed area of `abc`; positive for a left turn.
pub fn orient(a: Point, b: Point, c: Point) -> f64 {
    cross(sub(b, a), sub(c, a))
}

/// A strictly convex polygon with counterclockwise vertices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Point>", into = "Vec<Point>")]
pub struct ConvexPolygon {
    vertices: Vec<Point>,
}

impl TryFrom<Vec<Point>> for ConvexPolygon {
    type Error = Error;

    fn try_from(v: Vec<Point>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<ConvexPolygon> for Vec<Point> {
    fn from(p: ConvexPolygon) -> Self {
        p.vertices
    }
}

impl ConvexPolygon {
    /// Drops consecutive duplicates, then requires at least three vertices,
    /// a strict left turn at every vertex, and a single winding.
    pub fn new(vertices: Vec<Point>) -> Result<Self> {
        if vertices.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::Geometry("non-finite vertex".into()));
        }
        let mut v: Vec<Point> = Vec::with_capacity(vertices.len());
        for p in vertices {
            if v.last().is_none_or(|q| sub(p, *q) != [0.0, 0.0]) {
                v.push(p);
            }
        }
        while v.len() > 1 && v.first() == v.last() {
            v.pop();
        }
        let n = v.len();
        if n < 3 {
            return Err(Error::Geometry(format!("a polygon needs 3 distinct vertices, got {n}")));
        }
        let mut turning = 0.0;
        for i in 0..n {
            let (a, b, c) = (v[i], v[(i + 1) % n], v[(i + 2) % n]);
            if orient(a, b, c) <= EPS {
                return Err(Error::Geometry(format!(
                    "vertex {} is collinear, reflex, or clockwise",
                    (i + 1) % n
                )));
            }
            let (d1, d2) = (sub(b, a), sub(c, b));
            turning += cross(d1, d2).atan2(d1[0] * d2[0] + d1[1] * d2[1]);
        }
        if (turning - std::f64::consts::TAU).abs() > 1e-6 {
            return Err(Error::Geometry("vertices wind more than once".into()));
        }
        Ok(Self { vertices: v })
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Closed membership with `EPS` slack.
    pub fn contains(&self, p: Point) -> bool {
        let n = self.len();
        (0..n).all(|i| orient(self.vertices[i], self.vertices[(i + 1) % n], p) >= -EPS)
    }

    pub fn area(&self) -> f64 {
        let n = self.len();
        (0..n).map(|i| cross(self.vertices[i], self.vertices[(i + 1) % n])).sum::<f64>() / 2.0
    }

    /// Regular `n`-gon inscribed in the circle of radius `r` about the origin.
    pub fn regular(n: usize, r: f64) -> Result<Self> {
        Self::new(
            (0..n)
                .map(|k| {
                    let t = std::f64::consts::TAU * k as f64 / n as f64;
                    [r * t.cos(), r * t.sin()]
                })
                .collect(),
        )
    }

    /// Random `n`-gon with vertices on the unit circle, consecutive angles at
    /// least `0.1` radians apart.
    pub fn random(rng: &mut impl Rng, n: usize) -> Result<Self> {
        let gap = 0.1;
        if n < 3 || n as f64 * gap >= std::f64::consts::TAU {
            return Err(Error::Geometry(format!("cannot draw a random {n}-gon")));
        }
        let slack = std::f64::consts::TAU - n as f64 * gap;
        // Spread the slack with uniform spacings, then add the minimum gap back.
        let mut cuts: Vec<f64> = (0..n - 1).map(|_| rng.gen::<f64>() * slack).collect();
        cuts.push(0.0);
        cuts.push(slack);
        cuts.sort_by(f64::total_cmp);
        let offset = rng.gen::<f64>() * std::f64::consts::TAU;
        let mut t = offset;
        let mut v = Vec::with_capacity(n);
        for w in cuts.windows(2).take(n) {
            v.push([t.cos(), t.sin()]);
            t += gap + (w[1] - w[0]);
        }
        Self::new(v)
    }
}

/// A weighted point cloud standing in for a measure on the plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedSample {
    pub points: Vec<Point>,
    pub weights: Vec<f64>,
}

impl WeightedSample {
    pub fn new(points: Vec<Point>, weights: Vec<f64>) -> Result<Self> {
        if points.len() != weights.len() || points.is_empty() {
            return Err(Error::Validation("sample needs matching, nonempty points and weights".into()));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) || weights.iter().sum::<f64>() <= 0.0 {
            return Err(Error::Validation("sample weights must be finite, nonnegative, not all zero".into()));
        }
        Ok(Self { points, weights })
    }

    pub fn unweighted(points: Vec<Point>) -> Result<Self> {
        let n = points.len();
        Self::new(points, vec![1.0; n])
    }

    /// `n` points uniform on the box `[lo, hi]^2`.
    pub fn uniform_box(rng: &mut impl Rng, n: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::unweighted((0..n).map(|_| [rng.gen_range(lo..hi), rng.gen_range(lo..hi)]).collect())
    }

    pub fn total(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Fraction of weight on points satisfying `pred`.
    pub fn mass_where(&self, pred: impl Fn(Point) -> bool) -> f64 {
        let m: f64 = self.points.iter().zip(&self.weights).filter(|(p, _)| pred(**p)).map(|(_, w)| w).sum();
        m / self.total()
    }

    pub fn mass(&self, p: &ConvexPolygon) -> f64 {
        self.mass_where(|x| p.contains(x))
    }

    fn triangle_mass(&self, a: Point, b: Point, c: Point) -> f64 {
        self.mass_where(|x| orient(a, b, x) >= -EPS && orient(b, c, x) >= -EPS && orient(c, a, x) >= -EPS)
    }
}

/// Vertex indices of the fans from vertex 0: fan `k` is vertex 0 followed by the
/// consecutive run starting at `1 + k(d - 2)` of up to `d - 1` vertices.
/// Consecutive fans share one boundary vertex, so together they tile `P`.
pub fn fan_indices(n: usize, d: usize) -> Result<Vec<Vec<usize>>> {
    if d < 3 || n < 3 {
        return Err(Error::Validation(format!("fans need d >= 3 and D >= 3, got d = {d}, D = {n}")));
    }
    let mut fans = Vec::new();
    let mut start = 1;
    while start < n - 1 {
        let end = (start + d - 2).min(n - 1);
        fans.push(std::iter::once(0).chain(start..=end).collect());
        start = end;
    }
    Ok(fans)
}

/// Heaviest fan of the consecutive-relabelling partition of `P` into `d`-gons.
pub fn inner_approx(p: &ConvexPolygon, sample: &WeightedSample, d: usize) -> Result<ConvexPolygon> {
    if p.len() < d {
        return Err(Error::Validation(format!("inner approximation needs D >= d, got D = {}, d = {d}", p.len())));
    }
    let fans = fan_indices(p.len(), d)?;
    let polys: Vec<ConvexPolygon> = fans
        .iter()
        .map(|f| ConvexPolygon::new(f.iter().map(|&i| p.vertices()[i]).collect()))
        .collect::<Result<_>>()?;
    let masses: Vec<f64> = polys.par_iter().map(|q| sample.mass(q)).collect();
    let best = (0..polys.len())
        .max_by(|&a, &b| masses[a].total_cmp(&masses[b]).then(b.cmp(&a)))
        .expect("at least one fan");
    Ok(polys.into_iter().nth(best).expect("index in range"))
}

/// Apex where the sides before and after side `i` (from vertex `i` to `i + 1`)
/// meet, if they converge within `FAR`.
fn extension_apex(v: &[Point], i: usize) -> Option<Point> {
    let n = v.len();
    let (a, b) = (v[(i + n - 1) % n], v[i]);
    let (c, e) = (v[(i + 1) % n], v[(i + 2) % n]);
    let (d1, d2) = (sub(b, a), sub(e, c));
    let denom = cross(d1, d2);
    if denom <= EPS * (d1[0].hypot(d1[1]) * d2[0].hypot(d2[1])) {
        return None;
    }
    let t = cross(sub(c, b), d2) / denom;
    let q = [b[0] + t * d1[0], b[1] + t * d1[1]];
    (t > 0.0 && q[0].hypot(q[1]) <= FAR).then_some(q)
}

/// Repeatedly removes one side by extending its neighbours into a triangle,
/// picking the least-mass triangle each round, until `d` vertices remain.
pub fn outer_approx(p: &ConvexPolygon, sample: &WeightedSample, d: usize) -> Result<ConvexPolygon> {
    if d < 4 || p.len() < d {
        return Err(Error::Validation(format!("outer approximation needs D >= d >= 4, got D = {}, d = {d}", p.len())));
    }
    let mut v = p.vertices().to_vec();
    while v.len() > d {
        let n = v.len();
        let best = (0..n)
            .into_par_iter()
            .filter_map(|i| extension_apex(&v, i).map(|q| (sample.triangle_mass(v[i], q, v[(i + 1) % n]), i, q)))
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
            .ok_or_else(|| Error::Geometry("no side can be removed by extension".into()))?;
        let (_, i, q) = best;
        v[i] = q;
        v.remove((i + 1) % n);
    }
    ConvexPolygon::new(v)
}

/// Budget report for one polygon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolygonBudget {
    #[serde(rename = "D")]
    pub big_d: usize,
    pub d: usize,
    pub usage: f64,
    pub bound: f64,
    #[serde(skip)]
    pub inner: Option<ConvexPolygon>,
    #[serde(skip)]
    pub outer: Option<ConvexPolygon>,
}

/// `1 - ceil(D/(d-2))^-1`, zero when `d >= D`.
pub fn polygon_bound(big_d: usize, d: usize) -> f64 {
    if d >= big_d {
        0.0
    } else {
        1.0 - 1.0 / big_d.div_ceil(d - 2) as f64
    }
}

/// Inner and outer `d`-gons of `P` and the sample mass strictly between them.
pub fn polygon_budget(p: &ConvexPolygon, sample: &WeightedSample, d: usize) -> Result<PolygonBudget> {
    let big_d = p.len();
    let bound = polygon_bound(big_d, d);
    if d >= big_d {
        return Ok(PolygonBudget { big_d, d, usage: 0.0, bound, inner: Some(p.clone()), outer: Some(p.clone()) });
    }
    let inner = inner_approx(p, sample, d)?;
    let outer = outer_approx(p, sample, d)?;
    if !inner.vertices().iter().all(|&x| p.contains(x)) {
        return Err(Error::Geometry("inner approximation leaves the polygon".into()));
    }
    if !p.vertices().iter().all(|&x| outer.contains(x)) {
        return Err(Error::Geometry("outer approximation misses a polygon vertex".into()));
    }
    let usage = sample.mass_where(|x| outer.contains(x) && !inner.contains(x));
    Ok(PolygonBudget { big_d, d, usage, bound, inner: Some(inner), outer: Some(outer) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn uniform(seed: u64, n: usize) -> WeightedSample {
        WeightedSample::uniform_box(&mut ChaCha8Rng::seed_from_u64(seed), n, -1.5, 1.5).unwrap()
    }

    #[test]
    fn validation() {
        assert!(ConvexPolygon::new(vec![[0.0, 0.0], [1.0, 0.0]]).is_err());
        assert!(ConvexPolygon::new(vec![[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [1.0, 1.0]]).is_err());
        assert!(ConvexPolygon::new(vec![[0.0, 0.0], [0.0, 1.0], [1.0, 0.0]]).is_err());
        let sq = ConvexPolygon::new(vec![[0.0, 0.0], [1.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0], [0.0, 0.0]]).unwrap();
        assert_eq!(sq.len(), 4);
        assert!((sq.area() - 1.0).abs() < 1e-12);
        assert!(sq.contains([1.0, 0.5]) && !sq.contains([1.1, 0.5]));
        let pentagram: Vec<Point> = (0..5)
            .map(|k| {
                let t = std::f64::consts::TAU * (2 * k) as f64 / 5.0;
                [t.cos(), t.sin()]
            })
            .collect();
        assert!(ConvexPolygon::new(pentagram).is_err());
    }

    #[test]
    fn json_is_a_point_array() {
        let sq = ConvexPolygon::new(vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]).unwrap();
        let s = serde_json::to_string(&sq).unwrap();
        assert_eq!(s, "[[0.0,0.0],[1.0,0.0],[1.0,1.0],[0.0,1.0]]");
        assert_eq!(serde_json::from_str::<ConvexPolygon>(&s).unwrap(), sq);
        assert!(serde_json::from_str::<ConvexPolygon>("[[0,0],[1,1]]").is_err());
    }

    #[test]
    fn fans_partition_vertices() {
        assert_eq!(fan_indices(5, 4).unwrap(), vec![vec![0, 1, 2, 3], vec![0, 3, 4]]);
        assert_eq!(fan_indices(4, 4).unwrap(), vec![vec![0, 1, 2, 3]]);
        for n in 3..20 {
            for d in 3..=n {
                let fans = fan_indices(n, d).unwrap();
                assert_eq!(fans.len(), (n - 2).div_ceil(d - 2));
                assert!(fans.len() <= n.div_ceil(d - 2));
                let mut seen = vec![false; n];
                for (k, f) in fans.iter().enumerate() {
                    assert!(f.len() >= 3 && f.len() <= d);
                    if k + 1 < fans.len() {
                        assert_eq!(f.last(), fans[k + 1].get(1));
                    }
                    f.iter().for_each(|&i| seen[i] = true);
                }
                assert!(seen.iter().all(|&s| s));
            }
        }
    }

    #[test]
    fn inner_examples() {
        let s = uniform(1, 10_000);
        let oct = ConvexPolygon::regular(8, 1.0).unwrap();
        let quad = inner_approx(&oct, &s, 4).unwrap();
        assert_eq!(quad.len(), 4);
        assert!(s.mass(&quad) >= s.mass(&oct) / 4.0);
        assert_eq!(inner_approx(&oct, &s, 8).unwrap(), oct);
        // Pentagon with all mass near vertex 4: the second fan wins.
        let pent = ConvexPolygon::regular(5, 1.0).unwrap();
        let v4 = pent.vertices()[4];
        let spot = WeightedSample::unweighted(vec![[0.9 * v4[0], 0.9 * v4[1]]]).unwrap();
        let fan = inner_approx(&pent, &spot, 4).unwrap();
        assert_eq!(fan.len(), 3);
        assert!(fan.vertices().contains(&v4));
    }

    #[test]
    fn outer_examples() {
        let s = uniform(2, 10_000);
        let sq = ConvexPolygon::new(vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]).unwrap();
        assert_eq!(outer_approx(&sq, &s, 4).unwrap(), sq);
        let oct = ConvexPolygon::regular(8, 1.0).unwrap();
        let out = outer_approx(&oct, &s, 4).unwrap();
        assert_eq!(out.len(), 4);
        assert!(oct.vertices().iter().all(|&x| out.contains(x)));
        let outside = |q: &ConvexPolygon| 1.0 - s.mass(q);
        assert!(outside(&out) >= 2.0 / 6.0 * outside(&oct) - 0.02);
    }

    #[test]
    fn budget_examples() {
        let s = uniform(3, 10_000);
        let oct = ConvexPolygon::regular(8, 1.0).unwrap();
        let b = polygon_budget(&oct, &s, 4).unwrap();
        assert!(b.usage <= 0.75 + 0.02, "{}", b.usage);
        assert_eq!(b.bound, 0.75);
        assert_eq!(polygon_budget(&oct, &s, 8).unwrap().usage, 0.0);
        let inner = b.inner.unwrap();
        let c = inner.vertices().iter().fold([0.0, 0.0], |a, v| [a[0] + v[0] / 4.0, a[1] + v[1] / 4.0]);
        let spot = WeightedSample::unweighted(vec![c; 10]).unwrap();
        assert_eq!(polygon_budget(&oct, &spot, 4).unwrap().usage, 0.0);
        let json = serde_json::to_value(polygon_budget(&oct, &s, 4).unwrap()).unwrap();
        assert_eq!(json["D"], 8);
        assert_eq!(json["d"], 4);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn approximations_nest(seed: u64, n in 6usize..13, d in 4usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = ConvexPolygon::random(&mut rng, n).unwrap();
            let s = WeightedSample::uniform_box(&mut rng, 2_000, -1.5, 1.5).unwrap();
            let b = polygon_budget(&p, &s, d).unwrap();
            let (inner, outer) = (b.inner.unwrap(), b.outer.unwrap());
            prop_assert!(inner.vertices().iter().all(|&x| p.contains(x)));
            prop_assert!(p.vertices().iter().all(|&x| outer.contains(x)));
            prop_assert!(inner.len() <= d && outer.len() == d);
            let m = (n - 2).div_ceil(d - 2) as f64;
            prop_assert!(s.mass(&inner) >= s.mass(&p) / m - 1e-12);
            let tol = 3.0 / (2_000f64).sqrt();
            let floor = 1.0 - (1.0 / n.div_ceil(d - 2) as f64).min((d - 2) as f64 / (n - 2) as f64);
            prop_assert!(b.usage <= floor + tol);
        }
    }
}
