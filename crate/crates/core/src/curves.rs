//! Lipschitz-1 curves on `[0, 1]` pinned at both ends, stored as breakpoints, and the maps
//! between curves and admissible sets of environment masses.

use serde::{Deserialize, Serialize};

use crate::entropy::SLOPE_TOL;
use crate::environment::{Environment, Site};
use crate::error::{Error, Result};

/// A mass lies on a curve's graph when the vertical gap is at most this.
pub const TOL_ON_GRAPH: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }
}

impl From<[f64; 2]> for Point {
    fn from([x, y]: [f64; 2]) -> Self {
        Point { x, y }
    }
}

impl From<Point> for [f64; 2] {
    fn from(p: Point) -> Self {
        [p.x, p.y]
    }
}

/// Piecewise-linear curve from `(0,0)` to `(1,0)` with every slope in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Point>", into = "Vec<Point>")]
pub struct Curve {
    points: Vec<Point>,
}

impl Curve {
    pub fn new(points: Vec<Point>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::Domain(
                "a curve needs at least two breakpoints".into(),
            ));
        }
        let (first, last) = (points[0], points[points.len() - 1]);
        if first != Point::new(0.0, 0.0) || last != Point::new(1.0, 0.0) {
            return Err(Error::Domain(
                "curve must start at (0,0) and end at (1,0)".into(),
            ));
        }
        for w in points.windows(2) {
            let dx = w[1].x - w[0].x;
            if !(dx > 0.0) {
                return Err(Error::Domain(format!(
                    "breakpoint x-coordinates must increase strictly (at x = {})",
                    w[1].x
                )));
            }
            if (w[1].y - w[0].y).abs() > (1.0 + SLOPE_TOL) * dx {
                return Err(Error::Domain(format!(
                    "slope between x = {} and x = {} exceeds 1",
                    w[0].x, w[1].x
                )));
            }
        }
        Ok(Curve { points })
    }

    /// The flat curve `γ ≡ 0`.
    pub fn zero() -> Self {
        Curve {
            points: vec![Point::new(0.0, 0.0), Point::new(1.0, 0.0)],
        }
    }

    /// Tent through the apex `(x, y)`.
    pub fn tent(x: f64, y: f64) -> Result<Self> {
        Curve::new(vec![
            Point::new(0.0, 0.0),
            Point::new(x, y),
            Point::new(1.0, 0.0),
        ])
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    /// Linear interpolation at `x ∈ [0, 1]`.
    pub fn evaluate(&self, x: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::Domain(format!("x = {x} outside [0, 1]")));
        }
        Ok(self.value_at(x))
    }

    pub(crate) fn value_at(&self, x: f64) -> f64 {
        let pts = &self.points;
        // first breakpoint with p.x >= x
        let j = pts.partition_point(|p| p.x < x);
        if j == 0 {
            return pts[0].y;
        }
        if j == pts.len() {
            return pts[pts.len() - 1].y;
        }
        let (a, b) = (pts[j - 1], pts[j]);
        if b.x == x {
            return b.y;
        }
        a.y + (b.y - a.y) * (x - a.x) / (b.x - a.x)
    }

    pub fn is_zero(&self) -> bool {
        self.points.iter().all(|p| p.y == 0.0)
    }

    /// `sup |γ|`, attained at a breakpoint.
    pub fn sup_abs(&self) -> f64 {
        self.points.iter().fold(0.0, |m, p| m.max(p.y.abs()))
    }

    /// `∫₀¹ γ(x) dx` by the trapezoid rule, exact for piecewise-linear curves.
    pub fn signed_area(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| 0.5 * (w[1].x - w[0].x) * (w[0].y + w[1].y))
            .sum()
    }
}

impl TryFrom<Vec<Point>> for Curve {
    type Error = Error;
    fn try_from(points: Vec<Point>) -> Result<Self> {
        Curve::new(points)
    }
}

impl From<Curve> for Vec<Point> {
    fn from(c: Curve) -> Self {
        c.points
    }
}

/// Exact sup-norm distance between two curves: the difference is piecewise linear, so the
/// maximum sits on the union of both breakpoint sets.
pub fn sup_distance(a: &Curve, b: &Curve) -> f64 {
    let (pa, pb) = (a.points(), b.points());
    let mut best: f64 = 0.0;
    for p in pa {
        best = best.max((p.y - b.value_at(p.x)).abs());
    }
    for p in pb {
        best = best.max((a.value_at(p.x) - p.y).abs());
    }
    best
}

/// Slope of the chord between two sites of `env`.
pub fn chord_slope(env: &Environment, i: Site, j: Site) -> Result<f64> {
    let (pi, pj) = (env.position(i)?, env.position(j)?);
    let dx = pj.x - pi.x;
    if dx == 0.0 {
        return Err(Error::DegeneratePair(i.to_string(), j.to_string()));
    }
    Ok((pj.y - pi.y) / dx)
}

/// Sites ordered by x-coordinate whose linear interpolation is a valid curve.
///
/// Always contains [`Site::Origin`] and [`Site::Terminal`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct IndexSet {
    sites: Vec<Site>,
}

impl IndexSet {
    /// Validates admissibility and orders the sites by x-coordinate.
    pub fn new(env: &Environment, sites: &[Site]) -> Result<Self> {
        let ordered = order_by_x(env, sites)?;
        check_consecutive(env, &ordered)?;
        Ok(IndexSet { sites: ordered })
    }

    /// Builds an index set from sites already known to be admissible and x-ordered.
    pub(crate) fn from_ordered(sites: Vec<Site>) -> Self {
        IndexSet { sites }
    }

    pub fn sentinels() -> Self {
        IndexSet {
            sites: vec![Site::Origin, Site::Terminal],
        }
    }

    pub fn sites(&self) -> &[Site] {
        &self.sites
    }

    /// Masses only (sentinels dropped), in x order.
    pub fn masses(&self) -> impl Iterator<Item = usize> + '_ {
        self.sites.iter().filter_map(|s| match s {
            Site::Mass(r) => Some(*r),
            _ => None,
        })
    }

    pub fn contains(&self, site: Site) -> bool {
        self.sites.contains(&site)
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    /// True when every site of `other` is also in `self`.
    pub fn is_superset_of(&self, other: &IndexSet) -> bool {
        other.sites.iter().all(|s| self.sites.contains(s))
    }
}

fn order_by_x(env: &Environment, sites: &[Site]) -> Result<Vec<Site>> {
    let mut ordered: Vec<Site> = sites.to_vec();
    ordered.sort_unstable();
    ordered.dedup();
    for &s in &ordered {
        env.position(s)?;
    }
    ordered.sort_by(|&a, &b| {
        let (pa, pb) = (env.site_position(a), env.site_position(b));
        pa.x.total_cmp(&pb.x).then(a.cmp(&b))
    });
    Ok(ordered)
}

fn check_consecutive(env: &Environment, ordered: &[Site]) -> Result<()> {
    if ordered.first() != Some(&Site::Origin) || ordered.last() != Some(&Site::Terminal) {
        return Err(Error::Inadmissible("both sentinels must be present".into()));
    }
    for w in ordered.windows(2) {
        let (a, b) = (env.site_position(w[0]), env.site_position(w[1]));
        let dx = b.x - a.x;
        if !(dx > 0.0) {
            return Err(Error::Inadmissible(format!(
                "{} and {} share an x-coordinate",
                w[0], w[1]
            )));
        }
        if (b.y - a.y).abs() > (1.0 + SLOPE_TOL) * dx {
            return Err(Error::Inadmissible(format!(
                "chord {} -> {} is steeper than 1",
                w[0], w[1]
            )));
        }
    }
    Ok(())
}

/// Whether `sites` forms an admissible index set of `env`.
///
/// Only x-consecutive chords are tested: a chord spanning several points has a slope that
/// is a convex combination of the consecutive slopes, so the all-pairs condition follows.
pub fn is_admissible(env: &Environment, sites: &[Site]) -> bool {
    match order_by_x(env, sites) {
        Ok(ordered) => check_consecutive(env, &ordered).is_ok(),
        Err(_) => false,
    }
}

/// All sites lying on the graph of `curve` (within [`TOL_ON_GRAPH`]).
pub fn index_set_of(env: &Environment, curve: &Curve) -> IndexSet {
    let mut on_graph: Vec<(f64, Site)> = env
        .sites()
        .filter_map(|s| {
            let p = env.site_position(s);
            ((curve.value_at(p.x) - p.y).abs() <= TOL_ON_GRAPH).then_some((p.x, s))
        })
        .collect();
    on_graph.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    IndexSet {
        sites: on_graph.into_iter().map(|(_, s)| s).collect(),
    }
}

/// The curve `Γ(ι)`: linear interpolation through the positions of `set`.
pub fn interpolate(env: &Environment, set: &IndexSet) -> Result<Curve> {
    check_consecutive(env, &set.sites)?;
    let points = set.sites.iter().map(|&s| env.site_position(s)).collect();
    Ok(Curve { points })
}

/// `Λ(γ) = Γ(I(γ))`: re-draw `curve` through just the masses it already touches.
pub fn snap(env: &Environment, curve: &Curve) -> Result<Curve> {
    interpolate(env, &index_set_of(env, curve))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::entropy::curve_entropy;
    use crate::environment::Mass;

    fn single(x: f64, y: f64) -> Environment {
        Environment::continuum(vec![Mass::new(2.0, x, y)], 1.0).unwrap()
    }

    #[test]
    fn evaluate_examples() {
        assert_eq!(Curve::zero().evaluate(0.3).unwrap(), 0.0);
        assert_eq!(Curve::tent(0.5, 0.5).unwrap().evaluate(0.25).unwrap(), 0.25);
        assert_eq!(
            Curve::tent(0.5, 0.25).unwrap().evaluate(0.75).unwrap(),
            0.125
        );
        assert!(Curve::zero().evaluate(1.5).is_err());
    }

    #[test]
    fn curve_validation() {
        assert!(Curve::new(vec![
            Point::new(0.0, 0.0),
            Point::new(0.5, 0.6),
            Point::new(1.0, 0.0)
        ])
        .is_err());
        assert!(Curve::new(vec![
            Point::new(0.0, 0.0),
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0)
        ])
        .is_err());
        assert!(Curve::new(vec![Point::new(0.0, 0.1), Point::new(1.0, 0.0)]).is_err());
        let json = "[[0.0,0.0],[0.5,0.25],[1.0,0.0]]";
        let c: Curve = serde_json::from_str(json).unwrap();
        assert_eq!(c, Curve::tent(0.5, 0.25).unwrap());
        assert_eq!(serde_json::to_string(&c).unwrap(), json);
        assert!(serde_json::from_str::<Curve>("[[0.0,0.0],[0.5,0.9],[1.0,0.0]]").is_err());
    }

    #[test]
    fn sup_distance_examples() {
        let t1 = Curve::tent(0.5, 0.25).unwrap();
        let t2 = Curve::tent(0.25, 0.25).unwrap();
        assert_eq!(sup_distance(&t1, &t1), 0.0);
        assert_eq!(
            sup_distance(&Curve::zero(), &Curve::tent(0.5, 0.5).unwrap()),
            0.5
        );
        // dense-grid oracle: t2(0.5) = 0.25·(0.5/0.75) = 1/6, gap 1/12 at x = 0.5;
        // at x = 0.25 the gap is 0.25 − 0.125 = 0.125
        let mut grid_max: f64 = 0.0;
        for i in 0..=100_000 {
            let x = i as f64 / 100_000.0;
            grid_max = grid_max.max((t1.value_at(x) - t2.value_at(x)).abs());
        }
        let d = sup_distance(&t1, &t2);
        assert!((d - 0.125).abs() < 1e-15);
        assert!((d - grid_max).abs() < 1e-12);
    }

    #[test]
    fn chord_slopes() {
        let env = single(0.5, 0.25);
        assert_eq!(
            chord_slope(&env, Site::Origin, Site::Terminal).unwrap(),
            0.0
        );
        assert_eq!(chord_slope(&env, Site::Origin, Site::Mass(1)).unwrap(), 0.5);
        let twin = Environment::continuum(
            vec![Mass::new(2.0, 0.5, 0.1), Mass::new(1.0, 0.5, -0.1)],
            1.0,
        )
        .unwrap();
        assert!(matches!(
            chord_slope(&twin, Site::Mass(1), Site::Mass(2)),
            Err(Error::DegeneratePair(..))
        ));
    }

    #[test]
    fn admissibility_examples() {
        let env = single(0.4, 0.3);
        assert!(is_admissible(&env, &[Site::Origin, Site::Terminal]));
        assert!(is_admissible(
            &env,
            &[Site::Terminal, Site::Mass(1), Site::Origin]
        ));
        assert!(!is_admissible(&env, &[Site::Origin, Site::Mass(1)]));
        // (0.4, 0.5) is outside D, but admissibility alone must reject the slope 1.25
        let steep = Environment::from_parts_unchecked(vec![Mass::new(1.0, 0.4, 0.5)]);
        assert!(!is_admissible(
            &steep,
            &[Site::Origin, Site::Mass(1), Site::Terminal]
        ));
    }

    #[test]
    fn index_set_and_interpolation() {
        let env = single(0.5, 0.25);
        let tent = Curve::tent(0.5, 0.25).unwrap();
        let set = index_set_of(&env, &tent);
        assert_eq!(set.sites(), &[Site::Origin, Site::Mass(1), Site::Terminal]);
        assert_eq!(interpolate(&env, &set).unwrap(), tent);
        assert_eq!(
            interpolate(&env, &IndexSet::sentinels()).unwrap(),
            Curve::zero()
        );
        assert_eq!(index_set_of(&env, &Curve::zero()), IndexSet::sentinels());
        assert_eq!(snap(&env, &Curve::zero()).unwrap(), Curve::zero());
        assert_eq!(snap(&env, &tent).unwrap(), tent);
    }

    #[test]
    fn snap_lowers_entropy_of_a_detour() {
        let env = single(0.5, 0.25);
        let detour = Curve::new(vec![
            Point::new(0.0, 0.0),
            Point::new(0.25, 0.2),
            Point::new(0.5, 0.25),
            Point::new(1.0, 0.0),
        ])
        .unwrap();
        let snapped = snap(&env, &detour).unwrap();
        assert_eq!(snapped, Curve::tent(0.5, 0.25).unwrap());
        assert!(curve_entropy(&snapped) <= curve_entropy(&detour));
    }
}
