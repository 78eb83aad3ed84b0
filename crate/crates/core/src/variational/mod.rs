//! Exact maximization of the worthiness functional over Lipschitz-1 curves.
//!
//! For positive weights the maximizer can be taken among interpolation curves `Γ(ι)`:
//! replacing any curve by `Λ(γ) = Γ(I(γ))` keeps every mass it collects and does not raise
//! its entropy. The search therefore reduces to a longest path from the origin to the
//! terminal sentinel in the DAG of sites ordered by x, where a node earns its (scaled)
//! weight and an edge pays the entropy of its chord.

mod brute;
mod graph;

use serde::{Deserialize, Serialize};

pub use brute::{brute_force_min_ratio, brute_force_restricted_max, brute_force_solve};
use graph::{BestPath, PathGraph, Scoring};

use crate::curves::{index_set_of, interpolate, Curve, IndexSet, TOL_ON_GRAPH};
use crate::entropy::{curve_entropy, segment_entropy};
use crate::environment::{Environment, Site};
use crate::error::{Error, Result};

/// Which form of the worthiness functional is maximized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    /// `β·π(γ) − E(γ)`.
    FiniteLimit,
    /// `π(γ) − E(γ)/β`.
    InfiniteLimit,
    /// `π(γ)`, ties broken by minimal `E(γ)`.
    ZeroTemperature,
}

impl std::str::FromStr for Regime {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "finite-limit" => Ok(Regime::FiniteLimit),
            "infinite-limit" => Ok(Regime::InfiniteLimit),
            "zero-temperature" => Ok(Regime::ZeroTemperature),
            other => Err(Error::Parameter(format!("unknown regime {other:?}"))),
        }
    }
}

/// A maximizing index set, its curve and the maximal worthiness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub index_set: IndexSet,
    pub curve: Curve,
    pub value: f64,
    pub regime: Regime,
    /// `None` encodes `β = ∞` (JSON has no infinity).
    #[serde(with = "beta_serde")]
    pub beta: f64,
}

mod beta_serde {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(beta: &f64, s: S) -> Result<S::Ok, S::Error> {
        if beta.is_finite() {
            s.serialize_f64(*beta)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

/// Resolves `(β, regime)` into node and edge multipliers; `β = ∞` always means the
/// zero-temperature problem.
fn scoring(beta: f64, regime: Regime) -> Result<(Scoring, Regime)> {
    if beta.is_nan() || beta < 0.0 {
        return Err(Error::Parameter(format!(
            "beta = {beta} must be non-negative"
        )));
    }
    if beta == f64::INFINITY || regime == Regime::ZeroTemperature {
        return Ok((
            Scoring {
                gain: 1.0,
                cost: 0.0,
            },
            Regime::ZeroTemperature,
        ));
    }
    match regime {
        Regime::FiniteLimit => Ok((
            Scoring {
                gain: beta,
                cost: 1.0,
            },
            regime,
        )),
        Regime::InfiniteLimit if beta > 0.0 => Ok((
            Scoring {
                gain: 1.0,
                cost: 1.0 / beta,
            },
            regime,
        )),
        _ => Err(Error::Parameter(
            "the infinite-limit regime needs beta > 0".into(),
        )),
    }
}

/// Worthiness of an arbitrary curve, collecting every mass on its graph.
pub fn worthiness(env: &Environment, curve: &Curve, beta: f64, regime: Regime) -> Result<f64> {
    let (s, _) = scoring(beta, regime)?;
    let collected: f64 = index_set_of(env, curve)
        .sites()
        .iter()
        .map(|&x| env.weight(x))
        .sum();
    let entropy = curve_entropy(curve);
    Ok(s.gain * collected - if s.cost == 0.0 { 0.0 } else { s.cost * entropy })
}

/// Reusable solver for one environment: the site DAG is built once and shared by every
/// query (different β, restricted maxima, critical temperature).
pub struct Solver<'a> {
    env: &'a Environment,
    graph: PathGraph,
}

impl<'a> Solver<'a> {
    pub fn new(env: &'a Environment) -> Self {
        Solver {
            env,
            graph: PathGraph::new(env),
        }
    }

    pub fn env(&self) -> &Environment {
        self.env
    }

    fn solution_from(&self, path: &BestPath, regime: Regime, beta: f64) -> Solution {
        let sites: Vec<Site> = path
            .nodes
            .iter()
            .map(|&i| self.graph.nodes[i].site)
            .collect();
        let index_set = IndexSet::from_ordered(sites);
        let curve = interpolate(self.env, &index_set).expect("DP paths are admissible");
        Solution {
            index_set,
            curve,
            value: path.score.primary,
            regime,
            beta,
        }
    }

    /// Global maximizer of the worthiness functional.
    pub fn solve(&self, beta: f64, regime: Regime) -> Result<Solution> {
        let (s, regime) = scoring(beta, regime)?;
        let path = self.graph.best_path(s);
        Ok(self.solution_from(&path, regime, beta))
    }

    /// Maximal worthiness `ŵ` only.
    pub fn value(&self, beta: f64, regime: Regime) -> Result<f64> {
        let (s, _) = scoring(beta, regime)?;
        Ok(self.graph.best_path(s).score.primary)
    }

    /// Best worthiness among interpolation curves at sup-distance at least `delta` from the
    /// maximizer, or `None` when no such curve exists.
    ///
    /// This ranges over curves `Γ(ι)` only, so it is a lower bound for the supremum over all
    /// Lipschitz curves at that distance.
    pub fn restricted_max(&self, beta: f64, regime: Regime, delta: f64) -> Result<Option<f64>> {
        if !(delta > 0.0) {
            return Err(Error::Parameter(format!(
                "delta = {delta} must be positive"
            )));
        }
        let center = self.solve(beta, regime)?.curve;
        let (s, _) = scoring(beta, regime)?;
        let found = self.graph.best_escaping_path(
            s,
            |a, b| segment_deviation(&center, a.x, a.y, b.x, b.y),
            delta,
        );
        Ok(found.map(|p| p.score.primary))
    }

    /// Critical inverse temperature: the infimum of β with `ŵ_β > 0`.
    ///
    /// `β ↦ ŵ_β` is convex, non-decreasing and vanishes up to the threshold, which equals
    /// the minimum over admissible sets of entropy per unit collected weight. The
    /// threshold is located by bisection to absolute tolerance `tol`. Returns `0` when a
    /// mass sits on the axis and `+∞` for an environment without masses.
    pub fn beta_critical(&self, tol: f64) -> Result<f64> {
        if !(tol > 0.0) {
            return Err(Error::Parameter(format!(
                "tolerance {tol} must be positive"
            )));
        }
        let masses = self.env.masses();
        if masses.is_empty() {
            return Ok(f64::INFINITY);
        }
        if masses.iter().any(|m| m.y.abs() <= TOL_ON_GRAPH) {
            return Ok(0.0);
        }
        let steepest = masses
            .iter()
            .map(|m| segment_entropy(m.x, m.y) + segment_entropy(1.0 - m.x, -m.y))
            .fold(0.0, f64::max);
        let heaviest = masses[0].weight;
        let positive = |beta: f64| {
            self.graph
                .best_path(Scoring {
                    gain: beta,
                    cost: 1.0,
                })
                .score
                .primary
                > 0.0
        };
        let (mut lo, mut hi) = (0.0, (steepest + 1.0) / heaviest);
        if !positive(hi) {
            return Err(Error::Invariant(format!(
                "bisection bracket [0, {hi}] is invalid"
            )));
        }
        while hi - lo > tol {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if positive(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }
}

/// Largest vertical gap between the chord `(x0,y0)–(x1,y1)` and `center` over `[x0, x1]`.
/// The gap is piecewise linear, so endpoints and interior breakpoints suffice.
pub(crate) fn segment_deviation(center: &Curve, x0: f64, y0: f64, x1: f64, y1: f64) -> f64 {
    let mut dev = (y0 - center.value_at(x0))
        .abs()
        .max((y1 - center.value_at(x1)).abs());
    let pts = center.points();
    let start = pts.partition_point(|p| p.x <= x0);
    for p in pts[start..].iter().take_while(|p| p.x < x1) {
        let line = y0 + (y1 - y0) * (p.x - x0) / (x1 - x0);
        dev = dev.max((line - p.y).abs());
    }
    dev
}

/// Global maximizer of the worthiness functional; see [`Solver::solve`].
pub fn solve(env: &Environment, beta: f64, regime: Regime) -> Result<Solution> {
    Solver::new(env).solve(beta, regime)
}

/// See [`Solver::restricted_max`].
pub fn restricted_max(
    env: &Environment,
    beta: f64,
    regime: Regime,
    delta: f64,
) -> Result<Option<f64>> {
    Solver::new(env).restricted_max(beta, regime, delta)
}

/// Largest total weight any curve collects from `remainder` (entropy ignored).
pub fn remainder_max(remainder: &Environment) -> f64 {
    Solver::new(remainder)
        .value(f64::INFINITY, Regime::ZeroTemperature)
        .expect("zero temperature is always valid")
}

/// See [`Solver::beta_critical`].
pub fn beta_critical(env: &Environment, tol: f64) -> Result<f64> {
    Solver::new(env).beta_critical(tol)
}

/// `(|ŵ^k − ŵ|, β·R^k)` in the finite-limit regime. Truncation moves any curve's score by
/// at most `β·R^k`, so the first component never exceeds the second.
pub fn truncation_gap(env: &Environment, beta: f64, k: usize) -> Result<(f64, f64)> {
    let (top, rest) = env.truncate(k);
    let full = Solver::new(env).value(beta, Regime::FiniteLimit)?;
    let truncated = Solver::new(&top).value(beta, Regime::FiniteLimit)?;
    let remainder = if rest.is_empty() {
        0.0
    } else {
        remainder_max(&rest)
    };
    Ok(((full - truncated).abs(), beta * remainder))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{sample_limit_environment, Mass};

    const E_HALF: f64 = 0.130_812_035_941_136_96;

    fn single(w: f64, x: f64, y: f64) -> Environment {
        Environment::continuum(vec![Mass::new(w, x, y)], 1.0).unwrap()
    }

    fn empty() -> Environment {
        Environment::continuum(vec![], 1.0).unwrap()
    }

    #[test]
    fn empty_environment() {
        let sol = solve(&empty(), 1.0, Regime::FiniteLimit).unwrap();
        assert_eq!(sol.curve, Curve::zero());
        assert_eq!(sol.value, 0.0);
        assert_eq!(sol.index_set, IndexSet::sentinels());
        assert_eq!(remainder_max(&empty()), 0.0);
        assert_eq!(beta_critical(&empty(), 1e-9).unwrap(), f64::INFINITY);
    }

    #[test]
    fn single_mass_tent() {
        let env = single(2.0, 0.5, 0.25);
        let sol = solve(&env, 1.0, Regime::FiniteLimit).unwrap();
        assert_eq!(sol.curve, Curve::tent(0.5, 0.25).unwrap());
        assert!((sol.value - (2.0 - E_HALF)).abs() < 1e-12);
        assert!((sol.value - 1.869_187_964_058_863).abs() < 1e-12);
        let w = worthiness(&env, &sol.curve, 1.0, Regime::FiniteLimit).unwrap();
        assert!((w - sol.value).abs() < 1e-9);
    }

    #[test]
    fn beta_zero_gives_flat_curve() {
        let env = sample_limit_environment(8, 0.5, 3).unwrap();
        let sol = solve(&env, 0.0, Regime::FiniteLimit).unwrap();
        assert_eq!(sol.curve, Curve::zero());
        assert_eq!(sol.value, 0.0);
    }

    #[test]
    fn regime_parameter_errors() {
        let env = single(1.0, 0.5, 0.1);
        assert!(solve(&env, -1.0, Regime::FiniteLimit).is_err());
        assert!(solve(&env, f64::NAN, Regime::FiniteLimit).is_err());
        assert!(solve(&env, 0.0, Regime::InfiniteLimit).is_err());
        let inf = solve(&env, f64::INFINITY, Regime::FiniteLimit).unwrap();
        assert_eq!(inf.regime, Regime::ZeroTemperature);
        assert_eq!(inf.value, 1.0);
        assert_eq!(
            "infinite-limit".parse::<Regime>().unwrap(),
            Regime::InfiniteLimit
        );
        assert!("hot".parse::<Regime>().is_err());
    }

    #[test]
    fn infinite_limit_is_rescaled_finite_limit() {
        let env = sample_limit_environment(10, 1.0, 8).unwrap();
        for beta in [0.3, 1.0, 7.0] {
            let a = solve(&env, beta, Regime::FiniteLimit).unwrap();
            let b = solve(&env, beta, Regime::InfiniteLimit).unwrap();
            assert_eq!(a.index_set, b.index_set);
            assert!((a.value / beta - b.value).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_temperature_prefers_low_entropy_on_ties() {
        // two equally heavy masses mirrored across the axis: same weight, same entropy
        // except one sits closer to the axis
        let env = Environment::continuum(
            vec![Mass::new(1.0, 0.5, 0.3), Mass::new(1.0, 0.5, -0.1)],
            1.0,
        )
        .unwrap();
        let sol = solve(&env, f64::INFINITY, Regime::ZeroTemperature).unwrap();
        assert_eq!(sol.value, 1.0);
        assert_eq!(sol.curve, Curve::tent(0.5, -0.1).unwrap());
    }

    #[test]
    fn restricted_max_single_mass() {
        // candidates: zero curve (score 0) and the tent (score 2 − e(½)); the tent is the
        // maximizer, the zero curve sits at distance 0.25 from it
        let env = single(2.0, 0.5, 0.25);
        let r = restricted_max(&env, 1.0, Regime::FiniteLimit, 0.125).unwrap();
        assert_eq!(r, Some(0.0));
        let r = restricted_max(&env, 1.0, Regime::FiniteLimit, 0.25).unwrap();
        assert_eq!(r, Some(0.0));
        assert_eq!(
            restricted_max(&env, 1.0, Regime::FiniteLimit, 0.3).unwrap(),
            None
        );
        assert_eq!(
            restricted_max(&env, 1.0, Regime::FiniteLimit, 1.5).unwrap(),
            None
        );
        assert!(restricted_max(&env, 1.0, Regime::FiniteLimit, 0.0).is_err());
    }

    #[test]
    fn remainder_single_mass() {
        assert_eq!(remainder_max(&single(3.5, 0.2, -0.15)), 3.5);
    }

    #[test]
    fn beta_critical_single_mass() {
        assert_eq!(beta_critical(&single(2.0, 0.5, 0.0), 1e-12).unwrap(), 0.0);
        let bc = beta_critical(&single(2.0, 0.5, 0.25), 1e-12).unwrap();
        assert!((bc - E_HALF / 2.0).abs() < 1e-11);
    }

    #[test]
    fn truncation_gap_cases() {
        let env = sample_limit_environment(6, 0.8, 2).unwrap();
        assert_eq!(truncation_gap(&env, 1.0, 6).unwrap(), (0.0, 0.0));
        let env = single(2.0, 0.5, 0.25);
        let (gap, bound) = truncation_gap(&env, 1.0, 0).unwrap();
        assert!((gap - (2.0 - E_HALF)).abs() < 1e-12);
        assert_eq!(bound, 2.0);
    }

    #[test]
    fn segment_deviation_matches_grid() {
        let center = Curve::tent(0.3, 0.2).unwrap();
        let (x0, y0, x1, y1) = (0.1, -0.05, 0.8, 0.1);
        let mut grid: f64 = 0.0;
        for i in 0..=7_000 {
            let x = x0 + (x1 - x0) * i as f64 / 7_000.0;
            let line = y0 + (y1 - y0) * (x - x0) / (x1 - x0);
            grid = grid.max((line - center.value_at(x)).abs());
        }
        assert!((segment_deviation(&center, x0, y0, x1, y1) - grid).abs() < 1e-12);
    }
}
