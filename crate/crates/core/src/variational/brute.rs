//! Exhaustive oracles over all subsets of masses. Exponential; for small environments only.

use super::{scoring, Regime, Solution};
use crate::curves::{interpolate, is_admissible, sup_distance, Curve, IndexSet};
use crate::entropy::curve_entropy;
use crate::environment::{Environment, Site};
use crate::error::{Error, Result};

const MAX_MASSES: usize = 20;

/// Admissible index sets of `env` with their curve, x-ordered weight sum and entropy.
fn admissible_sets(env: &Environment) -> Result<Vec<(IndexSet, Curve, f64, f64)>> {
    let k = env.len();
    if k > MAX_MASSES {
        return Err(Error::Size(format!(
            "{k} masses exceed the exhaustive limit {MAX_MASSES}"
        )));
    }
    let mut out = Vec::new();
    for mask in 0u32..(1u32 << k) {
        let mut sites = vec![Site::Origin, Site::Terminal];
        sites.extend(
            (0..k)
                .filter(|i| mask >> i & 1 == 1)
                .map(|i| Site::Mass(i + 1)),
        );
        if !is_admissible(env, &sites) {
            continue;
        }
        let set = IndexSet::new(env, &sites)?;
        let curve = interpolate(env, &set)?;
        let weight = set.sites().iter().fold(0.0, |acc, &s| acc + env.weight(s));
        let entropy = curve_entropy(&curve);
        out.push((set, curve, weight, entropy));
    }
    Ok(out)
}

/// Maximizer found by enumerating every subset of masses (at most 20).
pub fn brute_force_solve(env: &Environment, beta: f64, regime: Regime) -> Result<Solution> {
    let (s, regime) = scoring(beta, regime)?;
    let mut best: Option<(f64, f64, IndexSet, Curve)> = None;
    for (set, curve, weight, entropy) in admissible_sets(env)? {
        let value = s.gain * weight - s.cost * entropy;
        let better = match &best {
            None => true,
            Some((v, e, ..)) => value > *v || (value == *v && entropy < *e),
        };
        if better {
            best = Some((value, entropy, set, curve));
        }
    }
    let (value, _, index_set, curve) = best.expect("the sentinel pair is always admissible");
    Ok(Solution {
        index_set,
        curve,
        value,
        regime,
        beta,
    })
}

/// Best worthiness among interpolation curves at sup-distance at least `delta` from the
/// maximizer, by enumeration.
pub fn brute_force_restricted_max(
    env: &Environment,
    beta: f64,
    regime: Regime,
    delta: f64,
) -> Result<Option<f64>> {
    let center = brute_force_solve(env, beta, regime)?.curve;
    let (s, _) = scoring(beta, regime)?;
    Ok(admissible_sets(env)?
        .into_iter()
        .filter(|(_, curve, ..)| sup_distance(curve, &center) >= delta)
        .map(|(_, _, weight, entropy)| s.gain * weight - s.cost * entropy)
        .reduce(f64::max))
}

/// `min E(Γ(ι)) / π(Γ(ι))` over admissible sets collecting positive weight, by enumeration.
/// This is the critical inverse temperature of the environment.
pub fn brute_force_min_ratio(env: &Environment) -> Result<f64> {
    Ok(admissible_sets(env)?
        .into_iter()
        .filter(|(_, _, weight, _)| *weight > 0.0)
        .map(|(_, _, weight, entropy)| entropy / weight)
        .fold(f64::INFINITY, f64::min))
}
