//! Exact polymer Gibbs measure on lattice bridges of length `n`.
//!
//! A path `s` with `s(0) = s(n) = 0` and `|s(k+1) − s(k)| = 1` has weight
//! `exp(n·β̄·π_n(s))`, where `π_n(s)` sums the scaled masses at the sites `(k/n, s(k)/n)`
//! it visits. Everything is computed in log-space with a forward/backward transfer
//! recursion over `(step, height)`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::curves::{Curve, Point};
use crate::environment::{rng_from_seed, Environment, ScalingSchedule, SimRng};
use crate::error::{Error, Result};
use crate::variational::{solve, Regime};

/// Extra slack on the tube boundary so that exact lattice ties count as inside.
const TUBE_SLACK: f64 = 1e-12;

#[inline]
pub(crate) fn logaddexp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Largest `|h|` reachable at step `k` of a bridge of length `n`.
#[inline]
fn reach(n: usize, k: usize) -> i64 {
    k.min(n - k) as i64
}

#[inline]
fn slot(n: usize, k: usize, h: i64) -> Option<usize> {
    let m = reach(n, k);
    (h.abs() <= m && (h + m) % 2 == 0).then(|| ((h + m) / 2) as usize)
}

/// Heights visited by a bridge, in lattice units.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LatticePath {
    pub heights: Vec<i64>,
}

impl LatticePath {
    pub fn len(&self) -> usize {
        self.heights.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.heights.len() <= 1
    }

    /// The path as a curve on `[0, 1]` (both axes divided by `n`).
    pub fn to_curve(&self) -> Curve {
        let n = self.len() as f64;
        let pts = self
            .heights
            .iter()
            .enumerate()
            .map(|(k, &h)| Point::new(k as f64 / n, h as f64 / n))
            .collect();
        Curve::new(pts).expect("bridges are 1-Lipschitz")
    }
}

/// Forward and backward log-weights of the Gibbs measure for one environment.
#[derive(Debug, Clone)]
pub struct TransferTable {
    n: usize,
    beta_bar: f64,
    /// `n·β̄·w` at every `(k, height slot)`.
    gain: Vec<Vec<f64>>,
    log_forward: Vec<Vec<f64>>,
    log_backward: Vec<Vec<f64>>,
    log_q: f64,
}

/// Probability of staying within a sup-norm tube and of leaving it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TubeProbability {
    pub inside: f64,
    pub outside: f64,
    pub log_inside: f64,
    pub log_outside: f64,
}

/// Builds the transfer table for a lattice environment with scaled weights `π_n`.
pub fn build_transfer(env: &Environment, beta_bar: f64) -> Result<TransferTable> {
    let n = env
        .lattice_n()
        .ok_or_else(|| Error::Domain("the Gibbs measure needs a lattice environment".into()))?
        as usize;
    if !(beta_bar >= 0.0 && beta_bar.is_finite()) {
        return Err(Error::Parameter(format!(
            "beta_bar = {beta_bar} must be finite and >= 0"
        )));
    }
    let mut gain: Vec<Vec<f64>> = (0..=n)
        .map(|k| vec![0.0; reach(n, k) as usize + 1])
        .collect();
    let nf = n as f64;
    for site in env.sites() {
        let (k, h) = env.lattice_coords(site).expect("lattice site");
        let i = slot(n, k as usize, h).expect("site inside the slab");
        gain[k as usize][i] = nf * beta_bar * env.weight(site);
    }

    let mut log_forward: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    log_forward.push(vec![gain[0][0]]);
    for k in 1..=n {
        let prev = &log_forward[k - 1];
        let m = reach(n, k);
        let row = (0..=m as usize)
            .map(|i| {
                let h = -m + 2 * i as i64;
                let from = |hp: i64| slot(n, k - 1, hp).map_or(f64::NEG_INFINITY, |j| prev[j]);
                logaddexp(from(h - 1), from(h + 1)) + gain[k][i]
            })
            .collect();
        log_forward.push(row);
    }

    let mut log_backward: Vec<Vec<f64>> = vec![Vec::new(); n + 1];
    log_backward[n] = vec![gain[n][0]];
    for k in (0..n).rev() {
        let next = &log_backward[k + 1];
        let m = reach(n, k);
        log_backward[k] = (0..=m as usize)
            .map(|i| {
                let h = -m + 2 * i as i64;
                let to = |hn: i64| slot(n, k + 1, hn).map_or(f64::NEG_INFINITY, |j| next[j]);
                logaddexp(to(h - 1), to(h + 1)) + gain[k][i]
            })
            .collect();
    }
    let log_q = log_forward[n][0];
    Ok(TransferTable {
        n,
        beta_bar,
        gain,
        log_forward,
        log_backward,
        log_q,
    })
}

/// Transfer table from unscaled weights `σ_n` and a temperature schedule.
pub fn build_transfer_bare(env: &Environment, schedule: &ScalingSchedule) -> Result<TransferTable> {
    if env.is_scaled() {
        return Err(Error::Domain("expected unscaled weights".into()));
    }
    build_transfer(&env.scale_weights(schedule)?, schedule.beta_bar)
}

impl TransferTable {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn beta_bar(&self) -> f64 {
        self.beta_bar
    }

    /// Log partition function `log Q`.
    pub fn log_q(&self) -> f64 {
        self.log_q
    }

    /// Log forward weight at `(k, h)`, `−∞` off the slab.
    pub fn log_forward(&self, k: usize, h: i64) -> f64 {
        slot(self.n, k, h).map_or(f64::NEG_INFINITY, |i| self.log_forward[k][i])
    }

    /// Exact height marginals at step `k` as `(h, probability)` pairs.
    ///
    /// Each step is normalized by its own total (which equals `Q` exactly) so that the
    /// marginals sum to one even when the exponents are large.
    pub fn marginal(&self, k: usize) -> Vec<(i64, f64)> {
        let m = reach(self.n, k);
        let logs: Vec<f64> = (0..=m as usize)
            .map(|i| self.log_forward[k][i] + self.log_backward[k][i] - self.gain[k][i])
            .collect();
        let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let total: f64 = logs.iter().map(|l| (l - top).exp()).sum();
        logs.iter()
            .enumerate()
            .map(|(i, l)| (-m + 2 * i as i64, (l - top).exp() / total))
            .collect()
    }

    /// Log-probability of a complete path.
    pub fn log_path_probability(&self, path: &LatticePath) -> f64 {
        if path.len() != self.n {
            return f64::NEG_INFINITY;
        }
        let mut total = 0.0;
        for (k, &h) in path.heights.iter().enumerate() {
            match slot(self.n, k, h) {
                Some(i) if k == 0 || (h - path.heights[k - 1]).abs() == 1 => {
                    total += self.gain[k][i]
                }
                _ => return f64::NEG_INFINITY,
            }
        }
        total - self.log_q
    }

    /// Exact draw from the Gibbs measure by backward sampling through the forward table.
    pub fn sample_path_with<R: Rng>(&self, rng: &mut R) -> LatticePath {
        let n = self.n;
        let mut heights = vec![0i64; n + 1];
        for k in (1..=n).rev() {
            let h = heights[k];
            let down = self.log_forward(k - 1, h - 1);
            let up = self.log_forward(k - 1, h + 1);
            // P(previous height = h − 1)
            let p_down = if up == f64::NEG_INFINITY {
                1.0
            } else if down == f64::NEG_INFINITY {
                0.0
            } else {
                1.0 / (1.0 + (up - down).exp())
            };
            let u: f64 = rng.random();
            heights[k - 1] = if u < p_down { h - 1 } else { h + 1 };
        }
        LatticePath { heights }
    }

    /// Exact draw, deterministic in `seed`.
    pub fn sample_path(&self, seed: u64) -> LatticePath {
        self.sample_path_with(&mut rng_from_seed(seed))
    }

    /// `count` independent draws from one seeded stream.
    pub fn sample_paths(&self, count: usize, seed: u64) -> Vec<LatticePath> {
        let mut rng: SimRng = rng_from_seed(seed);
        (0..count)
            .map(|_| self.sample_path_with(&mut rng))
            .collect()
    }

    /// Probability that the path stays within sup-distance `delta` of `center` at every
    /// lattice abscissa `k/n`, together with its complement.
    ///
    /// Both are computed by separate restricted recursions (paths that never left the tube,
    /// paths that left it at least once), so a tiny complement keeps full relative
    /// precision instead of being lost to `1 − inside`.
    pub fn tube_probability(&self, center: &Curve, delta: f64) -> Result<TubeProbability> {
        if !(delta > 0.0) {
            return Err(Error::Parameter(format!(
                "delta = {delta} must be positive"
            )));
        }
        let n = self.n;
        let nf = n as f64;
        let within = |k: usize, h: i64| {
            (h as f64 / nf - center.value_at(k as f64 / nf)).abs() <= delta + TUBE_SLACK
        };
        let neg = f64::NEG_INFINITY;
        let mut inside = vec![self.gain[0][0]];
        let mut outside = vec![neg];
        if !within(0, 0) {
            std::mem::swap(&mut inside, &mut outside);
        }
        for k in 1..=n {
            let m = reach(n, k);
            let mut next_in = Vec::with_capacity(m as usize + 1);
            let mut next_out = Vec::with_capacity(m as usize + 1);
            for i in 0..=m as usize {
                let h = -m + 2 * i as i64;
                let pick = |row: &Vec<f64>, hp: i64| slot(n, k - 1, hp).map_or(neg, |j| row[j]);
                let from_in = logaddexp(pick(&inside, h - 1), pick(&inside, h + 1));
                let from_out = logaddexp(pick(&outside, h - 1), pick(&outside, h + 1));
                let g = self.gain[k][i];
                if within(k, h) {
                    next_in.push(from_in + g);
                    next_out.push(from_out + g);
                } else {
                    next_in.push(neg);
                    next_out.push(logaddexp(from_in, from_out) + g);
                }
            }
            inside = next_in;
            outside = next_out;
        }
        // inside + outside covers every path, so their sum is Q; normalizing by the ratio
        // of the two keeps inside + outside = 1 to rounding
        let (a, b) = (inside[0], outside[0]);
        let (log_inside, log_outside) = if a >= b {
            let d = b - a;
            (-d.exp().ln_1p(), d - d.exp().ln_1p())
        } else {
            let d = a - b;
            (d - d.exp().ln_1p(), -d.exp().ln_1p())
        };
        let (inside, outside) = if a >= b {
            let r = (b - a).exp();
            (1.0 / (1.0 + r), r / (1.0 + r))
        } else {
            let r = (a - b).exp();
            (r / (1.0 + r), 1.0 / (1.0 + r))
        };
        Ok(TubeProbability {
            inside,
            outside,
            log_inside,
            log_outside,
        })
    }

    /// `−(1/n)·log μ(‖s − center‖ > δ)`; `+∞` when no path leaves the tube.
    pub fn localization_rate(&self, center: &Curve, delta: f64) -> Result<f64> {
        let tube = self.tube_probability(center, delta)?;
        Ok(-tube.log_outside / self.n as f64)
    }
}

/// Localization rate around the favorable curve of `env` at scaled temperature `β̄`.
pub fn localization_rate(env: &Environment, beta_bar: f64, delta: f64) -> Result<f64> {
    let center = solve(env, beta_bar, Regime::FiniteLimit)?.curve;
    build_transfer(env, beta_bar)?.localization_rate(&center, delta)
}

fn exact_binomial(m: u64, j: u64) -> u128 {
    let j = j.min(m - j);
    (0..j).fold(1u128, |c, i| c * u128::from(m - i) / u128::from(i + 1))
}

fn ln_binomial(m: u64, j: u64) -> f64 {
    libm::lgamma(m as f64 + 1.0) - libm::lgamma(j as f64 + 1.0) - libm::lgamma((m - j) as f64 + 1.0)
}

/// Number of bridge segments `(dk, dh)` as `(steps, up-steps)`, or `None` when unreachable.
fn segment(dk: i64, dh: i64) -> Option<(u64, u64)> {
    (dk >= 0 && dh.abs() <= dk && (dk + dh) % 2 == 0).then(|| (dk as u64, ((dk + dh) / 2) as u64))
}

fn chain(n: u32, points: &[(i64, i64)]) -> Option<Vec<(u64, u64)>> {
    if !n.is_multiple_of(2) {
        return None;
    }
    let mut waypoints = Vec::with_capacity(points.len() + 2);
    waypoints.push((0i64, 0i64));
    waypoints.extend_from_slice(points);
    waypoints.push((i64::from(n), 0));
    waypoints
        .windows(2)
        .map(|w| segment(w[1].0 - w[0].0, w[1].1 - w[0].1))
        .collect()
}

/// Largest `n` for which passage probabilities use exact integer binomials.
pub const EXACT_BINOMIAL_MAX_N: u32 = 64;

/// Log-probability that a uniformly random bridge of length `n` visits every point (given
/// in lattice units, sorted by step). `−∞` for infeasible points.
pub fn log_uniform_passage_probability(n: u32, points: &[(i64, i64)]) -> f64 {
    let Some(segments) = chain(n, points) else {
        return f64::NEG_INFINITY;
    };
    let half = u64::from(n / 2);
    if n <= EXACT_BINOMIAL_MAX_N {
        let through = segments
            .iter()
            .fold(1u128, |acc, &(m, j)| acc * exact_binomial(m, j));
        (through as f64 / exact_binomial(u64::from(n), half) as f64).ln()
    } else {
        log_passage_lgamma(n, &segments)
    }
}

fn log_passage_lgamma(n: u32, segments: &[(u64, u64)]) -> f64 {
    let through: f64 = segments.iter().map(|&(m, j)| ln_binomial(m, j)).sum();
    through - ln_binomial(u64::from(n), u64::from(n / 2))
}

/// Probability that a uniformly random bridge of length `n` visits every point.
pub fn uniform_passage_probability(n: u32, points: &[(i64, i64)]) -> f64 {
    log_uniform_passage_probability(n, points).exp()
}

/// Same quantity through log-gamma regardless of `n`; used to check the crossover.
pub fn log_uniform_passage_probability_lgamma(n: u32, points: &[(i64, i64)]) -> f64 {
    match chain(n, points) {
        Some(segments) => log_passage_lgamma(n, &segments),
        None => f64::NEG_INFINITY,
    }
}

/// Lattice point of `D⁰_n` nearest to `(n·x, n·y)`.
///
/// The step is `round(n·x)`; the height is the closest value of matching parity, with
/// ties resolved away from the axis.
pub fn nearest_lattice_point(n: u32, x: f64, y: f64) -> (i64, i64) {
    let nf = f64::from(n);
    let k = ((x * nf).round() as i64).clamp(1, i64::from(n) - 1);
    let target = y * nf;
    let below = {
        let f = target.floor() as i64;
        if (f + k) % 2 == 0 {
            f
        } else {
            f - 1
        }
    };
    let above = below + 2;
    let (db, da) = ((target - below as f64).abs(), (above as f64 - target).abs());
    let h = if db < da || (db == da && below.abs() > above.abs()) {
        below
    } else {
        above
    };
    let m = k.min(i64::from(n) - k);
    (k, h.clamp(-m, m))
}
