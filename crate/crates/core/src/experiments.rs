//! Seeded Monte Carlo harnesses with persisted records.
//!
//! A run is fully determined by its [`ExperimentConfig`]. Every replica draws its
//! randomness from a seed derived by hashing `(base_seed, tag, indices)`, replicas are
//! evaluated independently (in parallel with the `parallel` feature) and merged in task
//! order, so the record stream is byte-identical across runs and thread counts.
//!
//! Records are written as JSON lines; the summary table groups them by parameters and
//! statistic and reports quartiles. Both files are plain plot data.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::curves::{sup_distance, Curve};
use crate::entropy::curve_entropy;
use crate::environment::{
    make_schedule, sample_lattice_environment, sample_limit_environment, Environment,
};
use crate::error::{Error, Result};
use crate::gibbs::build_transfer;
use crate::stats::{ks_two_sample, quartiles};
use crate::variational::{remainder_max, Regime, Solver};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Localization,
    ScalingLimit,
    Monotonicity,
    PhaseTransition,
    Truncation,
}

impl ExperimentKind {
    pub fn tag(self) -> &'static str {
        match self {
            ExperimentKind::Localization => "localization",
            ExperimentKind::ScalingLimit => "scaling-limit",
            ExperimentKind::Monotonicity => "monotonicity",
            ExperimentKind::PhaseTransition => "phase-transition",
            ExperimentKind::Truncation => "truncation",
        }
    }
}

impl std::str::FromStr for ExperimentKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_owned()))
            .map_err(|_| Error::Parameter(format!("unknown experiment {s:?}")))
    }
}

fn default_tol() -> f64 {
    1e-10
}

/// One run. Fields not used by an experiment are ignored by it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    /// Phase transition only; falls back to `alpha`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub alpha_list: Vec<f64>,
    #[serde(default)]
    pub beta: f64,
    /// Monotonicity β grid (ascending); defaults to `0, 0.25, …, 5`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub beta_list: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub n_list: Vec<u32>,
    /// Size of limit environments (the largest size for truncation).
    #[serde(default)]
    pub k: usize,
    /// Truncation levels, or environment sizes for the phase transition.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub k_list: Vec<usize>,
    #[serde(default)]
    pub delta: f64,
    pub replicas: usize,
    pub base_seed: u64,
    /// Bisection tolerance for the critical temperature.
    #[serde(default = "default_tol")]
    pub tol: f64,
    /// Scaling limit: also run the Gibbs-path ensemble.
    #[serde(default)]
    pub gibbs: bool,
    /// JSON-lines record file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    /// Summary CSV; defaults to `output` with a `.csv` extension.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Minimal config; every list empty and every scalar zero.
    pub fn new(experiment: ExperimentKind, replicas: usize, base_seed: u64) -> Self {
        ExperimentConfig {
            experiment,
            alpha: None,
            alpha_list: Vec::new(),
            beta: 0.0,
            beta_list: Vec::new(),
            n_list: Vec::new(),
            k: 0,
            k_list: Vec::new(),
            delta: 0.0,
            replicas,
            base_seed,
            tol: default_tol(),
            gibbs: false,
            output: None,
            summary: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    fn alphas(&self) -> Vec<f64> {
        if self.alpha_list.is_empty() {
            self.alpha.into_iter().collect()
        } else {
            self.alpha_list.clone()
        }
    }

    fn alpha(&self) -> f64 {
        self.alpha.expect("validated")
    }

    fn beta_grid(&self) -> Vec<f64> {
        if self.beta_list.is_empty() {
            (0..=20).map(|i| i as f64 * 0.25).collect()
        } else {
            self.beta_list.clone()
        }
    }

    pub fn summary_path(&self) -> Option<PathBuf> {
        self.summary
            .clone()
            .or_else(|| self.output.as_ref().map(|p| p.with_extension("csv")))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Parameter(msg));
        if self.replicas == 0 {
            return bad("replicas must be at least 1".into());
        }
        let alphas = self.alphas();
        if alphas.is_empty() {
            return bad("alpha is required".into());
        }
        if let Some(a) = alphas.iter().find(|a| !(**a > 0.0 && **a < 2.0)) {
            return bad(format!("alpha = {a} must lie in (0, 2)"));
        }
        if self.experiment != ExperimentKind::PhaseTransition && self.alpha.is_none() {
            return bad("alpha is required".into());
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return bad(format!("beta = {} must be finite and >= 0", self.beta));
        }
        if let Some(n) = self.n_list.iter().find(|n| **n < 2 || **n % 2 != 0) {
            return bad(format!("n = {n} must be even and at least 2"));
        }
        if !(self.tol > 0.0) {
            return bad(format!("tol = {} must be positive", self.tol));
        }
        match self.experiment {
            ExperimentKind::Localization => {
                if self.n_list.is_empty() {
                    return bad("localization needs n_list".into());
                }
                if !(self.delta > 0.0) {
                    return bad(format!("delta = {} must be positive", self.delta));
                }
            }
            ExperimentKind::ScalingLimit => {
                if self.n_list.is_empty() || self.k == 0 {
                    return bad("scaling-limit needs n_list and k >= 1".into());
                }
            }
            ExperimentKind::Monotonicity => {
                let grid = self.beta_grid();
                if self.k == 0 {
                    return bad("monotonicity needs k >= 1".into());
                }
                if grid.iter().any(|b| !(*b >= 0.0 && b.is_finite()))
                    || grid.windows(2).any(|w| w[0] >= w[1])
                {
                    return bad("beta_list must be finite, non-negative and increasing".into());
                }
            }
            ExperimentKind::PhaseTransition => {
                if self.k_list.is_empty() || self.k_list.contains(&0) {
                    return bad("phase-transition needs a k_list of positive sizes".into());
                }
            }
            ExperimentKind::Truncation => {
                if self.k == 0 || self.k_list.is_empty() || self.k_list.iter().any(|&k| k > self.k)
                {
                    return bad("truncation needs k >= 1 and a k_list with entries <= k".into());
                }
            }
        }
        Ok(())
    }
}

/// A statistic value; non-finite values are written as the strings `"inf"`, `"-inf"`, `"nan"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stat(pub f64);

impl Serialize for Stat {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self.0 {
            v if v.is_finite() => s.serialize_f64(v),
            v if v == f64::INFINITY => s.serialize_str("inf"),
            v if v == f64::NEG_INFINITY => s.serialize_str("-inf"),
            _ => s.serialize_str("nan"),
        }
    }
}

impl<'de> Deserialize<'de> for Stat {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Stat(v)),
            Raw::Text(t) => match t.as_str() {
                "inf" => Ok(Stat(f64::INFINITY)),
                "-inf" => Ok(Stat(f64::NEG_INFINITY)),
                "nan" => Ok(Stat(f64::NAN)),
                other => Err(serde::de::Error::custom(format!("bad statistic {other:?}"))),
            },
        }
    }
}

/// One observation. Aggregate records (KS distances, fractions) carry no replica.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub experiment: ExperimentKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ensemble: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replica: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    pub stats: BTreeMap<String, Stat>,
}

impl ResultRecord {
    fn new(experiment: ExperimentKind) -> Self {
        ResultRecord {
            experiment,
            ensemble: None,
            replica: None,
            seed: None,
            alpha: None,
            beta: None,
            n: None,
            k: None,
            delta: None,
            stats: BTreeMap::new(),
        }
    }

    fn replica(mut self, replica: usize, seed: u64) -> Self {
        self.replica = Some(replica);
        self.seed = Some(seed);
        self
    }

    fn ensemble(mut self, name: &str) -> Self {
        self.ensemble = Some(name.to_owned());
        self
    }

    fn stat(mut self, name: &str, value: f64) -> Self {
        self.stats.insert(name.to_owned(), Stat(value));
        self
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.stats.get(name).map(|s| s.0)
    }

    /// Probabilities in `[0, 1]`, entropies and critical temperatures `>= 0`, nothing NaN.
    pub fn check(&self) -> Result<()> {
        for (name, &Stat(v)) in &self.stats {
            let ok = !v.is_nan()
                && (!name.ends_with("probability") || (0.0..=1.0).contains(&v))
                && (!(name.ends_with("entropy") || name == "beta_c") || v >= 0.0);
            if !ok {
                return Err(Error::Invariant(format!(
                    "statistic {name} = {v} out of range"
                )));
            }
        }
        Ok(())
    }
}

/// Replica seed: the first eight bytes of `SHA-256(base ‖ tag ‖ indices)`.
pub fn derive_seed(base_seed: u64, tag: &str, indices: &[u64]) -> u64 {
    let mut h = Sha256::new();
    h.update(base_seed.to_le_bytes());
    h.update(tag.as_bytes());
    h.update([0u8]);
    for i in indices {
        h.update(i.to_le_bytes());
    }
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

fn par_map<T, R, F>(items: Vec<T>, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.into_iter().map(f).collect()
    }
}

/// Caps the worker pool used by experiment runners. Must be called before the first run.
#[cfg(feature = "parallel")]
pub fn set_threads(threads: usize) -> Result<()> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Error::Parameter(format!("cannot configure {threads} threads: {e}")))
}

fn flatten<T>(chunks: Vec<Result<Vec<T>>>) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for chunk in chunks {
        out.extend(chunk?);
    }
    Ok(out)
}

/// Lattice environment of size `n` with `b_n`-scaled weights, plus `β̄`.
fn scaled_lattice(n: u32, alpha: f64, beta: f64, seed: u64) -> Result<(Environment, f64)> {
    let schedule = make_schedule(n, alpha, beta)?;
    let env = sample_lattice_environment(n, alpha, seed)?.scale_weights(&schedule)?;
    Ok((env, schedule.beta_bar))
}

/// Runs the configured experiment and checks every record.
pub fn run(config: &ExperimentConfig) -> Result<Vec<ResultRecord>> {
    config.validate()?;
    let records = match config.experiment {
        ExperimentKind::Localization => run_localization(config),
        ExperimentKind::ScalingLimit => run_scaling_limit(config),
        ExperimentKind::Monotonicity => run_monotonicity(config),
        ExperimentKind::PhaseTransition => run_phase_transition(config),
        ExperimentKind::Truncation => run_truncation(config),
    }?;
    for r in &records {
        r.check()?;
    }
    Ok(records)
}

/// Per `(n, replica)`: localization rate of the exact Gibbs measure around `γ*`.
///
/// The tube is enforced at the lattice abscissas `k/n`; between them path and center are
/// both 1-Lipschitz, so the continuum sup-distance exceeds the lattice one by at most `1/n`.
pub fn run_localization(config: &ExperimentConfig) -> Result<Vec<ResultRecord>> {
    let kind = ExperimentKind::Localization;
    let (alpha, beta, delta) = (config.alpha(), config.beta, config.delta);
    let tasks: Vec<(u32, usize)> = config
        .n_list
        .iter()
        .flat_map(|&n| (0..config.replicas).map(move |r| (n, r)))
        .collect();
    let records = par_map(tasks, |(n, r)| -> Result<ResultRecord> {
        let seed = derive_seed(config.base_seed, kind.tag(), &[u64::from(n), r as u64]);
        let (env, beta_bar) = scaled_lattice(n, alpha, beta, seed)?;
        let center = Solver::new(&env)
            .solve(beta_bar, Regime::FiniteLimit)?
            .curve;
        let tube = build_transfer(&env, beta_bar)?.tube_probability(&center, delta)?;
        let mut rec = ResultRecord::new(kind).replica(r, seed);
        (rec.alpha, rec.beta, rec.n, rec.delta) = (Some(alpha), Some(beta), Some(n), Some(delta));
        Ok(rec
            .stat("rate", -tube.log_outside / f64::from(n))
            .stat("log_outside", tube.log_outside)
            .stat("inside_probability", tube.inside)
            .stat("outside_probability", tube.outside)
            .stat("center_sup", center.sup_abs())
            .stat("center_entropy", curve_entropy(&center)))
    });
    records.into_iter().collect()
}

/// Sup-norm-continuous summaries used to compare curve laws.
fn functionals(curve: &Curve) -> [(&'static str, f64); 3] {
    [
        ("sup", curve.sup_abs()),
        ("entropy", curve_entropy(curve)),
        ("area", curve.signed_area()),
    ]
}

fn functional_record(kind: ExperimentKind, ensemble: &str, curve: &Curve) -> ResultRecord {
    functionals(curve).into_iter().fold(
        ResultRecord::new(kind).ensemble(ensemble),
        |rec, (name, v)| rec.stat(name, v),
    )
}

/// Ensemble A: `γ*` of scaled lattice environments of size `n`. Ensemble B: `γ̂^k` of
/// truncated limit environments. Optional ensemble C: one exact Gibbs path per lattice
/// environment of A. One aggregate record per `n` carries the pairwise KS distances of
/// each functional (`sup` displacement, entropy, signed area).
pub fn run_scaling_limit(config: &ExperimentConfig) -> Result<Vec<ResultRecord>> {
    let kind = ExperimentKind::ScalingLimit;
    let (alpha, beta, k) = (config.alpha(), config.beta, config.k);
    let params = |mut rec: ResultRecord| {
        (rec.alpha, rec.beta) = (Some(alpha), Some(beta));
        rec
    };

    let limit = par_map(
        (0..config.replicas).collect(),
        |r| -> Result<ResultRecord> {
            let seed = derive_seed(config.base_seed, "scaling-limit/B", &[k as u64, r as u64]);
            let env = sample_limit_environment(k, alpha, seed)?;
            let curve = Solver::new(&env).solve(beta, Regime::FiniteLimit)?.curve;
            let mut rec = params(functional_record(kind, "B", &curve).replica(r, seed));
            rec.k = Some(k);
            Ok(rec)
        },
    );
    let limit: Vec<ResultRecord> = limit.into_iter().collect::<Result<_>>()?;

    let mut out = Vec::new();
    for &n in &config.n_list {
        let tasks: Vec<usize> = (0..config.replicas).collect();
        let lattice = par_map(tasks, |r| -> Result<Vec<ResultRecord>> {
            let seed = derive_seed(
                config.base_seed,
                "scaling-limit/A",
                &[u64::from(n), r as u64],
            );
            let (env, beta_bar) = scaled_lattice(n, alpha, beta, seed)?;
            let curve = Solver::new(&env)
                .solve(beta_bar, Regime::FiniteLimit)?
                .curve;
            let mut rec = params(functional_record(kind, "A", &curve).replica(r, seed));
            rec.n = Some(n);
            let mut recs = vec![rec];
            if config.gibbs {
                let path_seed = derive_seed(
                    config.base_seed,
                    "scaling-limit/C",
                    &[u64::from(n), r as u64],
                );
                let path = build_transfer(&env, beta_bar)?
                    .sample_path(path_seed)
                    .to_curve();
                let mut rec = params(functional_record(kind, "C", &path).replica(r, path_seed));
                rec.n = Some(n);
                recs.push(rec);
            }
            Ok(recs)
        });
        let lattice = flatten(lattice)?;
        let pick = |ens: &str, name: &str, recs: &[ResultRecord]| -> Vec<f64> {
            recs.iter()
                .filter(|r| r.ensemble.as_deref() == Some(ens))
                .filter_map(|r| r.get(name))
                .collect()
        };
        let mut agg = params(ResultRecord::new(kind));
        (agg.n, agg.k) = (Some(n), Some(k));
        for (name, _) in functionals(&Curve::zero()) {
            let a = pick("A", name, &lattice);
            let b = pick("B", name, &limit);
            agg = agg.stat(&format!("ks_{name}_ab"), ks_two_sample(&a, &b));
            if config.gibbs {
                let c = pick("C", name, &lattice);
                agg = agg
                    .stat(&format!("ks_{name}_ac"), ks_two_sample(&a, &c))
                    .stat(&format!("ks_{name}_cb"), ks_two_sample(&c, &b));
            }
        }
        out.extend(lattice);
        out.push(agg);
    }
    out.splice(0..0, limit);
    Ok(out)
}

/// Slack for comparing solver outputs across the β grid.
const MONOTONE_TOL: f64 = 1e-9;

/// Per replica: solve one limit environment across the β grid and verify that
/// `E(γ̂_β)` is non-decreasing and `ŵ_β` is non-decreasing and convex. A violation is an
/// error (the inequalities hold for every environment). The aggregate record reports the
/// fraction of replicas where the entropy strictly increases somewhere on the grid.
pub fn run_monotonicity(config: &ExperimentConfig) -> Result<Vec<ResultRecord>> {
    let kind = ExperimentKind::Monotonicity;
    let (alpha, k, grid) = (config.alpha(), config.k, config.beta_grid());
    let chunks = par_map(
        (0..config.replicas).collect(),
        |r| -> Result<Vec<ResultRecord>> {
            let seed = derive_seed(config.base_seed, kind.tag(), &[k as u64, r as u64]);
            let env = sample_limit_environment(k, alpha, seed)?;
            let solver = Solver::new(&env);
            let mut entropy = Vec::with_capacity(grid.len());
            let mut value = Vec::with_capacity(grid.len());
            let mut recs = Vec::with_capacity(grid.len() + 1);
            for &beta in &grid {
                let sol = solver.solve(beta, Regime::FiniteLimit)?;
                entropy.push(curve_entropy(&sol.curve));
                value.push(sol.value);
                let mut rec = ResultRecord::new(kind).replica(r, seed);
                (rec.alpha, rec.beta, rec.k) = (Some(alpha), Some(beta), Some(k));
                recs.push(
                    rec.stat("entropy", *entropy.last().unwrap())
                        .stat("value", sol.value),
                );
            }
            let fail = |what: &str, i: usize| {
                Err(Error::Invariant(format!(
                    "replica {r} (seed {seed}): {what} violated between beta = {} and {}",
                    grid[i],
                    grid[i + 1]
                )))
            };
            for i in 0..grid.len() - 1 {
                if entropy[i + 1] < entropy[i] - MONOTONE_TOL {
                    return fail("entropy monotonicity", i);
                }
                if value[i + 1] < value[i] - MONOTONE_TOL {
                    return fail("value monotonicity", i);
                }
                if i + 2 < grid.len() {
                    let s0 = (value[i + 1] - value[i]) / (grid[i + 1] - grid[i]);
                    let s1 = (value[i + 2] - value[i + 1]) / (grid[i + 2] - grid[i + 1]);
                    if s1 < s0 - MONOTONE_TOL * (1.0 + s0.abs()) {
                        return fail("value convexity", i);
                    }
                }
            }
            let strict = entropy.windows(2).any(|w| w[1] > w[0] + MONOTONE_TOL);
            let mut rec = ResultRecord::new(kind).replica(r, seed);
            (rec.alpha, rec.k) = (Some(alpha), Some(k));
            recs.push(
                rec.stat("strict_increase", f64::from(u8::from(strict)))
                    .stat("violations", 0.0),
            );
            Ok(recs)
        },
    );
    let mut records = flatten(chunks)?;
    let strict: Vec<f64> = records
        .iter()
        .filter_map(|r| r.get("strict_increase"))
        .collect();
    let mut agg = ResultRecord::new(kind);
    (agg.alpha, agg.k) = (Some(alpha), Some(k));
    let fraction = strict.iter().sum::<f64>() / strict.len() as f64;
    records.push(
        agg.stat("strict_fraction", fraction)
            .stat("violations", 0.0),
    );
    Ok(records)
}

/// Per `(α, k, replica)`: critical temperature of a limit environment truncated to its `k`
/// heaviest masses. Environments for one `(α, replica)` are nested across `k` (they share a
/// seed and the masses are drawn in decreasing order), so `β_c^k` is non-increasing in `k`
/// along each replica. Each record also checks the dichotomy: the maximizer is the zero
/// curve at `β_c/2` and is not at `2β_c + tol`.
pub fn run_phase_transition(config: &ExperimentConfig) -> Result<Vec<ResultRecord>> {
    let kind = ExperimentKind::PhaseTransition;
    let tol = config.tol;
    let tasks: Vec<(f64, usize, usize)> = config
        .alphas()
        .into_iter()
        .flat_map(|a| {
            config
                .k_list
                .iter()
                .flat_map(move |&k| (0..config.replicas).map(move |r| (a, k, r)))
        })
        .collect();
    let records = par_map(tasks, |(alpha, k, r)| -> Result<ResultRecord> {
        let seed = derive_seed(config.base_seed, kind.tag(), &[alpha.to_bits(), r as u64]);
        let env = sample_limit_environment(k, alpha, seed)?;
        let solver = Solver::new(&env);
        let beta_c = solver.beta_critical(tol)?;
        let checked = beta_c > 0.0 && beta_c.is_finite();
        if checked {
            let below = solver.solve(beta_c / 2.0, Regime::FiniteLimit)?.curve;
            let above = solver.solve(2.0 * beta_c + tol, Regime::FiniteLimit)?.curve;
            if !below.is_zero() || above.is_zero() {
                return Err(Error::Invariant(format!(
                    "alpha {alpha}, k {k}, seed {seed}: dichotomy fails around beta_c = {beta_c}"
                )));
            }
        }
        let mut rec = ResultRecord::new(kind).replica(r, seed);
        (rec.alpha, rec.k) = (Some(alpha), Some(k));
        Ok(rec
            .stat("beta_c", beta_c)
            .stat("dichotomy_checked", f64::from(u8::from(checked))))
    });
    records.into_iter().collect()
}

fn truncation_records(
    kind: ExperimentKind,
    env: &Environment,
    beta: f64,
    k_list: &[usize],
) -> Result<Vec<ResultRecord>> {
    let full = Solver::new(env).solve(beta, Regime::FiniteLimit)?;
    k_list
        .iter()
        .map(|&k| {
            let (top, rest) = env.truncate(k);
            let truncated = Solver::new(&top).solve(beta, Regime::FiniteLimit)?;
            let r_k = if rest.is_empty() {
                0.0
            } else {
                remainder_max(&rest)
            };
            let gap = (truncated.value - full.value).abs();
            let bound = beta * r_k;
            let holds = gap <= bound + MONOTONE_TOL * (1.0 + full.value.abs());
            let mut rec = ResultRecord::new(kind);
            (rec.beta, rec.k) = (Some(beta), Some(k));
            Ok(rec
                .stat("remainder", r_k)
                .stat("gap", gap)
                .stat("bound", bound)
                .stat("sandwich", f64::from(u8::from(holds)))
                .stat("distance", sup_distance(&truncated.curve, &full.curve)))
        })
        .collect()
}

/// Per replica: for a limit environment of size `k` (and scaled lattice environments for
/// each `n`), the remainder maximum `R^k`, the truncation gap `|ŵ^k − ŵ|` against its
/// bound `β·R^k`, and the sup-distance from `γ̂^k` to the untruncated maximizer.
pub fn run_truncation(config: &ExperimentConfig) -> Result<Vec<ResultRecord>> {
    let kind = ExperimentKind::Truncation;
    let (alpha, beta) = (config.alpha(), config.beta);
    let mut sizes: Vec<Option<u32>> = vec![None];
    sizes.extend(config.n_list.iter().map(|&n| Some(n)));
    let tasks: Vec<(Option<u32>, usize)> = sizes
        .iter()
        .flat_map(|&n| (0..config.replicas).map(move |r| (n, r)))
        .collect();
    let chunks = par_map(tasks, |(n, r)| -> Result<Vec<ResultRecord>> {
        let (ensemble, env, beta, seed) = match n {
            None => {
                let seed = derive_seed(
                    config.base_seed,
                    "truncation/limit",
                    &[config.k as u64, r as u64],
                );
                (
                    "limit",
                    sample_limit_environment(config.k, alpha, seed)?,
                    beta,
                    seed,
                )
            }
            Some(n) => {
                let seed = derive_seed(
                    config.base_seed,
                    "truncation/lattice",
                    &[u64::from(n), r as u64],
                );
                let (env, beta_bar) = scaled_lattice(n, alpha, beta, seed)?;
                ("lattice", env, beta_bar, seed)
            }
        };
        let recs = truncation_records(kind, &env, beta, &config.k_list)?;
        Ok(recs
            .into_iter()
            .map(|mut rec| {
                (rec.alpha, rec.n) = (Some(alpha), n);
                rec.ensemble(ensemble).replica(r, seed)
            })
            .collect())
    });
    let mut records = flatten(chunks)?;
    let flags: Vec<f64> = records.iter().filter_map(|r| r.get("sandwich")).collect();
    let violations = flags.iter().filter(|&&f| f == 0.0).count();
    let mut agg = ResultRecord::new(kind);
    (agg.alpha, agg.beta) = (Some(alpha), Some(beta));
    records.push(agg.stat("sandwich_violations", violations as f64));
    Ok(records)
}

/// One row of the summary table: quartiles of one statistic over records sharing
/// parameters.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub experiment: ExperimentKind,
    pub ensemble: Option<String>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub n: Option<u32>,
    pub k: Option<usize>,
    pub delta: Option<f64>,
    pub statistic: String,
    pub count: usize,
    pub q25: Stat,
    pub median: Stat,
    pub q75: Stat,
}

/// Groups records by parameters and statistic, in order of first appearance.
pub fn summarize(records: &[ResultRecord]) -> Vec<SummaryRow> {
    type Key = (String, String);
    let mut order: Vec<Key> = Vec::new();
    let mut groups: HashMap<Key, (SummaryRow, Vec<f64>)> = HashMap::new();
    for rec in records {
        let params = format!(
            "{:?}|{:?}|{:?}|{:?}|{:?}|{:?}|{:?}",
            rec.experiment, rec.ensemble, rec.alpha, rec.beta, rec.n, rec.k, rec.delta
        );
        for (name, &Stat(v)) in &rec.stats {
            let key = (params.clone(), name.clone());
            let entry = groups.entry(key.clone()).or_insert_with(|| {
                order.push(key);
                let row = SummaryRow {
                    experiment: rec.experiment,
                    ensemble: rec.ensemble.clone(),
                    alpha: rec.alpha,
                    beta: rec.beta,
                    n: rec.n,
                    k: rec.k,
                    delta: rec.delta,
                    statistic: name.clone(),
                    count: 0,
                    q25: Stat(f64::NAN),
                    median: Stat(f64::NAN),
                    q75: Stat(f64::NAN),
                };
                (row, Vec::new())
            });
            entry.1.push(v);
        }
    }
    order
        .into_iter()
        .map(|key| {
            let (mut row, values) = groups.remove(&key).expect("key recorded");
            let (q25, median, q75) = quartiles(&values);
            row.count = values.len();
            (row.q25, row.median, row.q75) = (Stat(q25), Stat(median), Stat(q75));
            row
        })
        .collect()
}

pub fn write_jsonl<W: Write>(records: &[ResultRecord], mut out: W) -> Result<()> {
    for rec in records {
        serde_json::to_writer(&mut out, rec)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_jsonl(text: &str) -> Result<Vec<ResultRecord>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| Ok(serde_json::from_str(l)?))
        .collect()
}

pub fn write_summary_csv<W: Write>(rows: &[SummaryRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Invariant(format!("csv: {other:?}")),
    }
}

/// Runs the experiment and writes the records and summary to the configured paths.
pub fn run_to_files(config: &ExperimentConfig) -> Result<Vec<ResultRecord>> {
    let output = config
        .output
        .as_ref()
        .ok_or_else(|| Error::Parameter("config has no output path".into()))?;
    let records = run(config)?;
    write_jsonl(&records, BufWriter::new(File::create(output)?))?;
    let summary = config.summary_path().expect("output is set");
    write_summary_csv(&summarize(&records), BufWriter::new(File::create(summary)?))?;
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(kind: ExperimentKind) -> ExperimentConfig {
        let mut c = ExperimentConfig::new(kind, 3, 17);
        c.alpha = Some(0.5);
        c.beta = 1.0;
        c
    }

    #[test]
    fn seeds_are_stable_and_distinct() {
        assert_eq!(derive_seed(1, "a", &[2, 3]), derive_seed(1, "a", &[2, 3]));
        assert_ne!(derive_seed(1, "a", &[2, 3]), derive_seed(1, "a", &[3, 2]));
        assert_ne!(derive_seed(1, "a", &[2]), derive_seed(1, "b", &[2]));
        assert_ne!(derive_seed(1, "a", &[2]), derive_seed(2, "a", &[2]));
    }

    #[test]
    fn stat_json() {
        let rec = ResultRecord::new(ExperimentKind::Localization)
            .stat("rate", f64::INFINITY)
            .stat("x", 0.5);
        let text = serde_json::to_string(&rec).unwrap();
        assert_eq!(
            text,
            r#"{"experiment":"localization","stats":{"rate":"inf","x":0.5}}"#
        );
        assert_eq!(serde_json::from_str::<ResultRecord>(&text).unwrap(), rec);
    }

    #[test]
    fn validation() {
        let mut c = config(ExperimentKind::Localization);
        assert!(c.validate().is_err());
        c.n_list = vec![10];
        c.delta = 0.1;
        c.validate().unwrap();
        c.n_list = vec![9];
        assert!(c.validate().is_err());
        let mut c = config(ExperimentKind::Truncation);
        c.k = 5;
        c.k_list = vec![1, 6];
        assert!(c.validate().is_err());
        let bad = r#"{"experiment":"monotonicity","alpha":0.5,"k":3,"replicas":1,"base_seed":1,"bogus":1}"#;
        assert!(ExperimentConfig::from_json(bad).is_err());
        let good = r#"{"experiment":"monotonicity","alpha":0.5,"k":3,"replicas":1,"base_seed":1}"#;
        assert_eq!(
            ExperimentConfig::from_json(good).unwrap().beta_grid().len(),
            21
        );
    }

    #[test]
    fn localization_small() {
        let mut c = config(ExperimentKind::Localization);
        c.n_list = vec![8, 12];
        c.delta = 0.2;
        let recs = run(&c).unwrap();
        assert_eq!(recs.len(), 6);
        assert!(recs.iter().all(|r| r.get("rate").unwrap() >= 0.0));
        assert_eq!(run(&c).unwrap(), recs);
    }

    #[test]
    fn zero_beta_scaling_limit_is_degenerate() {
        let mut c = config(ExperimentKind::ScalingLimit);
        c.beta = 0.0;
        c.n_list = vec![10];
        c.k = 8;
        c.gibbs = true;
        let recs = run(&c).unwrap();
        let agg = recs.last().unwrap();
        assert_eq!(agg.get("ks_entropy_ab"), Some(0.0));
        assert_eq!(agg.get("ks_sup_ab"), Some(0.0));
    }

    #[test]
    fn monotonicity_small() {
        let mut c = config(ExperimentKind::Monotonicity);
        c.k = 10;
        let recs = run(&c).unwrap();
        assert_eq!(recs.len(), 3 * 22 + 1);
        assert!(recs.last().unwrap().get("strict_fraction").is_some());
    }

    #[test]
    fn phase_transition_nested() {
        let mut c = config(ExperimentKind::PhaseTransition);
        c.k_list = vec![5, 20];
        let recs = run(&c).unwrap();
        for r in 0..3 {
            let bc: Vec<f64> = recs
                .iter()
                .filter(|x| x.replica == Some(r))
                .map(|x| x.get("beta_c").unwrap())
                .collect();
            assert!(bc[1] <= bc[0] + 1e-9, "{bc:?}");
        }
    }

    #[test]
    fn truncation_small() {
        let mut c = config(ExperimentKind::Truncation);
        c.k = 12;
        c.k_list = vec![1, 4, 12];
        c.n_list = vec![8];
        let recs = run(&c).unwrap();
        assert_eq!(recs.last().unwrap().get("sandwich_violations"), Some(0.0));
        let at_max: Vec<_> = recs
            .iter()
            .filter(|r| r.k == Some(12) && r.n.is_none())
            .collect();
        assert!(at_max.iter().all(|r| r.get("distance") == Some(0.0)));
    }

    #[test]
    fn summary_rows() {
        let mut c = config(ExperimentKind::Localization);
        c.n_list = vec![8];
        c.delta = 0.2;
        let recs = run(&c).unwrap();
        let rows = summarize(&recs);
        let rate = rows.iter().find(|r| r.statistic == "rate").unwrap();
        assert_eq!(rate.count, 3);
        let mut buf = Vec::new();
        write_summary_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with(
            "experiment,ensemble,alpha,beta,n,k,delta,statistic,count,q25,median,q75\n"
        ));
        let mut buf = Vec::new();
        write_jsonl(&recs, &mut buf).unwrap();
        assert_eq!(
            read_jsonl(std::str::from_utf8(&buf).unwrap()).unwrap(),
            recs
        );
    }
}
