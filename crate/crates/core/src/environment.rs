//! Random environments: finite collections of positive point masses in the rotated square
//! `D = {(x, y) : |y| ≤ min(x, 1 − x)}`, ordered by non-increasing weight.
//!
//! Two samplers are provided. The lattice sampler puts one i.i.d. Pareto(α) weight on every
//! interior site of the `1/n`-scaled lattice; the limit sampler draws the Poisson-type
//! point process `V^i = T_i^{−1/α}` with uniform positions, where `T_i` are partial sums of
//! standard exponentials.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Pareto};
use serde::{Deserialize, Serialize};

use crate::curves::Point;
use crate::entropy::SLOPE_TOL;
use crate::error::{Error, Result};

/// Generator used by every sampler in the crate: counter-based, portable, seedable.
pub type SimRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A node of an environment: one of the two weightless sentinels or a mass by rank.
///
/// Mass ranks are 1-based in weight order (`Mass(1)` is the heaviest). In JSON the origin
/// is `0`, masses are their rank and the terminal sentinel is `"inf"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Site {
    Origin,
    Mass(usize),
    Terminal,
}

impl fmt::Display for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Site::Origin => write!(f, "0"),
            Site::Mass(r) => write!(f, "{r}"),
            Site::Terminal => write!(f, "inf"),
        }
    }
}

impl Serialize for Site {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Site::Origin => s.serialize_u64(0),
            Site::Mass(r) => s.serialize_u64(*r as u64),
            Site::Terminal => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Site {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Rank(u64),
            Name(String),
        }
        match Raw::deserialize(d)? {
            Raw::Rank(0) => Ok(Site::Origin),
            Raw::Rank(r) => Ok(Site::Mass(r as usize)),
            Raw::Name(s) if s == "inf" => Ok(Site::Terminal),
            Raw::Name(s) => Err(serde::de::Error::custom(format!("unknown site {s:?}"))),
        }
    }
}

/// A point mass: positive weight at a position of `D` other than the two corners.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Mass {
    pub weight: f64,
    pub x: f64,
    pub y: f64,
}

impl Mass {
    pub const fn new(weight: f64, x: f64, y: f64) -> Self {
        Mass { weight, x, y }
    }

    pub fn position(&self) -> Point {
        Point::new(self.x, self.y)
    }
}

impl From<[f64; 3]> for Mass {
    fn from([weight, x, y]: [f64; 3]) -> Self {
        Mass { weight, x, y }
    }
}

impl From<Mass> for [f64; 3] {
    fn from(m: Mass) -> Self {
        [m.weight, m.x, m.y]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvKind {
    /// Masses on sites of the `1/n`-scaled lattice.
    Lattice {
        n: u32,
    },
    Continuum,
}

/// Masses in non-increasing weight order plus the implicit sentinels at `(0,0)` and `(1,0)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "EnvironmentFile", into = "EnvironmentFile")]
pub struct Environment {
    kind: EnvKind,
    alpha: f64,
    seed: Option<u64>,
    scaled: bool,
    masses: Vec<Mass>,
}

/// On-disk layout: `{kind, n?, alpha, seed?, scaled?, masses: [[weight, x, y], ...]}`.
#[derive(Serialize, Deserialize)]
struct EnvironmentFile {
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    n: Option<u32>,
    alpha: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(default)]
    scaled: bool,
    masses: Vec<Mass>,
}

impl TryFrom<EnvironmentFile> for Environment {
    type Error = Error;
    fn try_from(f: EnvironmentFile) -> Result<Self> {
        let kind = match (f.kind.as_str(), f.n) {
            ("lattice", Some(n)) => EnvKind::Lattice { n },
            ("lattice", None) => return Err(Error::Domain("lattice environment needs n".into())),
            ("continuum", _) => EnvKind::Continuum,
            (other, _) => return Err(Error::Domain(format!("unknown environment kind {other:?}"))),
        };
        let mut env = Environment::build(kind, f.masses, f.alpha)?;
        env.seed = f.seed;
        env.scaled = f.scaled;
        Ok(env)
    }
}

impl From<Environment> for EnvironmentFile {
    fn from(e: Environment) -> Self {
        let (kind, n) = match e.kind {
            EnvKind::Lattice { n } => ("lattice", Some(n)),
            EnvKind::Continuum => ("continuum", None),
        };
        EnvironmentFile {
            kind: kind.into(),
            n,
            alpha: e.alpha,
            seed: e.seed,
            scaled: e.scaled,
            masses: e.masses,
        }
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 2.0 {
        Ok(())
    } else {
        Err(Error::Parameter(format!(
            "tail index alpha = {alpha} must lie in (0, 2)"
        )))
    }
}

fn check_lattice_n(n: u32) -> Result<()> {
    if n >= 2 && n.is_multiple_of(2) {
        Ok(())
    } else {
        Err(Error::Parameter(format!(
            "lattice size n = {n} must be even and at least 2"
        )))
    }
}

fn descending(masses: &mut [Mass]) {
    masses.sort_by(|a, b| b.weight.total_cmp(&a.weight));
}

impl Environment {
    fn build(kind: EnvKind, mut masses: Vec<Mass>, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::Parameter(format!(
                "alpha = {alpha} must be positive"
            )));
        }
        for m in &masses {
            if !(m.weight > 0.0 && m.weight.is_finite()) {
                return Err(Error::Domain(format!(
                    "mass weight {} must be positive",
                    m.weight
                )));
            }
            if !(m.x > 0.0 && m.x < 1.0) || m.y.abs() > m.x.min(1.0 - m.x) + SLOPE_TOL {
                return Err(Error::Domain(format!(
                    "mass position ({}, {}) outside D",
                    m.x, m.y
                )));
            }
        }
        if let EnvKind::Lattice { n } = kind {
            check_lattice_n(n)?;
            for m in &masses {
                lattice_coords_of(n, m.x, m.y).ok_or_else(|| {
                    Error::Domain(format!(
                        "({}, {}) is not a site of the 1/{n} lattice",
                        m.x, m.y
                    ))
                })?;
            }
        }
        let mut by_pos: Vec<(u64, u64)> = masses
            .iter()
            .map(|m| (m.x.to_bits(), m.y.to_bits()))
            .collect();
        by_pos.sort_unstable();
        if by_pos.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Domain("two masses share a position".into()));
        }
        descending(&mut masses);
        Ok(Environment {
            kind,
            alpha,
            seed: None,
            scaled: false,
            masses,
        })
    }

    /// Continuum environment from arbitrary masses in `D⁰`; `alpha` is recorded as metadata.
    pub fn continuum(masses: Vec<Mass>, alpha: f64) -> Result<Self> {
        Environment::build(EnvKind::Continuum, masses, alpha)
    }

    /// Lattice environment whose masses sit on sites of `(1/n)·L`.
    pub fn lattice(n: u32, masses: Vec<Mass>, alpha: f64) -> Result<Self> {
        Environment::build(EnvKind::Lattice { n }, masses, alpha)
    }

    /// Skips every validity check. Test-only escape hatch for malformed inputs.
    #[cfg(test)]
    pub(crate) fn from_parts_unchecked(masses: Vec<Mass>) -> Self {
        Environment {
            kind: EnvKind::Continuum,
            alpha: 1.0,
            seed: None,
            scaled: false,
            masses,
        }
    }

    pub fn kind(&self) -> EnvKind {
        self.kind
    }

    pub fn lattice_n(&self) -> Option<u32> {
        match self.kind {
            EnvKind::Lattice { n } => Some(n),
            EnvKind::Continuum => None,
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    /// Whether weights have been divided by the norming constant `b_n`.
    pub fn is_scaled(&self) -> bool {
        self.scaled
    }

    pub fn masses(&self) -> &[Mass] {
        &self.masses
    }

    /// Number of masses, sentinels excluded.
    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    /// Origin, masses by rank, terminal.
    pub fn sites(&self) -> impl Iterator<Item = Site> + '_ {
        std::iter::once(Site::Origin)
            .chain((1..=self.masses.len()).map(Site::Mass))
            .chain(std::iter::once(Site::Terminal))
    }

    pub fn position(&self, site: Site) -> Result<Point> {
        match site {
            Site::Mass(r) if r == 0 || r > self.masses.len() => Err(Error::Domain(format!(
                "mass rank {r} out of range 1..={}",
                self.masses.len()
            ))),
            _ => Ok(self.site_position(site)),
        }
    }

    /// Position of a site known to be valid.
    pub fn site_position(&self, site: Site) -> Point {
        match site {
            Site::Origin => Point::new(0.0, 0.0),
            Site::Mass(r) => self.masses[r - 1].position(),
            Site::Terminal => Point::new(1.0, 0.0),
        }
    }

    /// Weight of a site; sentinels weigh zero.
    pub fn weight(&self, site: Site) -> f64 {
        match site {
            Site::Mass(r) => self.masses[r - 1].weight,
            _ => 0.0,
        }
    }

    /// Integer lattice coordinates `(k, h)` with `x = k/n`, `y = h/n`.
    pub fn lattice_coords(&self, site: Site) -> Option<(i64, i64)> {
        let n = self.lattice_n()?;
        let p = self.site_position(site);
        lattice_coords_of(n, p.x, p.y)
    }

    /// Splits into the `k` heaviest masses and the rest. Both halves keep the kind.
    pub fn truncate(&self, k: usize) -> (Environment, Environment) {
        let cut = k.min(self.masses.len());
        let mut top = self.clone();
        let mut rest = self.clone();
        top.masses.truncate(cut);
        rest.masses.drain(..cut);
        (top, rest)
    }

    /// Divides every weight by `b_n`. Only lattice environments carry a norming constant.
    pub fn scale_weights(&self, schedule: &ScalingSchedule) -> Result<Environment> {
        if self.lattice_n().is_none() {
            return Err(Error::Domain(
                "only lattice environments can be scaled".into(),
            ));
        }
        let mut out = self.clone();
        for m in &mut out.masses {
            m.weight /= schedule.b_n;
        }
        out.scaled = true;
        Ok(out)
    }

    pub fn total_weight(&self) -> f64 {
        self.masses.iter().map(|m| m.weight).sum()
    }
}

fn lattice_coords_of(n: u32, x: f64, y: f64) -> Option<(i64, i64)> {
    let nf = f64::from(n);
    let (kf, hf) = ((x * nf).round(), (y * nf).round());
    if (x * nf - kf).abs() > 1e-9 || (y * nf - hf).abs() > 1e-9 {
        return None;
    }
    let (k, h) = (kf as i64, hf as i64);
    ((k + h) % 2 == 0 && h.abs() <= k.min(i64::from(n) - k)).then_some((k, h))
}

/// Number of sites of `(1/n)·L` inside `D`, both corners excluded: `(n/2 + 1)² − 2`.
pub fn lattice_site_count(n: u32) -> usize {
    let half = n as usize / 2;
    (half + 1) * (half + 1) - 2
}

/// One i.i.d. Pareto(α) weight (survival `t^{−α}` on `t ≥ 1`) per interior lattice site.
pub fn sample_lattice_environment(n: u32, alpha: f64, seed: u64) -> Result<Environment> {
    check_lattice_n(n)?;
    check_alpha(alpha)?;
    let pareto = Pareto::new(1.0, alpha).map_err(|e| Error::Parameter(e.to_string()))?;
    let mut rng = rng_from_seed(seed);
    let nf = f64::from(n);
    let mut masses = Vec::with_capacity(lattice_site_count(n));
    for k in 1..n {
        let m = k.min(n - k) as i64;
        for h in (-m..=m).step_by(2) {
            let weight = pareto.sample(&mut rng);
            masses.push(Mass::new(weight, f64::from(k) / nf, h as f64 / nf));
        }
    }
    descending(&mut masses);
    Ok(Environment {
        kind: EnvKind::Lattice { n },
        alpha,
        seed: Some(seed),
        scaled: false,
        masses,
    })
}

/// The `k` heaviest masses of the limit point process: `V^i = T_i^{−1/α}`, positions
/// uniform on `D`.
///
/// Masses are drawn one at a time from a single stream, so the environment for `k` is the
/// prefix of the environment for any larger `k` with the same seed.
pub fn sample_limit_environment(k: usize, alpha: f64, seed: u64) -> Result<Environment> {
    if k == 0 {
        return Err(Error::Parameter("limit environment needs k >= 1".into()));
    }
    check_alpha(alpha)?;
    let mut rng = rng_from_seed(seed);
    let mut arrival = 0.0;
    let mut masses = Vec::with_capacity(k);
    for _ in 0..k {
        let gap: f64 = Exp1.sample(&mut rng);
        arrival += gap;
        let (x, y) = uniform_in_square(&mut rng);
        masses.push(Mass::new(arrival.powf(-1.0 / alpha), x, y));
    }
    Ok(Environment {
        kind: EnvKind::Continuum,
        alpha,
        seed: Some(seed),
        scaled: false,
        masses,
    })
}

/// Uniform point of `D`: a uniform point of the unit square rotated by 45° and shrunk by
/// `1/√2`, i.e. `x = (u + v)/2`, `y = (u − v)/2`. Corners are redrawn.
fn uniform_in_square<R: Rng>(rng: &mut R) -> (f64, f64) {
    loop {
        let (u, v): (f64, f64) = (rng.random(), rng.random());
        let (x, y) = (0.5 * (u + v), 0.5 * (u - v));
        if x > 0.0 && x < 1.0 {
            return (x, y);
        }
    }
}

/// `min` over all pairs of sites (sentinels included) of `|Δx| ∧ ||a| − 1|`.
pub fn mesh(env: &Environment) -> f64 {
    let pts: Vec<Point> = env.sites().map(|s| env.site_position(s)).collect();
    let mut best = f64::INFINITY;
    for (i, a) in pts.iter().enumerate() {
        for b in &pts[i + 1..] {
            let dx = b.x - a.x;
            if dx == 0.0 {
                return 0.0;
            }
            let slope = (b.y - a.y) / dx;
            best = best.min(dx.abs().min((slope.abs() - 1.0).abs()));
        }
    }
    best
}

/// `max_i (|v_i − ṽ_i| ∨ ‖z_i − z̃_i‖_∞)` between equal-cardinality environments.
pub fn env_distance(a: &Environment, b: &Environment) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Domain(format!(
            "environments have {} and {} masses",
            a.len(),
            b.len()
        )));
    }
    Ok(a.masses.iter().zip(&b.masses).fold(0.0, |d, (p, q)| {
        d.max((p.weight - q.weight).abs())
            .max((p.x - q.x).abs())
            .max((p.y - q.y).abs())
    }))
}

/// Temperature schedule at system size `n` with the slowly varying factors fixed to 1.
///
/// `b_n` is chosen so that `site_count · b_n^{−α} = 1`, which makes the scaled inverse
/// temperature `β̄_n = (b_n / n)·β_n` equal to the limit `β` at every `n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingSchedule {
    pub n: u32,
    pub alpha: f64,
    pub beta: f64,
    pub site_count: usize,
    pub b_n: f64,
    /// Bare inverse temperature applied to the unscaled weights.
    pub beta_n: f64,
    /// Inverse temperature applied to the `b_n`-scaled weights.
    pub beta_bar: f64,
}

pub fn make_schedule(n: u32, alpha: f64, beta: f64) -> Result<ScalingSchedule> {
    check_lattice_n(n)?;
    check_alpha(alpha)?;
    if !(beta >= 0.0) {
        return Err(Error::Parameter(format!(
            "beta = {beta} must be non-negative"
        )));
    }
    let site_count = lattice_site_count(n);
    let b_n = (site_count as f64).powf(1.0 / alpha);
    Ok(ScalingSchedule {
        n,
        alpha,
        beta,
        site_count,
        b_n,
        beta_n: beta * f64::from(n) / b_n,
        beta_bar: beta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smallest_lattice() {
        let env = sample_lattice_environment(2, 1.0, 3).unwrap();
        assert_eq!(env.len(), 2);
        let mut pos: Vec<(f64, f64)> = env.masses().iter().map(|m| (m.x, m.y)).collect();
        pos.sort_by(|a, b| a.1.total_cmp(&b.1));
        assert_eq!(pos, vec![(0.5, -0.5), (0.5, 0.5)]);
    }

    #[test]
    fn site_counts() {
        assert_eq!(lattice_site_count(2), 2);
        assert_eq!(lattice_site_count(4), 7);
        assert_eq!(sample_lattice_environment(100, 0.5, 1).unwrap().len(), 2599);
    }

    #[test]
    fn sampler_errors() {
        assert!(sample_lattice_environment(3, 1.0, 0).is_err());
        assert!(sample_lattice_environment(4, 2.0, 0).is_err());
        assert!(sample_limit_environment(0, 1.0, 0).is_err());
        assert!(sample_limit_environment(5, 0.0, 0).is_err());
    }

    #[test]
    fn deterministic_samplers() {
        let a = sample_lattice_environment(20, 0.7, 42).unwrap();
        let b = sample_lattice_environment(20, 0.7, 42).unwrap();
        assert_eq!(a, b);
        let c = sample_limit_environment(30, 0.7, 42).unwrap();
        assert_eq!(c, sample_limit_environment(30, 0.7, 42).unwrap());
        let prefix = sample_limit_environment(10, 0.7, 42).unwrap();
        assert_eq!(prefix.masses(), &c.masses()[..10]);
    }

    #[test]
    fn limit_weights_strictly_decrease() {
        for seed in 0..20 {
            let env = sample_limit_environment(50, 0.5, seed).unwrap();
            assert!(env.masses().windows(2).all(|w| w[0].weight > w[1].weight));
            assert!(env.masses().iter().all(|m| m.y.abs() <= m.x.min(1.0 - m.x)));
        }
    }

    #[test]
    fn truncation_edges() {
        let env = sample_limit_environment(8, 1.0, 9).unwrap();
        let (top, rest) = env.truncate(0);
        assert!(top.is_empty());
        assert_eq!(rest.len(), 8);
        let (top, rest) = env.truncate(20);
        assert_eq!(top.len(), 8);
        assert!(rest.is_empty());
    }

    #[test]
    fn mesh_examples() {
        let one = Environment::continuum(vec![Mass::new(1.0, 0.5, 0.0)], 1.0).unwrap();
        assert_eq!(mesh(&one), 0.5);
        let twin = Environment::continuum(
            vec![Mass::new(1.0, 0.5, 0.1), Mass::new(2.0, 0.5, -0.1)],
            1.0,
        )
        .unwrap();
        assert_eq!(mesh(&twin), 0.0);
        let diag = Environment::continuum(vec![Mass::new(1.0, 0.3, 0.3)], 1.0).unwrap();
        assert_eq!(mesh(&diag), 0.0);
    }

    #[test]
    fn distance_examples() {
        let a = sample_limit_environment(5, 1.0, 1).unwrap();
        assert_eq!(env_distance(&a, &a).unwrap(), 0.0);
        let mut masses = a.masses().to_vec();
        masses[2].weight += 0.1;
        let b = Environment {
            masses,
            ..a.clone()
        };
        assert!((env_distance(&a, &b).unwrap() - 0.1).abs() < 1e-12);
        let (short, _) = a.truncate(3);
        assert!(env_distance(&a, &short).is_err());
    }

    #[test]
    fn schedule_examples() {
        let s = make_schedule(100, 1.0, 2.0).unwrap();
        assert_eq!(s.site_count, 2599);
        assert_eq!(s.b_n, 2599.0);
        assert!((s.beta_n - 2.0 * 100.0 / 2599.0).abs() < 1e-15);
        assert_eq!(s.beta_bar, 2.0);
        assert_eq!(make_schedule(100, 1.0, 0.0).unwrap().beta_n, 0.0);
        let s = make_schedule(100, 0.5, 1.0).unwrap();
        assert_eq!(s.b_n, 2599.0 * 2599.0);
        assert!((s.b_n / 100.0 * s.beta_n - s.beta_bar).abs() < 1e-12);
        assert!(make_schedule(100, 1.0, -1.0).is_err());
    }

    #[test]
    fn scaling_divides_weights() {
        let env = sample_lattice_environment(10, 1.0, 5).unwrap();
        let s = make_schedule(10, 1.0, 1.0).unwrap();
        let scaled = env.scale_weights(&s).unwrap();
        assert!(scaled.is_scaled());
        assert_eq!(scaled.masses()[0].weight, env.masses()[0].weight / s.b_n);
        let unit = ScalingSchedule { b_n: 1.0, ..s };
        assert_eq!(env.scale_weights(&unit).unwrap().masses(), env.masses());
        let limit = sample_limit_environment(3, 1.0, 0).unwrap();
        assert!(limit.scale_weights(&s).is_err());
    }

    #[test]
    fn json_round_trip() {
        let env = sample_lattice_environment(6, 0.5, 11).unwrap();
        let text = serde_json::to_string(&env).unwrap();
        assert!(text.starts_with(r#"{"kind":"lattice","n":6,"alpha":0.5,"seed":11"#));
        let back: Environment = serde_json::from_str(&text).unwrap();
        assert_eq!(
            back,
            env,
            "{text}\n{}",
            serde_json::to_string(&back).unwrap()
        );
        let bad = r#"{"kind":"lattice","n":6,"alpha":0.5,"masses":[[1.0,0.3,0.1]]}"#;
        assert!(serde_json::from_str::<Environment>(bad).is_err());
    }

    #[test]
    fn lattice_coordinates() {
        let env = sample_lattice_environment(8, 1.0, 2).unwrap();
        for s in env.sites() {
            let (k, h) = env.lattice_coords(s).unwrap();
            assert_eq!((k + h) % 2, 0);
        }
        assert_eq!(env.lattice_coords(Site::Terminal), Some((8, 0)));
    }

    #[test]
    fn site_json() {
        let sites = vec![Site::Origin, Site::Mass(3), Site::Terminal];
        let text = serde_json::to_string(&sites).unwrap();
        assert_eq!(text, r#"[0,3,"inf"]"#);
        assert_eq!(serde_json::from_str::<Vec<Site>>(&text).unwrap(), sites);
    }
}
