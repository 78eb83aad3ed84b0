//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Arrays cross the boundary flattened: masses as `[w, x, y, …]`, curves as `[x, y, …]`,
//! paths as consecutive height runs of length `n + 1`.

use wasm_bindgen::prelude::*;

use polymer_core::curves::Curve;
use polymer_core::entropy::{curve_entropy, entropy_rate};
use polymer_core::environment::{
    make_schedule, sample_lattice_environment, sample_limit_environment, Environment,
};
use polymer_core::gibbs::{build_transfer, TransferTable};
use polymer_core::variational::{Regime, Solver};

fn js_error(e: polymer_core::Error) -> JsError {
    JsError::new(&e.to_string())
}

fn flatten(curve: &Curve) -> Vec<f64> {
    curve.points().iter().flat_map(|p| [p.x, p.y]).collect()
}

/// The `k` heaviest masses of a limit environment and its favorable curves.
#[wasm_bindgen]
pub struct Landscape {
    env: Environment,
    beta_c: f64,
}

#[wasm_bindgen]
impl Landscape {
    #[wasm_bindgen(constructor)]
    pub fn new(k: usize, alpha: f64, seed: u64) -> Result<Landscape, JsError> {
        let env = sample_limit_environment(k, alpha, seed).map_err(js_error)?;
        let beta_c = Solver::new(&env).beta_critical(1e-9).map_err(js_error)?;
        Ok(Landscape { env, beta_c })
    }

    pub fn masses(&self) -> Vec<f64> {
        self.env
            .masses()
            .iter()
            .flat_map(|m| [m.weight, m.x, m.y])
            .collect()
    }

    #[wasm_bindgen(getter)]
    pub fn beta_critical(&self) -> f64 {
        self.beta_c
    }

    /// Breakpoints of the maximizer at `beta` followed by `[value, entropy]`.
    pub fn favorable(&self, beta: f64) -> Result<Vec<f64>, JsError> {
        let sol = Solver::new(&self.env)
            .solve(beta, Regime::FiniteLimit)
            .map_err(js_error)?;
        let mut out = flatten(&sol.curve);
        out.extend([sol.value, curve_entropy(&sol.curve)]);
        Ok(out)
    }
}

/// Exact Gibbs measure of a scaled lattice environment.
#[wasm_bindgen]
pub struct Polymer {
    n: usize,
    env: Environment,
    beta_bar: f64,
    table: TransferTable,
}

#[wasm_bindgen]
impl Polymer {
    #[wasm_bindgen(constructor)]
    pub fn new(n: u32, alpha: f64, beta: f64, seed: u64) -> Result<Polymer, JsError> {
        let schedule = make_schedule(n, alpha, beta).map_err(js_error)?;
        let env = sample_lattice_environment(n, alpha, seed)
            .and_then(|e| e.scale_weights(&schedule))
            .map_err(js_error)?;
        let table = build_transfer(&env, schedule.beta_bar).map_err(js_error)?;
        Ok(Polymer {
            n: n as usize,
            env,
            beta_bar: schedule.beta_bar,
            table,
        })
    }

    #[wasm_bindgen(getter)]
    pub fn n(&self) -> usize {
        self.n
    }

    /// The ten heaviest scaled masses as `[w, x, y, …]`.
    pub fn heavy_masses(&self) -> Vec<f64> {
        self.env
            .masses()
            .iter()
            .take(10)
            .flat_map(|m| [m.weight, m.x, m.y])
            .collect()
    }

    /// Height marginals on an `(n + 1) × (n + 1)` grid, row `k`, column `(h + n) / 2`.
    pub fn marginals(&self) -> Vec<f64> {
        let n = self.n;
        let mut grid = vec![0.0; (n + 1) * (n + 1)];
        for k in 0..=n {
            for (h, p) in self.table.marginal(k) {
                grid[k * (n + 1) + ((h + n as i64) / 2) as usize] = p;
            }
        }
        grid
    }

    pub fn sample(&self, count: usize, seed: u64) -> Vec<i32> {
        self.table
            .sample_paths(count, seed)
            .iter()
            .flat_map(|p| p.heights.iter().map(|&h| h as i32))
            .collect()
    }

    pub fn favorable(&self) -> Result<Vec<f64>, JsError> {
        let sol = Solver::new(&self.env)
            .solve(self.beta_bar, Regime::FiniteLimit)
            .map_err(js_error)?;
        Ok(flatten(&sol.curve))
    }

    /// Probability of leaving the `delta`-tube around the favorable curve.
    pub fn escape_probability(&self, delta: f64) -> Result<f64, JsError> {
        let sol = Solver::new(&self.env)
            .solve(self.beta_bar, Regime::FiniteLimit)
            .map_err(js_error)?;
        Ok(self
            .table
            .tube_probability(&sol.curve, delta)
            .map_err(js_error)?
            .outside)
    }
}

/// `e(u)`, clamped to `[−1, 1]`.
#[wasm_bindgen]
pub fn entropy(u: f64) -> f64 {
    entropy_rate(u)
}
