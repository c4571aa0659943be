//! Browser bindings for three small interactive experiments at reduced
//! scale. Each binding wraps a plain Rust function of the same name with a
//! `_impl` suffix so that the numerics can be tested natively.

use wasm_bindgen::prelude::*;

use wc4dvar::experiments::{dump_singular_values, generate_truth, generate_twin, Case, Experiment, ExperimentConfig, Variant, Which};

/// Preconditioners in the order their traces are concatenated.
pub const VARIANTS: [Variant; 4] = [Variant::None, Variant::Exact, Variant::LowRankLinv, Variant::LowRankS];

const MAX_GRID: usize = 200;
const MAX_STEPS: usize = 2000;

fn to_js(e: impl std::fmt::Display) -> JsValue {
    JsValue::from_str(&e.to_string())
}

/// Lorenz 96 space-time field, row-major with `steps + 1` rows of `n` values,
/// taken after the usual spin-up.
pub fn hovmoller_impl(n: usize, steps: usize, forcing: f64, seed: u64) -> Result<Vec<f64>, String> {
    if n > MAX_GRID || steps > MAX_STEPS {
        return Err(format!("at most {MAX_GRID} grid points and {MAX_STEPS} steps"));
    }
    let mut cfg = ExperimentConfig::full_scale(Case::One).with_grid(n, steps).with_seeds(seed, seed, seed);
    cfg.forcing = forcing;
    let truth = generate_truth(&cfg, &mut cfg.truth_rng()).map_err(|e| e.to_string())?;
    Ok(truth.into_vec())
}

#[wasm_bindgen]
pub fn hovmoller(n: usize, steps: usize, forcing: f64, seed: u32) -> Result<Vec<f64>, JsValue> {
    hovmoller_impl(n, steps, forcing, seed.into()).map_err(to_js)
}

/// Quadratic-cost traces of one reduced-scale twin problem for the four
/// preconditioners, concatenated in [`VARIANTS`] order, each `iterations + 1`
/// long.
pub fn cost_traces_impl(case: u8, rank: usize, iterations: usize, seed: u64) -> Result<Vec<f64>, String> {
    let case = Case::from_id(case).map_err(|e| e.to_string())?;
    let mut cfg = ExperimentConfig::reduced(case).with_variant(Variant::LowRankS, rank).with_seeds(seed, seed, seed);
    cfg.iterations = iterations;
    cfg.validate().map_err(|e| e.to_string())?;
    let twin = generate_twin(&cfg).map_err(|e| e.to_string())?;
    let experiment = Experiment::new(&cfg, &twin).map_err(|e| e.to_string())?;
    let mut out = Vec::with_capacity(VARIANTS.len() * (iterations + 1));
    for variant in VARIANTS {
        let trace = experiment.run(variant, 0).map_err(|e| e.to_string())?;
        out.extend((0..=iterations).map(|i| trace.cost_at(i)));
    }
    Ok(out)
}

#[wasm_bindgen]
pub fn cost_traces(case: u8, rank: usize, iterations: usize, seed: u32) -> Result<Vec<f64>, JsValue> {
    cost_traces_impl(case, rank, iterations, seed.into()).map_err(to_js)
}

/// The `rank` leading singular values of `P` (`which = "P"`) or `W`, dense
/// first and randomised second, `2 * rank` values in total.
pub fn singular_values_impl(which: &str, rank: usize, seed: u64) -> Result<Vec<f64>, String> {
    let which: Which = which.parse().map_err(|e: wc4dvar::Error| e.to_string())?;
    let cfg = ExperimentConfig::reduced(Case::One).with_seeds(1, 2, seed);
    if rank == 0 || rank + cfg.oversampling > cfg.n * (cfg.window + 1) {
        return Err(format!("rank must lie in 1..={}", cfg.n * (cfg.window + 1) - cfg.oversampling));
    }
    let twin = generate_twin(&cfg).map_err(|e| e.to_string())?;
    let table = dump_singular_values(&cfg, &twin, which, &[rank], seed, true).map_err(|e| e.to_string())?;
    let mut out: Vec<f64> = table.dense.expect("dense requested").into_iter().take(rank).collect();
    out.extend_from_slice(&table.approximations[0].1);
    Ok(out)
}

#[wasm_bindgen]
pub fn singular_values(which: &str, rank: usize, seed: u32) -> Result<Vec<f64>, JsValue> {
    singular_values_impl(which, rank, seed.into()).map_err(to_js)
}
