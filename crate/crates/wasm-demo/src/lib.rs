//! Browser bindings. Each export takes plain arguments and returns JSON.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use scoutpf::filters::{Filter, FilterConfig, FilterKind};
use scoutpf::harness::cli::invert_demo;
use scoutpf::harness::run_single;
use scoutpf::scenarios::by_name;

fn js_err(e: impl std::fmt::Display) -> JsValue {
    JsValue::from_str(&e.to_string())
}

#[derive(Serialize)]
struct Inversion {
    text: String,
    residual: f64,
}

/// Measurement map of a scenario about its prior mean, its inverse and
/// the residual of their composition.
pub fn invert_json(scenario: &str, order: u32) -> Result<String, String> {
    let mut spec = by_name(scenario).map_err(|e| e.to_string())?;
    spec.filter.order = order;
    let (text, residual) = invert_demo(&spec).map_err(|e| e.to_string())?;
    serde_json::to_string(&Inversion { text, residual }).map_err(|e| e.to_string())
}

/// One Monte Carlo run, as the per-step record written by the CLI.
pub fn run_json(scenario: &str, filter: &str, seed: u64, run_id: usize) -> Result<String, String> {
    let spec = by_name(scenario).map_err(|e| e.to_string())?.resolved().map_err(|e| e.to_string())?;
    let kind: FilterKind = filter.parse().map_err(|e: scoutpf::filters::FilterError| e.to_string())?;
    let record = run_single(&spec, &FilterConfig::new(kind, spec.filter.clone()), run_id, seed).map_err(|e| e.to_string())?;
    serde_json::to_string(&record).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct Update {
    filter: String,
    update_kind: String,
    mean: Vec<f64>,
    psi: f64,
    particles: Vec<[f64; 2]>,
    weights: Vec<f64>,
}

/// A single range-bearing update from the range-angle prior.
pub fn range_angle_json(filter: &str, range: f64, bearing: f64, seed: u64) -> Result<String, String> {
    let spec = by_name("range_angle").map_err(|e| e.to_string())?;
    let kind: FilterKind = filter.parse().map_err(|e: scoutpf::filters::FilterError| e.to_string())?;
    let system = spec.system().map_err(|e| e.to_string())?;
    let prior = spec.prior().map_err(|e| e.to_string())?;
    let mut f = Filter::new(FilterConfig::new(kind, spec.filter.clone()), prior, spec.t0, seed).map_err(|e| e.to_string())?;
    let out = f.step(&system, spec.t0, &[range, bearing]).map_err(|e| e.to_string())?;
    let update = Update {
        filter: kind.name().to_string(),
        update_kind: out.update_kind.name().to_string(),
        mean: out.mean.as_slice().to_vec(),
        psi: out.psi,
        particles: out.ensemble.particles.iter().map(|p| [p[0], p[1]]).collect(),
        weights: out.weights,
    };
    serde_json::to_string(&update).map_err(|e| e.to_string())
}

#[wasm_bindgen]
pub fn invert(scenario: &str, order: u32) -> Result<String, JsValue> {
    invert_json(scenario, order).map_err(js_err)
}

#[wasm_bindgen]
pub fn run(scenario: &str, filter: &str, seed: u64, run_id: usize) -> Result<String, JsValue> {
    run_json(scenario, filter, seed, run_id).map_err(js_err)
}

#[wasm_bindgen]
pub fn range_angle_update(filter: &str, range: f64, bearing: f64, seed: u64) -> Result<String, JsValue> {
    range_angle_json(filter, range, bearing, seed).map_err(js_err)
}
