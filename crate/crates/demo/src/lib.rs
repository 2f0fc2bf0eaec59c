//! WebAssembly bindings for the demo page in `www/`.
//!
//! Everything runs on a two-dimensional planted saddle
//! `f(x) = (1/2)x₁² − (δ/2)x₂² + (x₁⁴ + x₂⁴)/4` plus small per-component
//! linear terms, and returns flat `Vec<f64>` buffers for the page to draw.

use ssrgd::diagnostics::{run_coupled_experiment, CoupledParams};
use ssrgd::problems::make_separable_saddle;
use ssrgd::rng::{streams, RngStream};
use ssrgd::ssrgd::{derive_config_second_order, random_stop_decision, EpochView, RunHooks};
use ssrgd::{run_ssrgd_with, ProblemExt, ProblemInstance, RunConfig};
use wasm_bindgen::prelude::*;

const COMPONENTS: usize = 16;
const NOISE: f64 = 0.1;
const EPS: f64 = 0.05;
/// Half-width of the plotted square.
pub const EXTENT: f64 = 1.5;

fn instance(delta: f64) -> Result<ProblemInstance, JsError> {
    make_separable_saddle(2, COMPONENTS, delta, NOISE, 0).map_err(|e| JsError::new(&e.to_string()))
}

fn config(inst: &ProblemInstance, delta: f64, seed: u64) -> Result<RunConfig, JsError> {
    let mut cfg = derive_config_second_order(inst.problem.as_ref(), EPS, delta.max(1e-3), 1.0)
        .map_err(|e| JsError::new(&e.to_string()))?;
    cfg.seed = seed;
    Ok(cfg)
}

/// `f` on a `res × res` grid over `[−EXTENT, EXTENT]²`, row-major from the
/// top-left corner.
#[wasm_bindgen]
pub fn landscape(delta: f64, res: usize) -> Result<Vec<f64>, JsError> {
    let inst = instance(delta)?;
    let p = inst.problem.as_ref();
    let step = 2.0 * EXTENT / (res.max(2) - 1) as f64;
    let mut out = Vec::with_capacity(res * res);
    for i in 0..res {
        for j in 0..res {
            let x = [-EXTENT + j as f64 * step, EXTENT - i as f64 * step];
            out.push(p.value(&x));
        }
    }
    Ok(out)
}

/// SSRGD and plain GD, both started exactly at the saddle.
///
/// Layout: `[k, x₀, y₀, …, x_{k−1}, y_{k−1}, j, gd points…]`. The SSRGD path
/// is sampled at epoch starts.
#[wasm_bindgen]
pub fn saddle_paths(delta: f64, seed: u32, epochs: u32) -> Result<Vec<f64>, JsError> {
    let inst = instance(delta)?;
    let p = inst.problem.as_ref();
    let mut cfg = config(&inst, delta, seed as u64)?;
    cfg.max_epochs = Some(epochs as u64);
    cfg.sfo_budget = u64::MAX;

    let mut path = Vec::new();
    let mut observe = |v: &EpochView<'_>| {
        path.extend_from_slice(v.x);
        false
    };
    let hooks = RunHooks {
        certifier: None,
        observer: Some(&mut observe),
    };
    let out = run_ssrgd_with(p, &cfg, &[0.0, 0.0], hooks).map_err(|e| JsError::new(&e.to_string()))?;
    path.extend_from_slice(&out.final_x);

    let mut gd = vec![0.0, 0.0];
    let mut x = vec![0.0, 0.0];
    let gd_steps = epochs as usize * cfg.epoch_len / 2;
    for _ in 0..gd_steps {
        let g = p.grad_at(&x).map_err(|e| JsError::new(&e.to_string()))?;
        for (xi, gi) in x.iter_mut().zip(g.iter()) {
            *xi -= cfg.eta * gi;
        }
        gd.extend_from_slice(&x);
    }

    let mut buf = Vec::with_capacity(path.len() + gd.len() + 2);
    buf.push((path.len() / 2) as f64);
    buf.extend(path);
    buf.push((gd.len() / 2) as f64);
    buf.extend(gd);
    Ok(buf)
}

/// Frequencies of the stopping step `k ∈ 1..=m` over `epochs` draws of the
/// random stop rule. Each entry should be close to `1/m`.
#[wasm_bindgen]
pub fn random_stop_histogram(m: usize, epochs: u32, seed: u32) -> Vec<f64> {
    let m = m.max(1);
    let mut rng = RngStream::new(seed as u64, streams::RANDOM_STOP);
    let mut counts = vec![0.0; m];
    for _ in 0..epochs {
        let k = (1..=m).find(|&k| random_stop_decision(&mut rng, k, m)).unwrap_or(m);
        counts[k - 1] += 1.0;
    }
    let total = epochs.max(1) as f64;
    counts.iter_mut().for_each(|c| *c /= total);
    counts
}

/// One coupled pair around the saddle: two starts `r₀` apart along the
/// negative-curvature direction, driven by the same minibatches.
///
/// Layout: `[T, escape_iter or −1, threshold, x path (2T), x′ path (2T)]`.
#[wasm_bindgen]
pub fn coupled_pair(delta: f64, seed: u32) -> Result<Vec<f64>, JsError> {
    let inst = instance(delta)?;
    let cfg = config(&inst, delta, seed as u64)?;
    let params = CoupledParams {
        pairs: 1,
        keep_trajectories: true,
        seed: seed as u64,
        ..CoupledParams::default()
    };
    let rep = run_coupled_experiment(&inst, &[0.0, 0.0], &cfg, &params).map_err(|e| JsError::new(&e.to_string()))?;
    let run = &rep.runs[0];
    let t = run.x_traj.len();
    let mut buf = Vec::with_capacity(3 + 4 * t);
    buf.push(t as f64);
    buf.push(run.escape_iter.map_or(-1.0, |k| k as f64));
    buf.push(rep.threshold);
    for x in run.x_traj.iter().chain(&run.x_prime_traj) {
        buf.extend_from_slice(x);
    }
    Ok(buf)
}
