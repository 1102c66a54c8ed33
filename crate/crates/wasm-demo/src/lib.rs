//! wasm-bindgen entry points for the static demo page in `www/`.
//!
//! Every export takes plain numbers and returns a JSON string, so the page
//! needs no glue beyond `JSON.parse`. The same functions run natively.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use type1_weyl::bench::{draw_epsilon, search_parameters};
use type1_weyl::evolve::{grover_gap, min_gap, propagate_with, PropagationOptions, Schedule};
use type1_weyl::spectra::SecularSolution;
use type1_weyl::type1::Type1Parameters;

/// Largest register the evolution panel accepts; keeps a run interactive.
pub const MAX_DEMO_N: usize = 48;

fn to_json<T: Serialize>(value: &T) -> Result<String, String> {
    serde_json::to_string(value).map_err(|e| e.to_string())
}

fn err(e: type1_weyl::Error) -> String {
    e.to_string()
}

#[derive(Serialize)]
struct ScheduleCurves {
    t_run: f64,
    t: Vec<f64>,
    s: Vec<f64>,
    ds_dt: Vec<f64>,
    grover_gap: Vec<f64>,
}

/// `s(t)`, `ds/dt` and the closed-form Grover gap on `points` uniform times.
#[wasm_bindgen]
pub fn schedule_curves(n: usize, delta: f64, points: usize) -> Result<String, String> {
    let sched = Schedule::new(n, delta).map_err(err)?;
    let table = sched.table(points.max(2));
    let mut out = ScheduleCurves {
        t_run: sched.t_run(),
        t: vec![],
        s: vec![],
        ds_dt: vec![],
        grover_gap: vec![],
    };
    for (t, s) in table {
        out.t.push(t);
        out.s.push(s);
        out.ds_dt.push(sched.ds_dt(t).map_err(err)?);
        out.grover_gap.push(grover_gap(n, s));
    }
    to_json(&out)
}

#[derive(Serialize)]
struct SpectrumScan {
    x: Vec<f64>,
    /// `eta[k]` holds the ascending eigenvalues of `I_power` at `x[k]`.
    eta: Vec<Vec<f64>>,
}

/// Eigenvalues of `I_power` for uniform weights over a grid of couplings.
/// Grid points where `x` is zero are skipped.
#[wasm_bindgen]
pub fn spectrum_scan(epsilon: Vec<f64>, x_min: f64, x_max: f64, points: usize, power: usize) -> Result<String, String> {
    if !x_min.is_finite() || !x_max.is_finite() || x_min >= x_max || points < 2 {
        return Err("need x_min < x_max and at least 2 points".into());
    }
    let base = Type1Parameters::uniform(1.0, epsilon).map_err(err)?;
    let mut scan = SpectrumScan { x: vec![], eta: vec![] };
    for k in 0..points {
        let x = x_min + (x_max - x_min) * k as f64 / (points - 1) as f64;
        if x.abs() < 1e-12 {
            continue;
        }
        let sol = SecularSolution::solve(&base.with_x(x).map_err(err)?).map_err(err)?;
        let mut eta = sol.eta(power);
        eta.sort_by(f64::total_cmp);
        scan.x.push(x);
        scan.eta.push(eta);
    }
    to_json(&scan)
}

#[derive(Serialize)]
struct EvolutionSummary {
    epsilon: Vec<f64>,
    t_run: f64,
    fidelity: f64,
    max_norm_drift: f64,
    min_gap: f64,
    t: Vec<f64>,
    s: Vec<f64>,
    gap: Vec<f64>,
}

/// Anneals `I_n` for levels `[0, 1, 1 + delta_eps U[0,1) ...]` drawn from
/// `seed`; `delta_eps = 0` gives the Grover problem.
#[wasm_bindgen]
pub fn evolve_search(
    n_dim: usize,
    n: usize,
    delta: f64,
    delta_eps: f64,
    seed: u64,
    steps: usize,
) -> Result<String, String> {
    if n_dim > MAX_DEMO_N {
        return Err(format!("N is limited to {MAX_DEMO_N} in the demo"));
    }
    let epsilon = draw_epsilon(n_dim, delta_eps, seed).map_err(err)?;
    let params = search_parameters(epsilon.clone()).map_err(err)?;
    let sched = Schedule::new(n_dim, delta).map_err(err)?;
    let opts = PropagationOptions {
        steps,
        trace_points: 128,
        ..Default::default()
    };
    let trace = propagate_with(&params, n, &sched, &opts).map_err(err)?;
    let low = min_gap(&params, n, &sched, 128).map_err(err)?;
    to_json(&EvolutionSummary {
        epsilon,
        t_run: trace.t_run,
        fidelity: trace.final_fidelity,
        max_norm_drift: trace.max_norm_drift(),
        min_gap: low.gap,
        t: trace.time_grid,
        s: trace.s_grid,
        gap: trace.gap,
    })
}
