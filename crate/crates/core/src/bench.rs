//! Seeded search experiments: fidelity deficits of the interpolating
//! operators against the Grover baseline.
//!
//! Random levels come from PCG64 (`rand_pcg::Pcg64`, a 128-bit LCG with
//! XSL-RR output), seeded through `SeedableRng::seed_from_u64`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{RngExt, SeedableRng};
use rand_pcg::Pcg64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolve::{
    grover_gap, min_gap, propagate_with, write_gap_csv, GapSample, PropagationOptions, Schedule, TRACE_POINTS,
};
use crate::type1::Type1Parameters;

pub const PRNG_NAME: &str = "pcg64";
/// Environment variable bounding the worker pool.
pub const THREADS_ENV: &str = "TYPE1_WEYL_THREADS";

/// `epsilon_1 = 0`, `epsilon_2 = 1`, the rest uniform in `[1, 1 + delta_eps]`.
pub fn draw_epsilon(n: usize, delta_eps: f64, seed: u64) -> Result<Vec<f64>> {
    if n < 3 {
        return Err(Error::InvalidExperiment(format!("need N >= 3, got {n}")));
    }
    if !(delta_eps >= 0.0 && delta_eps.is_finite()) {
        return Err(Error::InvalidExperiment(format!(
            "delta_eps must be >= 0, got {delta_eps}"
        )));
    }
    let mut rng = Pcg64::seed_from_u64(seed);
    let mut eps = Vec::with_capacity(n);
    eps.extend([0.0, 1.0]);
    eps.extend((2..n).map(|_| 1.0 + delta_eps * rng.random::<f64>()));
    Ok(eps)
}

/// Search parameters with uniform `gamma`; `x` is irrelevant to the
/// interpolating operators and set to 1.
pub fn search_parameters(epsilon: Vec<f64>) -> Result<Type1Parameters> {
    Type1Parameters::uniform(1.0, epsilon)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchExperimentConfig {
    #[serde(rename = "N")]
    pub n: usize,
    pub n_list: Vec<usize>,
    pub delta: f64,
    pub delta_eps: f64,
    pub seeds: Vec<u64>,
    pub steps: usize,
    pub output_path: Option<PathBuf>,
    /// Repeat each run at twice the steps and flag agreement within this
    /// tolerance; `null` skips the check.
    pub convergence_tol: Option<f64>,
    /// Level spreads for the second experiment's first panel.
    pub delta_eps_sweep: Vec<f64>,
    /// Schedule parameters for the second experiment's second panel.
    pub delta_sweep: Vec<f64>,
    /// Write one gap-trace CSV per run under `output_path/gaps`.
    pub write_traces: bool,
}

impl Default for SearchExperimentConfig {
    fn default() -> Self {
        Self {
            n: 64,
            n_list: vec![1, 3, 5, 7],
            delta: 0.1,
            delta_eps: 0.1,
            seeds: (1..=10).collect(),
            steps: 1 << 14,
            output_path: None,
            convergence_tol: Some(1e-8),
            delta_eps_sweep: log_space(1e-4, 1e-1, 5),
            delta_sweep: vec![0.2, 0.1, 0.05, 0.025],
            write_traces: false,
        }
    }
}

impl SearchExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidExperiment(m));
        if self.n < 4 {
            return bad(format!("N must be >= 4, got {}", self.n));
        }
        if self.n_list.is_empty() || self.n_list.iter().any(|&k| !(1..=9).contains(&k)) {
            return bad(format!("n_list entries must lie in 1..=9, got {:?}", self.n_list));
        }
        let delta_ok = |d: f64| d > 0.0 && d <= 0.5;
        if !delta_ok(self.delta) || !self.delta_sweep.iter().all(|&d| delta_ok(d)) {
            return bad("delta values must lie in (0, 0.5]".into());
        }
        let deps_ok = |d: f64| (0.0..=1.0).contains(&d);
        if !deps_ok(self.delta_eps) || !self.delta_eps_sweep.iter().all(|&d| deps_ok(d)) {
            return bad("delta_eps values must lie in [0, 1]".into());
        }
        if self.seeds.is_empty() {
            return bad("seeds must be non-empty".into());
        }
        if self.steps == 0 {
            return bad("steps must be >= 1".into());
        }
        if matches!(self.convergence_tol, Some(t) if !(t > 0.0)) {
            return bad("convergence_tol must be positive".into());
        }
        Ok(())
    }
}

/// `count` logarithmically spaced values from `lo` to `hi` inclusive.
pub fn log_space(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.log10(), hi.log10());
    (0..count)
        .map(|k| 10f64.powf(a + (b - a) * k as f64 / (count - 1) as f64))
        .collect()
}

/// One propagation: either an operator `I_n` on drawn levels or the Grover
/// baseline (`seed = None`, degenerate levels, `n = 1`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSpec {
    pub seed: Option<u64>,
    pub n: usize,
    pub delta: f64,
    pub delta_eps: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRow {
    pub label: String,
    pub n: usize,
    pub seed: Option<u64>,
    #[serde(rename = "N")]
    pub dim: usize,
    pub delta: f64,
    pub delta_eps: f64,
    pub steps: usize,
    pub t_run: f64,
    pub final_fidelity: f64,
    pub fidelity_deficit: f64,
    pub min_gap: f64,
    /// Largest `|gap - gap_grover| / gap_grover` along the trace.
    pub max_gap_rel_dev: f64,
    pub max_norm_drift: f64,
    pub converged: Option<bool>,
    /// Levels joined with `;` in shortest round-trip form.
    pub epsilon: String,
}

/// A finished run together with its gap trace.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub row: ExperimentRow,
    pub gaps: Vec<GapSample>,
}

/// Runs one propagation with a fixed step size relative to the spec's `steps`.
pub fn run_single(dim: usize, spec: &RunSpec, convergence_tol: Option<f64>) -> Result<RunOutput> {
    let eps = match spec.seed {
        Some(seed) => draw_epsilon(dim, spec.delta_eps, seed)?,
        None => draw_epsilon(dim, 0.0, 0)?,
    };
    let params = search_parameters(eps.clone())?;
    let sched = Schedule::new(dim, spec.delta)?;
    let opts = PropagationOptions {
        steps: spec.steps,
        convergence_tol,
        ..Default::default()
    };
    let trace = propagate_with(&params, spec.n, &sched, &opts)?;
    let gaps: Vec<GapSample> = (0..trace.time_grid.len())
        .map(|k| GapSample {
            t: trace.time_grid[k],
            s: trace.s_grid[k],
            gap: trace.gap[k],
        })
        .collect();
    let max_gap_rel_dev = gaps
        .iter()
        .map(|g| {
            let reference = grover_gap(dim, g.s);
            (g.gap - reference).abs() / reference
        })
        .fold(0.0, f64::max);
    let min = min_gap(&params, spec.n, &sched, TRACE_POINTS)?;
    let label = match spec.seed {
        Some(_) => format!("I{}", spec.n),
        None => "grover".to_string(),
    };
    let row = ExperimentRow {
        label,
        n: spec.n,
        seed: spec.seed,
        dim,
        delta: spec.delta,
        delta_eps: if spec.seed.is_some() { spec.delta_eps } else { 0.0 },
        steps: spec.steps,
        t_run: sched.t_run(),
        final_fidelity: trace.final_fidelity,
        fidelity_deficit: trace.fidelity_deficit(),
        min_gap: min.gap,
        max_gap_rel_dev,
        max_norm_drift: trace.max_norm_drift(),
        converged: trace.converged,
        epsilon: eps.iter().map(|e| e.to_string()).collect::<Vec<_>>().join(";"),
    };
    Ok(RunOutput { row, gaps })
}

fn sort_key(spec: &RunSpec) -> (u8, u64, usize, u64, u64) {
    // Grover rows first, then by delta, delta_eps, n, seed.
    (
        spec.seed.is_some() as u8,
        spec.delta.to_bits(),
        spec.n,
        spec.delta_eps.to_bits(),
        spec.seed.unwrap_or(0),
    )
}

/// Runs every spec on the bounded pool and returns results in sorted-key
/// order. Failed runs are returned alongside the successful ones.
pub fn run_all(dim: usize, mut specs: Vec<RunSpec>, convergence_tol: Option<f64>) -> Vec<(RunSpec, Result<RunOutput>)> {
    specs.sort_by_key(sort_key);
    specs.dedup();
    let results = parallel_map(&specs, |s| run_single(dim, s, convergence_tol));
    specs.into_iter().zip(results).collect()
}

#[cfg(feature = "parallel")]
fn parallel_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    use rayon::prelude::*;
    let threads = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or(0);
    match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(pool) => pool.install(|| items.par_iter().map(&f).collect()),
        Err(_) => items.iter().map(f).collect(),
    }
}

#[cfg(not(feature = "parallel"))]
fn parallel_map<T, R>(items: &[T], f: impl Fn(&T) -> R) -> Vec<R> {
    items.iter().map(f).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct GroupSummary {
    pub label: String,
    pub n: usize,
    pub delta: f64,
    pub delta_eps: f64,
    pub runs: usize,
    pub median_deficit: f64,
    pub min_deficit: f64,
    pub max_deficit: f64,
    pub mean_deficit: f64,
    pub grover_deficit: f64,
    pub median_below_grover: bool,
}

/// Rows plus per-group statistics. Every statistic can be recomputed from
/// the rows, which keep all seeds.
#[derive(Debug, Clone, Default)]
pub struct ExperimentResult {
    pub rows: Vec<ExperimentRow>,
    pub traces: Vec<(ExperimentRow, Vec<GapSample>)>,
    pub failures: Vec<String>,
}

impl ExperimentResult {
    fn collect(runs: Vec<(RunSpec, Result<RunOutput>)>) -> Self {
        let mut out = Self::default();
        for (spec, r) in runs {
            match r {
                Ok(o) => {
                    out.rows.push(o.row.clone());
                    out.traces.push((o.row, o.gaps));
                }
                Err(e) => out.failures.push(format!("{spec:?}: {e}")),
            }
        }
        out
    }

    pub fn grover(&self, delta: f64) -> Option<&ExperimentRow> {
        self.rows.iter().find(|r| r.seed.is_none() && r.delta == delta)
    }

    /// Deficits of `I_n` over seeds for one `(delta, delta_eps)` point.
    pub fn deficits(&self, n: usize, delta: f64, delta_eps: f64) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.seed.is_some() && r.n == n && r.delta == delta && r.delta_eps == delta_eps)
            .map(|r| r.fidelity_deficit)
            .collect()
    }

    pub fn summaries(&self) -> Vec<GroupSummary> {
        let mut keys: Vec<(usize, f64, f64)> = self
            .rows
            .iter()
            .filter(|r| r.seed.is_some())
            .map(|r| (r.n, r.delta, r.delta_eps))
            .collect();
        keys.sort_by(|a, b| (a.1, a.2, a.0).partial_cmp(&(b.1, b.2, b.0)).expect("finite keys"));
        keys.dedup();
        keys.into_iter()
            .map(|(n, delta, delta_eps)| {
                let d = self.deficits(n, delta, delta_eps);
                let grover_deficit = self.grover(delta).map_or(f64::NAN, |g| g.fidelity_deficit);
                let median_deficit = median(&d);
                GroupSummary {
                    label: format!("I{n}"),
                    n,
                    delta,
                    delta_eps,
                    runs: d.len(),
                    median_deficit,
                    min_deficit: d.iter().copied().fold(f64::INFINITY, f64::min),
                    max_deficit: d.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                    mean_deficit: d.iter().sum::<f64>() / d.len() as f64,
                    grover_deficit,
                    median_below_grover: median_deficit <= grover_deficit,
                }
            })
            .collect()
    }

    /// One CSV row per run.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for row in &self.rows {
            out.serialize(row)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn summary_json(&self, experiment: &str, config: &SearchExperimentConfig) -> serde_json::Value {
        serde_json::json!({
            "experiment": experiment,
            "prng": PRNG_NAME,
            "config": config,
            "runs": self.rows.len(),
            "failures": self.failures,
            "groups": self.summaries(),
        })
    }

    /// Writes `results.csv`, `summary.json` and, if requested, one gap trace
    /// per run into `dir`.
    pub fn write_dir(&self, dir: &Path, experiment: &str, config: &SearchExperimentConfig) -> Result<()> {
        fs::create_dir_all(dir)?;
        self.write_csv(fs::File::create(dir.join("results.csv"))?)?;
        let summary = serde_json::to_string_pretty(&self.summary_json(experiment, config))?;
        fs::write(dir.join("summary.json"), summary + "\n")?;
        if config.write_traces {
            let gaps = dir.join("gaps");
            fs::create_dir_all(&gaps)?;
            for (row, samples) in &self.traces {
                let name = match row.seed {
                    Some(seed) => format!("{}_seed{seed}_delta{}_deps{}.csv", row.label, row.delta, row.delta_eps),
                    None => format!("grover_delta{}.csv", row.delta),
                };
                write_gap_csv(samples, fs::File::create(gaps.join(name))?)?;
            }
        }
        Ok(())
    }

    /// Errors if any run failed; call after partial results were written.
    pub fn into_result(self) -> Result<Self> {
        match self.failures.first() {
            Some(f) => Err(Error::InvalidExperiment(format!(
                "{} run(s) failed, first: {f}",
                self.failures.len()
            ))),
            None => Ok(self),
        }
    }
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Step count keeping the time step of `base_steps` at `base_delta` when
/// the schedule is slowed to `delta`.
pub fn scaled_steps(base_steps: usize, base_delta: f64, delta: f64) -> usize {
    ((base_steps as f64 * base_delta / delta).ceil() as usize).max(base_steps)
}

/// Every `(seed, n)` at the configured `delta` and `delta_eps`, plus the
/// Grover baseline.
pub fn run_figure1(config: &SearchExperimentConfig) -> Result<ExperimentResult> {
    config.validate()?;
    let mut specs = vec![RunSpec {
        seed: None,
        n: 1,
        delta: config.delta,
        delta_eps: 0.0,
        steps: config.steps,
    }];
    for &seed in &config.seeds {
        for &n in &config.n_list {
            specs.push(RunSpec {
                seed: Some(seed),
                n,
                delta: config.delta,
                delta_eps: config.delta_eps,
                steps: config.steps,
            });
        }
    }
    finish(
        ExperimentResult::collect(run_all(config.n, specs, config.convergence_tol)),
        "figure1",
        config,
    )
}

/// Panel (a): `delta_eps` swept at fixed `delta`. Panel (b): `delta` swept
/// at fixed `delta_eps`, with steps scaled so the time step stays fixed.
/// Both panels use every `n` in `n_list` and include a Grover baseline per
/// `delta`.
pub fn run_figure2(config: &SearchExperimentConfig) -> Result<ExperimentResult> {
    config.validate()?;
    let mut specs = Vec::new();
    let mut deltas = config.delta_sweep.clone();
    deltas.push(config.delta);
    for &delta in &deltas {
        specs.push(RunSpec {
            seed: None,
            n: 1,
            delta,
            delta_eps: 0.0,
            steps: scaled_steps(config.steps, config.delta, delta),
        });
    }
    for &seed in &config.seeds {
        for &n in &config.n_list {
            for &delta_eps in &config.delta_eps_sweep {
                specs.push(RunSpec {
                    seed: Some(seed),
                    n,
                    delta: config.delta,
                    delta_eps,
                    steps: config.steps,
                });
            }
            for &delta in &config.delta_sweep {
                specs.push(RunSpec {
                    seed: Some(seed),
                    n,
                    delta,
                    delta_eps: config.delta_eps,
                    steps: scaled_steps(config.steps, config.delta, delta),
                });
            }
        }
    }
    finish(
        ExperimentResult::collect(run_all(config.n, specs, config.convergence_tol)),
        "figure2",
        config,
    )
}

fn finish(result: ExperimentResult, name: &str, config: &SearchExperimentConfig) -> Result<ExperimentResult> {
    if let Some(dir) = &config.output_path {
        result.write_dir(dir, name, config)?;
    }
    result.into_result()
}

/// Mean deficit per swept `delta` for one operator, ordered by `delta`.
pub fn mean_deficit_by_delta(result: &ExperimentResult, n: usize, delta_eps: f64) -> Vec<(f64, f64)> {
    let mut deltas: Vec<f64> = result
        .rows
        .iter()
        .filter(|r| r.seed.is_some() && r.n == n && r.delta_eps == delta_eps)
        .map(|r| r.delta)
        .collect();
    deltas.sort_by(f64::total_cmp);
    deltas.dedup();
    deltas
        .into_iter()
        .map(|d| {
            let v = result.deficits(n, d, delta_eps);
            (d, v.iter().sum::<f64>() / v.len() as f64)
        })
        .collect()
}
