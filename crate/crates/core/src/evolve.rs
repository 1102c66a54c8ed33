//! Locally adiabatic search with the interpolating operators
//! `I_n(s) = s E^n + (1 - s)(-K_n)`.

use std::io::Write;

use nalgebra::{DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operator::{CVector, ComplexOperator, RMatrix, Role, C64};
use crate::type1::{k_n, Type1Parameters};

/// Samples kept in an [`EvolutionTrace`] and points of a default gap trace.
pub const TRACE_POINTS: usize = 512;
/// Tolerance for the search-structure checks on `epsilon` and `gamma`.
const STRUCTURE_TOL: f64 = 1e-12;

/// The local-adiabatic interpolation `s(t)` for an `N`-item search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Schedule {
    n: usize,
    delta: f64,
    t_run: f64,
}

impl Schedule {
    pub fn new(n: usize, delta: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidParameters(format!("schedule needs N >= 2, got {n}")));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::InvalidParameters(format!(
                "delta must lie in (0, 1), got {delta}"
            )));
        }
        let r = ((n - 1) as f64).sqrt();
        let t_run = (n as f64 / r) * r.atan() / delta;
        Ok(Self { n, delta, t_run })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn t_run(&self) -> f64 {
        self.t_run
    }

    fn root(&self) -> f64 {
        ((self.n - 1) as f64).sqrt()
    }

    pub fn theta(&self, t: f64) -> f64 {
        2.0 * t * self.delta * self.root() / self.n as f64
    }

    fn check(&self, t: f64) -> Result<()> {
        if t >= 0.0 && t <= self.t_run {
            Ok(())
        } else {
            Err(Error::TimeOutOfRange { t, t_run: self.t_run })
        }
    }

    /// `s(t)` in the sin/cos form, finite where `tan(theta)` diverges.
    pub fn s(&self, t: f64) -> Result<f64> {
        self.check(t)?;
        Ok(self.s_unchecked(t))
    }

    fn s_unchecked(&self, t: f64) -> f64 {
        let r = self.root();
        let (sin, cos) = self.theta(t).sin_cos();
        let s = self.n as f64 * sin / (2.0 * r * (cos + r * sin));
        s.clamp(0.0, 1.0)
    }

    /// `s(t)` written with `tan(theta)`; only used as a cross-check.
    pub fn s_tan_form(&self, t: f64) -> Result<f64> {
        self.check(t)?;
        let r = self.root();
        let tan = self.theta(t).tan();
        Ok(self.n as f64 * tan / (2.0 * r * (1.0 + r * tan)))
    }

    /// `ds/dt = delta / (cos(theta) + sqrt(N-1) sin(theta))^2`.
    pub fn ds_dt(&self, t: f64) -> Result<f64> {
        self.check(t)?;
        let (sin, cos) = self.theta(t).sin_cos();
        Ok(self.delta / (cos + self.root() * sin).powi(2))
    }

    /// `points` uniformly spaced `(t, s(t))` pairs including both ends.
    pub fn table(&self, points: usize) -> Vec<(f64, f64)> {
        let points = points.max(2);
        (0..points)
            .map(|k| {
                let t = self.grid_time(k, points - 1);
                (t, self.s_unchecked(t))
            })
            .collect()
    }

    fn grid_time(&self, k: usize, intervals: usize) -> f64 {
        if k == intervals {
            self.t_run
        } else {
            self.t_run * k as f64 / intervals as f64
        }
    }
}

/// Verifies `epsilon[target] = 0`, every other `epsilon > 0` and uniform
/// `gamma = 1/sqrt(N)`.
pub fn check_search_structure(params: &Type1Parameters, target: usize) -> Result<()> {
    let n = params.dim();
    if target >= n {
        return Err(Error::IndexOutOfRange { index: target, dim: n });
    }
    if params.epsilon()[target] != 0.0 {
        return Err(Error::NotSearchStructure(format!(
            "epsilon[{target}] = {} must be 0",
            params.epsilon()[target]
        )));
    }
    if let Some((i, e)) = params
        .epsilon()
        .iter()
        .enumerate()
        .find(|&(i, &e)| i != target && e <= 0.0)
    {
        return Err(Error::NotSearchStructure(format!(
            "epsilon[{i}] = {e} must be positive"
        )));
    }
    let g = 1.0 / (n as f64).sqrt();
    if params.gamma().iter().any(|v| (v - g).abs() > STRUCTURE_TOL) {
        return Err(Error::NotSearchStructure("gamma must be uniform 1/sqrt(N)".into()));
    }
    Ok(())
}

/// Precomputed pieces of `I_n(s)`; evaluation is a scaled copy plus a
/// diagonal shift.
#[derive(Debug, Clone)]
pub struct Interpolator {
    n: usize,
    e_pow: DVector<f64>,
    k: RMatrix,
}

impl Interpolator {
    pub fn new(params: &Type1Parameters, n: usize, target: usize) -> Result<Self> {
        check_search_structure(params, target)?;
        if n == 0 {
            return Err(Error::InvalidParameters("interpolating operator needs n >= 1".into()));
        }
        let e_pow = DVector::from_iterator(params.dim(), params.epsilon().iter().map(|e| e.powi(n as i32)));
        Ok(Self {
            n,
            e_pow,
            k: k_n(params, n),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.e_pow.len()
    }

    /// `s E^n - (1 - s) K_n`.
    pub fn at(&self, s: f64) -> RMatrix {
        let mut m = &self.k * (s - 1.0);
        for i in 0..self.dim() {
            m[(i, i)] += s * self.e_pow[i];
        }
        m
    }

    /// `dI_n/ds = E^n + K_n`.
    pub fn derivative(&self) -> RMatrix {
        let mut m = self.k.clone();
        for i in 0..self.dim() {
            m[(i, i)] += self.e_pow[i];
        }
        m
    }
}

/// `I_n(s)` as a Hermitian operator.
pub fn interpolating_in(params: &Type1Parameters, n: usize, s: f64) -> Result<ComplexOperator> {
    if !(0.0..=1.0).contains(&s) {
        return Err(Error::InvalidParameters(format!("s = {s} outside [0, 1]")));
    }
    let interp = Interpolator::new(params, n, 0)?;
    ComplexOperator::from_real(&interp.at(s), Role::Hermitian)
}

/// Time-stepping rule for one step of length `dt`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Integrator {
    /// `exp(-i dt I(s(t + dt/2)))`.
    #[default]
    Midpoint,
    /// Fourth-order commutator-free pair of exponentials at the two Gauss
    /// nodes.
    Cf4,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PropagationOptions {
    pub steps: usize,
    pub integrator: Integrator,
    /// Marked basis state.
    pub target: usize,
    pub trace_points: usize,
    /// When set, the run is repeated with twice the steps and the
    /// difference in final fidelity is compared against this tolerance.
    pub convergence_tol: Option<f64>,
}

impl Default for PropagationOptions {
    fn default() -> Self {
        Self {
            steps: 1 << 14,
            integrator: Integrator::Midpoint,
            target: 0,
            trace_points: TRACE_POINTS,
            convergence_tol: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvolutionTrace {
    pub n: usize,
    pub steps: usize,
    pub integrator: Integrator,
    pub t_run: f64,
    pub time_grid: Vec<f64>,
    pub s_grid: Vec<f64>,
    pub gap: Vec<f64>,
    pub norm_drift: Vec<f64>,
    pub final_fidelity: f64,
    /// Fidelity at twice the step count, when a convergence check ran.
    pub doubled_fidelity: Option<f64>,
    pub converged: Option<bool>,
}

impl EvolutionTrace {
    pub fn max_norm_drift(&self) -> f64 {
        self.norm_drift.iter().copied().fold(0.0, f64::max)
    }

    pub fn fidelity_deficit(&self) -> f64 {
        1.0 - self.final_fidelity
    }

    pub fn write_json<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer_pretty(w, self)?;
        Ok(())
    }

    /// Columns `t, s, gap, norm_drift`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let rows = (0..self.time_grid.len()).map(|k| TraceRow {
            t: self.time_grid[k],
            s: self.s_grid[k],
            gap: self.gap[k],
            norm_drift: Some(self.norm_drift[k]),
        });
        write_rows(w, rows)
    }
}

#[derive(Serialize)]
struct TraceRow {
    t: f64,
    s: f64,
    gap: f64,
    norm_drift: Option<f64>,
}

fn write_rows<W: Write>(w: W, rows: impl Iterator<Item = TraceRow>) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for row in rows {
        out.serialize(row)?;
    }
    out.flush()?;
    Ok(())
}

/// Complex state split into real and imaginary parts so each step is two
/// real matrix-vector products per factor.
struct State {
    re: DVector<f64>,
    im: DVector<f64>,
}

impl State {
    fn from_complex(psi: &CVector) -> Self {
        Self {
            re: psi.map(|z| z.re),
            im: psi.map(|z| z.im),
        }
    }

    fn to_complex(&self) -> CVector {
        CVector::from_iterator(
            self.re.len(),
            self.re.iter().zip(self.im.iter()).map(|(&r, &i)| C64::new(r, i)),
        )
    }

    /// `psi <- exp(-i tau h) psi`.
    fn apply_exp(&mut self, h: RMatrix, tau: f64) {
        let eig = SymmetricEigen::new(h);
        let v = &eig.eigenvectors;
        let mut cr = v.tr_mul(&self.re);
        let mut ci = v.tr_mul(&self.im);
        for k in 0..cr.len() {
            let (sin, cos) = (-tau * eig.eigenvalues[k]).sin_cos();
            let (a, b) = (cr[k], ci[k]);
            cr[k] = a * cos - b * sin;
            ci[k] = a * sin + b * cos;
        }
        self.re = v * cr;
        self.im = v * ci;
    }
}

const GAUSS_OFFSET: f64 = 0.288_675_134_594_812_9; // sqrt(3)/6

/// Advances `psi0` from `t = 0` to `t_end` under `I(s(t))` in `steps`
/// equal steps, calling `observe(k, t_k, psi)` after every step.
pub fn evolve_state<S, O>(
    interp: &Interpolator,
    s_of_t: S,
    t_end: f64,
    psi0: &CVector,
    steps: usize,
    integrator: Integrator,
    mut observe: O,
) -> Result<CVector>
where
    S: Fn(f64) -> f64,
    O: FnMut(usize, f64, &CVector),
{
    if steps == 0 {
        return Err(Error::InvalidParameters("steps must be >= 1".into()));
    }
    if psi0.len() != interp.dim() {
        return Err(Error::DimensionMismatch {
            expected: interp.dim(),
            found: psi0.len(),
        });
    }
    let dt = t_end / steps as f64;
    let mut state = State::from_complex(psi0);
    for k in 0..steps {
        let t0 = k as f64 * dt;
        match integrator {
            Integrator::Midpoint => state.apply_exp(interp.at(s_of_t(t0 + 0.5 * dt)), dt),
            Integrator::Cf4 => {
                // I is affine in s, so each weighted pair of Gauss-node
                // operators is I at the weighted mean of s, times 1/2.
                let s1 = s_of_t(t0 + (0.5 - GAUSS_OFFSET) * dt);
                let s2 = s_of_t(t0 + (0.5 + GAUSS_OFFSET) * dt);
                let (a, b) = (0.5 + 2.0 * GAUSS_OFFSET, 0.5 - 2.0 * GAUSS_OFFSET);
                state.apply_exp(interp.at(a * s1 + b * s2), 0.5 * dt);
                state.apply_exp(interp.at(b * s1 + a * s2), 0.5 * dt);
            }
        }
        let t = if k + 1 == steps { t_end } else { (k + 1) as f64 * dt };
        observe(k + 1, t, &state.to_complex());
    }
    Ok(state.to_complex())
}

/// Two lowest eigenvalues' difference of a symmetric matrix.
pub fn spectral_gap(h: RMatrix) -> f64 {
    let mut ev: Vec<f64> = SymmetricEigen::new(h).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev[1] - ev[0]
}

fn run_once(interp: &Interpolator, sched: &Schedule, opts: &PropagationOptions) -> Result<EvolutionTrace> {
    let n = interp.dim();
    let psi0 = crate::operator::flat_state(n);
    let samples = opts.trace_points.clamp(2, opts.steps + 1);
    let intervals = samples - 1;
    // Step indices at which a trace sample is taken.
    let sample_at = |j: usize| (j * opts.steps + intervals / 2) / intervals;
    let mut next = 1;
    let mut time_grid = vec![0.0];
    let mut drift = vec![(psi0.norm() - 1.0).abs()];
    let sched_s = |t: f64| sched.s_unchecked(t);
    let psi = evolve_state(
        interp,
        sched_s,
        sched.t_run(),
        &psi0,
        opts.steps,
        opts.integrator,
        |k, t, psi| {
            if next <= intervals && k == sample_at(next) {
                time_grid.push(t);
                drift.push((psi.norm() - 1.0).abs());
                next += 1;
            }
        },
    )?;
    let s_grid: Vec<f64> = time_grid.iter().map(|&t| sched.s_unchecked(t)).collect();
    let gap = s_grid.iter().map(|&s| spectral_gap(interp.at(s))).collect();
    let final_fidelity = psi[opts.target].norm_sqr();
    Ok(EvolutionTrace {
        n: interp.n(),
        steps: opts.steps,
        integrator: opts.integrator,
        t_run: sched.t_run(),
        time_grid,
        s_grid,
        gap,
        norm_drift: drift,
        final_fidelity,
        doubled_fidelity: None,
        converged: None,
    })
}

/// Runs `i dPsi/dt = I_n(t) Psi` from `|gamma>` over the full schedule.
pub fn propagate_with(
    params: &Type1Parameters,
    n: usize,
    sched: &Schedule,
    opts: &PropagationOptions,
) -> Result<EvolutionTrace> {
    if opts.steps == 0 {
        return Err(Error::InvalidParameters("steps must be >= 1".into()));
    }
    if sched.n() != params.dim() {
        return Err(Error::DimensionMismatch {
            expected: params.dim(),
            found: sched.n(),
        });
    }
    let interp = Interpolator::new(params, n, opts.target)?;
    let mut trace = run_once(&interp, sched, opts)?;
    if let Some(tol) = opts.convergence_tol {
        let doubled = PropagationOptions {
            steps: 2 * opts.steps,
            trace_points: 2,
            ..opts.clone()
        };
        let f2 = run_once(&interp, sched, &doubled)?.final_fidelity;
        trace.doubled_fidelity = Some(f2);
        trace.converged = Some((f2 - trace.final_fidelity).abs() <= tol);
    }
    Ok(trace)
}

/// [`propagate_with`] using the midpoint rule and default tracing.
pub fn propagate(params: &Type1Parameters, n: usize, sched: &Schedule, steps: usize) -> Result<EvolutionTrace> {
    propagate_with(
        params,
        n,
        sched,
        &PropagationOptions {
            steps,
            ..Default::default()
        },
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GapSample {
    pub t: f64,
    pub s: f64,
    pub gap: f64,
}

/// Instantaneous gap on `grid_points` uniform times in `[0, T_run]`.
pub fn gap_trace(params: &Type1Parameters, n: usize, sched: &Schedule, grid_points: usize) -> Result<Vec<GapSample>> {
    if grid_points < 2 {
        return Err(Error::InvalidParameters("gap trace needs at least 2 points".into()));
    }
    let interp = Interpolator::new(params, n, 0)?;
    Ok(sched
        .table(grid_points)
        .into_iter()
        .map(|(t, s)| GapSample {
            t,
            s,
            gap: spectral_gap(interp.at(s)),
        })
        .collect())
}

/// Writes a gap trace with the trace CSV columns, leaving `norm_drift` empty.
pub fn write_gap_csv<W: Write>(samples: &[GapSample], w: W) -> Result<()> {
    write_rows(
        w,
        samples.iter().map(|g| TraceRow {
            t: g.t,
            s: g.s,
            gap: g.gap,
            norm_drift: None,
        }),
    )
}

/// Smallest gap over the schedule: the grid minimum refined by
/// golden-section search between its neighbours.
pub fn min_gap(params: &Type1Parameters, n: usize, sched: &Schedule, grid_points: usize) -> Result<GapSample> {
    let trace = gap_trace(params, n, sched, grid_points)?;
    let interp = Interpolator::new(params, n, 0)?;
    let (k, _) = trace
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.gap.total_cmp(&b.1.gap))
        .expect("non-empty trace");
    let lo = trace[k.saturating_sub(1)].t;
    let hi = trace[(k + 1).min(trace.len() - 1)].t;
    let eval = |t: f64| {
        let s = sched.s_unchecked(t);
        GapSample {
            t,
            s,
            gap: spectral_gap(interp.at(s)),
        }
    };
    let best = golden_min(lo, hi, |t| eval(t).gap);
    let refined = eval(best);
    Ok(if refined.gap < trace[k].gap { refined } else { trace[k] })
}

fn golden_min(mut a: f64, mut b: f64, f: impl Fn(f64) -> f64) -> f64 {
    let inv_phi = (5.0_f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if (b - a).abs() <= 1e-13 * (a.abs() + b.abs()).max(1.0) {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Diagnostics of the local-adiabatic rate condition at one time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AnnealRate {
    pub t: f64,
    pub s: f64,
    pub gap: f64,
    /// `|| Pi_1 (E^n + K_n) Psi_0 ||`, with `Pi_1` the projector onto the
    /// whole first excited eigenspace.
    pub matrix_element: f64,
    pub bound: f64,
    pub ds_dt: f64,
}

/// `delta * gap^2 / |<Psi_1| dI_n/ds |Psi_0>|` at time `t`.
pub fn anneal_rate_bound(params: &Type1Parameters, n: usize, sched: &Schedule, t: f64) -> Result<AnnealRate> {
    let s = sched.s(t)?;
    let interp = Interpolator::new(params, n, 0)?;
    let eig = SymmetricEigen::new(interp.at(s));
    let mut idx: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let e0 = eig.eigenvalues[idx[0]];
    let e1 = eig.eigenvalues[idx[1]];
    let gap = e1 - e0;
    let scale = eig.eigenvalues.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    let psi0 = eig.eigenvectors.column(idx[0]);
    let dpsi = interp.derivative() * psi0;
    let matrix_element = idx[1..]
        .iter()
        .take_while(|&&k| (eig.eigenvalues[k] - e1).abs() <= 1e-9 * scale)
        .map(|&k| eig.eigenvectors.column(k).dot(&dpsi).powi(2))
        .sum::<f64>()
        .sqrt();
    Ok(AnnealRate {
        t,
        s,
        gap,
        matrix_element,
        bound: sched.delta() * gap * gap / matrix_element,
        ds_dt: sched.ds_dt(t)?,
    })
}

/// Closed-form Grover gap `sqrt(1 - 4 (1 - 1/N) s (1 - s))`.
pub fn grover_gap(n: usize, s: f64) -> f64 {
    (1.0 - 4.0 * (1.0 - 1.0 / n as f64) * s * (1.0 - s)).sqrt()
}
