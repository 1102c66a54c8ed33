//! Shared spectrum of the commuting family from the secular equation
//! `sum_i gamma_i^2 / (lambda - epsilon_i) = 1/x`.
//!
//! Roots are located per pole interval by a safeguarded Newton/bisection
//! iteration. Each root is stored as an offset from its nearest pole, so the
//! differences `lambda_a - epsilon_i` that enter every eigenvalue formula keep
//! full relative precision even when `lambda_a` sits right next to a pole.

use std::collections::BTreeMap;

use nalgebra::DVector;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::operator::RMatrix;
use crate::type1::{MomentTable, Type1Parameters};

const MAX_ITER: usize = 400;

/// A root `lambda = epsilon_sorted[pole] + offset`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct PoleRoot {
    pole: usize,
    offset: f64,
}

/// Poles `epsilon` in ascending order with weights `gamma^2`.
#[derive(Debug, Clone)]
struct SecularFunction {
    poles: Vec<f64>,
    weights: Vec<f64>,
    /// `order[k]` is the parameter index of the k-th smallest pole.
    order: Vec<usize>,
}

impl SecularFunction {
    fn new(params: &Type1Parameters) -> Self {
        let mut order: Vec<usize> = (0..params.dim()).collect();
        order.sort_by(|&a, &b| params.epsilon()[a].total_cmp(&params.epsilon()[b]));
        let poles = order.iter().map(|&i| params.epsilon()[i]).collect();
        let weights = order.iter().map(|&i| params.gamma()[i].powi(2)).collect();
        Self { poles, weights, order }
    }

    fn len(&self) -> usize {
        self.poles.len()
    }

    fn span(&self) -> f64 {
        self.poles[self.len() - 1] - self.poles[0]
    }

    /// `lambda - epsilon_k` for sorted index `k`.
    fn diff(&self, root: PoleRoot, k: usize) -> f64 {
        (self.poles[root.pole] - self.poles[k]) + root.offset
    }

    /// Value and derivative of the secular sum at `poles[pole] + tau`.
    fn eval(&self, pole: usize, tau: f64) -> (f64, f64) {
        let origin = self.poles[pole];
        let mut f = 0.0;
        let mut df = 0.0;
        for (p, w) in self.poles.iter().zip(&self.weights) {
            let d = (origin - p) + tau;
            f += w / d;
            df -= w / (d * d);
        }
        (f, df)
    }

    /// Solves `f(poles[pole] + tau) = target` for `tau` in `(lo, hi)`, where
    /// `f - target` is positive at `lo` and negative at `hi` (either end may
    /// be the pole itself).
    fn solve_bracket(&self, pole: usize, mut lo: f64, mut hi: f64, target: f64) -> Result<f64> {
        let mut tau = 0.5 * (lo + hi);
        for _ in 0..MAX_ITER {
            let (f, df) = self.eval(pole, tau);
            let g = f - target;
            if g == 0.0 {
                return Ok(tau);
            }
            if g > 0.0 {
                lo = tau;
            } else {
                hi = tau;
            }
            let newton = tau - g / df;
            let next = if newton > lo && newton < hi && df.is_finite() {
                newton
            } else {
                0.5 * (lo + hi)
            };
            let tol = 2.0 * f64::EPSILON * next.abs().max(f64::MIN_POSITIVE);
            if (next - tau).abs() <= tol || hi - lo <= tol {
                return Ok(next);
            }
            tau = next;
        }
        Err(Error::RootFinding(format!("no convergence near pole {pole}")))
    }

    /// Root strictly inside `(poles[k], poles[k+1])`.
    fn interior_root(&self, k: usize, target: f64) -> Result<PoleRoot> {
        let gap = self.poles[k + 1] - self.poles[k];
        if !(gap > 0.0) {
            return Err(Error::RootFinding(format!("poles {k} and {} coincide", k + 1)));
        }
        let half = 0.5 * gap;
        let (f_mid, _) = self.eval(k, half);
        if f_mid > target {
            // Root in the upper half, closest to the right pole.
            let offset = self.solve_bracket(k + 1, -half, 0.0, target)?;
            Ok(PoleRoot { pole: k + 1, offset })
        } else {
            let offset = self.solve_bracket(k, 0.0, half, target)?;
            Ok(PoleRoot { pole: k, offset })
        }
    }

    /// The single root outside `[poles[0], poles[N-1]]`, for `target = 1/x`.
    fn exterior_root(&self, x: f64) -> Result<PoleRoot> {
        let last = self.len() - 1;
        let span = self.span();
        if x > 0.0 {
            // epsilon_max + max(0, x - span) <= lambda <= epsilon_max + x
            let lo = (x - span).max(0.0);
            let offset = self.solve_bracket(last, lo, x, 1.0 / x)?;
            Ok(PoleRoot { pole: last, offset })
        } else {
            // epsilon_min + x <= lambda <= epsilon_min + min(0, x + span)
            let hi = (x + span).min(0.0);
            let offset = self.solve_bracket(0, x, hi, 1.0 / x)?;
            Ok(PoleRoot { pole: 0, offset })
        }
    }
}

/// Secular roots `lambda_a` of a parameter set with distinct `epsilon`.
#[derive(Debug, Clone)]
pub struct SecularSolution {
    func: SecularFunction,
    x: f64,
    roots: Vec<PoleRoot>,
}

impl SecularSolution {
    pub fn solve(params: &Type1Parameters) -> Result<Self> {
        params.require_distinct()?;
        if params.x() == 0.0 {
            return Err(Error::ZeroX);
        }
        let func = SecularFunction::new(params);
        let x = params.x();
        let target = 1.0 / x;
        let mut roots = Vec::with_capacity(func.len());
        if x < 0.0 {
            roots.push(func.exterior_root(x)?);
        }
        for k in 0..func.len() - 1 {
            roots.push(func.interior_root(k, target)?);
        }
        if x > 0.0 {
            roots.push(func.exterior_root(x)?);
        }
        Ok(Self { func, x, roots })
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    /// `lambda_a` in ascending order.
    pub fn lambdas(&self) -> Vec<f64> {
        self.roots.iter().map(|r| self.func.poles[r.pole] + r.offset).collect()
    }

    /// `|sum_i gamma_i^2/(lambda_a - epsilon_i) - 1/x|` for every root.
    pub fn residuals(&self) -> Vec<f64> {
        self.roots
            .iter()
            .map(|&r| {
                let f: f64 = (0..self.func.len())
                    .map(|k| self.func.weights[k] / self.func.diff(r, k))
                    .sum();
                (f - 1.0 / self.x).abs()
            })
            .collect()
    }

    /// `xi_a = x sum_i d_i gamma_i^2 / (lambda_a - epsilon_i)` for a diagonal
    /// seed `d` given in parameter order.
    pub fn general(&self, d: &[f64]) -> Result<Vec<f64>> {
        let n = self.func.len();
        if d.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: d.len(),
            });
        }
        Ok(self
            .roots
            .iter()
            .map(|&r| {
                let s: f64 = (0..n)
                    .map(|k| d[self.func.order[k]] * self.func.weights[k] / self.func.diff(r, k))
                    .sum();
                self.x * s
            })
            .collect())
    }

    /// `eta^(n)_a = x sum_i epsilon_i^n gamma_i^2 / (lambda_a - epsilon_i)`.
    pub fn eta(&self, n: usize) -> Vec<f64> {
        let n_i = n as i32;
        self.roots
            .iter()
            .map(|&r| {
                let s: f64 = (0..self.func.len())
                    .map(|k| self.func.poles[k].powi(n_i) * self.func.weights[k] / self.func.diff(r, k))
                    .sum();
                self.x * s
            })
            .collect()
    }

    /// Normalised eigenvectors `phi_a^(i) ∝ gamma_i / (lambda_a - epsilon_i)`
    /// as columns, rows in parameter order.
    pub fn eigenvectors(&self, params: &Type1Parameters) -> RMatrix {
        let n = self.func.len();
        let mut v = RMatrix::zeros(n, n);
        for (col, &r) in self.roots.iter().enumerate() {
            let mut phi = DVector::zeros(n);
            for k in 0..n {
                let i = self.func.order[k];
                phi[i] = params.gamma()[i] / self.func.diff(r, k);
            }
            let norm = phi.norm();
            v.set_column(col, &(phi / norm));
        }
        v
    }
}

/// Roots of the secular equation, ascending.
pub fn solve_lambda(params: &Type1Parameters) -> Result<Vec<f64>> {
    Ok(SecularSolution::solve(params)?.lambdas())
}

/// Eigenvalues of `I_n` in the order of the secular roots.
pub fn eigenvalues_in(solution: &SecularSolution, n: usize) -> Vec<f64> {
    solution.eta(n)
}

/// Normalised common eigenvectors of the family.
pub fn eigenvectors(params: &Type1Parameters, solution: &SecularSolution) -> RMatrix {
    solution.eigenvectors(params)
}

/// Arbitrary diagonal seed `d`; `d_i = epsilon_i^n` reproduces [`eigenvalues_in`].
pub fn solve_general(params: &Type1Parameters, d: &[f64]) -> Result<Vec<f64>> {
    SecularSolution::solve(params)?.general(d)
}

/// The `N - 1` roots of `sum_i gamma_i^2 / (lambda - epsilon_i) = 0`, one in
/// each gap of the sorted `epsilon`.
pub fn solve_tilde_lambda(params: &Type1Parameters) -> Result<Vec<f64>> {
    params.require_distinct()?;
    let func = SecularFunction::new(params);
    (0..func.len() - 1)
        .map(|k| func.interior_root(k, 0.0).map(|r| func.poles[r.pole] + r.offset))
        .collect()
}

/// Eigenvalues of `K_n`: `kappa_a = -sum_{k=1..n} sigma_{k-1} tilde_lambda_a^{n-k}`
/// for the `N - 1` limit roots, followed by the zero eigenvalue of `|gamma>`.
pub fn eigenvalues_kn(params: &Type1Parameters, n: usize) -> Result<Vec<f64>> {
    let tilde = solve_tilde_lambda(params)?;
    let moments = params.moments(n.saturating_sub(1));
    let mut out: Vec<f64> = tilde.iter().map(|&l| kappa_at(&moments, l, n)).collect();
    out.push(0.0);
    Ok(out)
}

/// `-sum_{k=1..n} sigma_{k-1} l^{n-k}` by Horner's rule.
fn kappa_at(moments: &MomentTable, l: f64, n: usize) -> f64 {
    let mut acc = 0.0;
    for k in 1..=n {
        acc = acc * l + moments.sigma(k - 1);
    }
    -acc
}

/// `lambda^n - x sum_{k=1..n} a_k lambda^{n-k}`, the polynomial form of the
/// `I_n` eigenvalue at root `lambda`.
pub fn eta_polynomial(moments: &MomentTable, x: f64, lambda: f64, n: usize) -> f64 {
    lambda.powi(n as i32) + x * kappa_at(moments, lambda, n)
}

/// A group of indices sharing one `epsilon` value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelClass {
    pub level: f64,
    pub members: Vec<usize>,
}

/// Degeneracy-free problem obtained by merging equal levels.
#[derive(Debug, Clone)]
pub struct ReducedProblem {
    pub params: Type1Parameters,
    /// `classes[c]` lists the original indices merged into reduced index `c`.
    pub classes: Vec<LevelClass>,
}

impl ReducedProblem {
    pub fn is_trivial(&self) -> bool {
        self.classes.iter().all(|c| c.members.len() == 1)
    }
}

/// Merges each class of equal `epsilon` into one level with weight
/// `gamma_eff^2 = sum_{i in class} gamma_i^2`. The remaining
/// `|class| - 1` eigenvectors per class are supported on the class and
/// orthogonal to `|gamma>`; on them `I_n` acts as the polynomial form at
/// `lambda = epsilon_class`.
pub fn reduce_degenerate(params: &Type1Parameters) -> Result<ReducedProblem> {
    let mut eps = Vec::new();
    let mut gamma = Vec::new();
    let mut classes = Vec::new();
    for class in params.degeneracy_classes() {
        let w: f64 = class.iter().map(|&i| params.gamma()[i].powi(2)).sum();
        let level = class.iter().map(|&i| params.epsilon()[i]).sum::<f64>() / class.len() as f64;
        eps.push(level);
        gamma.push(w.sqrt());
        classes.push(LevelClass {
            level,
            members: class.clone(),
        });
    }
    let reduced = Type1Parameters::normalized(params.x(), eps, gamma)?;
    Ok(ReducedProblem {
        params: reduced,
        classes,
    })
}

/// All `N` eigenvalues of `I_n`, ascending, for any (possibly degenerate)
/// parameter set with `x != 0`.
pub fn full_spectrum_in(params: &Type1Parameters, n: usize) -> Result<Vec<f64>> {
    let reduced = reduce_degenerate(params)?;
    let sol = SecularSolution::solve(&reduced.params)?;
    let mut out = sol.eta(n);
    let moments = params.moments(n.saturating_sub(1));
    for class in &reduced.classes {
        let value = eta_polynomial(&moments, params.x(), class.level, n);
        out.extend(std::iter::repeat_n(value, class.members.len() - 1));
    }
    out.sort_by(f64::total_cmp);
    Ok(out)
}

/// All `N` eigenvalues of `K_n`, ascending, for any parameter set.
pub fn full_spectrum_kn(params: &Type1Parameters, n: usize) -> Result<Vec<f64>> {
    let reduced = reduce_degenerate(params)?;
    let mut out = eigenvalues_kn(&reduced.params, n)?;
    let moments = params.moments(n.saturating_sub(1));
    for class in &reduced.classes {
        let value = kappa_at(&moments, class.level, n);
        out.extend(std::iter::repeat_n(value, class.members.len() - 1));
    }
    out.sort_by(f64::total_cmp);
    Ok(out)
}

/// Everything the closed forms give for one parameter set.
#[derive(Debug, Clone, Serialize)]
pub struct SpectrumSolution {
    pub lambdas: Vec<f64>,
    pub tilde_lambdas: Vec<f64>,
    /// `eta[n]` holds the eigenvalues of `I_n` in root order.
    pub eta: BTreeMap<usize, Vec<f64>>,
    /// `kappa[n]` holds the eigenvalues of `K_n`, the zero mode last.
    pub kappa: BTreeMap<usize, Vec<f64>>,
    #[serde(skip)]
    pub eigvecs: RMatrix,
    pub root_residuals: Vec<f64>,
}

/// Solves for `lambda`, `tilde_lambda`, `eta^(n)` and `kappa^(n)` for
/// `n = 1..=n_max`. Requires distinct `epsilon` and `x != 0`.
pub fn solve(params: &Type1Parameters, n_max: usize) -> Result<SpectrumSolution> {
    let sol = SecularSolution::solve(params)?;
    let tilde_lambdas = solve_tilde_lambda(params)?;
    let mut eta = BTreeMap::new();
    let mut kappa = BTreeMap::new();
    for n in 1..=n_max {
        eta.insert(n, sol.eta(n));
        kappa.insert(n, eigenvalues_kn(params, n)?);
    }
    Ok(SpectrumSolution {
        lambdas: sol.lambdas(),
        tilde_lambdas,
        eta,
        kappa,
        eigvecs: sol.eigenvectors(params),
        root_residuals: sol.residuals(),
    })
}

/// Checks `eps_1 < l_1 < eps_2 < ... < l_{N-1} < eps_N` for sorted levels.
pub fn interlaces(sorted_eps: &[f64], roots: &[f64]) -> bool {
    roots.len() + 1 == sorted_eps.len()
        && roots
            .iter()
            .enumerate()
            .all(|(k, &r)| sorted_eps[k] < r && r < sorted_eps[k + 1])
}
