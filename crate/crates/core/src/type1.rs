//! The Type-1 commuting family built from the diagonal matrix `E`, the rank-one
//! projector `P = |gamma><gamma|` and the antisymmetric matrix `S`.
//!
//! All operators here are real symmetric (or antisymmetric for `S`) and are
//! computed as `nalgebra::DMatrix<f64>`. The `build_*` functions wrap them in
//! a [`ComplexOperator`] for callers that work with the common carrier.
//!
//! The conserved operators use the division-free expansion
//! `K_n = sum_{k=1..n} (E^{n-k} P E^{k-1} - <gamma|E^{k-1}|gamma> E^{n-k})`,
//! which stays well defined when several `epsilon_i` coincide.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operator::{max_abs, max_abs_real, ComplexOperator, RMatrix, Role};

/// Tolerance on `sum gamma_i^2 = 1`.
pub const NORMALIZATION_TOL: f64 = 1e-12;
/// Relative tolerance used to group equal `epsilon` values.
pub const DEGENERACY_TOL: f64 = 1e-10;
/// Relative tolerance for the symmetry precondition of [`decompose`].
pub const SYMMETRY_TOL: f64 = 1e-10;

/// Coupling `x`, levels `epsilon_i` and weights `gamma_i` of a commuting family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ParameterDocument", into = "ParameterDocument")]
pub struct Type1Parameters {
    x: f64,
    epsilon: Vec<f64>,
    gamma: Vec<f64>,
    classes: Vec<Vec<usize>>,
}

/// JSON shape `{"x": .., "epsilon": [..], "gamma": [..]}`. `gamma` defaults to
/// the uniform weights `1/sqrt(N)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParameterDocument {
    x: f64,
    epsilon: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gamma: Option<Vec<f64>>,
}

impl TryFrom<ParameterDocument> for Type1Parameters {
    type Error = Error;

    fn try_from(doc: ParameterDocument) -> Result<Self> {
        match doc.gamma {
            Some(gamma) => Self::new(doc.x, doc.epsilon, gamma),
            None => Self::uniform(doc.x, doc.epsilon),
        }
    }
}

impl From<Type1Parameters> for ParameterDocument {
    fn from(p: Type1Parameters) -> Self {
        Self {
            x: p.x,
            epsilon: p.epsilon,
            gamma: Some(p.gamma),
        }
    }
}

impl Type1Parameters {
    pub fn new(x: f64, epsilon: Vec<f64>, gamma: Vec<f64>) -> Result<Self> {
        let n = epsilon.len();
        if n == 0 {
            return Err(Error::InvalidParameters("epsilon must be non-empty".into()));
        }
        if gamma.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: gamma.len(),
            });
        }
        if !x.is_finite() || epsilon.iter().chain(&gamma).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameters("parameters must be finite".into()));
        }
        if let Some(i) = gamma.iter().position(|&g| g == 0.0) {
            return Err(Error::InvalidParameters(format!("gamma[{i}] is zero")));
        }
        let norm: f64 = gamma.iter().map(|g| g * g).sum();
        if (norm - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::InvalidParameters(format!(
                "sum of gamma^2 is {norm}, expected 1"
            )));
        }
        let classes = degeneracy_classes(&epsilon);
        Ok(Self {
            x,
            epsilon,
            gamma,
            classes,
        })
    }

    /// Rescales `gamma` to unit norm before validating.
    pub fn normalized(x: f64, epsilon: Vec<f64>, gamma: Vec<f64>) -> Result<Self> {
        let norm = gamma.iter().map(|g| g * g).sum::<f64>().sqrt();
        if !(norm > 0.0) {
            return Err(Error::InvalidParameters("gamma has zero norm".into()));
        }
        Self::new(x, epsilon, gamma.into_iter().map(|g| g / norm).collect())
    }

    /// Uniform weights `gamma_i = 1/sqrt(N)`.
    pub fn uniform(x: f64, epsilon: Vec<f64>) -> Result<Self> {
        let n = epsilon.len();
        let g = 1.0 / (n as f64).sqrt();
        Self::normalized(x, epsilon, vec![g; n])
    }

    /// Search levels `epsilon = (0, 1, ..., 1)` with uniform weights.
    pub fn grover(n: usize, x: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidParameters("search needs N >= 2".into()));
        }
        let mut eps = vec![1.0; n];
        eps[0] = 0.0;
        Self::uniform(x, eps)
    }

    pub fn with_x(&self, x: f64) -> Result<Self> {
        Self::new(x, self.epsilon.clone(), self.gamma.clone())
    }

    pub fn dim(&self) -> usize {
        self.epsilon.len()
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn epsilon(&self) -> &[f64] {
        &self.epsilon
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    /// Index sets of equal `epsilon`, each sorted, ordered by level.
    pub fn degeneracy_classes(&self) -> &[Vec<usize>] {
        &self.classes
    }

    pub fn is_degenerate(&self) -> bool {
        self.classes.iter().any(|c| c.len() > 1)
    }

    pub(crate) fn require_distinct(&self) -> Result<()> {
        if self.is_degenerate() {
            return Err(Error::DegenerateEpsilon {
                classes: self.classes.iter().filter(|c| c.len() > 1).cloned().collect(),
            });
        }
        Ok(())
    }

    pub fn moments(&self, max_power: usize) -> MomentTable {
        MomentTable::new(self, max_power)
    }
}

fn degeneracy_classes(epsilon: &[f64]) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..epsilon.len()).collect();
    order.sort_by(|&a, &b| epsilon[a].total_cmp(&epsilon[b]));
    let scale = epsilon
        .iter()
        .fold(0.0_f64, |m, v| m.max(v.abs()))
        .max(f64::MIN_POSITIVE);
    let mut classes: Vec<Vec<usize>> = Vec::new();
    let mut prev = f64::NEG_INFINITY;
    for idx in order {
        let v = epsilon[idx];
        match classes.last_mut() {
            Some(last) if v - prev <= DEGENERACY_TOL * scale => last.push(idx),
            _ => classes.push(vec![idx]),
        }
        prev = v;
    }
    for c in &mut classes {
        c.sort_unstable();
    }
    classes
}

/// Weighted moments `sigma_p = sum_i gamma_i^2 epsilon_i^p = <gamma|E^p|gamma>`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentTable {
    sigma: Vec<f64>,
}

impl MomentTable {
    pub fn new(params: &Type1Parameters, max_power: usize) -> Self {
        // Accumulate in ascending |epsilon| order to keep the sums tame.
        let mut order: Vec<usize> = (0..params.dim()).collect();
        order.sort_by(|&a, &b| params.epsilon[a].abs().total_cmp(&params.epsilon[b].abs()));
        let mut sigma = vec![0.0; max_power + 1];
        for &i in &order {
            let w = params.gamma[i] * params.gamma[i];
            let e = params.epsilon[i];
            let mut pow = 1.0;
            for s in sigma.iter_mut() {
                *s += w * pow;
                pow *= e;
            }
        }
        Self { sigma }
    }

    pub fn sigma(&self, p: usize) -> f64 {
        self.sigma[p]
    }

    /// `a_k = sigma_{k-1}`, the coefficients of the polynomial form.
    pub fn a(&self, k: usize) -> f64 {
        self.sigma[k - 1]
    }

    pub fn max_power(&self) -> usize {
        self.sigma.len() - 1
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.sigma
    }
}

/// `E^m = diag(epsilon_i^m)`.
pub fn e_power(params: &Type1Parameters, m: usize) -> RMatrix {
    let d = nalgebra::DVector::from_iterator(params.dim(), params.epsilon.iter().map(|e| e.powi(m as i32)));
    RMatrix::from_diagonal(&d)
}

/// `P = |gamma><gamma|`.
pub fn projector(params: &Type1Parameters) -> RMatrix {
    let g = nalgebra::DVector::from_column_slice(&params.gamma);
    &g * g.transpose()
}

/// `D = diag(gamma_i^2)`.
pub fn d_matrix(params: &Type1Parameters) -> RMatrix {
    let d = nalgebra::DVector::from_iterator(params.dim(), params.gamma.iter().map(|g| g * g));
    RMatrix::from_diagonal(&d)
}

/// `S_ij = x (1 - delta_ij) gamma_i gamma_j / (epsilon_i - epsilon_j)`.
pub fn s_matrix(params: &Type1Parameters) -> Result<RMatrix> {
    params.require_distinct()?;
    let n = params.dim();
    let (x, e, g) = (params.x, &params.epsilon, &params.gamma);
    Ok(RMatrix::from_fn(n, n, |i, j| {
        if i == j {
            0.0
        } else {
            x * g[i] * g[j] / (e[i] - e[j])
        }
    }))
}

/// `K_n`, evaluated entrywise from the division-free expansion:
/// `(K_n)_ij = gamma_i gamma_j sum_{k=1..n} e_i^{n-k} e_j^{k-1}
///             - delta_ij sum_{k=1..n} sigma_{k-1} e_i^{n-k}`.
///
/// `n = 0` gives the empty sum, i.e. the zero matrix.
pub fn k_n(params: &Type1Parameters, n: usize) -> RMatrix {
    let dim = params.dim();
    let (e, g) = (&params.epsilon, &params.gamma);
    let moments = MomentTable::new(params, n.saturating_sub(1));
    let mut k = RMatrix::zeros(dim, dim);
    if n == 0 {
        return k;
    }
    for i in 0..dim {
        for j in i..dim {
            // h_{n-1}(e_i, e_j) = sum_k e_i^{n-1-k} e_j^k by Horner in e_i.
            let mut h = 0.0;
            let mut ej_pow = 1.0;
            for _ in 0..n {
                h = h * e[i] + ej_pow;
                ej_pow *= e[j];
            }
            let mut v = g[i] * g[j] * h;
            if i == j {
                let mut diag = 0.0;
                for k in 1..=n {
                    diag = diag * e[i] + moments.sigma(k - 1);
                }
                v -= diag;
            }
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// `I_n = E^n + x K_n`.
pub fn i_n(params: &Type1Parameters, n: usize) -> RMatrix {
    e_power(params, n) + k_n(params, n) * params.x
}

/// `H = E + x (P - 1) = I_1`.
pub fn hamiltonian(params: &Type1Parameters) -> RMatrix {
    let n = params.dim();
    e_power(params, 1) + (projector(params) - RMatrix::identity(n, n)) * params.x
}

/// Basis operator
/// `Z_j = |j><j| + x sum_{k != j} [gamma_j gamma_k (|j><k| + |k><j|)
///        - gamma_j^2 |k><k| - gamma_k^2 |j><j|] / (epsilon_j - epsilon_k)`.
pub fn z_j(params: &Type1Parameters, j: usize) -> Result<RMatrix> {
    let n = params.dim();
    if j >= n {
        return Err(Error::IndexOutOfRange { index: j, dim: n });
    }
    params.require_distinct()?;
    let (x, e, g) = (params.x, &params.epsilon, &params.gamma);
    let mut z = RMatrix::zeros(n, n);
    z[(j, j)] = 1.0;
    for k in (0..n).filter(|&k| k != j) {
        let w = x / (e[j] - e[k]);
        z[(j, k)] += w * g[j] * g[k];
        z[(k, j)] += w * g[j] * g[k];
        z[(k, k)] -= w * g[j] * g[j];
        z[(j, j)] -= w * g[k] * g[k];
    }
    Ok(z)
}

/// Splits a symmetric `Q` into a diagonal part and a part annihilating
/// `|gamma>`: `Q_par = sum_j <j| G^{-1} Q G |Phi> |j><j|` with
/// `G = diag(gamma)` and `|Phi> = sum_j |j>`, and `Q_perp = Q - Q_par`.
pub fn decompose_real(q: &RMatrix, params: &Type1Parameters) -> Result<(RMatrix, RMatrix)> {
    let n = params.dim();
    if q.nrows() != n || q.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: q.nrows(),
        });
    }
    let asym = max_abs_real(&(q - q.transpose()));
    if asym > SYMMETRY_TOL * max_abs_real(q) {
        return Err(Error::NonSymmetricInput { asymmetry: asym });
    }
    let g = nalgebra::DVector::from_column_slice(&params.gamma);
    let q_gamma = q * &g;
    let par = RMatrix::from_diagonal(&q_gamma.component_div(&g));
    let perp = q - &par;
    Ok((par, perp))
}

/// Complex-carrier version of [`decompose_real`]; `Q` must satisfy `Q = Q^T`.
pub fn decompose(q: &ComplexOperator, params: &Type1Parameters) -> Result<(ComplexOperator, ComplexOperator)> {
    let n = params.dim();
    if q.dim() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: q.dim(),
        });
    }
    let m = q.entries();
    let asym = max_abs(&(m - m.transpose()));
    if asym > SYMMETRY_TOL * max_abs(m) {
        return Err(Error::NonSymmetricInput { asymmetry: asym });
    }
    let g = nalgebra::DVector::from_iterator(n, params.gamma.iter().map(|&v| crate::operator::C64::new(v, 0.0)));
    let q_gamma = m * &g;
    let par = crate::operator::CMatrix::from_diagonal(&q_gamma.component_div(&g));
    let perp = m - &par;
    Ok((
        ComplexOperator::new(par, Role::Diagonal)?,
        ComplexOperator::general(perp)?,
    ))
}

fn symmetric(m: &RMatrix) -> Result<ComplexOperator> {
    ComplexOperator::from_real(m, Role::Hermitian)
}

pub fn build_e(params: &Type1Parameters, m: usize) -> ComplexOperator {
    ComplexOperator::from_real(&e_power(params, m), Role::Diagonal).expect("diagonal")
}

pub fn build_p(params: &Type1Parameters) -> Result<ComplexOperator> {
    ComplexOperator::from_real(&projector(params), Role::Projector)
}

pub fn build_d(params: &Type1Parameters) -> ComplexOperator {
    ComplexOperator::from_real(&d_matrix(params), Role::Diagonal).expect("diagonal")
}

pub fn build_s(params: &Type1Parameters) -> Result<ComplexOperator> {
    ComplexOperator::from_real(&s_matrix(params)?, Role::Antisymmetric)
}

pub fn build_zj(params: &Type1Parameters, j: usize) -> Result<ComplexOperator> {
    symmetric(&z_j(params, j)?)
}

pub fn build_h(params: &Type1Parameters) -> Result<ComplexOperator> {
    symmetric(&hamiltonian(params))
}

pub fn build_kn(params: &Type1Parameters, n: usize) -> Result<ComplexOperator> {
    symmetric(&k_n(params, n))
}

pub fn build_in(params: &Type1Parameters, n: usize) -> Result<ComplexOperator> {
    symmetric(&i_n(params, n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::commutator_real;
    use nalgebra::DVector;
    use rand::{RngExt, SeedableRng};
    use rand_pcg::Pcg64;

    const H: f64 = std::f64::consts::FRAC_1_SQRT_2;

    fn random_params(rng: &mut Pcg64, n: usize) -> Type1Parameters {
        let mut eps: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..2.0)).collect();
        eps.sort_by(f64::total_cmp);
        let gamma: Vec<f64> = (0..n)
            .map(|_| {
                let g: f64 = rng.random_range(0.2..1.0);
                if rng.random_bool(0.5) {
                    g
                } else {
                    -g
                }
            })
            .collect();
        Type1Parameters::normalized(rng.random_range(-2.0..2.0), eps, gamma).unwrap()
    }

    fn assert_close(a: &RMatrix, b: &RMatrix, tol: f64) {
        let d = max_abs_real(&(a - b));
        assert!(d <= tol, "deviation {d:e} > {tol:e}");
    }

    /// `K_n` from literal matrix products `E^{n-k} P E^{k-1}`.
    fn k_n_products(p: &Type1Parameters, n: usize) -> RMatrix {
        let dim = p.dim();
        let proj = projector(p);
        let g = DVector::from_column_slice(p.gamma());
        let mut k = RMatrix::zeros(dim, dim);
        for kk in 1..=n {
            let ek = e_power(p, kk - 1);
            let sigma = (g.transpose() * &ek * &g)[(0, 0)];
            k += e_power(p, n - kk) * &proj * &ek - e_power(p, n - kk) * sigma;
        }
        k
    }

    /// `K_n` from round vectors `|p) = sum_j gamma_j e_j^p |j>`.
    fn k_n_round_vectors(p: &Type1Parameters, n: usize) -> RMatrix {
        let dim = p.dim();
        let round = |q: usize| {
            DVector::from_iterator(
                dim,
                p.gamma().iter().zip(p.epsilon()).map(|(g, e)| g * e.powi(q as i32)),
            )
        };
        let sigma = |q: usize| -> f64 {
            p.gamma()
                .iter()
                .zip(p.epsilon())
                .map(|(g, e)| g * g * e.powi(q as i32))
                .sum()
        };
        let mut k = RMatrix::zeros(dim, dim);
        for r in 0..n {
            k += round(n - 1 - r) * round(r).transpose() - e_power(p, n - 1 - r) * sigma(r);
        }
        k
    }

    /// Perpendicular part by the explicit pairwise sum.
    fn perp_pairwise(q: &RMatrix, p: &Type1Parameters) -> RMatrix {
        let n = p.dim();
        let g = p.gamma();
        let mut out = RMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let mut left = DVector::<f64>::zeros(n);
                left[i] += g[j];
                left[j] -= g[i];
                out -= (&left * left.transpose()) * (0.5 * q[(i, j)] / (g[i] * g[j]));
            }
        }
        out
    }

    #[test]
    fn e_powers() {
        let p = Type1Parameters::uniform(1.0, vec![0.0, 1.0, 1.0]).unwrap();
        assert_eq!(e_power(&p, 0), RMatrix::identity(3, 3));
        assert_eq!(
            e_power(&p, 3),
            RMatrix::from_diagonal(&DVector::from_vec(vec![0., 1., 1.]))
        );
        let p = Type1Parameters::uniform(1.0, vec![0.5, 2.0]).unwrap();
        assert_eq!(
            e_power(&p, 2),
            RMatrix::from_diagonal(&DVector::from_vec(vec![0.25, 4.0]))
        );
    }

    #[test]
    fn projector_and_d() {
        let p = Type1Parameters::new(1.0, vec![0.0, 1.0], vec![0.6, 0.8]).unwrap();
        assert_close(
            &projector(&p),
            &RMatrix::from_row_slice(2, 2, &[0.36, 0.48, 0.48, 0.64]),
            1e-15,
        );
        let u = Type1Parameters::uniform(0.3, vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        assert_close(&projector(&u), &RMatrix::from_element(4, 4, 0.25), 1e-15);
        let pr = projector(&u);
        assert!((pr.trace() - 1.0).abs() < 1e-12);
        assert!((d_matrix(&u).trace() - 1.0).abs() < 1e-12);
        assert_close(&(&pr * &pr), &pr, 1e-12);
        assert!(build_p(&u).is_ok());
    }

    #[test]
    fn parameter_validation() {
        assert!(Type1Parameters::new(1.0, vec![0.0, 1.0], vec![0.6, 0.7]).is_err());
        assert!(Type1Parameters::new(1.0, vec![0.0, 1.0], vec![1.0, 0.0]).is_err());
        assert!(Type1Parameters::new(1.0, vec![0.0], vec![1.0, 0.0]).is_err());
        assert!(Type1Parameters::new(f64::NAN, vec![0.0, 1.0], vec![0.6, 0.8]).is_err());
        let g = Type1Parameters::grover(5, 1.0).unwrap();
        assert_eq!(g.degeneracy_classes(), &[vec![0], vec![1, 2, 3, 4]]);
        assert!(g.is_degenerate());
    }

    #[test]
    fn json_round_trip_and_unknown_keys() {
        let p: Type1Parameters = serde_json::from_str(r#"{"x": 0.5, "epsilon": [0, 1], "gamma": [0.6, 0.8]}"#).unwrap();
        assert_eq!(p.gamma(), &[0.6, 0.8]);
        let back: Type1Parameters = serde_json::from_str(&serde_json::to_string(&p).unwrap()).unwrap();
        assert_eq!(back, p);
        let u: Type1Parameters = serde_json::from_str(r#"{"x": 1, "epsilon": [0, 1, 2, 3]}"#).unwrap();
        assert_eq!(u.gamma(), &[0.5; 4]);
        assert!(serde_json::from_str::<Type1Parameters>(r#"{"x": 1, "epsilon": [0, 1], "y": 2}"#).is_err());
        assert!(serde_json::from_str::<Type1Parameters>(r#"{"x": 1, "epsilon": [0, 1], "gamma": [1, 1]}"#).is_err());
    }

    #[test]
    fn moments_match_quadratic_forms() {
        let mut rng = Pcg64::seed_from_u64(3);
        let p = random_params(&mut rng, 6);
        let m = p.moments(8);
        assert!((m.sigma(0) - 1.0).abs() < 1e-12);
        let g = DVector::from_column_slice(p.gamma());
        for k in 0..=8 {
            let q = (g.transpose() * e_power(&p, k) * &g)[(0, 0)];
            assert!((m.sigma(k) - q).abs() <= 1e-12 * q.abs().max(1.0));
        }
    }

    #[test]
    fn s_two_by_two_and_degenerate_error() {
        let p = Type1Parameters::new(1.0, vec![0.0, 1.0], vec![H, H]).unwrap();
        assert_close(
            &s_matrix(&p).unwrap(),
            &RMatrix::from_row_slice(2, 2, &[0.0, -0.5, 0.5, 0.0]),
            1e-15,
        );
        let g = Type1Parameters::grover(4, 1.0).unwrap();
        assert!(matches!(s_matrix(&g), Err(Error::DegenerateEpsilon { .. })));
        assert!(matches!(z_j(&g, 0), Err(Error::DegenerateEpsilon { .. })));
    }

    #[test]
    fn e_s_commutator() {
        let mut rng = Pcg64::seed_from_u64(11);
        for n in [2, 3, 6, 9] {
            let p = random_params(&mut rng, n);
            let lhs = commutator_real(&e_power(&p, 1), &s_matrix(&p).unwrap());
            let rhs = (projector(&p) - d_matrix(&p)) * p.x();
            assert_close(&lhs, &rhs, 1e-12);
            assert!(lhs.trace().abs() < 1e-12);
        }
    }

    #[test]
    fn s_reduces_to_scaled_c_for_uniform_weights() {
        use crate::operator::to_complex;
        use crate::weyl::{build_c, WeylConfig};
        let b = [0.3, 1.7, 2.0, 2.9];
        let x = 0.7;
        let p = Type1Parameters::uniform(x, b.to_vec()).unwrap();
        let c = build_c(&WeylConfig::with_real_diagonal(&b).unwrap()).unwrap();
        let s = to_complex(&s_matrix(&p).unwrap());
        let scaled = c.entries() * crate::operator::C64::new(x / b.len() as f64, 0.0);
        assert!(max_abs(&(s - scaled)) < 1e-14);
        // [E, S] = (x/N)(J - 1) = x (P - D) for the uniform weights.
        let n = b.len() as f64;
        let lhs = commutator_real(&e_power(&p, 1), &s_matrix(&p).unwrap());
        let rhs = (RMatrix::from_element(4, 4, 1.0) - RMatrix::identity(4, 4)) * (x / n);
        assert_close(&lhs, &rhs, 1e-14);
    }

    #[test]
    fn decompose_diagonal_and_projector() {
        let mut rng = Pcg64::seed_from_u64(5);
        let p = random_params(&mut rng, 5);
        let diag = e_power(&p, 2);
        let (par, perp) = decompose_real(&diag, &p).unwrap();
        assert_close(&par, &diag, 1e-14);
        assert!(max_abs_real(&perp) < 1e-14);
        let (par, perp) = decompose_real(&projector(&p), &p).unwrap();
        assert_close(&par, &RMatrix::identity(5, 5), 1e-12);
        assert_close(&perp, &(projector(&p) - RMatrix::identity(5, 5)), 1e-12);
    }

    #[test]
    fn decompose_random_symmetric_dual_formula() {
        let mut rng = Pcg64::seed_from_u64(6);
        let p = random_params(&mut rng, 6);
        let a = RMatrix::from_fn(6, 6, |_, _| rng.random_range(-1.0..1.0));
        let q = &a + a.transpose();
        let (par, perp) = decompose_real(&q, &p).unwrap();
        let g = DVector::from_column_slice(p.gamma());
        assert!((&perp * &g).norm() <= 1e-12);
        assert!(max_abs_real(&(&perp * projector(&p))) <= 1e-12);
        assert!(max_abs_real(&(projector(&p) * &perp)) <= 1e-12);
        assert_close(&perp, &perp_pairwise(&q, &p), 1e-12);
        // Row-wise definition of the diagonal part.
        for i in 0..6 {
            let v: f64 = (0..6).map(|j| q[(i, j)] * p.gamma()[j] / p.gamma()[i]).sum();
            assert!((par[(i, i)] - v).abs() < 1e-12);
        }
        assert_close(&(&par + &perp), &q, 1e-12);
    }

    #[test]
    fn decompose_rejects_asymmetric() {
        let p = Type1Parameters::uniform(1.0, vec![0.0, 1.0]).unwrap();
        let q = RMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        assert!(matches!(decompose_real(&q, &p), Err(Error::NonSymmetricInput { .. })));
        let qc = ComplexOperator::from_real(&q, Role::General).unwrap();
        assert!(matches!(decompose(&qc, &p), Err(Error::NonSymmetricInput { .. })));
    }

    #[test]
    fn z_basis_properties() {
        let p0 = Type1Parameters::uniform(0.0, vec![0.0, 0.4, 1.3]).unwrap();
        for j in 0..3 {
            let mut e = RMatrix::zeros(3, 3);
            e[(j, j)] = 1.0;
            assert_close(&z_j(&p0, j).unwrap(), &e, 0.0);
        }
        let mut rng = Pcg64::seed_from_u64(17);
        let p = random_params(&mut rng, 5);
        let zs: Vec<_> = (0..5).map(|j| z_j(&p, j).unwrap()).collect();
        let sum = zs.iter().fold(RMatrix::zeros(5, 5), |acc, z| acc + z);
        assert_close(&sum, &RMatrix::identity(5, 5), 1e-12);
        for a in &zs {
            for b in &zs {
                assert!(max_abs_real(&commutator_real(a, b)) <= 1e-11);
            }
            assert_close(a, &a.transpose(), 0.0);
        }
        assert!(matches!(z_j(&p, 5), Err(Error::IndexOutOfRange { .. })));
    }

    #[test]
    fn hamiltonian_examples() {
        let x = 0.37;
        let p = Type1Parameters::new(x, vec![0.0, 1.0], vec![H, H]).unwrap();
        let expected = RMatrix::from_row_slice(2, 2, &[-x / 2.0, x / 2.0, x / 2.0, 1.0 - x / 2.0]);
        assert_close(&hamiltonian(&p), &expected, 1e-15);
        assert_close(&hamiltonian(&p), &i_n(&p, 1), 1e-15);
        let p0 = p.with_x(0.0).unwrap();
        assert_close(&hamiltonian(&p0), &e_power(&p0, 1), 0.0);
    }

    #[test]
    fn hamiltonian_grover_reparametrization() {
        // u = s, v = 1 - s, x = -v/u: u H = s (1 - |m><m|) + (1 - s)(1 - P).
        let n = 6;
        for s in [0.2, 0.5, 0.9] {
            let p = Type1Parameters::grover(n, -(1.0 - s) / s).unwrap();
            let lhs = hamiltonian(&p) * s;
            let mut m = RMatrix::identity(n, n);
            m[(0, 0)] = 0.0;
            let rhs = m * s + (RMatrix::identity(n, n) - projector(&p)) * (1.0 - s);
            assert_close(&lhs, &rhs, 1e-14);
        }
    }

    #[test]
    fn k_low_orders() {
        let mut rng = Pcg64::seed_from_u64(19);
        let p = random_params(&mut rng, 5);
        let id = RMatrix::identity(5, 5);
        assert_close(&k_n(&p, 1), &(projector(&p) - &id), 1e-14);
        let e = e_power(&p, 1);
        let pr = projector(&p);
        let sigma1 = p.moments(1).sigma(1);
        let k2 = &e * &pr + &pr * &e - &e - &id * sigma1;
        assert_close(&k_n(&p, 2), &k2, 1e-14);
        assert_eq!(k_n(&p, 0), RMatrix::zeros(5, 5));
    }

    #[test]
    fn k_three_formulas_agree() {
        let mut rng = Pcg64::seed_from_u64(23);
        for dim in [3, 5, 8] {
            let p = random_params(&mut rng, dim);
            let s = s_matrix(&p).unwrap();
            for n in 1..=5 {
                let k = k_n(&p, n);
                assert_close(&k, &k_n_products(&p, n), 1e-11);
                assert_close(&k, &k_n_round_vectors(&p, n), 1e-11);
                let comm = commutator_real(&e_power(&p, n), &s);
                let (_, perp) = decompose_real(&comm, &p).unwrap();
                assert_close(&k, &(perp / p.x()), 1e-11);
            }
        }
    }

    #[test]
    fn k_annihilates_gamma_including_degenerate() {
        let mut rng = Pcg64::seed_from_u64(29);
        let params = [random_params(&mut rng, 6), Type1Parameters::grover(7, 0.4).unwrap()];
        for p in &params {
            let g = DVector::from_column_slice(p.gamma());
            for n in 1..=7 {
                let k = k_n(p, n);
                let scale = max_abs_real(&k).max(1.0);
                assert!((&k * &g).norm() <= 1e-12 * scale);
                assert!(max_abs_real(&(&k * projector(p))) <= 1e-12 * scale);
            }
        }
    }

    #[test]
    fn conserved_operators_commute() {
        let mut rng = Pcg64::seed_from_u64(31);
        let degenerate = Type1Parameters::normalized(
            0.8,
            vec![0.0, 0.5, 0.5, 1.2, 1.2, 1.2],
            vec![0.3, 0.5, -0.4, 0.6, 0.2, 0.7],
        )
        .unwrap();
        for p in [random_params(&mut rng, 8), degenerate] {
            let is: Vec<_> = (1..=5).map(|n| i_n(&p, n)).collect();
            for a in &is {
                for b in &is {
                    let scale = max_abs_real(a).max(max_abs_real(b));
                    assert!(max_abs_real(&commutator_real(a, b)) <= 1e-10 * scale);
                }
            }
        }
    }

    #[test]
    fn i_n_in_z_basis_and_recurrence() {
        let mut rng = Pcg64::seed_from_u64(37);
        let p = random_params(&mut rng, 6);
        let zs: Vec<_> = (0..6).map(|j| z_j(&p, j).unwrap()).collect();
        let h = hamiltonian(&p);
        let m = p.moments(6);
        let id = RMatrix::identity(6, 6);
        for n in 1..=5 {
            let via_z = zs.iter().enumerate().fold(RMatrix::zeros(6, 6), |acc, (j, z)| {
                acc + z * p.epsilon()[j].powi(n as i32)
            });
            assert_close(&i_n(&p, n), &via_z, 1e-11);
            let next = &h * i_n(&p, n) + i_n(&p, n) * p.x() - &id * (p.x() * m.sigma(n));
            assert_close(&i_n(&p, n + 1), &next, 1e-11);
        }
    }

    #[test]
    fn complex_builders_carry_roles() {
        let mut rng = Pcg64::seed_from_u64(41);
        let p = random_params(&mut rng, 4);
        assert_eq!(build_s(&p).unwrap().role(), Role::Antisymmetric);
        assert_eq!(build_in(&p, 3).unwrap().role(), Role::Hermitian);
        assert_eq!(build_e(&p, 2).role(), Role::Diagonal);
        let q = build_h(&p).unwrap();
        let (par, perp) = decompose(&q, &p).unwrap();
        let (rpar, rperp) = decompose_real(&hamiltonian(&p), &p).unwrap();
        assert_close(&par.to_real().unwrap(), &rpar, 1e-14);
        assert_close(&perp.to_real().unwrap(), &rperp, 1e-14);
    }
}
