//! Generalized Weyl matrices: the cyclic shift `A`, the clock `B`, the
//! conjugate matrix `C` and the logarithms of `A` and `B`.
//!
//! Indices run over `0..N` and wrap modulo `N`. Every identity check returns
//! the max-norm residual instead of a boolean; callers decide the threshold.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::operator::{commutator, flat_state, max_abs, outer, CMatrix, CVector, ComplexOperator, Role, C64};

/// Relative threshold on the smallest gap `|b_n - b_m|` below which `C`
/// is rejected.
pub const B_GAP_TOL: f64 = 1e-12;

/// Dimension and clock eigenvalues `b_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeylConfig {
    n: usize,
    b: Vec<C64>,
    omega0: f64,
    root_of_unity: bool,
}

impl WeylConfig {
    /// `b_n = exp(i omega0 n)` with `omega0 = 2 pi / N`.
    pub fn root_of_unity(n: usize) -> Result<Self> {
        check_dim(n)?;
        let omega0 = 2.0 * PI / n as f64;
        let b = (0..n).map(|k| C64::from_polar(1.0, omega0 * k as f64)).collect();
        Ok(Self {
            n,
            b,
            omega0,
            root_of_unity: true,
        })
    }

    /// Arbitrary clock entries.
    pub fn with_diagonal(b: Vec<C64>) -> Result<Self> {
        let n = b.len();
        check_dim(n)?;
        if b.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidConfig("b entries must be finite".into()));
        }
        Ok(Self {
            n,
            b,
            omega0: 2.0 * PI / n as f64,
            root_of_unity: false,
        })
    }

    pub fn with_real_diagonal(b: &[f64]) -> Result<Self> {
        Self::with_diagonal(b.iter().map(|&v| C64::new(v, 0.0)).collect())
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn b(&self) -> &[C64] {
        &self.b
    }

    pub fn omega0(&self) -> f64 {
        self.omega0
    }

    pub fn is_root_of_unity(&self) -> bool {
        self.root_of_unity
    }

    fn is_real(&self) -> bool {
        self.b.iter().all(|z| z.im == 0.0)
    }

    fn require_root_of_unity(&self) -> Result<()> {
        if self.root_of_unity {
            Ok(())
        } else {
            Err(Error::InvalidConfig(
                "logarithms are only defined for the root-of-unity clock".into(),
            ))
        }
    }
}

fn check_dim(n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::InvalidConfig(format!("dimension must be at least 2, got {n}")));
    }
    Ok(())
}

fn omega0(n: usize) -> f64 {
    2.0 * PI / n as f64
}

/// `exp(i omega0 k)` with the exponent reduced modulo `N` first.
fn root(n: usize, k: usize) -> C64 {
    C64::from_polar(1.0, omega0(n) * (k % n) as f64)
}

/// Cyclic left shift: `A = sum_n |n-1><n|`.
pub fn build_shift_a(cfg: &WeylConfig) -> ComplexOperator {
    let n = cfg.n;
    let mut a = CMatrix::zeros(n, n);
    for col in 0..n {
        a[((col + n - 1) % n, col)] = C64::new(1.0, 0.0);
    }
    ComplexOperator::new(a, Role::Unitary).expect("a permutation matrix is unitary")
}

/// Clock matrix `B = diag(b_n)`.
pub fn build_diag_b(cfg: &WeylConfig) -> ComplexOperator {
    let b = CMatrix::from_diagonal(&CVector::from_column_slice(&cfg.b));
    ComplexOperator::new(b, Role::Diagonal).expect("diagonal by construction")
}

/// `max |AB - e^{i omega0} BA|`.
pub fn check_weyl_relation(a: &ComplexOperator, b: &ComplexOperator, omega0: f64) -> Result<f64> {
    a.check_same_dim(b)?;
    let phase = C64::from_polar(1.0, omega0);
    let lhs = a.entries() * b.entries();
    let rhs = (b.entries() * a.entries()) * phase;
    Ok(max_abs(&(lhs - rhs)))
}

/// Plane waves `|k_r>` with components `exp(i k_r n)/sqrt(N)`, `k_r = r omega0`.
pub fn build_k_states(n: usize) -> Vec<CVector> {
    let norm = 1.0 / (n as f64).sqrt();
    (0..n)
        .map(|r| CVector::from_iterator(n, (0..n).map(|site| root(n, r * site) * norm)))
        .collect()
}

/// `C = 1/2 sum_{n != m} (|n><m| - |m><n|)/(b_n - b_m)`, i.e.
/// `C_{nm} = 1/(b_n - b_m)` off the diagonal.
pub fn build_c(cfg: &WeylConfig) -> Result<ComplexOperator> {
    let n = cfg.n;
    let scale = cfg.b.iter().fold(0.0_f64, |m, z| m.max(z.norm()));
    let threshold = B_GAP_TOL * scale;
    let mut min_gap = f64::INFINITY;
    let mut c = CMatrix::zeros(n, n);
    for row in 0..n {
        for col in 0..n {
            if row == col {
                continue;
            }
            let diff = cfg.b[row] - cfg.b[col];
            min_gap = min_gap.min(diff.norm());
            c[(row, col)] = diff.inv();
        }
    }
    if min_gap < threshold || min_gap == 0.0 {
        return Err(Error::DegenerateB { min_gap, threshold });
    }
    // C^T = -C holds for any b; for real b this is the usual real antisymmetry.
    let role = if cfg.is_real() {
        Role::Antisymmetric
    } else {
        Role::General
    };
    ComplexOperator::new(c, role)
}

/// Plane-wave form `sum_r r |k_r><k_{r+1}|` for the root-of-unity clock.
///
/// Off the diagonal this coincides with [`build_c`]; the two differ by the
/// diagonal term `(N-1)/2 B^{-1}`.
pub fn build_c_kspace(n: usize) -> Result<ComplexOperator> {
    check_dim(n)?;
    let ks = build_k_states(n);
    let mut c = CMatrix::zeros(n, n);
    for r in 0..n {
        c += outer(&ks[r], &ks[(r + 1) % n]) * C64::new(r as f64, 0.0);
    }
    ComplexOperator::general(c)
}

/// `max |[C, B] - (1 - N |psi><psi|)|` with `|psi>` the flat state.
pub fn check_cb_commutator(c: &ComplexOperator, b: &ComplexOperator) -> Result<f64> {
    c.check_same_dim(b)?;
    let n = c.dim();
    let psi = flat_state(n);
    let target = CMatrix::identity(n, n) - outer(&psi, &psi) * C64::new(n as f64, 0.0);
    Ok(max_abs(&(c.commutator(b)? - target)))
}

/// `log B = i omega0 sum_n n |n><n|`.
pub fn build_log_b(cfg: &WeylConfig) -> Result<ComplexOperator> {
    cfg.require_root_of_unity()?;
    let n = cfg.n;
    let diag = CVector::from_iterator(n, (0..n).map(|k| C64::new(0.0, cfg.omega0 * k as f64)));
    ComplexOperator::new(CMatrix::from_diagonal(&diag), Role::Diagonal)
}

/// `log A = i omega0 sum_r r |k_r><k_r|`, the principal-branch logarithm with
/// eigenphases in `[0, 2 pi)`.
pub fn build_log_a(n: usize) -> Result<ComplexOperator> {
    check_dim(n)?;
    let w = omega0(n);
    let ks = build_k_states(n);
    let mut m = CMatrix::zeros(n, n);
    for (r, k) in ks.iter().enumerate().skip(1) {
        m += outer(k, k) * C64::new(0.0, w * r as f64);
    }
    ComplexOperator::general(m)
}

/// Position-space form of `log A`: `i pi (1 - 1/N)` on the diagonal and
/// `(pi/N) [cot(pi (n-m)/N) - i]` off it.
pub fn build_log_a_cotangent(n: usize) -> Result<ComplexOperator> {
    check_dim(n)?;
    let nf = n as f64;
    let mut m = CMatrix::zeros(n, n);
    for row in 0..n {
        for col in 0..n {
            m[(row, col)] = if row == col {
                C64::new(0.0, PI * (1.0 - 1.0 / nf))
            } else {
                let arg = PI * (row as f64 - col as f64) / nf;
                C64::new(PI / nf * (arg.cos() / arg.sin()), -PI / nf)
            };
        }
    }
    ComplexOperator::general(m)
}

/// Clock-ratio form of `log A`: off-diagonal `(2 i pi / N) b_m / (b_n - b_m)`.
pub fn build_log_a_clock_ratio(n: usize) -> Result<ComplexOperator> {
    let cfg = WeylConfig::root_of_unity(n)?;
    let nf = n as f64;
    let mut m = CMatrix::zeros(n, n);
    for row in 0..n {
        for col in 0..n {
            m[(row, col)] = if row == col {
                C64::new(0.0, PI * (1.0 - 1.0 / nf))
            } else {
                C64::new(0.0, 2.0 * PI / nf) * cfg.b[col] / (cfg.b[row] - cfg.b[col])
            };
        }
    }
    ComplexOperator::general(m)
}

/// `max |[log A, C] + i C|` for the root-of-unity clock.
///
/// The eigenphase differences of `log A` are integer multiples of `omega0`,
/// so this residual cannot vanish for a non-zero `C`; it is reported as is.
/// [`ehrenfest_projected_residual`] measures the relation that does hold.
pub fn check_ehrenfest(n: usize) -> Result<f64> {
    let (log_a, c) = log_a_and_c(n)?;
    let lhs = log_a.commutator(&c)?;
    Ok(max_abs(&(lhs + c.entries() * C64::new(0.0, 1.0))))
}

/// `max |([log A, C] + i omega0 C)(1 - |psi><psi|)|`: the commutator acts as
/// `-i omega0 C` on every state orthogonal to the flat state.
pub fn ehrenfest_projected_residual(n: usize) -> Result<f64> {
    let (log_a, c) = log_a_and_c(n)?;
    let psi = flat_state(n);
    let proj = CMatrix::identity(n, n) - outer(&psi, &psi);
    let defect = log_a.commutator(&c)? + c.entries() * C64::new(0.0, omega0(n));
    Ok(max_abs(&(defect * proj)))
}

fn log_a_and_c(n: usize) -> Result<(ComplexOperator, ComplexOperator)> {
    let cfg = WeylConfig::root_of_unity(n)?;
    Ok((build_log_a(n)?, build_c(&cfg)?))
}

/// `d/dD [ exp(i D (N-1)/2) sin(N D/2) / sin(D/2) ]`, the derivative of the
/// geometric sum `sum_{r<N} exp(i D r)`.
fn dirichlet_derivative(delta: f64, n: usize) -> C64 {
    let nf = n as f64;
    let half = 0.5 * delta;
    let s = half.sin();
    if s.abs() < 1e-6 {
        // Series about D = 0: G'(D) = i sum r - D sum r^2 + O(D^2).
        let sum_r = nf * (nf - 1.0) / 2.0;
        let sum_r2 = (nf - 1.0) * nf * (2.0 * nf - 1.0) / 6.0;
        return C64::new(-delta * sum_r2, sum_r);
    }
    let a = 0.5 * (nf - 1.0);
    let ratio = (nf * half).sin() / s;
    let ratio_prime = (0.5 * nf * (nf * half).cos() * s - 0.5 * (nf * half).sin() * half.cos()) / (s * s);
    C64::from_polar(1.0, a * delta) * (C64::new(0.0, a) * ratio + ratio_prime)
}

/// Closed-form matrix element
/// `<n|[log B, log A]|m> = i (omega0/N) D d/dD(e^{i D (N-1)/2} sin(N D/2)/sin(D/2))`
/// with `D = omega0 (n - m)`. The diagonal is the `D -> 0` limit, which is 0.
pub fn log_commutator_element(n: usize, row: usize, col: usize) -> C64 {
    if row == col {
        return C64::new(0.0, 0.0);
    }
    let w = omega0(n);
    let delta = w * (row as f64 - col as f64);
    C64::new(0.0, w / n as f64) * delta * dirichlet_derivative(delta, n)
}

/// Dense `[log B, log A]` together with its max deviation from the closed
/// form of [`log_commutator_element`].
pub fn heisenberg_commutator_check(n: usize) -> Result<(ComplexOperator, f64)> {
    let cfg = WeylConfig::root_of_unity(n)?;
    let log_b = build_log_b(&cfg)?;
    let log_a = build_log_a(n)?;
    let m = commutator(log_b.entries(), log_a.entries());
    let mut dev = 0.0_f64;
    for row in 0..n {
        for col in 0..n {
            dev = dev.max((m[(row, col)] - log_commutator_element(n, row, col)).norm());
        }
    }
    Ok((ComplexOperator::general(m)?, dev))
}

/// Weyl operator basis `U_{n,m} = sum_r e^{i n k_r} |k_r><k_{r+m}|`.
pub fn build_weyl_basis_u(n_idx: usize, m_idx: usize, dim: usize) -> Result<ComplexOperator> {
    check_dim(dim)?;
    for idx in [n_idx, m_idx] {
        if idx >= dim {
            return Err(Error::IndexOutOfRange { index: idx, dim });
        }
    }
    let ks = build_k_states(dim);
    let mut u = CMatrix::zeros(dim, dim);
    for r in 0..dim {
        u += outer(&ks[r], &ks[(r + m_idx) % dim]) * root(dim, n_idx * r);
    }
    ComplexOperator::new(u, Role::Unitary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::max_abs;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn real_matrix(n: usize, vals: &[f64]) -> CMatrix {
        CMatrix::from_row_slice(n, n, &vals.iter().map(|&v| c(v, 0.0)).collect::<Vec<_>>())
    }

    #[test]
    fn shift_positions_n3() {
        let a = build_shift_a(&WeylConfig::root_of_unity(3).unwrap());
        let expected = real_matrix(3, &[0., 1., 0., 0., 0., 1., 1., 0., 0.]);
        assert_eq!(a.entries(), &expected);
    }

    #[test]
    fn shift_n2_is_swap() {
        let a = build_shift_a(&WeylConfig::root_of_unity(2).unwrap());
        assert_eq!(a.entries(), &real_matrix(2, &[0., 1., 1., 0.]));
    }

    #[test]
    fn shift_fifth_power_is_identity() {
        let a = build_shift_a(&WeylConfig::root_of_unity(5).unwrap());
        assert!(max_abs(&(a.pow(5) - CMatrix::identity(5, 5))) <= 1e-14);
    }

    #[test]
    fn clock_entries() {
        let b = build_diag_b(&WeylConfig::root_of_unity(4).unwrap());
        let expected = [c(1., 0.), c(0., 1.), c(-1., 0.), c(0., -1.)];
        for (k, z) in expected.iter().enumerate() {
            assert!((b.get(k, k) - z).norm() < 1e-15);
        }
        let b2 = build_diag_b(&WeylConfig::root_of_unity(2).unwrap());
        assert!((b2.get(1, 1) - c(-1., 0.)).norm() < 1e-15);
        let real = build_diag_b(&WeylConfig::with_real_diagonal(&[0.3, 1.7, 2.0]).unwrap());
        assert_eq!(real.get(1, 1), c(1.7, 0.));
        assert_eq!(real.get(0, 1), c(0., 0.));
    }

    #[test]
    fn weyl_relation_residuals() {
        for n in [2, 8] {
            let cfg = WeylConfig::root_of_unity(n).unwrap();
            let r = check_weyl_relation(&build_shift_a(&cfg), &build_diag_b(&cfg), cfg.omega0()).unwrap();
            assert!(r <= 1e-14, "N={n}: {r}");
        }
        let id = ComplexOperator::identity(3);
        let r = check_weyl_relation(&id, &id, omega0(3)).unwrap();
        assert!((r - (c(1., 0.) - C64::from_polar(1.0, omega0(3))).norm()).abs() < 1e-15);
    }

    #[test]
    fn weyl_relation_dimension_mismatch() {
        let a = ComplexOperator::identity(2);
        let b = ComplexOperator::identity(3);
        assert!(matches!(
            check_weyl_relation(&a, &b, 1.0),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn k_states() {
        let ks = build_k_states(2);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((ks[0][1] - c(h, 0.)).norm() < 1e-15);
        assert!((ks[1][1] - c(-h, 0.)).norm() < 1e-15);
        let ks = build_k_states(4);
        for (r, kr) in ks.iter().enumerate() {
            for (s, ks_) in ks.iter().enumerate() {
                let ip = kr.dotc(ks_);
                let expected = if r == s { 1.0 } else { 0.0 };
                assert!((ip - c(expected, 0.)).norm() < 1e-14);
            }
        }
        assert!((&ks[0] - flat_state(4)).norm() < 1e-15);
        let a = build_shift_a(&WeylConfig::root_of_unity(4).unwrap());
        for (r, k) in ks.iter().enumerate() {
            let lhs = a.entries() * k;
            assert!((lhs - k * root(4, r)).norm() < 1e-14);
        }
    }

    #[test]
    fn c_two_by_two() {
        let cfg = WeylConfig::with_real_diagonal(&[1.0, -1.0]).unwrap();
        let cm = build_c(&cfg).unwrap();
        assert_eq!(cm.role(), Role::Antisymmetric);
        assert_eq!(cm.entries(), &real_matrix(2, &[0., 0.5, -0.5, 0.]));
        let b = build_diag_b(&cfg);
        let comm = cm.commutator(&b).unwrap();
        assert!(max_abs(&(comm - real_matrix(2, &[0., -1., -1., 0.]))) < 1e-15);
        assert!(check_cb_commutator(&cm, &b).unwrap() < 1e-15);
    }

    #[test]
    fn c_degenerate_b_rejected() {
        let cfg = WeylConfig::with_real_diagonal(&[1.0, 2.0, 1.0]).unwrap();
        assert!(matches!(build_c(&cfg), Err(Error::DegenerateB { .. })));
    }

    #[test]
    fn c_kspace_differs_by_diagonal_inverse_clock() {
        for n in [2, 3, 5, 8] {
            let cfg = WeylConfig::root_of_unity(n).unwrap();
            let c_pos = build_c(&cfg).unwrap();
            let c_k = build_c_kspace(n).unwrap();
            let b = build_diag_b(&cfg);
            let b_inv = b.entries().adjoint();
            let shift = b_inv * c(0.5 * (n as f64 - 1.0), 0.0);
            let dev = max_abs(&(c_k.entries() - c_pos.entries() - shift));
            assert!(dev < 1e-12, "N={n}: {dev}");
        }
    }

    #[test]
    fn cb_commutator_root_of_unity() {
        let cfg = WeylConfig::root_of_unity(4).unwrap();
        let r = check_cb_commutator(&build_c(&cfg).unwrap(), &build_diag_b(&cfg)).unwrap();
        assert!(r <= 1e-13, "{r}");
    }

    #[test]
    fn logs_two_by_two() {
        let cfg = WeylConfig::root_of_unity(2).unwrap();
        let log_b = build_log_b(&cfg).unwrap();
        assert!((log_b.get(1, 1) - c(0., PI)).norm() < 1e-15);
        assert_eq!(log_b.get(0, 0), c(0., 0.));
        let log_a = build_log_a(2).unwrap();
        let expected = CMatrix::from_row_slice(2, 2, &[c(1., 0.), c(-1., 0.), c(-1., 0.), c(1., 0.)]) * c(0., PI / 2.0);
        assert!(max_abs(&(log_a.entries() - expected)) < 1e-15);
    }

    #[test]
    fn log_b_needs_root_of_unity() {
        let cfg = WeylConfig::with_real_diagonal(&[0.0, 1.0]).unwrap();
        assert!(build_log_b(&cfg).is_err());
    }

    #[test]
    fn log_a_three_forms_agree() {
        for n in [2, 3, 8, 17] {
            let k = build_log_a(n).unwrap();
            let cot = build_log_a_cotangent(n).unwrap();
            let ratio = build_log_a_clock_ratio(n).unwrap();
            assert!(max_abs(&(k.entries() - cot.entries())) <= 1e-11);
            assert!(max_abs(&(k.entries() - ratio.entries())) <= 1e-11);
        }
    }

    #[test]
    fn log_a_exponentiates_to_shift() {
        // exp(log A) through the plane-wave eigenbasis reproduces A.
        let n = 6;
        let ks = build_k_states(n);
        let log_a = build_log_a(n).unwrap();
        let mut rebuilt = CMatrix::zeros(n, n);
        for k in &ks {
            let eig = (k.adjoint() * log_a.entries() * k)[(0, 0)];
            rebuilt += outer(k, k) * eig.exp();
        }
        let a = build_shift_a(&WeylConfig::root_of_unity(n).unwrap());
        assert!(max_abs(&(rebuilt - a.entries())) < 1e-13);
    }

    #[test]
    fn ehrenfest_holds_off_the_flat_state() {
        for n in [2, 5, 16] {
            let r = ehrenfest_projected_residual(n).unwrap();
            assert!(r <= 1e-11 * n as f64, "N={n}: {r}");
        }
    }

    #[test]
    fn literal_ehrenfest_residual_is_order_one() {
        // The unprojected, unscaled relation is not an identity; see module docs.
        for n in [2, 5, 16] {
            assert!(check_ehrenfest(n).unwrap() > 0.1);
        }
    }

    #[test]
    fn log_commutator_closed_form() {
        for (n, tol) in [(2, 1e-14), (5, 1e-12), (64, 1e-10 * 64.0)] {
            let (_, dev) = heisenberg_commutator_check(n).unwrap();
            assert!(dev <= tol, "N={n}: {dev}");
        }
    }

    #[test]
    fn log_commutator_series_branch_matches_direct_sum() {
        // Near D = 0 the series branch must agree with the explicit sum.
        let n = 7;
        for delta in [1e-7, -3e-7, 0.0] {
            let direct: C64 = (0..n)
                .map(|r| c(0., r as f64) * C64::from_polar(1.0, delta * r as f64))
                .sum();
            assert!((dirichlet_derivative(delta, n) - direct).norm() < 1e-9);
        }
    }

    #[test]
    fn weyl_basis() {
        let u00 = build_weyl_basis_u(0, 0, 4).unwrap();
        assert!(max_abs(&(u00.entries() - CMatrix::identity(4, 4))) < 1e-14);
        let u02 = build_weyl_basis_u(0, 2, 4).unwrap();
        let unit = u02.entries().adjoint() * u02.entries();
        assert!(max_abs(&(unit - CMatrix::identity(4, 4))) <= 1e-13);
        let n = 3;
        let ops: Vec<_> = (0..n)
            .flat_map(|a| (0..n).map(move |b| build_weyl_basis_u(a, b, n).unwrap()))
            .collect();
        for (i, p) in ops.iter().enumerate() {
            for (j, q) in ops.iter().enumerate() {
                let tr = (p.entries().adjoint() * q.entries()).trace();
                let expected = if i == j { n as f64 } else { 0.0 };
                assert!((tr - c(expected, 0.)).norm() < 1e-12);
            }
        }
        assert!(matches!(
            build_weyl_basis_u(3, 0, 3),
            Err(Error::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn weyl_basis_pure_index_cases() {
        // U_{n,0} = A^n and U_{0,m} = B^{-m}.
        let n = 5;
        let cfg = WeylConfig::root_of_unity(n).unwrap();
        let a = build_shift_a(&cfg);
        let b = build_diag_b(&cfg);
        for k in 0..n {
            let u = build_weyl_basis_u(k, 0, n).unwrap();
            assert!(max_abs(&(u.entries() - a.pow(k as u32))) < 1e-13);
            let u = build_weyl_basis_u(0, k, n).unwrap();
            let b_inv_k = b.pow(k as u32).adjoint();
            assert!(max_abs(&(u.entries() - b_inv_k)) < 1e-13);
        }
    }
}
