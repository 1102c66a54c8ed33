//! Dense complex operators with a checked structural role.
//!
//! Every matrix in the crate (shift, clock, their logarithms, the Type-1
//! building blocks and the conserved operators) crosses module boundaries as
//! a [`ComplexOperator`]. The role tag is verified once at construction, so a
//! value tagged `Hermitian` is known to be Hermitian to working precision.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;
pub type RMatrix = DMatrix<f64>;

/// Relative tolerance for the Hermitian, antisymmetric and diagonal checks.
pub const ROLE_TOL: f64 = 1e-12;
/// Relative tolerance for idempotence and integer trace of projectors.
pub const PROJECTOR_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    General,
    Hermitian,
    Unitary,
    Antisymmetric,
    Diagonal,
    Projector,
}

impl Role {
    pub fn name(self) -> &'static str {
        match self {
            Role::General => "general",
            Role::Hermitian => "hermitian",
            Role::Unitary => "unitary",
            Role::Antisymmetric => "antisymmetric",
            Role::Diagonal => "diagonal",
            Role::Projector => "projector",
        }
    }

    /// Residual of `m` against this role, already normalised so that the
    /// role holds iff the returned value is `<= 1`.
    fn violation(self, m: &CMatrix) -> f64 {
        let scale = max_abs(m).max(f64::MIN_POSITIVE);
        match self {
            Role::General => 0.0,
            Role::Hermitian => max_abs(&(m - m.adjoint())) / (ROLE_TOL * scale),
            Role::Antisymmetric => max_abs(&(m + m.transpose())) / (ROLE_TOL * scale),
            Role::Unitary => {
                let n = m.nrows();
                let defect = max_abs(&(m.adjoint() * m - CMatrix::identity(n, n)));
                defect / (ROLE_TOL * n as f64)
            }
            Role::Diagonal => {
                let mut off = 0.0_f64;
                for ((i, j), v) in indexed(m) {
                    if i != j {
                        off = off.max(v.norm());
                    }
                }
                off / (ROLE_TOL * scale)
            }
            Role::Projector => {
                let idem = max_abs(&(m * m - m)) / (PROJECTOR_TOL * scale);
                let tr = m.trace();
                let frac = (tr.re - tr.re.round()).abs().max(tr.im.abs());
                idem.max(frac / PROJECTOR_TOL)
            }
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A square complex matrix tagged with the structure it is known to have.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexOperator {
    entries: CMatrix,
    role: Role,
}

impl ComplexOperator {
    /// Wraps `entries`, verifying squareness and the requested role.
    pub fn new(entries: CMatrix, role: Role) -> Result<Self> {
        if entries.nrows() != entries.ncols() {
            return Err(Error::DimensionMismatch {
                expected: entries.nrows(),
                found: entries.ncols(),
            });
        }
        if entries.nrows() == 0 {
            return Err(Error::InvalidConfig("operator dimension must be positive".into()));
        }
        let v = role.violation(&entries);
        if v > 1.0 {
            let residual = match role {
                Role::Projector => v * PROJECTOR_TOL,
                _ => v * ROLE_TOL,
            };
            return Err(Error::RoleViolation {
                role: role.name(),
                residual,
            });
        }
        Ok(Self { entries, role })
    }

    pub fn general(entries: CMatrix) -> Result<Self> {
        Self::new(entries, Role::General)
    }

    /// Lifts a real matrix into the complex carrier.
    pub fn from_real(m: &RMatrix, role: Role) -> Result<Self> {
        Self::new(m.map(|v| C64::new(v, 0.0)), role)
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            entries: CMatrix::identity(dim, dim),
            role: Role::Unitary,
        }
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &CMatrix {
        &self.entries
    }

    pub fn into_entries(self) -> CMatrix {
        self.entries
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        self.entries[(row, col)]
    }

    /// Real part of the entries; `None` if any imaginary part exceeds
    /// `ROLE_TOL` relative to the largest entry.
    pub fn to_real(&self) -> Option<RMatrix> {
        let scale = max_abs(&self.entries).max(f64::MIN_POSITIVE);
        if self.entries.iter().any(|z| z.im.abs() > ROLE_TOL * scale) {
            return None;
        }
        Some(self.entries.map(|z| z.re))
    }

    pub fn max_norm(&self) -> f64 {
        max_abs(&self.entries)
    }

    pub fn check_same_dim(&self, other: &Self) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        Ok(())
    }

    /// `self * other - other * self`.
    pub fn commutator(&self, other: &Self) -> Result<CMatrix> {
        self.check_same_dim(other)?;
        Ok(commutator(&self.entries, &other.entries))
    }

    pub fn pow(&self, k: u32) -> CMatrix {
        let n = self.dim();
        let mut acc = CMatrix::identity(n, n);
        for _ in 0..k {
            acc = &acc * &self.entries;
        }
        acc
    }
}

pub fn commutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a * b - b * a
}

pub fn commutator_real(a: &RMatrix, b: &RMatrix) -> RMatrix {
    a * b - b * a
}

/// Largest entry modulus.
pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0_f64, |acc, z| acc.max(z.norm()))
}

/// Largest absolute entry of a real matrix.
pub fn max_abs_real(m: &RMatrix) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// `|u><v|`.
pub fn outer(u: &CVector, v: &CVector) -> CMatrix {
    u * v.adjoint()
}

/// The flat state `(1, ..., 1)/sqrt(N)`.
pub fn flat_state(n: usize) -> CVector {
    CVector::from_element(n, C64::new(1.0 / (n as f64).sqrt(), 0.0))
}

pub fn to_complex(m: &RMatrix) -> CMatrix {
    m.map(|v| C64::new(v, 0.0))
}

fn indexed(m: &CMatrix) -> impl Iterator<Item = ((usize, usize), &C64)> {
    let rows = m.nrows();
    m.iter().enumerate().map(move |(k, v)| ((k % rows, k / rows), v))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn hermitian_role_is_checked() {
        let h = CMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 1.0), c(0.0, -1.0), c(2.0, 0.0)]);
        assert!(ComplexOperator::new(h.clone(), Role::Hermitian).is_ok());
        let mut bad = h;
        bad[(0, 1)] = c(0.0, 2.0);
        assert!(matches!(
            ComplexOperator::new(bad, Role::Hermitian),
            Err(Error::RoleViolation { role: "hermitian", .. })
        ));
    }

    #[test]
    fn projector_needs_integer_trace() {
        let p = CMatrix::from_row_slice(2, 2, &[c(0.5, 0.0), c(0.5, 0.0), c(0.5, 0.0), c(0.5, 0.0)]);
        assert!(ComplexOperator::new(p.clone(), Role::Projector).is_ok());
        assert!(ComplexOperator::new(p * c(0.9, 0.0), Role::Projector).is_err());
    }

    #[test]
    fn non_square_rejected() {
        let m = CMatrix::zeros(2, 3);
        assert!(matches!(
            ComplexOperator::general(m),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn to_real_drops_negligible_imaginary_parts() {
        let m = CMatrix::from_row_slice(1, 1, &[c(3.0, 1e-20)]);
        let op = ComplexOperator::general(m).unwrap();
        assert_eq!(op.to_real().unwrap()[(0, 0)], 3.0);
    }
}
