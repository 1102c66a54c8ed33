// `!(v > 0.0)` style guards are used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod error;
pub mod evolve;
pub mod operator;
pub mod spectra;
pub mod type1;
pub mod verify;
pub mod weyl;

pub use error::{Error, Result};
pub use operator::{ComplexOperator, Role};
