//! Verifiable homomorphic linear-combination time-lock puzzles.
//!
//! Clients lock messages in point-value form under RSA time-lock keys; a
//! server combines the locked polynomials with client-chosen coefficients and
//! later proves that the combined result it recovered is correct.

pub mod crypto;
pub mod field;
pub mod mitf;
pub mod ole;
pub mod poly;
pub mod simnet;
pub mod tf;
pub mod timelock;
pub mod wire;

pub use field::{FieldElement, FieldError, PrimeField};
pub use poly::{DensePoly, PointValuePoly};
