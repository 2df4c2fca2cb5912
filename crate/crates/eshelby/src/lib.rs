//! Construction and verification of non-ellipsoidal inclusions whose
//! polynomial eigenstrains induce polynomial elastic strains.
//!
//! The pipeline: pick an obstacle function ([`obstacle`]), solve the discrete
//! obstacle problem and extract its coincidence set ([`fbsolver`]), stretch the
//! set according to the medium's anisotropy ([`geometry`], [`materials`]), and
//! check the result against independent quadratures ([`verify`]), closed-form
//! ellipsoid potentials ([`ellipsoid_potential`], [`elliptic`]) and
//! transversely isotropic Green functions ([`greens_ti`]).

// `!(x > tol)` is used on purpose so that NaN lands on the error path;
// index loops mirror the tensor notation.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod ellipsoid_potential;
pub mod elliptic;
pub mod error;
pub mod fbsolver;
pub mod geometry;
pub mod greens_ti;
pub mod materials;
pub mod obstacle;
pub mod quadrature;
pub mod verify;

pub use error::{Error, Result};
