//! Numerical laboratory for SU(2) quantum representations of genus-2 surfaces:
//! curve operators on colorings, the Toeplitz model on `R^E x T`, and the
//! semiclassical pairing between bases of two pants decompositions.

pub mod error;
pub mod moduli;
pub mod quantization;
pub mod recoupling;
pub mod semiclassics;
pub mod study;
pub mod surfaces;

pub use error::{Error, Result};
