//! Secure integrated sensing and communications with a hybrid
//! reconfigurable intelligent surface (HRIS).
//!
//! The crate synthesizes far-field channels for a BS / HRIS / UE /
//! eavesdropper geometry, evaluates Fisher-information position error
//! bounds, and jointly designs the BS precoder, the HRIS analog combiner and
//! the HRIS reflection phases by alternating semidefinite programs and a
//! projected-gradient phase ascent.

// needed so the BLAS/LAPACK symbols used by the SDP backend get linked
extern crate openblas_src;

pub mod channel;
pub mod conic;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod metrics;
pub mod optimizer;

pub use error::{Error, Result};
