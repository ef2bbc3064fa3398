//! Numeric foundations, PolSAR data handling and the contourlet transform.

pub mod contourlet;
pub mod error;
pub mod numerics;
pub mod polsar;

pub use error::{Error, Result};
pub use num_complex::Complex;
