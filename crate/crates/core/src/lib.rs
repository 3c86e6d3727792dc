//! Time-domain acoustic scattering by resonant micro-bubbles distributed on a surface.
//!
//! Two models are provided for the same physical setting:
//!
//! - the point-scatterer model ([`foldy`]), where every bubble carries an amplitude
//!   solving a neutral delay system driven by the incident wave;
//! - the effective screen model ([`effective`]), a retarded surface integral equation
//!   whose solution produces a field obeying a dispersive transmission condition
//!   with a sinusoidal memory kernel.
//!
//! [`cq`] solves the effective equation a second, independent way (frequency-domain
//! solves combined by BDF2 convolution quadrature) and [`harness`] runs the
//! comparisons, sweeps and regime studies.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cq;
pub mod delay;
pub mod effective;
pub mod error;
pub mod foldy;
pub mod geometry;
pub mod harness;
pub mod history;
pub mod model;
pub mod signal;

pub use error::{Error, Result};
/// Points and directions in space.
pub type Vec3 = nalgebra::Vector3<f64>;
