//! Through-the-wall radar human activity recognition toolkit.
//!
//! The processing chain runs from a simulated stepped-frequency echo to the
//! two features compared by the experiments:
//!
//! ```text
//! radar_sim ──> sigproc (RTM, DTM) ──> dataproc (R²TM, D²TM) ──┬──> 8192-d map feature
//!                                                             └──> corners (PC-RD, 180-d)
//! ```
//!
//! Both features feed the same three-layer linear network ([`nn`]); the
//! [`bound`] module turns trained weights into generalization error bounds and
//! [`harness`] runs the whole protocol and writes CSV artifacts.

pub mod bound;
pub mod corners;
pub mod dataproc;
pub mod error;
pub mod harness;
pub mod matrix;
pub mod nn;
pub mod radar_sim;
pub mod sigproc;

pub use error::{Error, Result};
pub use matrix::Matrix;

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
