//! Near-field source localization with fully digital arrays and dynamic
//! metasurface antennas (DMAs).
//!
//! The crate is organised bottom-up: [`geometry`] places elements and
//! sources, [`signal`] builds channels and snapshots, [`dma`] handles the
//! metasurface weights, [`likelihood`] evaluates and maximises the
//! concentrated likelihood, and [`alternating`] couples estimation with
//! weight tuning. [`experiment`] runs Monte Carlo studies on top.

pub mod alternating;
pub mod dma;
pub mod error;
pub mod experiment;
pub mod geometry;
pub mod likelihood;
pub mod oracle;
pub mod plot;
pub mod seed;
pub mod selfcheck;
pub mod signal;

pub use dma::{DmaWeights, Regime};
pub use error::{Error, Result};
pub use geometry::{ArrayLayout, PolarPosition};
pub use likelihood::{SearchGrid, SearchOutcome};
pub use signal::{ArrayModel, GainModel, WaveguideModel};
