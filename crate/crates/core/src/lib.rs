//! Hybrid range/bearing localization: a semidefinite relaxation for a single
//! source, a first-order method for cooperative networks, local refinement,
//! camera-to-range-frame calibration and a Monte Carlo harness.

pub mod eigen;
pub mod error;
pub mod floris;
pub mod geometry;
pub mod calib;
pub mod cloris;
pub mod model;
pub mod network;
pub mod refine;
pub mod report;
pub mod sdp;
pub mod simlab;

pub use error::{Error, Result};
pub use geometry::{Bearing, Position};

/// The guide's code blocks, compiled and run as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/geometry.md")]
    mod geometry {}
    #[doc = include_str!("../../../book/src/scenarios.md")]
    mod scenarios {}
    #[doc = include_str!("../../../book/src/floris.md")]
    mod floris {}
    #[doc = include_str!("../../../book/src/cloris.md")]
    mod cloris {}
    #[doc = include_str!("../../../book/src/refinement.md")]
    mod refinement {}
    #[doc = include_str!("../../../book/src/calibration.md")]
    mod calibration {}
    #[doc = include_str!("../../../book/src/benchmarks.md")]
    mod benchmarks {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
