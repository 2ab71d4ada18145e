//! Depth-aware atmospheric turbulence degradation.
//!
//! Given a clean image and its relative depth map, the engine synthesizes a
//! turbulent observation: spatially varying blur from sampled Zernike
//! aberrations, pixel displacement from a spectrally shaped tilt field, both
//! scaled per pixel by path-integrated turbulence strength derived from
//! depth. It also emits the backward flow that undoes the displacement, and
//! writes complete training datasets.

pub mod cli;
pub mod config;
pub mod degrade;
pub mod depth;
pub mod diagnostics;
pub mod error;
pub mod flow;
pub mod io;
pub mod metrics;
pub mod pipeline;
pub mod raster;
pub mod reference;
pub mod spectral;
pub mod synthetic;
pub mod tilt;
pub mod zernike;

pub use config::OpticalConfig;
pub use degrade::{degrade_scene, CleanScene, DegradedSample, Engine, SampleParams};
pub use error::{Error, Result};
pub use pipeline::{categorize_strength, StrengthCategory};
