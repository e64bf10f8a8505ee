//! Active gaze exploration of a scene seen through a foveated sensor.
//!
//! Detector scores are calibrated against a per-(class, distance) Dirichlet
//! observation model, fused into a grid of Dirichlet beliefs, and the next
//! fixation is chosen to minimize the expected uncertainty of that grid.

pub mod detection;
pub mod error;
pub mod explore;
pub mod foveation;
pub mod geometry;
pub mod map;
pub mod numeric;
pub mod observation;
pub mod planner;
pub mod synthetic;

pub use error::{Error, Result};
