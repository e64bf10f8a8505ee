//! World/retinal coordinates and distance-to-fovea binning.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point in world pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

impl From<(f64, f64)> for Point {
    fn from((x, y): (f64, f64)) -> Self {
        Self { x, y }
    }
}

/// Current fixation and time step of the observer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GazeState {
    pub fixation: Point,
    pub step: usize,
}

impl GazeState {
    /// Fails when the fixation lies outside a `width` × `height` image.
    pub fn new(fixation: Point, step: usize, width: u32, height: u32) -> Result<Self> {
        if !in_bounds(fixation, width, height) {
            return Err(Error::Contract(format!(
                "fixation ({}, {}) outside {width}x{height} image",
                fixation.x, fixation.y
            )));
        }
        Ok(Self { fixation, step })
    }

    /// Gaze without a bounds check, for callers that already validated it.
    pub const fn at(fixation: Point) -> Self {
        Self { fixation, step: 0 }
    }
}

pub(crate) fn in_bounds(p: Point, width: u32, height: u32) -> bool {
    p.x >= 0.0 && p.y >= 0.0 && p.x <= (width as f64 - 1.0).max(0.0) && p.y <= (height as f64 - 1.0).max(0.0)
}

/// Retinal coordinates `(x − x_t, y − y_t)`.
pub fn to_local(world: Point, gaze: &GazeState) -> (f64, f64) {
    (world.x - gaze.fixation.x, world.y - gaze.fixation.y)
}

/// Euclidean distance between a world point and the fixation.
pub fn fovea_distance(world: Point, gaze: &GazeState) -> f64 {
    let (u, v) = to_local(world, gaze);
    u.hypot(v)
}

pub const DEFAULT_NUM_BINS: usize = 7;

/// Partition of fovea distances into levels.
///
/// `edges[b]` is the upper radius of bin `b`; the last edge covers at least
/// half the image diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceBinning {
    edges: Vec<f64>,
}

impl DistanceBinning {
    pub fn new(edges: Vec<f64>) -> Result<Self> {
        if edges.is_empty() {
            return Err(Error::Validation("binning needs at least one edge".into()));
        }
        if edges.iter().any(|e| !e.is_finite() || *e <= 0.0) {
            return Err(Error::Validation(format!("bin edges must be positive: {edges:?}")));
        }
        if edges.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Validation(format!(
                "bin edges must be strictly increasing: {edges:?}"
            )));
        }
        Ok(Self { edges })
    }

    /// `num_bins` equal-width bins over `[0, max_radius]`.
    pub fn uniform(num_bins: usize, max_radius: f64) -> Self {
        assert!(num_bins >= 1 && max_radius > 0.0);
        let width = max_radius / num_bins as f64;
        Self {
            edges: (1..=num_bins).map(|b| width * b as f64).collect(),
        }
    }

    /// Seven uniform bins up to half the image diagonal.
    pub fn for_image(width: u32, height: u32) -> Self {
        Self::uniform(DEFAULT_NUM_BINS, half_diagonal(width, height))
    }

    pub fn num_bins(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn max_radius(&self) -> f64 {
        *self.edges.last().expect("non-empty")
    }

    /// Index of the first edge ≥ `distance`, clamped to the last bin.
    pub fn bin_of(&self, distance: f64) -> usize {
        let idx = self.edges.partition_point(|e| *e < distance);
        idx.min(self.edges.len() - 1)
    }
}

pub fn half_diagonal(width: u32, height: u32) -> f64 {
    0.5 * (width as f64).hypot(height as f64)
}
