//! Stitching video stabilizer and hyperlapse planner.

// Negated float comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod exec;
pub mod frame;
pub mod filter;
pub mod geometry;
pub mod hyperlapse;
pub mod io;
pub mod metrics;
pub mod motion;
pub mod pipeline;
pub mod rolling_shutter;
pub mod seam;
pub mod sidecar;
pub mod synth;
pub mod warp;

pub use error::{Error, Result};
pub use exec::Exec;
pub use frame::{Frame, Plane};
pub use geometry::{Angles, CameraParams, Homography, Point, Quad};
