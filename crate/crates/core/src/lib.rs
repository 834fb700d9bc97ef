//! Trajectory generation and ground-truth derivation for robot perception
//! datasets: traversability tomograms, path planning, trajectory sampling,
//! cubemap view resampling, derived labels and evaluation metrics.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod camview;
pub mod dense;
pub mod derived;
pub mod geomio;
pub mod occupancy;
pub mod planner;
pub mod sampler;
pub mod slam_eval;
pub mod synth;
pub mod tomogram;
pub mod verify;

pub use geomio::{GeomIoError, Image, PointCloud, Pose, PoseSeq};
pub use tomogram::{CellId, RobotSpec, Tomogram};
