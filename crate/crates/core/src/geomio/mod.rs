//! Interchange formats: point clouds, images, pose trajectories.
//!
//! Byte layouts are documented in `docs/formats.md`.

mod cloud;
mod image;
mod pose;

pub use cloud::{
    load_point_cloud, load_point_cloud_auto, majority_label, save_point_cloud, subsample_density,
    voxel_edge_for_density, CloudFormat, PointCloud,
};
pub use image::{
    decode_image, encode_image, load_image, save_image, save_image_auto, Image, ImageFormat, PixelData,
};
pub use pose::{
    format_pose_seq, load_pose_seq, parse_pose_seq, quat_from_xyzw, save_pose_seq, Pose, PoseSeq,
    QUAT_REJECT_TOL, QUAT_WARN_TOL,
};

#[derive(Debug, thiserror::Error)]
pub enum GeomIoError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("format: {0}")]
    Format(String),
    #[error("element '{element}' declares {expected} rows but only {found} are present")]
    Truncated { element: String, expected: usize, found: usize },
    #[error("image payload truncated: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: usize, found: usize },
    #[error("point {index} has a non-finite coordinate")]
    NonFinite { index: usize },
    #[error("{labels} labels for {points} points")]
    LabelCount { points: usize, labels: usize },
    #[error("timestamp {t} at entry {index} does not increase past {prev}")]
    NonIncreasingTime { index: usize, prev: f64, t: f64 },
    #[error("depth pixel {index} holds {value}; depth must be > 0 or +inf")]
    InvalidDepth { index: usize, value: f32 },
    #[error("point cloud is empty")]
    EmptyCloud,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

impl GeomIoError {
    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        GeomIoError::Parse { line, msg: msg.into() }
    }
}
