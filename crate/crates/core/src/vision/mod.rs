//! Desk-scale stand-in for the endoscopic image pipeline: rendering of a
//! planar feature scene, lens distortion, crop geometry, corrupted matching
//! and homography estimation.

mod camera;
mod distortion;
mod homography;
mod matching;

pub use camera::{
    crop_rescale_intrinsics, project_scene, CropWindow, EndoscopeCamera, FeatureObservation, FovCircle, PlanarScene,
    SceneFeature,
};
pub use distortion::Distortion;
pub use homography::{
    estimate_homography_dlt, estimate_homography_dlt_matches, estimate_homography_ransac,
    estimate_homography_ransac_matches, reprojection_error, RansacParams, RansacResult,
};
pub use matching::{match_views, mean_pairwise_distance, Corruption, FeatureMatch, MatchSet};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VisionError {
    #[error("degenerate view: no scene point lies in front of the camera")]
    DegenerateView,
    #[error("undistortion of {point:?} did not converge after {iterations} iterations (residual {residual:e})")]
    UndistortDiverged { point: [f64; 2], iterations: usize, residual: f64 },
    #[error("insufficient features: need {needed}, got {got}")]
    InsufficientFeatures { needed: usize, got: usize },
    #[error("degenerate configuration: {0}")]
    Degenerate(String),
    #[error("homography estimation failed ({inliers} inliers)")]
    EstimationFailed { inliers: usize },
    #[error("metric undefined on an empty set")]
    EmptyMetric,
    #[error("point sets differ in length ({left} vs {right})")]
    LengthMismatch { left: usize, right: usize },
    #[error("a point maps to infinity")]
    PointAtInfinity,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}
