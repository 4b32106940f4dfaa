//! From an estimated image homography to the 4-DOF servo task.
//!
//! A homography `G` maps target-view pixels to current-view pixels. In
//! normalized coordinates `H = K⁻¹ G K`, and the task error is read off
//! directly, without decomposing `H`:
//!
//! ```text
//! e_v = (H − I) m*          [e_w]× = H − Hᵀ
//! ```
//!
//! Imposing the RCM removes two DOF, so only four components of the camera
//! body error are servoed. Mode `a` keeps the translation and the roll about
//! the optical axis; mode `b` keeps translation along the optical axis and
//! the full rotation.

use std::collections::VecDeque;

use nalgebra::{DMatrix, Matrix3, Matrix6xX, Vector3, Vector4};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::vision::Distortion;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HomographyTaskError {
    #[error("singular homography (|det| = {0:e})")]
    Singular(f64),
    #[error("expected a {expected:?}-space homography")]
    WrongSpace { expected: HomographySpace },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// Pinhole intrinsics (zero skew) plus lens distortion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    #[serde(default)]
    pub distortion: Distortion,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Self {
        Self { fx, fy, cx, cy, distortion: Distortion::default() }
    }

    pub fn with_distortion(mut self, distortion: Distortion) -> Self {
        self.distortion = distortion;
        self
    }

    pub fn is_valid(&self) -> bool {
        self.fx > 0.0 && self.fy > 0.0 && self.fx.is_finite() && self.fy.is_finite() && self.cx.is_finite() && self.cy.is_finite()
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    pub fn inverse_matrix(&self) -> Matrix3<f64> {
        Matrix3::new(
            1.0 / self.fx,
            0.0,
            -self.cx / self.fx,
            0.0,
            1.0 / self.fy,
            -self.cy / self.fy,
            0.0,
            0.0,
            1.0,
        )
    }

    pub fn pixel_to_normalized(&self, p: [f64; 2]) -> [f64; 2] {
        [(p[0] - self.cx) / self.fx, (p[1] - self.cy) / self.fy]
    }

    pub fn normalized_to_pixel(&self, m: [f64; 2]) -> [f64; 2] {
        [self.fx * m[0] + self.cx, self.fy * m[1] + self.cy]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HomographySpace {
    /// `G`, mapping pixel coordinates.
    Pixel,
    /// `H`, mapping normalized image coordinates.
    Normalized,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography {
    pub matrix: Matrix3<f64>,
    pub space: HomographySpace,
}

impl Homography {
    pub fn pixel(matrix: Matrix3<f64>) -> Self {
        Self { matrix, space: HomographySpace::Pixel }
    }

    pub fn normalized(matrix: Matrix3<f64>) -> Self {
        Self { matrix, space: HomographySpace::Normalized }
    }

    /// Maps an inhomogeneous point; `None` when it lands at infinity.
    pub fn transform(&self, p: [f64; 2]) -> Option<[f64; 2]> {
        let v = self.matrix * Vector3::new(p[0], p[1], 1.0);
        if v.z.abs() < 1e-15 || !v.z.is_finite() {
            None
        } else {
            Some([v.x / v.z, v.y / v.z])
        }
    }
}

/// Scales `h` so its middle singular value is 1 and its determinant positive.
pub fn normalize_homography(h: &Matrix3<f64>) -> Result<Matrix3<f64>, HomographyTaskError> {
    let det = h.determinant();
    if !(det.abs() > 1e-12) {
        return Err(HomographyTaskError::Singular(det));
    }
    let mut sv = h.singular_values();
    sv.as_mut_slice().sort_by(|a, b| b.partial_cmp(a).unwrap());
    let scale = sv[1];
    let signed = if det > 0.0 { scale } else { -scale };
    Ok(h / signed)
}

/// `H = K⁻¹ G K`, normalized. Both views share the same intrinsics.
pub fn pixel_to_normalized(g: &Homography, k: &CameraIntrinsics) -> Result<Homography, HomographyTaskError> {
    pixel_to_normalized_between(g, k, k)
}

/// `H = K_current⁻¹ G K_target` for views captured with different crops.
pub fn pixel_to_normalized_between(
    g: &Homography,
    k_current: &CameraIntrinsics,
    k_target: &CameraIntrinsics,
) -> Result<Homography, HomographyTaskError> {
    if g.space != HomographySpace::Pixel {
        return Err(HomographyTaskError::WrongSpace { expected: HomographySpace::Pixel });
    }
    let h = k_current.inverse_matrix() * g.matrix * k_target.matrix();
    Ok(Homography::normalized(normalize_homography(&h)?))
}

/// Which four body-error components are servoed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProjectionMode {
    /// `(e_v_x, e_v_y, e_v_z, e_w_z)`.
    A,
    /// `(e_v_z, e_w_x, e_w_y, e_w_z)`.
    #[default]
    B,
}

impl ProjectionMode {
    /// Indices into the stacked `[e_v; e_w]` body vector.
    pub fn rows(self) -> [usize; 4] {
        match self {
            ProjectionMode::A => [0, 1, 2, 5],
            ProjectionMode::B => [2, 3, 4, 5],
        }
    }

    /// The 4×6 selector matrix.
    pub fn matrix(self) -> nalgebra::SMatrix<f64, 4, 6> {
        let mut p = nalgebra::SMatrix::<f64, 4, 6>::zeros();
        for (r, c) in self.rows().into_iter().enumerate() {
            p[(r, c)] = 1.0;
        }
        p
    }
}

impl std::fmt::Display for ProjectionMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ProjectionMode::A => "a",
            ProjectionMode::B => "b",
        })
    }
}

/// Camera body-frame translational and rotational error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaskError {
    pub e_v: Vector3<f64>,
    pub e_w: Vector3<f64>,
}

impl TaskError {
    pub fn stacked(&self) -> [f64; 6] {
        [self.e_v.x, self.e_v.y, self.e_v.z, self.e_w.x, self.e_w.y, self.e_w.z]
    }

    pub fn project(&self, mode: ProjectionMode) -> Vector4<f64> {
        project_task(&self.e_v, &self.e_w, mode)
    }
}

/// Task error of a normalized homography with respect to reference point `m_star`.
pub fn task_error(h: &Homography, m_star: &Vector3<f64>) -> Result<TaskError, HomographyTaskError> {
    if h.space != HomographySpace::Normalized {
        return Err(HomographyTaskError::WrongSpace { expected: HomographySpace::Normalized });
    }
    let m = &h.matrix;
    let e_v = (m - Matrix3::identity()) * m_star;
    let e_w = Vector3::new(m[(2, 1)] - m[(1, 2)], m[(0, 2)] - m[(2, 0)], m[(1, 0)] - m[(0, 1)]);
    Ok(TaskError { e_v, e_w })
}

pub fn project_task(e_v: &Vector3<f64>, e_w: &Vector3<f64>, mode: ProjectionMode) -> Vector4<f64> {
    let s = [e_v.x, e_v.y, e_v.z, e_w.x, e_w.y, e_w.z];
    let [a, b, c, d] = mode.rows();
    Vector4::new(s[a], s[b], s[c], s[d])
}

/// `P · blockdiag(R_WCᵀ, R_WCᵀ) · J_{i+1}`: the camera Jacobian expressed in
/// the camera body frame, restricted to the servoed rows.
pub fn task_jacobian(j_ip1: &Matrix6xX<f64>, r_wc: &Matrix3<f64>, mode: ProjectionMode) -> DMatrix<f64> {
    let n = j_ip1.ncols();
    let r_cw = r_wc.transpose();
    let lin = r_cw * j_ip1.fixed_rows::<3>(0);
    let ang = r_cw * j_ip1.fixed_rows::<3>(3);
    let mut out = DMatrix::zeros(4, n);
    for (r, src) in mode.rows().into_iter().enumerate() {
        let row = if src < 3 { lin.row(src) } else { ang.row(src - 3) };
        out.row_mut(r).copy_from(&row);
    }
    out
}

/// Fixed-length moving average over 4-vectors; a partial buffer averages
/// over what it holds.
#[derive(Debug, Clone, PartialEq)]
pub struct MovingAverage {
    window: usize,
    buffer: VecDeque<Vector4<f64>>,
}

impl MovingAverage {
    pub const DEFAULT_WINDOW: usize = 10;

    pub fn new(window: usize) -> Self {
        let window = window.max(1);
        Self { window, buffer: VecDeque::with_capacity(window) }
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn len(&self) -> usize {
        self.buffer.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buffer.is_empty()
    }

    pub fn clear(&mut self) {
        self.buffer.clear();
    }

    /// Pushes `e` and returns the mean of the buffer.
    pub fn push(&mut self, e: Vector4<f64>) -> Vector4<f64> {
        if self.buffer.len() == self.window {
            self.buffer.pop_front();
        }
        self.buffer.push_back(e);
        self.buffer.iter().sum::<Vector4<f64>>() / self.buffer.len() as f64
    }
}

/// Pushes `e` into `buffer` and returns the smoothed error.
pub fn smooth_error(buffer: &mut MovingAverage, e: Vector4<f64>) -> Vector4<f64> {
    buffer.push(e)
}
