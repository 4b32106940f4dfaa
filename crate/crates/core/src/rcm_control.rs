//! Remote-center-of-motion constraint and the composite-Jacobian PID law.
//!
//! The RCM point is parameterized along the endoscope shaft as
//! `x_rcm = x_i + λ (x_{i+1} − x_i)`. The controller stacks a task Jacobian
//! on top of the RCM Jacobian and inverts the stack with a damped
//! least-squares pseudo-inverse:
//!
//! ```text
//! [q̇; λ̇] = J_cp^# (Kp e + Ki ∫e + Kd ė),   e = [e_task; x_trocar − x_rcm]
//! ```

use nalgebra::{DMatrix, DVector, Matrix3xX, Vector3};
use thiserror::Error;

/// Damping of the least-squares pseudo-inverse.
pub const DEFAULT_DAMPING: f64 = 5e-4;
/// Per-channel bound on the integral accumulator.
pub const DEFAULT_INTEGRAL_CLAMP: f64 = 10.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RcmError {
    #[error("degenerate endoscope geometry: x_i and x_i+1 coincide")]
    DegenerateGeometry,
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch { what: &'static str, expected: usize, got: usize },
    #[error("non-finite {what} error input at channel {channel}: {value}")]
    NonFinite { what: &'static str, channel: usize, value: f64 },
    #[error("invalid controller parameter: {0}")]
    InvalidParameter(String),
}

/// Trocar, entry-depth parameter and the resulting RCM point and error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RcmState {
    pub x_trocar: Vector3<f64>,
    pub lambda: f64,
    pub x_rcm: Vector3<f64>,
    /// `x_trocar − x_rcm`.
    pub e_rcm: Vector3<f64>,
}

impl RcmState {
    /// Projects the trocar onto the shaft and derives the RCM point from it.
    pub fn from_geometry(x_i: &Vector3<f64>, x_ip1: &Vector3<f64>, x_trocar: &Vector3<f64>) -> Result<Self, RcmError> {
        let lambda = lambda_projection(x_i, x_ip1, x_trocar)?;
        let x_rcm = rcm_point(x_i, x_ip1, lambda);
        Ok(Self { x_trocar: *x_trocar, lambda, x_rcm, e_rcm: x_trocar - x_rcm })
    }
}

/// Entry-depth parameter of the trocar's orthogonal projection onto the
/// shaft line. Not clamped.
pub fn lambda_projection(x_i: &Vector3<f64>, x_ip1: &Vector3<f64>, x_trocar: &Vector3<f64>) -> Result<f64, RcmError> {
    let shaft = x_ip1 - x_i;
    let len2 = shaft.norm_squared();
    if len2 == 0.0 || !len2.is_finite() {
        return Err(RcmError::DegenerateGeometry);
    }
    Ok(shaft.dot(&(x_trocar - x_i)) / len2)
}

pub fn rcm_point(x_i: &Vector3<f64>, x_ip1: &Vector3<f64>, lambda: f64) -> Vector3<f64> {
    x_i + (x_ip1 - x_i) * lambda
}

/// 3×(n+1) Jacobian mapping `[q̇; λ̇]` to the RCM point velocity.
pub fn rcm_jacobian(
    jv_i: &Matrix3xX<f64>,
    jv_ip1: &Matrix3xX<f64>,
    lambda: f64,
    x_i: &Vector3<f64>,
    x_ip1: &Vector3<f64>,
) -> Result<Matrix3xX<f64>, RcmError> {
    let n = jv_i.ncols();
    if jv_ip1.ncols() != n {
        return Err(RcmError::DimensionMismatch { what: "rcm_jacobian columns", expected: n, got: jv_ip1.ncols() });
    }
    let mut j = Matrix3xX::zeros(n + 1);
    j.columns_mut(0, n).copy_from(&(jv_i + (jv_ip1 - jv_i) * lambda));
    j.column_mut(n).copy_from(&(x_ip1 - x_i));
    Ok(j)
}

/// Stacks `[J_t | 0]` over `J_rcm` into an (n_t+3)×(n+1) matrix.
pub fn composite_jacobian(j_task: &DMatrix<f64>, j_rcm: &Matrix3xX<f64>) -> Result<DMatrix<f64>, RcmError> {
    let n = j_task.ncols();
    if j_rcm.ncols() != n + 1 {
        return Err(RcmError::DimensionMismatch { what: "composite_jacobian columns", expected: n + 1, got: j_rcm.ncols() });
    }
    let nt = j_task.nrows();
    let mut j = DMatrix::zeros(nt + 3, n + 1);
    j.view_mut((0, 0), (nt, n)).copy_from(j_task);
    j.view_mut((nt, 0), (3, n + 1)).copy_from(j_rcm);
    Ok(j)
}

/// Damped least-squares pseudo-inverse `V diag(σ/(σ²+μ²)) Uᵀ`.
pub fn damped_pseudoinverse(j: &DMatrix<f64>, damping: f64) -> DMatrix<f64> {
    let (m, k) = j.shape();
    if m == 0 || k == 0 {
        return DMatrix::zeros(k, m);
    }
    let svd = j.clone().svd(true, true);
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested Vᵀ");
    let mu2 = damping * damping;
    let scaled = svd.singular_values.map(|s| if s == 0.0 && mu2 == 0.0 { 0.0 } else { s / (s * s + mu2) });
    v_t.transpose() * DMatrix::from_diagonal(&scaled) * u.transpose()
}

/// Diagonals of the proportional, integral and derivative gain matrices,
/// task channels first, then the three RCM channels.
#[derive(Debug, Clone, PartialEq)]
pub struct PidGains {
    pub kp: DVector<f64>,
    pub ki: DVector<f64>,
    pub kd: DVector<f64>,
}

impl PidGains {
    pub fn new(kp: DVector<f64>, ki: DVector<f64>, kd: DVector<f64>) -> Result<Self, RcmError> {
        let n = kp.len();
        for (what, v) in [("ki", &ki), ("kd", &kd)] {
            if v.len() != n {
                return Err(RcmError::DimensionMismatch { what, expected: n, got: v.len() });
            }
        }
        if kp.iter().chain(ki.iter()).chain(kd.iter()).any(|g| !(*g >= 0.0) || !g.is_finite()) {
            return Err(RcmError::InvalidParameter("gains must be finite and non-negative".into()));
        }
        Ok(Self { kp, ki, kd })
    }

    /// Gains tuned on a 7-DOF arm with 4 task channels.
    pub fn servo_defaults() -> Self {
        Self {
            kp: DVector::from_column_slice(&[1.2, 1.5, 1.5, 1.8, 1e2, 1e2, 1e2]),
            ki: DVector::from_column_slice(&[3e-3, 2.5e-3, 2.5e-3, 1.5e-3, 0.0, 0.0, 0.0]),
            kd: DVector::from_column_slice(&[6e-2, 5e-2, 5e-2, 3e-2, 0.0, 0.0, 0.0]),
        }
    }

    /// Pure proportional pass-through for `task_channels` task channels and
    /// `rcm_gain` on the RCM rows.
    pub fn proportional(task_channels: usize, task_gain: f64, rcm_gain: f64) -> Self {
        let n = task_channels + 3;
        let kp = DVector::from_fn(n, |i, _| if i < task_channels { task_gain } else { rcm_gain });
        Self { kp, ki: DVector::zeros(n), kd: DVector::zeros(n) }
    }

    pub fn channels(&self) -> usize {
        self.kp.len()
    }
}

/// Integrator and derivative memory of one PID instance.
#[derive(Debug, Clone, PartialEq)]
pub struct PidState {
    integral: DVector<f64>,
    previous: Option<DVector<f64>>,
    integral_clamp: f64,
    dt: f64,
}

impl PidState {
    pub fn new(channels: usize, dt: f64, integral_clamp: f64) -> Result<Self, RcmError> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(RcmError::InvalidParameter(format!("dt must be positive, got {dt}")));
        }
        if !(integral_clamp >= 0.0) {
            return Err(RcmError::InvalidParameter(format!("integral clamp must be non-negative, got {integral_clamp}")));
        }
        Ok(Self { integral: DVector::zeros(channels), previous: None, integral_clamp, dt })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn integral(&self) -> &DVector<f64> {
        &self.integral
    }

    pub fn reset(&mut self) {
        self.integral.fill(0.0);
        self.previous = None;
    }
}

/// Joint and entry-depth rates produced by one controller step.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlOutput {
    pub q_dot: DVector<f64>,
    pub lambda_dot: f64,
}

/// One PID update through the damped pseudo-inverse of `j_cp`.
pub fn pid_step(
    state: &mut PidState,
    gains: &PidGains,
    damping: f64,
    j_cp: &DMatrix<f64>,
    e_task: &DVector<f64>,
    e_rcm: &Vector3<f64>,
) -> Result<ControlOutput, RcmError> {
    let channels = e_task.len() + 3;
    if j_cp.nrows() != channels {
        return Err(RcmError::DimensionMismatch { what: "composite Jacobian rows", expected: channels, got: j_cp.nrows() });
    }
    if gains.channels() != channels {
        return Err(RcmError::DimensionMismatch { what: "gain channels", expected: channels, got: gains.channels() });
    }
    if state.integral.len() != channels {
        return Err(RcmError::DimensionMismatch { what: "PID state channels", expected: channels, got: state.integral.len() });
    }
    if j_cp.ncols() < 2 {
        return Err(RcmError::DimensionMismatch { what: "composite Jacobian columns", expected: 2, got: j_cp.ncols() });
    }
    if !(damping >= 0.0) {
        return Err(RcmError::InvalidParameter(format!("damping must be non-negative, got {damping}")));
    }
    for (i, v) in e_task.iter().enumerate() {
        if !v.is_finite() {
            return Err(RcmError::NonFinite { what: "task", channel: i, value: *v });
        }
    }
    for (i, v) in e_rcm.iter().enumerate() {
        if !v.is_finite() {
            return Err(RcmError::NonFinite { what: "rcm", channel: i, value: *v });
        }
    }

    let mut e = DVector::zeros(channels);
    e.rows_mut(0, e_task.len()).copy_from(e_task);
    e.rows_mut(e_task.len(), 3).copy_from(e_rcm);

    let clamp = state.integral_clamp;
    state.integral.zip_apply(&e, |acc, ei| *acc = (*acc + ei * state.dt).clamp(-clamp, clamp));
    let derivative = match &state.previous {
        Some(prev) => (&e - prev) / state.dt,
        None => DVector::zeros(channels),
    };

    let command = gains.kp.component_mul(&e) + gains.ki.component_mul(&state.integral) + gains.kd.component_mul(&derivative);
    let out = damped_pseudoinverse(j_cp, damping) * command;
    state.previous = Some(e);

    let n = out.len() - 1;
    Ok(ControlOutput { q_dot: out.rows(0, n).into_owned(), lambda_dot: out[n] })
}
