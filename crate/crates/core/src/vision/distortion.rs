use serde::{Deserialize, Serialize};

use super::VisionError;

/// Five-coefficient radial-tangential (Brown–Conrady) lens model acting on
/// normalized image coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Distortion {
    #[serde(default)]
    pub k1: f64,
    #[serde(default)]
    pub k2: f64,
    #[serde(default)]
    pub p1: f64,
    #[serde(default)]
    pub p2: f64,
    #[serde(default)]
    pub k3: f64,
}

impl Distortion {
    pub const MAX_ITERATIONS: usize = 20;
    pub const TOLERANCE: f64 = 1e-10;

    pub fn radial(k1: f64, k2: f64) -> Self {
        Self { k1, k2, ..Self::default() }
    }

    pub fn is_identity(&self) -> bool {
        *self == Self::default()
    }

    fn tangential(&self, x: f64, y: f64, r2: f64) -> (f64, f64) {
        (
            2.0 * self.p1 * x * y + self.p2 * (r2 + 2.0 * x * x),
            self.p1 * (r2 + 2.0 * y * y) + 2.0 * self.p2 * x * y,
        )
    }

    fn radial_factor(&self, r2: f64) -> f64 {
        1.0 + r2 * (self.k1 + r2 * (self.k2 + r2 * self.k3))
    }

    pub fn distort(&self, p: [f64; 2]) -> [f64; 2] {
        let [x, y] = p;
        let r2 = x * x + y * y;
        let radial = self.radial_factor(r2);
        let (dx, dy) = self.tangential(x, y, r2);
        [x * radial + dx, y * radial + dy]
    }

    /// Inverts [`Distortion::distort`] by fixed-point iteration.
    pub fn undistort(&self, p: [f64; 2]) -> Result<[f64; 2], VisionError> {
        if self.is_identity() {
            return Ok(p);
        }
        let [xd, yd] = p;
        let (mut x, mut y) = (xd, yd);
        let mut residual = f64::INFINITY;
        for _ in 0..Self::MAX_ITERATIONS {
            let r2 = x * x + y * y;
            let radial = self.radial_factor(r2);
            let (dx, dy) = self.tangential(x, y, r2);
            x = (xd - dx) / radial;
            y = (yd - dy) / radial;
            let [rx, ry] = self.distort([x, y]);
            residual = ((rx - xd).powi(2) + (ry - yd).powi(2)).sqrt();
            if residual <= Self::TOLERANCE {
                return Ok([x, y]);
            }
        }
        Err(VisionError::UndistortDiverged { point: p, iterations: Self::MAX_ITERATIONS, residual })
    }
}
