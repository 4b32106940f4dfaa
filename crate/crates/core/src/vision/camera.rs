//! Synthetic endoscope: a pinhole camera with lens distortion looking at a
//! textured plane through a circular field stop.

use nalgebra::{Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::VisionError;
use crate::homography_task::CameraIntrinsics;
use crate::kinematics::Pose;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneFeature {
    pub id: u32,
    /// In-plane coordinates in meters.
    pub position: [f64; 2],
}

/// Point features on the `z = 0` plane of `plane_pose`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanarScene {
    pub plane_pose: Pose,
    pub features: Vec<SceneFeature>,
    pub seed: u64,
}

impl PlanarScene {
    /// Draws `count` features uniformly over a `extent[0] × extent[1]` m
    /// rectangle centered on the plane origin.
    pub fn generate(plane_pose: Pose, extent: [f64; 2], count: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let features = (0..count)
            .map(|i| SceneFeature {
                id: i as u32,
                position: [
                    rng.random_range(-0.5..0.5) * extent[0],
                    rng.random_range(-0.5..0.5) * extent[1],
                ],
            })
            .collect();
        Self { plane_pose, features, seed }
    }

    pub fn world_point(&self, f: &SceneFeature) -> Point3<f64> {
        self.plane_pose * Point3::new(f.position[0], f.position[1], 0.0)
    }

    /// Unit plane normal in the world frame.
    pub fn normal(&self) -> Vector3<f64> {
        self.plane_pose.rotation * Vector3::z()
    }

    /// Rigidly moves the plane by `motion` (applied in the world frame).
    pub fn moved(&self, motion: &Pose) -> Self {
        Self { plane_pose: motion * self.plane_pose, ..self.clone() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureObservation {
    pub id: u32,
    /// `(u, v)` in pixels.
    pub pixel: [f64; 2],
    pub inside_fov: bool,
}

/// The endoscope's circular image boundary in raw sensor pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FovCircle {
    pub center: [f64; 2],
    pub radius: f64,
}

impl FovCircle {
    pub fn contains(&self, p: [f64; 2]) -> bool {
        let (dx, dy) = (p[0] - self.center[0], p[1] - self.center[1]);
        dx * dx + dy * dy <= self.radius * self.radius
    }
}

/// Pinhole projection of the scene into pixels, distortion applied.
///
/// Features behind the camera, or whose projection cannot be formed, are
/// returned with `inside_fov = false`; `fov = None` accepts every visible point.
pub fn project_scene(
    scene: &PlanarScene,
    camera: &Pose,
    k: &CameraIntrinsics,
    fov: Option<&FovCircle>,
) -> Result<Vec<FeatureObservation>, VisionError> {
    let world_to_camera = camera.inverse();
    let mut any_in_front = false;
    let obs = scene
        .features
        .iter()
        .map(|f| {
            let pc = world_to_camera * scene.world_point(f);
            if pc.z <= 1e-9 {
                return FeatureObservation { id: f.id, pixel: [f64::NAN, f64::NAN], inside_fov: false };
            }
            any_in_front = true;
            let m = k.distortion.distort([pc.x / pc.z, pc.y / pc.z]);
            let pixel = k.normalized_to_pixel(m);
            let inside = pixel.iter().all(|v| v.is_finite()) && fov.is_none_or(|c| c.contains(pixel));
            FeatureObservation { id: f.id, pixel, inside_fov: inside }
        })
        .collect();
    if !any_in_front && !scene.features.is_empty() {
        return Err(VisionError::DegenerateView);
    }
    Ok(obs)
}

/// Intrinsics after cropping at `crop_origin` and rescaling by `scale`.
pub fn crop_rescale_intrinsics(k: &CameraIntrinsics, crop_origin: [f64; 2], scale: f64) -> Result<CameraIntrinsics, VisionError> {
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(VisionError::InvalidParameter(format!("crop scale must be positive, got {scale}")));
    }
    Ok(CameraIntrinsics {
        fx: scale * k.fx,
        fy: scale * k.fy,
        cx: scale * (k.cx - crop_origin[0]),
        cy: scale * (k.cy - crop_origin[1]),
        distortion: k.distortion,
    })
}

/// Rectangle cut out of the raw frame and rescaled to the working resolution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CropWindow {
    /// Top-left corner in raw pixels.
    pub origin: [f64; 2],
    pub scale: f64,
    /// Output size in pixels after rescaling.
    pub size: [f64; 2],
}

impl CropWindow {
    /// Largest rectangle with `aspect = width / height` inside `circle`,
    /// rescaled to `output_width` pixels wide.
    pub fn inscribed(circle: &FovCircle, aspect: f64, output_width: f64) -> Self {
        let diag = (aspect * aspect + 1.0).sqrt();
        let w = 2.0 * circle.radius * aspect / diag;
        let h = 2.0 * circle.radius / diag;
        let scale = output_width / w;
        Self {
            origin: [circle.center[0] - w / 2.0, circle.center[1] - h / 2.0],
            scale,
            size: [output_width, h * scale],
        }
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        p[0] >= 0.0 && p[1] >= 0.0 && p[0] < self.size[0] && p[1] < self.size[1]
    }
}

/// Raw optics plus the preprocessing that produces working images.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EndoscopeCamera {
    /// Sensor intrinsics including distortion.
    pub raw: CameraIntrinsics,
    pub fov: FovCircle,
    pub crop: CropWindow,
}

impl EndoscopeCamera {
    /// 1280×1024 sensor, 480 px field stop, cropped to 4:3 and rescaled to 640×480.
    pub fn default_endoscope() -> Self {
        let raw = CameraIntrinsics::new(700.0, 700.0, 640.0, 512.0).with_distortion(super::Distortion {
            k1: -0.12,
            k2: 0.03,
            p1: 1e-4,
            p2: -2e-4,
            k3: 0.0,
        });
        let fov = FovCircle { center: [640.0, 512.0], radius: 480.0 };
        let crop = CropWindow::inscribed(&fov, 4.0 / 3.0, 640.0);
        Self { raw, fov, crop }
    }

    /// Undistorted intrinsics of the working (cropped, rescaled) image.
    pub fn intrinsics(&self) -> CameraIntrinsics {
        let mut k = crop_rescale_intrinsics(&self.raw, self.crop.origin, self.crop.scale).expect("crop scale validated");
        k.distortion = super::Distortion::default();
        k
    }

    pub fn frame_size(&self) -> [f64; 2] {
        self.crop.size
    }

    /// Renders, undistorts and crops: the observations a feature detector
    /// would return on the working image. Only features inside the field
    /// stop and the crop are kept.
    pub fn observe(&self, scene: &PlanarScene, camera: &Pose) -> Result<Vec<FeatureObservation>, VisionError> {
        let working = self.intrinsics();
        let mut out = Vec::new();
        for obs in project_scene(scene, camera, &self.raw, Some(&self.fov))? {
            if !obs.inside_fov {
                continue;
            }
            let distorted = self.raw.pixel_to_normalized(obs.pixel);
            let m = self.raw.distortion.undistort(distorted)?;
            let pixel = working.normalized_to_pixel(m);
            if self.crop.contains(pixel) {
                out.push(FeatureObservation { id: obs.id, pixel, inside_fov: true });
            }
        }
        Ok(out)
    }
}
