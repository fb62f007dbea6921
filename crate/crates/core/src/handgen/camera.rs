//! The 12-camera semicircle: cameras 1–6 fixed, 7–12 tracking the wrist.
//! World frame is y-up; the ring lies in the x–z plane.

use super::skeleton::{cross, dot, normalize, sub, Vec3};
use crate::error::{Error, Result};

pub const RING_ANGLES_DEG: [f64; 6] = [15.0, 45.0, 75.0, 105.0, 135.0, 165.0];
pub const CAMERA_COUNT: usize = 12;

/// Height of the ring above the world origin (mm).
const RING_HEIGHT: f64 = 80.0;
/// Point the fixed cameras look at.
const FIXED_TARGET: Vec3 = [0.0, 80.0, 0.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CameraKind {
    Fixed,
    Tracking,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Intrinsics {
    pub fn to_array(&self) -> [f64; 4] {
        [self.fx, self.fy, self.cx, self.cy]
    }

    /// Pinhole projection of a camera-frame point.
    pub fn project(&self, p: Vec3) -> [f64; 2] {
        [self.fx * p[0] / p[2] + self.cx, self.fy * p[1] / p[2] + self.cy]
    }
}

/// World → camera transform `p = R (x − c)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extrinsics {
    /// Rows are the camera right, down and forward axes in world coordinates.
    pub rotation: [[f64; 3]; 3],
    pub center: Vec3,
}

impl Extrinsics {
    /// Looks from `center` toward `target` with world +y as up.
    pub fn look_at(center: Vec3, target: Vec3) -> Self {
        let f = normalize(sub(target, center));
        let r = normalize(cross(f, [0.0, 1.0, 0.0]));
        let d = cross(f, r);
        Extrinsics { rotation: [r, d, f], center }
    }

    pub fn to_camera(&self, x: Vec3) -> Vec3 {
        let v = sub(x, self.center);
        [dot(self.rotation[0], v), dot(self.rotation[1], v), dot(self.rotation[2], v)]
    }

    /// Inverse transform `x = Rᵀ p + c`.
    pub fn to_world(&self, p: Vec3) -> Vec3 {
        let r = &self.rotation;
        let mut x = self.center;
        for i in 0..3 {
            for (k, row) in r.iter().enumerate() {
                x[i] += row[i] * p[k];
            }
        }
        x
    }

    /// Translation `t = −R c`.
    pub fn translation(&self) -> Vec3 {
        let t = self.to_camera([0.0; 3]);
        [t[0], t[1], t[2]]
    }

    /// `R` row-major followed by `t`.
    pub fn to_array(&self) -> [f64; 12] {
        let mut out = [0.0; 12];
        for i in 0..3 {
            out[i * 3..i * 3 + 3].copy_from_slice(&self.rotation[i]);
        }
        out[9..].copy_from_slice(&self.translation());
        out
    }

    /// Rebuilds from [`Extrinsics::to_array`] output.
    pub fn from_array(a: &[f64]) -> Self {
        let rotation = [[a[0], a[1], a[2]], [a[3], a[4], a[5]], [a[6], a[7], a[8]]];
        let mut e = Extrinsics { rotation, center: [0.0; 3] };
        // c = −Rᵀ t
        let back = e.to_world([-a[9], -a[10], -a[11]]);
        e.center = back;
        e
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Camera {
    /// 1-based camera id.
    pub id: usize,
    pub kind: CameraKind,
    pub angle_deg: f64,
    pub radius: f64,
    pub intrinsics: Intrinsics,
}

impl Camera {
    /// Camera `id` (1–12) for square images of side `resolution`.
    pub fn new(id: usize, resolution: usize) -> Result<Self> {
        if !(1..=CAMERA_COUNT).contains(&id) {
            return Err(Error::config(format!("camera id {id} outside 1..={CAMERA_COUNT}")));
        }
        let (kind, radius, focal) = if id <= 6 {
            (CameraKind::Fixed, 600.0, 1.1)
        } else {
            (CameraKind::Tracking, 400.0, 0.95)
        };
        let res = resolution as f64;
        Ok(Camera {
            id,
            kind,
            angle_deg: RING_ANGLES_DEG[(id - 1) % 6],
            radius,
            intrinsics: Intrinsics { fx: focal * res, fy: focal * res, cx: res / 2.0, cy: res / 2.0 },
        })
    }

    pub fn position(&self) -> Vec3 {
        let a = self.angle_deg.to_radians();
        [self.radius * a.cos(), RING_HEIGHT, self.radius * a.sin()]
    }

    /// Extrinsics for a frame whose wrist is at `wrist`.
    pub fn extrinsics(&self, wrist: Vec3) -> Extrinsics {
        let target = match self.kind {
            CameraKind::Fixed => FIXED_TARGET,
            CameraKind::Tracking => wrist,
        };
        Extrinsics::look_at(self.position(), target)
    }

    pub fn with_radius(mut self, radius: f64) -> Self {
        self.radius = radius;
        self
    }
}

/// Camera-frame joints and their pixels; fails if any joint is not in front.
pub fn project(world: &[Vec3], extrinsics: &Extrinsics, intrinsics: &Intrinsics) -> Result<(Vec<Vec3>, Vec<[f64; 2]>)> {
    let cam: Vec<Vec3> = world.iter().map(|&x| extrinsics.to_camera(x)).collect();
    if let Some(j) = cam.iter().position(|p| p[2] <= 0.0) {
        return Err(Error::Visibility(format!("joint {j} has non-positive depth {}", cam[j][2])));
    }
    let px = cam.iter().map(|&p| intrinsics.project(p)).collect();
    Ok((cam, px))
}
