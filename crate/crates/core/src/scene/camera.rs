//! Pinhole camera. Camera space follows the computer-vision convention:
//! +x right, +y down, +z forward.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{Vec3, UNIT_TOL};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    pub dir: Vec3,
    pub t_min: f64,
    pub t_max: f64,
}

impl Ray {
    pub fn new(origin: Vec3, dir: Vec3) -> Ray {
        Ray { origin, dir, t_min: 0.0, t_max: f64::INFINITY }
    }

    pub fn with_range(origin: Vec3, dir: Vec3, t_min: f64, t_max: f64) -> Ray {
        Ray { origin, dir, t_min, t_max }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.dir.is_unit() {
            return Err(Error::InvalidArgument("ray direction is not unit length".into()));
        }
        if !(self.t_min >= 0.0 && self.t_min < self.t_max) {
            return Err(Error::InvalidArgument(format!("bad ray range [{}, {}]", self.t_min, self.t_max)));
        }
        Ok(())
    }

    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.dir * t
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl Intrinsics {
    /// Square pixels with the principal point at the image center.
    pub fn from_fov(width: u32, height: u32, vertical_fov_deg: f64) -> Intrinsics {
        let f = 0.5 * height as f64 / (0.5 * vertical_fov_deg.to_radians()).tan();
        Intrinsics { fx: f, fy: f, cx: 0.5 * width as f64, cy: 0.5 * height as f64, width, height }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Camera {
    /// Camera-to-world rotation, row-major. Columns are the camera axes in world space.
    pub rotation: [[f64; 3]; 3],
    /// Camera center in world space.
    pub translation: Vec3,
    pub intrinsics: Intrinsics,
}

impl Camera {
    pub fn new(rotation: [[f64; 3]; 3], translation: Vec3, intrinsics: Intrinsics) -> Result<Camera> {
        let cam = Camera { rotation, translation, intrinsics };
        cam.validate()?;
        Ok(cam)
    }

    /// Camera at `eye` looking at `target`; `up` is the approximate world up.
    pub fn look_at(eye: Vec3, target: Vec3, up: Vec3, intrinsics: Intrinsics) -> Result<Camera> {
        let forward = (target - eye)
            .try_normalize()
            .ok_or_else(|| Error::InvalidArgument("look_at target coincides with eye".into()))?;
        let right = forward
            .cross(up)
            .try_normalize()
            .ok_or_else(|| Error::InvalidArgument("look_at up is parallel to view direction".into()))?;
        // +y is down in camera space
        let down = forward.cross(right);
        let rotation = [
            [right.x, down.x, forward.x],
            [right.y, down.y, forward.y],
            [right.z, down.z, forward.z],
        ];
        Camera::new(rotation, eye, intrinsics)
    }

    /// From a row-major 4x4 camera-to-world matrix.
    pub fn from_matrix(m: [[f64; 4]; 4], intrinsics: Intrinsics) -> Result<Camera> {
        let rotation = [
            [m[0][0], m[0][1], m[0][2]],
            [m[1][0], m[1][1], m[1][2]],
            [m[2][0], m[2][1], m[2][2]],
        ];
        if m[3] != [0.0, 0.0, 0.0, 1.0] {
            return Err(Error::InvalidArgument("pose matrix bottom row must be [0, 0, 0, 1]".into()));
        }
        Camera::new(rotation, Vec3::new(m[0][3], m[1][3], m[2][3]), intrinsics)
    }

    pub fn to_matrix(&self) -> [[f64; 4]; 4] {
        let r = &self.rotation;
        let t = self.translation;
        [
            [r[0][0], r[0][1], r[0][2], t.x],
            [r[1][0], r[1][1], r[1][2], t.y],
            [r[2][0], r[2][1], r[2][2], t.z],
            [0.0, 0.0, 0.0, 1.0],
        ]
    }

    pub fn validate(&self) -> Result<()> {
        let i = &self.intrinsics;
        if !(i.fx > 0.0 && i.fy > 0.0) || i.width == 0 || i.height == 0 {
            return Err(Error::InvalidArgument("camera intrinsics need fx, fy > 0 and a non-empty image".into()));
        }
        let cols = [self.axis(0), self.axis(1), self.axis(2)];
        for (a, ca) in cols.iter().enumerate() {
            if !ca.is_unit() {
                return Err(Error::InvalidArgument("camera rotation columns must be unit length".into()));
            }
            for cb in cols.iter().skip(a + 1) {
                if ca.dot(*cb).abs() > UNIT_TOL {
                    return Err(Error::InvalidArgument("camera rotation is not orthonormal".into()));
                }
            }
        }
        if cols[0].cross(cols[1]).dot(cols[2]) < 0.0 {
            return Err(Error::InvalidArgument("camera rotation is a reflection".into()));
        }
        if !self.translation.is_finite() {
            return Err(Error::InvalidArgument("camera translation is not finite".into()));
        }
        Ok(())
    }

    /// Camera axis `i` (0 right, 1 down, 2 forward) in world space.
    pub fn axis(&self, i: usize) -> Vec3 {
        let r = &self.rotation;
        Vec3::new(r[0][i], r[1][i], r[2][i])
    }

    pub fn center(&self) -> Vec3 {
        self.translation
    }

    pub fn forward(&self) -> Vec3 {
        self.axis(2)
    }

    pub fn width(&self) -> u32 {
        self.intrinsics.width
    }

    pub fn height(&self) -> u32 {
        self.intrinsics.height
    }

    /// Primary ray through image-plane point `(px + u, py + v)`.
    pub fn generate_ray(&self, px: u32, py: u32, jitter: (f64, f64)) -> Result<Ray> {
        let i = &self.intrinsics;
        if px >= i.width || py >= i.height {
            return Err(Error::InvalidArgument(format!(
                "pixel ({px}, {py}) outside {}x{} image",
                i.width, i.height
            )));
        }
        Ok(self.ray_through(px as f64 + jitter.0, py as f64 + jitter.1))
    }

    /// Ray through continuous image coordinates, no range check.
    pub fn ray_through(&self, sx: f64, sy: f64) -> Ray {
        let i = &self.intrinsics;
        let local = Vec3::new((sx - i.cx) / i.fx, (sy - i.cy) / i.fy, 1.0);
        let dir = (self.axis(0) * local.x + self.axis(1) * local.y + self.axis(2) * local.z).normalize();
        Ray::new(self.translation, dir)
    }

    /// Continuous image coordinates of a world point, `None` behind the camera.
    pub fn project(&self, p: Vec3) -> Option<(f64, f64)> {
        let d = p - self.translation;
        let local = Vec3::new(d.dot(self.axis(0)), d.dot(self.axis(1)), d.dot(self.axis(2)));
        if local.z <= 0.0 {
            return None;
        }
        let i = &self.intrinsics;
        Some((i.fx * local.x / local.z + i.cx, i.fy * local.y / local.z + i.cy))
    }
}
