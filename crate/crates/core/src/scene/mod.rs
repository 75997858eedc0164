//! Scene representation and geometric queries.

pub mod builtin;
pub mod bvh;
pub mod camera;
pub mod mesh;
pub mod sdf;

use serde::{Deserialize, Serialize};

use crate::brdf::{PrincipledParams, SurfaceMaterial};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::math::{Aabb, Rgb, Vec3};

pub use bvh::Bvh;
pub use camera::{Camera, Intrinsics, Ray};
pub use mesh::TriangleMesh;
pub use sdf::DenseSdfGrid;

/// Minimum distance between the flashlight and any surface (m).
pub const LIGHT_CLEARANCE: f64 = 1e-4;

/// Shadow epsilon relative to the scene diagonal.
pub const SHADOW_EPS_SCALE: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Flashlight {
    /// Isotropic radiant intensity (W/sr).
    pub intensity: Rgb,
    /// World-space offset of the light from the camera center (m).
    #[serde(default)]
    pub offset: Vec3,
}

impl Flashlight {
    pub fn new(intensity: Rgb) -> Flashlight {
        Flashlight { intensity, offset: Vec3::ZERO }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.intensity.is_finite() || self.intensity.min_component() < 0.0 {
            return Err(Error::InvalidScene("flashlight intensity must be finite and non-negative".into()));
        }
        if !self.offset.is_finite() {
            return Err(Error::InvalidScene("flashlight offset must be finite".into()));
        }
        Ok(())
    }

    pub fn position_for(&self, camera: &Camera) -> Vec3 {
        camera.center() + self.offset
    }
}

/// Per-face materials plus the scene-wide specular level.
#[derive(Clone, Debug, PartialEq)]
pub struct Materials {
    pub specular: f64,
    pub faces: Vec<SurfaceMaterial>,
}

impl Materials {
    pub fn uniform(face_count: usize, material: SurfaceMaterial, specular: f64) -> Materials {
        Materials { specular, faces: vec![material; face_count] }
    }

    #[inline]
    pub fn params(&self, face: usize) -> PrincipledParams {
        PrincipledParams::new(self.faces[face], self.specular)
    }

    pub fn validate(&self, face_count: usize) -> Result<()> {
        if self.faces.len() != face_count {
            return Err(Error::InvalidScene(format!(
                "{} face materials for {face_count} faces",
                self.faces.len()
            )));
        }
        if !(self.specular >= 0.0 && self.specular.is_finite()) {
            return Err(Error::InvalidScene("specular must be finite and non-negative".into()));
        }
        for (f, m) in self.faces.iter().enumerate() {
            let ok = m.albedo.is_finite()
                && m.albedo.min_component() >= 0.0
                && m.albedo.max_component() <= 1.0
                && (0.0..=1.0).contains(&m.roughness);
            if !ok {
                return Err(Error::InvalidScene(format!("face {f} material out of [0, 1]")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hit {
    pub position: Vec3,
    /// Geometric normal, flipped to face the incoming ray.
    pub geo_normal: Vec3,
    /// Shading normal, in the same hemisphere as `geo_normal`.
    pub normal: Vec3,
    pub t: f64,
    pub face: u32,
    pub material_id: u32,
    pub segment_id: u32,
}

#[derive(Clone, Debug)]
pub struct Scene {
    pub name: String,
    pub mesh: TriangleMesh,
    pub bvh: Bvh,
    pub materials: Materials,
    pub flashlight: Flashlight,
    pub cameras: Vec<Camera>,
    pub sdf: Option<DenseSdfGrid>,
    pub bounds: Aabb,
    pub shadow_eps: f64,
}

impl Scene {
    pub fn new(
        name: impl Into<String>,
        mesh: TriangleMesh,
        materials: Materials,
        flashlight: Flashlight,
        cameras: Vec<Camera>,
        sdf: Option<DenseSdfGrid>,
    ) -> Result<Scene> {
        mesh.validate()?;
        materials.validate(mesh.face_count())?;
        flashlight.validate()?;
        for c in &cameras {
            c.validate()?;
        }
        let bvh = Bvh::build(&mesh);
        let bounds = mesh.bounds();
        let shadow_eps = SHADOW_EPS_SCALE * bounds.diagonal();
        Ok(Scene { name: name.into(), mesh, bvh, materials, flashlight, cameras, sdf, bounds, shadow_eps })
    }

    pub fn face_count(&self) -> usize {
        self.mesh.face_count()
    }

    /// Same scene with different per-face materials.
    pub fn with_materials(&self, materials: Materials) -> Result<Scene> {
        materials.validate(self.face_count())?;
        Ok(Scene { materials, ..self.clone() })
    }

    pub fn intersect(&self, ray: &Ray) -> Option<Hit> {
        let raw = self.bvh.intersect(&self.mesh, ray.origin, ray.dir, ray.t_min, ray.t_max)?;
        Some(self.make_hit(ray.dir, raw.t, raw.face as usize, raw.u, raw.v))
    }

    /// Reference intersector over every triangle.
    pub fn intersect_brute_force(&self, ray: &Ray) -> Option<Hit> {
        let raw = bvh::brute_force_intersect(&self.mesh, ray.origin, ray.dir, ray.t_min, ray.t_max)?;
        Some(self.make_hit(ray.dir, raw.t, raw.face as usize, raw.u, raw.v))
    }

    fn make_hit(&self, dir: Vec3, t: f64, face: usize, u: f64, v: f64) -> Hit {
        let [a, b, c] = self.mesh.corners(face);
        let w = 1.0 - u - v;
        let position = a * w + b * u + c * v;
        let mut geo = self.mesh.face_normal(face);
        if geo.dot(dir) > 0.0 {
            geo = -geo;
        }
        let normal = match &self.mesh.normals {
            Some(ns) => {
                let [ia, ib, ic] = self.mesh.triangles[face];
                let n = (ns[ia as usize] * w + ns[ib as usize] * u + ns[ic as usize] * v).try_normalize().unwrap_or(geo);
                if n.dot(geo) < 0.0 {
                    -n
                } else {
                    n
                }
            }
            None => geo,
        };
        Hit {
            position,
            geo_normal: geo,
            normal,
            t,
            face: face as u32,
            material_id: self.mesh.material_ids[face],
            segment_id: self.mesh.segment_ids[face],
        }
    }

    /// Ray leaving a surface point; skips the first `shadow_eps` to avoid self-hits.
    pub fn spawn_ray(&self, from: Vec3, dir: Vec3) -> Ray {
        Ray::with_range(from, dir, self.shadow_eps, f64::INFINITY)
    }

    /// 1 iff the open segment `(a + eps d, b - eps d)` hits no geometry.
    pub fn visibility(&self, a: Vec3, b: Vec3) -> bool {
        let d = b - a;
        let dist = d.length();
        if dist <= 2.0 * self.shadow_eps {
            return true;
        }
        let dir = d / dist;
        !self.bvh.occluded(&self.mesh, a, dir, self.shadow_eps, dist - self.shadow_eps)
    }

    /// Errors if `light` is within [`LIGHT_CLEARANCE`] of any surface.
    pub fn check_light_clearance(&self, light: Vec3) -> Result<()> {
        let d = self.mesh.distance_to(light);
        if d < LIGHT_CLEARANCE {
            return Err(Error::InvalidScene(format!(
                "flashlight at ({:.4}, {:.4}, {:.4}) is {d:e} m from a surface",
                light.x, light.y, light.z
            )));
        }
        Ok(())
    }

    pub fn sdf_eval(&self, x: Vec3) -> Result<f64> {
        self.sdf
            .as_ref()
            .ok_or_else(|| Error::InvalidInput("scene has no sdf grid".into()))?
            .eval(x)
    }
}

/// One co-located capture: camera, light position, and optionally its image.
#[derive(Clone, Debug)]
pub struct CaptureFrame {
    pub camera: Camera,
    pub light: Vec3,
    pub image: Option<Image>,
    pub mask: Option<Vec<bool>>,
}

impl CaptureFrame {
    pub fn new(camera: Camera, flashlight: &Flashlight) -> CaptureFrame {
        CaptureFrame { camera, light: flashlight.position_for(&camera), image: None, mask: None }
    }

    pub fn with_image(mut self, image: Image) -> CaptureFrame {
        self.image = Some(image);
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::sample_uniform_sphere;
    use crate::rng::RngStream;

    #[test]
    fn centroid_hit_at_known_distance() {
        let mesh = TriangleMesh::new(
            vec![Vec3::new(0.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0)],
            vec![[0, 1, 2]],
        );
        let mats = Materials::uniform(1, SurfaceMaterial::new(Rgb::splat(0.5), 0.5), 0.0);
        let scene = Scene::new("tri", mesh, mats, Flashlight::new(Rgb::splat(1.0)), vec![], None).unwrap();
        let c = Vec3::new(1.0 / 3.0, 1.0 / 3.0, 0.0);
        let ray = Ray::new(c + Vec3::new(0.0, 0.0, 2.5), Vec3::new(0.0, 0.0, -1.0));
        let hit = scene.intersect(&ray).unwrap();
        assert!((hit.t - 2.5).abs() < 1e-12);
        assert!((hit.position - c).length() < 1e-12);
        assert_eq!(hit.geo_normal, Vec3::new(0.0, 0.0, 1.0));
        // from below the normal flips toward the ray
        let ray = Ray::new(c - Vec3::new(0.0, 0.0, 1.0), Vec3::new(0.0, 0.0, 1.0));
        assert_eq!(scene.intersect(&ray).unwrap().geo_normal, Vec3::new(0.0, 0.0, -1.0));
        // away from everything
        let ray = Ray::new(c + Vec3::new(0.0, 0.0, 1.0), Vec3::new(0.0, 0.0, 1.0));
        assert!(scene.intersect(&ray).is_none());
    }

    #[test]
    fn visibility_blocked_and_free() {
        let scene = builtin::plane();
        let a = Vec3::new(0.1, 0.2, 1.0);
        let b = Vec3::new(0.1, 0.2, -1.0);
        assert!(!scene.visibility(a, b));
        assert!(scene.visibility(a, Vec3::new(0.5, -0.3, 0.4)));
    }

    #[test]
    fn visibility_symmetric() {
        let scene = builtin::cornell_desk();
        let b = scene.bounds;
        let mut rng = RngStream::new(12, 3);
        for _ in 0..5000 {
            let p = b.min + b.extent().hadamard(Vec3::new(rng.next_f64(), rng.next_f64(), rng.next_f64()));
            let q = b.min + b.extent().hadamard(Vec3::new(rng.next_f64(), rng.next_f64(), rng.next_f64()));
            assert_eq!(scene.visibility(p, q), scene.visibility(q, p));
        }
    }

    #[test]
    fn shadow_boundary_of_rectangle_occluder() {
        // unit square occluder at z = 0.5 spanning x, y in [-0.5, 0.5]; target on floor at origin.
        let mut mesh = mesh::quad(
            Vec3::new(-0.5, -0.5, 0.5),
            Vec3::new(0.5, -0.5, 0.5),
            Vec3::new(0.5, 0.5, 0.5),
            Vec3::new(-0.5, 0.5, 0.5),
        );
        mesh.append(&mesh::quad(
            Vec3::new(-3.0, -3.0, 0.0),
            Vec3::new(3.0, -3.0, 0.0),
            Vec3::new(3.0, 3.0, 0.0),
            Vec3::new(-3.0, 3.0, 0.0),
        ));
        let n = mesh.face_count();
        let mats = Materials::uniform(n, SurfaceMaterial::new(Rgb::splat(0.5), 0.5), 0.0);
        let scene = Scene::new("occ", mesh, mats, Flashlight::new(Rgb::splat(1.0)), vec![], None).unwrap();
        let x = Vec3::new(0.0, 0.0, 0.0);
        // Light at height 1 moving along x: segment grazes the edge x = 0.5 at z = 0.5 when light x = 1.0.
        let boundary = 1.0;
        let steps = 400;
        let mut last_blocked = None;
        for i in 0..=steps {
            let lx = 0.5 + i as f64 / steps as f64;
            let v = scene.visibility(Vec3::new(lx, 0.0, 1.0), x);
            if !v {
                last_blocked = Some(lx);
            }
            if lx < boundary - 0.01 {
                assert!(!v, "expected shadow at {lx}");
            }
            if lx > boundary + 0.01 {
                assert!(v, "expected light at {lx}");
            }
        }
        let lb = last_blocked.unwrap();
        assert!((lb - boundary).abs() <= 1.0 / steps as f64 + scene.shadow_eps * 4.0, "{lb}");
    }

    #[test]
    fn random_rays_match_brute_force_with_hits() {
        let scene = builtin::two_patch();
        let mut rng = RngStream::new(5, 5);
        for _ in 0..2000 {
            let o = sample_uniform_sphere(rng.next_f64(), rng.next_f64()) * (0.9 * rng.next_f64());
            let d = sample_uniform_sphere(rng.next_f64(), rng.next_f64());
            let ray = Ray::new(o, d);
            let a = scene.intersect(&ray).unwrap();
            let b = scene.intersect_brute_force(&ray).unwrap();
            assert_eq!(a.face, b.face);
            assert!((a.t - b.t).abs() <= 1e-6);
            assert!(a.normal.is_unit() && a.geo_normal.is_unit());
        }
    }

    #[test]
    fn clearance_violation_detected() {
        let scene = builtin::plane();
        assert!(scene.check_light_clearance(Vec3::new(0.0, 0.0, 1e-5)).is_err());
        assert!(scene.check_light_clearance(Vec3::new(0.0, 0.0, 0.5)).is_ok());
    }

    #[test]
    fn colocation_exact() {
        let scene = builtin::cornell_desk();
        for cam in &scene.cameras {
            let f = CaptureFrame::new(*cam, &scene.flashlight);
            assert_eq!(f.light - cam.center() - scene.flashlight.offset, Vec3::ZERO);
        }
    }
}
