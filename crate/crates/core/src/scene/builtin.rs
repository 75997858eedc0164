//! Bundled test scenes.

use std::f64::consts::PI;

use crate::brdf::{SurfaceMaterial, DEFAULT_SPECULAR};
use crate::error::{Error, Result};
use crate::math::{Rgb, Vec3};
use crate::rng::{Purpose, RngStream};

use super::camera::{Camera, Intrinsics};
use super::mesh::{open_bottom_box, quad, TriangleMesh};
use super::{Flashlight, Materials, Scene};

pub const SCENE_NAMES: [&str; 3] = ["plane", "two-patch", "cornell-desk"];

pub const PLANE_ALBEDO: Rgb = Rgb::new(0.6, 0.45, 0.3);
pub const PLANE_HEIGHT: f64 = 1.0;
pub const PLANE_INTENSITY: Rgb = Rgb::new(1.0, 1.0, 1.0);

pub const TWO_PATCH_RHO: [Rgb; 2] = [Rgb::new(0.7, 0.5, 0.3), Rgb::new(0.35, 0.55, 0.8)];
pub const TWO_PATCH_INTENSITY: Rgb = Rgb::new(1.0, 1.0, 1.0);
const TWO_PATCH_LAT: usize = 64;
const TWO_PATCH_LON: usize = 128;

pub const CORNELL_INTENSITY: Rgb = Rgb::new(4.0, 4.0, 4.0);
pub const IMAGE_SIZE: u32 = 64;

pub fn by_name(name: &str) -> Result<Scene> {
    match name {
        "plane" => Ok(plane()),
        "two-patch" => Ok(two_patch()),
        "cornell-desk" => Ok(cornell_desk()),
        _ => Err(Error::InvalidConfig(format!(
            "unknown scene '{name}' (expected one of {})",
            SCENE_NAMES.join(", ")
        ))),
    }
}

/// Lambertian 8x8 m floor at `z = 0` with a camera at `PLANE_HEIGHT` looking straight down.
pub fn plane() -> Scene {
    plane_with(PLANE_ALBEDO, 0.5, 0.0, PLANE_HEIGHT)
}

pub fn plane_with(albedo: Rgb, roughness: f64, specular: f64, height: f64) -> Scene {
    let h = 4.0;
    let mesh = quad(
        Vec3::new(-h, -h, 0.0),
        Vec3::new(h, -h, 0.0),
        Vec3::new(h, h, 0.0),
        Vec3::new(-h, h, 0.0),
    );
    let mats = Materials::uniform(mesh.face_count(), SurfaceMaterial::new(albedo, roughness), specular);
    let cam = plane_camera(height, IMAGE_SIZE);
    Scene::new("plane", mesh, mats, Flashlight::new(PLANE_INTENSITY), vec![cam], None).expect("plane scene is valid")
}

pub fn plane_camera(height: f64, size: u32) -> Camera {
    Camera::look_at(
        Vec3::new(0.0, 0.0, height),
        Vec3::ZERO,
        Vec3::new(0.0, 1.0, 0.0),
        Intrinsics::from_fov(size, size, 60.0),
    )
    .expect("valid plane camera")
}

/// Closed UV sphere of radius 1 split at the equator into two Lambertian halves,
/// with camera and light at the center. Every pair of surface elements exchanges
/// energy with the same form factor, which gives a closed-form bounce series.
pub fn two_patch() -> Scene {
    two_patch_with(TWO_PATCH_RHO[0], TWO_PATCH_RHO[1], TWO_PATCH_LAT, TWO_PATCH_LON)
}

pub fn two_patch_with(rho_north: Rgb, rho_south: Rgb, n_lat: usize, n_lon: usize) -> Scene {
    let mesh = uv_sphere(n_lat, n_lon);
    let faces = mesh
        .material_ids
        .iter()
        .map(|&m| SurfaceMaterial::new(if m == 0 { rho_north } else { rho_south }, 1.0))
        .collect();
    let mats = Materials { specular: 0.0, faces };
    let cam = Camera::look_at(
        Vec3::ZERO,
        Vec3::new(1.0, 0.3, 0.6),
        Vec3::new(0.0, 0.0, 1.0),
        Intrinsics::from_fov(IMAGE_SIZE, IMAGE_SIZE, 60.0),
    )
    .expect("valid two-patch camera");
    Scene::new("two-patch", mesh, mats, Flashlight::new(TWO_PATCH_INTENSITY), vec![cam], None)
        .expect("two-patch scene is valid")
}

/// Unit UV sphere; `n_lat` must be even so the equator is an edge loop.
/// Material and segment 0 for `z > 0`, 1 for `z < 0`.
pub fn uv_sphere(n_lat: usize, n_lon: usize) -> TriangleMesh {
    assert!(n_lat >= 2 && n_lat % 2 == 0 && n_lon >= 3);
    let mut vertices = vec![Vec3::new(0.0, 0.0, 1.0)];
    for i in 1..n_lat {
        let theta = PI * i as f64 / n_lat as f64;
        for j in 0..n_lon {
            let phi = 2.0 * PI * j as f64 / n_lon as f64;
            let z = if 2 * i == n_lat { 0.0 } else { theta.cos() };
            vertices.push(Vec3::new(theta.sin() * phi.cos(), theta.sin() * phi.sin(), z));
        }
    }
    let south = vertices.len() as u32;
    vertices.push(Vec3::new(0.0, 0.0, -1.0));
    let ring = |i: usize, j: usize| (1 + (i - 1) * n_lon + j % n_lon) as u32;
    let mut triangles = Vec::new();
    let mut material_ids = Vec::new();
    for j in 0..n_lon {
        triangles.push([0, ring(1, j), ring(1, j + 1)]);
        material_ids.push(0);
    }
    for i in 1..n_lat - 1 {
        let m = if i < n_lat / 2 { 0 } else { 1 };
        for j in 0..n_lon {
            triangles.push([ring(i, j), ring(i + 1, j), ring(i + 1, j + 1)]);
            triangles.push([ring(i, j), ring(i + 1, j + 1), ring(i, j + 1)]);
            material_ids.push(m);
            material_ids.push(m);
        }
    }
    for j in 0..n_lon {
        triangles.push([south, ring(n_lat - 1, j + 1), ring(n_lat - 1, j)]);
        material_ids.push(1);
    }
    let mut mesh = TriangleMesh::new(vertices, triangles);
    mesh.segment_ids = material_ids.clone();
    mesh.material_ids = material_ids;
    mesh
}

/// Ground-truth materials of the cornell desk, indexed by material id.
pub const CORNELL_MATERIALS: [(Rgb, f64); 7] = [
    (Rgb::new(0.75, 0.72, 0.68), 0.45), // floor
    (Rgb::new(0.80, 0.80, 0.80), 0.90), // ceiling
    (Rgb::new(0.70, 0.75, 0.80), 0.70), // back wall
    (Rgb::new(0.75, 0.15, 0.12), 0.60), // left wall
    (Rgb::new(0.15, 0.65, 0.20), 0.60), // right wall
    (Rgb::new(0.80, 0.70, 0.25), 0.40), // tall box
    (Rgb::new(0.20, 0.35, 0.80), 0.50), // short box
];

pub const CORNELL_TALL_BOX: (Vec3, Vec3) = (Vec3::new(-0.6, 0.0, -0.6), Vec3::new(-0.15, 0.9, -0.1));
pub const CORNELL_SHORT_BOX: (Vec3, Vec3) = (Vec3::new(0.25, 0.0, 0.0), Vec3::new(0.7, 0.45, 0.45));

/// Open-front box (x in [-1, 1], y up in [0, 1.6], z in [-1, 1], open at z = 1)
/// holding two colored open-bottom boxes.
pub fn cornell_desk() -> Scene {
    let mesh = cornell_mesh();
    let faces = mesh
        .material_ids
        .iter()
        .map(|&m| {
            let (a, r) = CORNELL_MATERIALS[m as usize];
            SurfaceMaterial::new(a, r)
        })
        .collect();
    let mats = Materials { specular: DEFAULT_SPECULAR, faces };
    let cam = cornell_view_camera(IMAGE_SIZE);
    Scene::new("cornell-desk", mesh, mats, Flashlight::new(CORNELL_INTENSITY), vec![cam], None)
        .expect("cornell desk scene is valid")
}

pub fn cornell_view_camera(size: u32) -> Camera {
    Camera::look_at(
        Vec3::new(0.1, 0.85, 2.2),
        Vec3::new(0.0, 0.55, -0.3),
        Vec3::new(0.0, 1.0, 0.0),
        Intrinsics::from_fov(size, size, 55.0),
    )
    .expect("valid cornell camera")
}

fn subdivided_quad(p0: Vec3, p1: Vec3, p3: Vec3, n: usize) -> TriangleMesh {
    let (du, dv) = ((p1 - p0) / n as f64, (p3 - p0) / n as f64);
    let mut mesh = TriangleMesh::new(Vec::new(), Vec::new());
    for i in 0..n {
        for j in 0..n {
            let a = p0 + du * i as f64 + dv * j as f64;
            mesh.append(&quad(a, a + du, a + du + dv, a + dv));
        }
    }
    mesh
}

fn cornell_mesh() -> TriangleMesh {
    let v = Vec3::new;
    let (y1, n) = (1.6, 2);
    let parts = [
        subdivided_quad(v(-1.0, 0.0, 1.0), v(1.0, 0.0, 1.0), v(-1.0, 0.0, -1.0), n), // floor
        subdivided_quad(v(-1.0, y1, -1.0), v(1.0, y1, -1.0), v(-1.0, y1, 1.0), n),   // ceiling
        subdivided_quad(v(-1.0, 0.0, -1.0), v(1.0, 0.0, -1.0), v(-1.0, y1, -1.0), n), // back
        subdivided_quad(v(-1.0, 0.0, 1.0), v(-1.0, 0.0, -1.0), v(-1.0, y1, 1.0), n), // left
        subdivided_quad(v(1.0, 0.0, -1.0), v(1.0, 0.0, 1.0), v(1.0, y1, -1.0), n),   // right
        open_bottom_box(CORNELL_TALL_BOX.0, CORNELL_TALL_BOX.1),
        open_bottom_box(CORNELL_SHORT_BOX.0, CORNELL_SHORT_BOX.1),
    ];
    let mut mesh = TriangleMesh::new(Vec::new(), Vec::new());
    for (id, part) in parts.iter().enumerate() {
        let start = mesh.face_count();
        mesh.append(part);
        for f in start..mesh.face_count() {
            mesh.material_ids[f] = id as u32;
            mesh.segment_ids[f] = id as u32;
        }
    }
    mesh
}

/// Light path and target for the continuity sweep on the cornell desk: a floor
/// point behind the tall box and a horizontal light track that crosses the
/// shadow cast by the box's front-right vertical edge.
#[derive(Clone, Copy, Debug)]
pub struct SweepSetup {
    pub target: Vec3,
    pub wo: Vec3,
    pub track_start: Vec3,
    pub track_end: Vec3,
    /// Top-down position (x, z) of the silhouette edge.
    pub edge_xz: (f64, f64),
}

pub fn cornell_sweep_setup() -> SweepSetup {
    let target = Vec3::new(-0.3, 0.0, -0.85);
    SweepSetup {
        target,
        wo: Vec3::new(0.1, 1.0, 0.1).normalize(),
        track_start: Vec3::new(0.2, 0.9, 0.6),
        track_end: Vec3::new(0.9, 0.9, 0.6),
        edge_xz: (CORNELL_TALL_BOX.1.x, CORNELL_TALL_BOX.0.z),
    }
}

impl SweepSetup {
    pub fn light_at(&self, s: f64) -> Vec3 {
        self.track_start + (self.track_end - self.track_start) * s
    }

    /// Track parameter where the segment target -> light grazes the silhouette edge.
    pub fn analytic_boundary(&self) -> f64 {
        let p = (self.target.x, self.target.z);
        let e = (self.edge_xz.0 - p.0, self.edge_xz.1 - p.1);
        let a = (self.track_start.x - p.0, self.track_start.z - p.1);
        let d = (self.track_end.x - self.track_start.x, self.track_end.z - self.track_start.z);
        // cross(e, a + s d) = 0
        let cross = |u: (f64, f64), v: (f64, f64)| u.0 * v.1 - u.1 * v.0;
        -cross(e, a) / cross(e, d)
    }
}

/// Seeded capture trajectory for a bundled scene. Every camera keeps the
/// flashlight at least the clearance away from geometry.
pub fn trajectory(scene: &Scene, count: usize, seed: u64, size: u32) -> Result<Vec<Camera>> {
    let mut rng = RngStream::derive(seed, Purpose::Trajectory, &[count as u64]);
    let mut cams = Vec::with_capacity(count);
    for _ in 0..count {
        let mut u = || rng.next_f64();
        let cam = match scene.name.as_str() {
            "plane" => {
                let eye = Vec3::new(1.0 * (u() - 0.5), 1.0 * (u() - 0.5), 0.7 + 0.6 * u());
                let target = Vec3::new(0.6 * (u() - 0.5), 0.6 * (u() - 0.5), 0.0);
                Camera::look_at(eye, target, Vec3::new(0.0, 1.0, 0.0), Intrinsics::from_fov(size, size, 60.0))?
            }
            "two-patch" => {
                let dir = crate::math::sample_uniform_sphere(u(), u());
                let eye = Vec3::new(0.2 * (u() - 0.5), 0.2 * (u() - 0.5), 0.2 * (u() - 0.5));
                let up = if dir.z.abs() > 0.9 { Vec3::new(1.0, 0.0, 0.0) } else { Vec3::new(0.0, 0.0, 1.0) };
                Camera::look_at(eye, eye + dir, up, Intrinsics::from_fov(size, size, 60.0))?
            }
            "cornell-desk" => {
                let eye = Vec3::new(1.2 * (u() - 0.5), 0.45 + 0.8 * u(), 0.9 + 1.5 * u());
                let target = Vec3::new(0.8 * (u() - 0.5), 0.25 + 0.5 * u(), -0.3 - 0.4 * u());
                Camera::look_at(eye, target, Vec3::new(0.0, 1.0, 0.0), Intrinsics::from_fov(size, size, 55.0))?
            }
            other => return Err(Error::InvalidConfig(format!("no trajectory for scene '{other}'"))),
        };
        cams.push(cam);
    }
    Ok(cams)
}
