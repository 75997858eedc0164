use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{Aabb, Vec3};

/// Minimum triangle area accepted at load time (m^2).
pub const MIN_TRIANGLE_AREA: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TriangleMesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[u32; 3]>,
    pub material_ids: Vec<u32>,
    pub segment_ids: Vec<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normals: Option<Vec<Vec3>>,
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<[u32; 3]>) -> TriangleMesh {
        let n = triangles.len();
        TriangleMesh { vertices, triangles, material_ids: vec![0; n], segment_ids: vec![0; n], normals: None }
    }

    pub fn face_count(&self) -> usize {
        self.triangles.len()
    }

    #[inline]
    pub fn corners(&self, face: usize) -> [Vec3; 3] {
        let [a, b, c] = self.triangles[face];
        [self.vertices[a as usize], self.vertices[b as usize], self.vertices[c as usize]]
    }

    /// Unnormalized `(v1 - v0) x (v2 - v0)`.
    pub fn face_cross(&self, face: usize) -> Vec3 {
        let [a, b, c] = self.corners(face);
        (b - a).cross(c - a)
    }

    pub fn face_area(&self, face: usize) -> f64 {
        0.5 * self.face_cross(face).length()
    }

    pub fn face_normal(&self, face: usize) -> Vec3 {
        self.face_cross(face).normalize()
    }

    pub fn centroid(&self, face: usize) -> Vec3 {
        let [a, b, c] = self.corners(face);
        (a + b + c) / 3.0
    }

    pub fn face_bounds(&self, face: usize) -> Aabb {
        let mut b = Aabb::EMPTY;
        for p in self.corners(face) {
            b.grow(p);
        }
        b
    }

    pub fn bounds(&self) -> Aabb {
        let mut b = Aabb::EMPTY;
        for &p in &self.vertices {
            b.grow(p);
        }
        b
    }

    pub fn total_area(&self) -> f64 {
        (0..self.face_count()).map(|f| self.face_area(f)).sum()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.triangles.len();
        if n == 0 {
            return Err(Error::InvalidScene("mesh has no triangles".into()));
        }
        if self.material_ids.len() != n || self.segment_ids.len() != n {
            return Err(Error::InvalidScene(format!(
                "per-face arrays have {} material ids and {} segment ids for {n} faces",
                self.material_ids.len(),
                self.segment_ids.len()
            )));
        }
        if let Some(normals) = &self.normals {
            if normals.len() != self.vertices.len() {
                return Err(Error::InvalidScene("vertex normal count differs from vertex count".into()));
            }
            if normals.iter().any(|n| !n.is_unit()) {
                return Err(Error::InvalidScene("vertex normals must be unit length".into()));
            }
        }
        if self.vertices.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidScene("non-finite vertex".into()));
        }
        for (f, tri) in self.triangles.iter().enumerate() {
            if tri.iter().any(|&i| i as usize >= self.vertices.len()) {
                return Err(Error::InvalidScene(format!("face {f} has an out-of-range vertex index")));
            }
            let area = self.face_area(f);
            if !(area > MIN_TRIANGLE_AREA) {
                return Err(Error::InvalidScene(format!("face {f} is degenerate (area {area:e})")));
            }
        }
        Ok(())
    }

    /// Appends another mesh, offsetting its indices.
    pub fn append(&mut self, other: &TriangleMesh) {
        let base = self.vertices.len() as u32;
        self.vertices.extend_from_slice(&other.vertices);
        self.triangles.extend(other.triangles.iter().map(|t| [t[0] + base, t[1] + base, t[2] + base]));
        self.material_ids.extend_from_slice(&other.material_ids);
        self.segment_ids.extend_from_slice(&other.segment_ids);
        match (&mut self.normals, &other.normals) {
            (Some(a), Some(b)) => a.extend_from_slice(b),
            _ => self.normals = None,
        }
    }

    /// Distance from `p` to the nearest point on the mesh (brute force).
    pub fn distance_to(&self, p: Vec3) -> f64 {
        (0..self.face_count())
            .map(|f| {
                let [a, b, c] = self.corners(f);
                (closest_point_on_triangle(p, a, b, c) - p).length()
            })
            .fold(f64::INFINITY, f64::min)
    }
}

/// Closest point to `p` on triangle `abc` (region classification on barycentrics).
pub fn closest_point_on_triangle(p: Vec3, a: Vec3, b: Vec3, c: Vec3) -> Vec3 {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(ap);
    let d2 = ac.dot(ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return a;
    }
    let bp = p - b;
    let d3 = ab.dot(bp);
    let d4 = ac.dot(bp);
    if d3 >= 0.0 && d4 <= d3 {
        return b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return a + ab * v;
    }
    let cp = p - c;
    let d5 = ab.dot(cp);
    let d6 = ac.dot(cp);
    if d6 >= 0.0 && d5 <= d6 {
        return c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return a + ac * w;
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return b + (c - b) * w;
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    a + ab * v + ac * w
}

/// Moller-Trumbore. Returns `(t, u, v)` with barycentrics of `v1` and `v2`.
#[inline]
pub fn intersect_triangle(origin: Vec3, dir: Vec3, v0: Vec3, v1: Vec3, v2: Vec3) -> Option<(f64, f64, f64)> {
    let e1 = v1 - v0;
    let e2 = v2 - v0;
    let p = dir.cross(e2);
    let det = e1.dot(p);
    if det.abs() < 1e-14 {
        return None;
    }
    let inv = 1.0 / det;
    let s = origin - v0;
    let u = s.dot(p) * inv;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let q = s.cross(e1);
    let v = dir.dot(q) * inv;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    Some((e2.dot(q) * inv, u, v))
}

/// Axis-aligned quad split into two triangles; corners given counter-clockwise
/// as seen from the side the normal points to.
pub fn quad(p0: Vec3, p1: Vec3, p2: Vec3, p3: Vec3) -> TriangleMesh {
    TriangleMesh::new(vec![p0, p1, p2, p3], vec![[0, 1, 2], [0, 2, 3]])
}

/// Axis-aligned box without its bottom face (`y = min.y`), outward normals.
pub fn open_bottom_box(min: Vec3, max: Vec3) -> TriangleMesh {
    let (x0, y0, z0) = (min.x, min.y, min.z);
    let (x1, y1, z1) = (max.x, max.y, max.z);
    let v = |x, y, z| Vec3::new(x, y, z);
    let faces = [
        // +y top
        quad(v(x0, y1, z0), v(x0, y1, z1), v(x1, y1, z1), v(x1, y1, z0)),
        // +x
        quad(v(x1, y0, z0), v(x1, y1, z0), v(x1, y1, z1), v(x1, y0, z1)),
        // -x
        quad(v(x0, y0, z0), v(x0, y0, z1), v(x0, y1, z1), v(x0, y1, z0)),
        // +z
        quad(v(x0, y0, z1), v(x1, y0, z1), v(x1, y1, z1), v(x0, y1, z1)),
        // -z
        quad(v(x0, y0, z0), v(x0, y1, z0), v(x1, y1, z0), v(x1, y0, z0)),
    ];
    let mut mesh = TriangleMesh::new(Vec::new(), Vec::new());
    for f in &faces {
        mesh.append(f);
    }
    mesh
}
