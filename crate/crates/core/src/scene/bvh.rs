//! Median-split bounding volume hierarchy over triangle faces.

use crate::math::{Aabb, Vec3};

use super::mesh::{intersect_triangle, TriangleMesh};

pub const MAX_LEAF_SIZE: usize = 4;

#[derive(Clone, Debug)]
pub enum NodeKind {
    Leaf { start: u32, count: u32 },
    Inner { left: u32, right: u32 },
}

#[derive(Clone, Debug)]
pub struct BvhNode {
    pub bounds: Aabb,
    pub kind: NodeKind,
}

#[derive(Clone, Debug)]
pub struct Bvh {
    pub nodes: Vec<BvhNode>,
    /// Face indices, leaves reference contiguous ranges.
    pub faces: Vec<u32>,
}

/// Raw closest-hit record from the acceleration structure.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RawHit {
    pub t: f64,
    pub face: u32,
    pub u: f64,
    pub v: f64,
}

impl Bvh {
    pub fn build(mesh: &TriangleMesh) -> Bvh {
        let n = mesh.face_count();
        let mut faces: Vec<u32> = (0..n as u32).collect();
        let centroids: Vec<Vec3> = (0..n).map(|f| mesh.centroid(f)).collect();
        let boxes: Vec<Aabb> = (0..n).map(|f| mesh.face_bounds(f)).collect();
        let mut nodes = Vec::with_capacity(2 * n / MAX_LEAF_SIZE + 1);
        build_node(&mut nodes, &mut faces, 0, n, &centroids, &boxes);
        Bvh { nodes, faces }
    }

    pub fn bounds(&self) -> Aabb {
        self.nodes[0].bounds
    }

    /// Closest hit with `t` in `[t_min, t_max]`.
    pub fn intersect(&self, mesh: &TriangleMesh, origin: Vec3, dir: Vec3, t_min: f64, t_max: f64) -> Option<RawHit> {
        let inv = Vec3::new(1.0 / dir.x, 1.0 / dir.y, 1.0 / dir.z);
        let mut best: Option<RawHit> = None;
        let mut closest = t_max;
        let mut stack = [0u32; 64];
        let mut sp = 1usize;
        while sp > 0 {
            sp -= 1;
            let node = &self.nodes[stack[sp] as usize];
            if node.bounds.hit(origin, inv, t_min, closest).is_none() {
                continue;
            }
            match node.kind {
                NodeKind::Leaf { start, count } => {
                    for &face in &self.faces[start as usize..(start + count) as usize] {
                        let [a, b, c] = mesh.corners(face as usize);
                        if let Some((t, u, v)) = intersect_triangle(origin, dir, a, b, c) {
                            if t >= t_min && t <= closest && better(t, face, &best) {
                                closest = t;
                                best = Some(RawHit { t, face, u, v });
                            }
                        }
                    }
                }
                NodeKind::Inner { left, right } => {
                    stack[sp] = right;
                    stack[sp + 1] = left;
                    sp += 2;
                }
            }
        }
        best
    }

    /// True if anything is hit with `t` in `[t_min, t_max]`.
    pub fn occluded(&self, mesh: &TriangleMesh, origin: Vec3, dir: Vec3, t_min: f64, t_max: f64) -> bool {
        let inv = Vec3::new(1.0 / dir.x, 1.0 / dir.y, 1.0 / dir.z);
        let mut stack = [0u32; 64];
        let mut sp = 1usize;
        while sp > 0 {
            sp -= 1;
            let node = &self.nodes[stack[sp] as usize];
            if node.bounds.hit(origin, inv, t_min, t_max).is_none() {
                continue;
            }
            match node.kind {
                NodeKind::Leaf { start, count } => {
                    for &face in &self.faces[start as usize..(start + count) as usize] {
                        let [a, b, c] = mesh.corners(face as usize);
                        if let Some((t, _, _)) = intersect_triangle(origin, dir, a, b, c) {
                            if t >= t_min && t <= t_max {
                                return true;
                            }
                        }
                    }
                }
                NodeKind::Inner { left, right } => {
                    stack[sp] = right;
                    stack[sp + 1] = left;
                    sp += 2;
                }
            }
        }
        false
    }
}

/// Ties on `t` resolve to the lowest face index so traversal order never matters.
#[inline]
fn better(t: f64, face: u32, best: &Option<RawHit>) -> bool {
    match best {
        None => true,
        Some(b) => t < b.t || (t == b.t && face < b.face),
    }
}

fn build_node(
    nodes: &mut Vec<BvhNode>,
    faces: &mut [u32],
    offset: usize,
    count: usize,
    centroids: &[Vec3],
    boxes: &[Aabb],
) -> u32 {
    let range = &mut faces[offset..offset + count];
    let bounds = range.iter().fold(Aabb::EMPTY, |acc, &f| acc.union(&boxes[f as usize]));
    let index = nodes.len() as u32;
    if count <= MAX_LEAF_SIZE {
        nodes.push(BvhNode { bounds, kind: NodeKind::Leaf { start: offset as u32, count: count as u32 } });
        return index;
    }
    let mut centroid_bounds = Aabb::EMPTY;
    for &f in range.iter() {
        centroid_bounds.grow(centroids[f as usize]);
    }
    let axis = centroid_bounds.longest_axis();
    let mid = count / 2;
    range.select_nth_unstable_by(mid, |&a, &b| {
        centroids[a as usize][axis]
            .total_cmp(&centroids[b as usize][axis])
            .then(a.cmp(&b))
    });
    nodes.push(BvhNode { bounds, kind: NodeKind::Leaf { start: 0, count: 0 } });
    let left = build_node(nodes, faces, offset, mid, centroids, boxes);
    let right = build_node(nodes, faces, offset + mid, count - mid, centroids, boxes);
    nodes[index as usize].kind = NodeKind::Inner { left, right };
    index
}

/// All-triangle reference intersector with the same tie-breaking as [`Bvh::intersect`].
pub fn brute_force_intersect(mesh: &TriangleMesh, origin: Vec3, dir: Vec3, t_min: f64, t_max: f64) -> Option<RawHit> {
    let mut best: Option<RawHit> = None;
    for face in 0..mesh.face_count() {
        let [a, b, c] = mesh.corners(face);
        if let Some((t, u, v)) = intersect_triangle(origin, dir, a, b, c) {
            if t >= t_min && t <= t_max && better(t, face as u32, &best) {
                best = Some(RawHit { t, face: face as u32, u, v });
            }
        }
    }
    best
}
