//! Dense signed-distance grid with trilinear interpolation.
//!
//! Nodes sit on a regular lattice spanning the bounding box corners; storage
//! is x-fastest, then y, then z.

use crate::error::{Error, Result};
use crate::math::{Aabb, Vec3};

#[derive(Clone, Debug, PartialEq)]
pub struct DenseSdfGrid {
    pub resolution: [usize; 3],
    pub bounds: Aabb,
    pub values: Vec<f64>,
}

/// Interpolated value plus the eight contributing nodes and their weights.
#[derive(Clone, Copy, Debug)]
pub struct SdfSample {
    pub value: f64,
    pub nodes: [usize; 8],
    pub weights: [f64; 8],
}

impl DenseSdfGrid {
    pub fn new(resolution: [usize; 3], bounds: Aabb, values: Vec<f64>) -> Result<DenseSdfGrid> {
        if resolution.iter().any(|&n| n < 2) {
            return Err(Error::InvalidArgument("sdf grid needs at least 2 nodes per axis".into()));
        }
        let e = bounds.extent();
        if !(e.x > 0.0 && e.y > 0.0 && e.z > 0.0) {
            return Err(Error::InvalidArgument("sdf grid bounding box is empty".into()));
        }
        let expected = resolution[0] * resolution[1] * resolution[2];
        if values.len() != expected {
            return Err(Error::InvalidArgument(format!("sdf grid has {} values, expected {expected}", values.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("sdf grid contains non-finite values".into()));
        }
        Ok(DenseSdfGrid { resolution, bounds, values })
    }

    /// Samples `f` at every node.
    pub fn from_fn(resolution: [usize; 3], bounds: Aabb, f: impl Fn(Vec3) -> f64) -> Result<DenseSdfGrid> {
        let mut values = Vec::with_capacity(resolution.iter().product());
        for k in 0..resolution[2] {
            for j in 0..resolution[1] {
                for i in 0..resolution[0] {
                    values.push(f(Self::node_position_of(resolution, &bounds, [i, j, k])));
                }
            }
        }
        DenseSdfGrid::new(resolution, bounds, values)
    }

    fn node_position_of(res: [usize; 3], b: &Aabb, ijk: [usize; 3]) -> Vec3 {
        let e = b.extent();
        Vec3::new(
            b.min.x + e.x * ijk[0] as f64 / (res[0] - 1) as f64,
            b.min.y + e.y * ijk[1] as f64 / (res[1] - 1) as f64,
            b.min.z + e.z * ijk[2] as f64 / (res[2] - 1) as f64,
        )
    }

    pub fn node_position(&self, ijk: [usize; 3]) -> Vec3 {
        Self::node_position_of(self.resolution, &self.bounds, ijk)
    }

    pub fn index(&self, ijk: [usize; 3]) -> usize {
        ijk[0] + self.resolution[0] * (ijk[1] + self.resolution[1] * ijk[2])
    }

    pub fn cell_size(&self) -> Vec3 {
        let e = self.bounds.extent();
        Vec3::new(
            e.x / (self.resolution[0] - 1) as f64,
            e.y / (self.resolution[1] - 1) as f64,
            e.z / (self.resolution[2] - 1) as f64,
        )
    }

    pub fn eval(&self, x: Vec3) -> Result<f64> {
        Ok(self.sample(x)?.value)
    }

    pub fn sample(&self, x: Vec3) -> Result<SdfSample> {
        if !self.bounds.contains(x) {
            return Err(Error::OutOfDomain(format!("({}, {}, {}) outside sdf grid", x.x, x.y, x.z)));
        }
        let cell = self.cell_size();
        let rel = x - self.bounds.min;
        let mut base = [0usize; 3];
        let mut frac = [0.0f64; 3];
        for a in 0..3 {
            let g = rel[a] / cell[a];
            let i = (g.floor() as usize).min(self.resolution[a] - 2);
            base[a] = i;
            frac[a] = (g - i as f64).clamp(0.0, 1.0);
        }
        let mut nodes = [0usize; 8];
        let mut weights = [0.0f64; 8];
        let mut value = 0.0;
        for corner in 0..8 {
            let (dx, dy, dz) = (corner & 1, (corner >> 1) & 1, (corner >> 2) & 1);
            let w = (if dx == 1 { frac[0] } else { 1.0 - frac[0] })
                * (if dy == 1 { frac[1] } else { 1.0 - frac[1] })
                * (if dz == 1 { frac[2] } else { 1.0 - frac[2] });
            let idx = self.index([base[0] + dx, base[1] + dy, base[2] + dz]);
            nodes[corner] = idx;
            weights[corner] = w;
            value += w * self.values[idx];
        }
        Ok(SdfSample { value, nodes, weights })
    }
}
