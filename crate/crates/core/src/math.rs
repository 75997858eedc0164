//! Small fixed-size vector math shared by every module.

use std::f64::consts::PI;
use std::ops::{Add, AddAssign, Div, Index, IndexMut, Mul, MulAssign, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance used for every unit-length invariant.
pub const UNIT_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Rgb {
    pub r: f64,
    pub g: f64,
    pub b: f64,
}

macro_rules! impl_triplet_ops {
    ($t:ident, $a:ident, $b:ident, $c:ident) => {
        impl Add for $t {
            type Output = $t;
            #[inline]
            fn add(self, o: $t) -> $t {
                $t { $a: self.$a + o.$a, $b: self.$b + o.$b, $c: self.$c + o.$c }
            }
        }
        impl Sub for $t {
            type Output = $t;
            #[inline]
            fn sub(self, o: $t) -> $t {
                $t { $a: self.$a - o.$a, $b: self.$b - o.$b, $c: self.$c - o.$c }
            }
        }
        impl Mul<f64> for $t {
            type Output = $t;
            #[inline]
            fn mul(self, s: f64) -> $t {
                $t { $a: self.$a * s, $b: self.$b * s, $c: self.$c * s }
            }
        }
        impl Mul<$t> for f64 {
            type Output = $t;
            #[inline]
            fn mul(self, v: $t) -> $t {
                v * self
            }
        }
        impl Div<f64> for $t {
            type Output = $t;
            #[inline]
            fn div(self, s: f64) -> $t {
                $t { $a: self.$a / s, $b: self.$b / s, $c: self.$c / s }
            }
        }
        impl Neg for $t {
            type Output = $t;
            #[inline]
            fn neg(self) -> $t {
                $t { $a: -self.$a, $b: -self.$b, $c: -self.$c }
            }
        }
        impl AddAssign for $t {
            #[inline]
            fn add_assign(&mut self, o: $t) {
                self.$a += o.$a;
                self.$b += o.$b;
                self.$c += o.$c;
            }
        }
        impl SubAssign for $t {
            #[inline]
            fn sub_assign(&mut self, o: $t) {
                self.$a -= o.$a;
                self.$b -= o.$b;
                self.$c -= o.$c;
            }
        }
        impl MulAssign<f64> for $t {
            #[inline]
            fn mul_assign(&mut self, s: f64) {
                self.$a *= s;
                self.$b *= s;
                self.$c *= s;
            }
        }
        impl Index<usize> for $t {
            type Output = f64;
            #[inline]
            fn index(&self, i: usize) -> &f64 {
                match i {
                    0 => &self.$a,
                    1 => &self.$b,
                    2 => &self.$c,
                    _ => panic!("index {i} out of range for a 3-component value"),
                }
            }
        }
        impl IndexMut<usize> for $t {
            #[inline]
            fn index_mut(&mut self, i: usize) -> &mut f64 {
                match i {
                    0 => &mut self.$a,
                    1 => &mut self.$b,
                    2 => &mut self.$c,
                    _ => panic!("index {i} out of range for a 3-component value"),
                }
            }
        }
        impl $t {
            pub const ZERO: $t = $t { $a: 0.0, $b: 0.0, $c: 0.0 };

            #[inline]
            pub const fn new($a: f64, $b: f64, $c: f64) -> $t {
                $t { $a, $b, $c }
            }

            #[inline]
            pub const fn splat(v: f64) -> $t {
                $t { $a: v, $b: v, $c: v }
            }

            #[inline]
            pub fn to_array(self) -> [f64; 3] {
                [self.$a, self.$b, self.$c]
            }

            #[inline]
            pub fn from_array(a: [f64; 3]) -> $t {
                $t { $a: a[0], $b: a[1], $c: a[2] }
            }

            #[inline]
            pub fn map(self, f: impl Fn(f64) -> f64) -> $t {
                $t { $a: f(self.$a), $b: f(self.$b), $c: f(self.$c) }
            }

            /// Component-wise product.
            #[inline]
            pub fn hadamard(self, o: $t) -> $t {
                $t { $a: self.$a * o.$a, $b: self.$b * o.$b, $c: self.$c * o.$c }
            }

            #[inline]
            pub fn max_component(self) -> f64 {
                self.$a.max(self.$b).max(self.$c)
            }

            #[inline]
            pub fn min_component(self) -> f64 {
                self.$a.min(self.$b).min(self.$c)
            }

            #[inline]
            pub fn is_finite(self) -> bool {
                self.$a.is_finite() && self.$b.is_finite() && self.$c.is_finite()
            }

            #[inline]
            pub fn sum(self) -> f64 {
                self.$a + self.$b + self.$c
            }
        }
    };
}

impl_triplet_ops!(Vec3, x, y, z);
impl_triplet_ops!(Rgb, r, g, b);

impl Vec3 {
    #[inline]
    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    #[inline]
    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    #[inline]
    pub fn length_squared(self) -> f64 {
        self.dot(self)
    }

    #[inline]
    pub fn length(self) -> f64 {
        self.length_squared().sqrt()
    }

    #[inline]
    pub fn normalize(self) -> Vec3 {
        self / self.length()
    }

    pub fn try_normalize(self) -> Option<Vec3> {
        let len = self.length();
        (len > 0.0 && len.is_finite()).then(|| self / len)
    }

    #[inline]
    pub fn is_unit(self) -> bool {
        (self.length() - 1.0).abs() <= UNIT_TOL
    }

    #[inline]
    pub fn min(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x.min(o.x), self.y.min(o.y), self.z.min(o.z))
    }

    #[inline]
    pub fn max(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x.max(o.x), self.y.max(o.y), self.z.max(o.z))
    }
}

impl Rgb {
    pub const BLACK: Rgb = Rgb::ZERO;

    #[inline]
    pub fn luminance(self) -> f64 {
        0.2126 * self.r + 0.7152 * self.g + 0.0722 * self.b
    }

    pub fn is_black(self) -> bool {
        self.r == 0.0 && self.g == 0.0 && self.b == 0.0
    }

    pub fn clamp01(self) -> Rgb {
        self.map(|v| v.clamp(0.0, 1.0))
    }
}

/// Orthonormal shading frame. `normal` maps to local +z.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Frame {
    pub tangent: Vec3,
    pub bitangent: Vec3,
    pub normal: Vec3,
}

impl Frame {
    /// Builds a right-handed frame around `normal` (Duff et al. branchless construction).
    pub fn from_normal(normal: Vec3) -> Result<Frame> {
        let len = normal.length();
        if !(len > 0.0) || !len.is_finite() {
            return Err(Error::InvalidArgument("frame normal has zero length".into()));
        }
        if (len - 1.0).abs() > UNIT_TOL {
            return Err(Error::InvalidArgument(format!("frame normal is not unit length (|n| = {len})")));
        }
        Ok(Frame::from_unit_normal(normal))
    }

    /// Same as [`Frame::from_normal`] without validation; the caller guarantees a unit normal.
    #[inline]
    pub fn from_unit_normal(n: Vec3) -> Frame {
        let sign = 1.0f64.copysign(n.z);
        let a = -1.0 / (sign + n.z);
        let b = n.x * n.y * a;
        let tangent = Vec3::new(1.0 + sign * n.x * n.x * a, sign * b, -sign * n.x);
        let bitangent = Vec3::new(b, sign + n.y * n.y * a, -n.y);
        Frame { tangent, bitangent, normal: n }
    }

    #[inline]
    pub fn to_local(&self, v: Vec3) -> Vec3 {
        Vec3::new(v.dot(self.tangent), v.dot(self.bitangent), v.dot(self.normal))
    }

    #[inline]
    pub fn to_world(&self, v: Vec3) -> Vec3 {
        self.tangent * v.x + self.bitangent * v.y + self.normal * v.z
    }
}

pub fn build_frame(normal: Vec3) -> Result<Frame> {
    Frame::from_normal(normal)
}

/// Mirror reflection `d - 2 (d.n) n`.
#[inline]
pub fn reflect(d: Vec3, n: Vec3) -> Vec3 {
    d - n * (2.0 * d.dot(n))
}

/// Cosine-weighted hemisphere sample in the local frame (+z up), via the concentric disk map.
pub fn sample_cosine_hemisphere(u1: f64, u2: f64) -> (Vec3, f64) {
    let (dx, dy) = concentric_disk(u1, u2);
    let z = (1.0 - dx * dx - dy * dy).max(0.0).sqrt();
    let dir = Vec3::new(dx, dy, z);
    (dir, z / PI)
}

#[inline]
pub fn cosine_hemisphere_pdf(cos_theta: f64) -> f64 {
    cos_theta.max(0.0) / PI
}

fn concentric_disk(u1: f64, u2: f64) -> (f64, f64) {
    let ox = 2.0 * u1 - 1.0;
    let oy = 2.0 * u2 - 1.0;
    if ox == 0.0 && oy == 0.0 {
        return (0.0, 0.0);
    }
    let (r, theta) = if ox.abs() > oy.abs() {
        (ox, PI / 4.0 * (oy / ox))
    } else {
        (oy, PI / 2.0 - PI / 4.0 * (ox / oy))
    };
    (r * theta.cos(), r * theta.sin())
}

/// Uniform direction on the upper hemisphere, pdf `1 / 2pi`.
pub fn sample_uniform_hemisphere(u1: f64, u2: f64) -> Vec3 {
    let z = u1;
    let r = (1.0 - z * z).max(0.0).sqrt();
    let phi = 2.0 * PI * u2;
    Vec3::new(r * phi.cos(), r * phi.sin(), z)
}

/// Uniform direction on the unit sphere, pdf `1 / 4pi`.
pub fn sample_uniform_sphere(u1: f64, u2: f64) -> Vec3 {
    let z = 1.0 - 2.0 * u1;
    let r = (1.0 - z * z).max(0.0).sqrt();
    let phi = 2.0 * PI * u2;
    Vec3::new(r * phi.cos(), r * phi.sin(), z)
}

/// Axis-aligned bounding box.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub const EMPTY: Aabb = Aabb {
        min: Vec3::splat(f64::INFINITY),
        max: Vec3::splat(f64::NEG_INFINITY),
    };

    pub fn new(min: Vec3, max: Vec3) -> Aabb {
        Aabb { min, max }
    }

    pub fn grow(&mut self, p: Vec3) {
        self.min = self.min.min(p);
        self.max = self.max.max(p);
    }

    pub fn union(&self, o: &Aabb) -> Aabb {
        Aabb { min: self.min.min(o.min), max: self.max.max(o.max) }
    }

    pub fn extent(&self) -> Vec3 {
        self.max - self.min
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    pub fn diagonal(&self) -> f64 {
        self.extent().length()
    }

    pub fn longest_axis(&self) -> usize {
        let e = self.extent();
        if e.x >= e.y && e.x >= e.z {
            0
        } else if e.y >= e.z {
            1
        } else {
            2
        }
    }

    pub fn contains(&self, p: Vec3) -> bool {
        p.x >= self.min.x
            && p.y >= self.min.y
            && p.z >= self.min.z
            && p.x <= self.max.x
            && p.y <= self.max.y
            && p.z <= self.max.z
    }

    pub fn contains_box(&self, o: &Aabb) -> bool {
        self.contains(o.min) && self.contains(o.max)
    }

    /// Slab test; returns the entry distance if the ray overlaps `[t_min, t_max]`.
    #[inline]
    pub fn hit(&self, origin: Vec3, inv_dir: Vec3, t_min: f64, t_max: f64) -> Option<f64> {
        let mut t0 = t_min;
        let mut t1 = t_max;
        for axis in 0..3 {
            let inv = inv_dir[axis];
            let mut near = (self.min[axis] - origin[axis]) * inv;
            let mut far = (self.max[axis] - origin[axis]) * inv;
            if near > far {
                std::mem::swap(&mut near, &mut far);
            }
            // NaN from 0 * inf falls through these comparisons and keeps the slab open.
            if near > t0 {
                t0 = near;
            }
            if far < t1 {
                t1 = far;
            }
            if t0 > t1 {
                return None;
            }
        }
        Some(t0)
    }
}
