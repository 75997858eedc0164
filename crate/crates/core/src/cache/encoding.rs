use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{Aabb, Vec3};

/// Frequency bands for each 3-vector input.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncodingCfg {
    pub position_bands: u32,
    pub direction_bands: u32,
    pub light_bands: u32,
}

impl Default for EncodingCfg {
    fn default() -> EncodingCfg {
        EncodingCfg { position_bands: 6, direction_bands: 4, light_bands: 6 }
    }
}

#[inline]
fn block_width(bands: u32) -> usize {
    3 * (2 * bands as usize + 1)
}

impl EncodingCfg {
    pub fn width(&self) -> usize {
        block_width(self.position_bands) + block_width(self.direction_bands) + block_width(self.light_bands)
    }
}

/// Maps positions into `[-1, 1]^3` with a uniform scale.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub center: Vec3,
    pub half_extent: f64,
}

impl Normalizer {
    pub const IDENTITY: Normalizer = Normalizer { center: Vec3::ZERO, half_extent: 1.0 };

    /// Smallest cube around `bounds`, padded by 5%.
    pub fn enclosing(bounds: &Aabb) -> Result<Normalizer> {
        let h = 0.5 * bounds.extent().max_component() * 1.05;
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::InvalidArgument("cannot normalize an empty or degenerate box".into()));
        }
        Ok(Normalizer { center: bounds.center(), half_extent: h })
    }

    #[inline]
    pub fn apply(&self, p: Vec3) -> Vec3 {
        (p - self.center) / self.half_extent
    }
}

fn push_block(out: &mut Vec<f64>, v: Vec3, bands: u32) {
    let a = v.to_array();
    out.extend_from_slice(&a);
    let mut freq = PI;
    for _ in 0..bands {
        out.extend(a.iter().map(|c| (freq * c).sin()));
        out.extend(a.iter().map(|c| (freq * c).cos()));
        freq *= 2.0;
    }
}

/// Raw inputs followed by `sin, cos` at `2^k pi` for each band; positions go
/// through `norm` first, the direction is used as is.
pub fn encode(cfg: &EncodingCfg, norm: &Normalizer, x: Vec3, wo: Vec3, xl: Vec3) -> Vec<f64> {
    let mut out = Vec::with_capacity(cfg.width());
    encode_into(cfg, norm, x, wo, xl, &mut out);
    out
}

pub fn encode_into(cfg: &EncodingCfg, norm: &Normalizer, x: Vec3, wo: Vec3, xl: Vec3, out: &mut Vec<f64>) {
    push_block(out, norm.apply(x), cfg.position_bands);
    push_block(out, wo, cfg.direction_bands);
    push_block(out, norm.apply(xl), cfg.light_bands);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    #[test]
    fn zero_input_one_band() {
        let cfg = EncodingCfg { position_bands: 1, direction_bands: 1, light_bands: 1 };
        let e = encode(&cfg, &Normalizer::IDENTITY, Vec3::ZERO, Vec3::ZERO, Vec3::ZERO);
        assert_eq!(e.len(), 27);
        for block in e.chunks(9) {
            assert_eq!(&block[..6], &[0.0; 6]);
            assert_eq!(&block[6..], &[1.0; 3]);
        }
    }

    #[test]
    fn width_formula() {
        for (bx, bd, bl) in [(0, 0, 0), (6, 4, 6), (3, 0, 2)] {
            let cfg = EncodingCfg { position_bands: bx, direction_bands: bd, light_bands: bl };
            let e = encode(&cfg, &Normalizer::IDENTITY, Vec3::splat(1.0), Vec3::splat(1.0), Vec3::splat(1.0));
            let expect = 3 * (2 * bx as usize + 1) + 3 * (2 * bd as usize + 1) + 3 * (2 * bl as usize + 1);
            assert_eq!(e.len(), expect);
            assert_eq!(cfg.width(), expect);
        }
        assert_eq!(EncodingCfg::default().width(), 39 + 27 + 39);
    }

    #[test]
    fn band_terms_are_two_periodic() {
        let cfg = EncodingCfg::default();
        let mut rng = RngStream::new(1, 1);
        for _ in 0..100 {
            let v = Vec3::new(rng.next_f64(), rng.next_f64(), rng.next_f64()) * 2.0 - Vec3::splat(1.0);
            let d = Vec3::new(0.0, 0.0, 1.0);
            let a = encode(&cfg, &Normalizer::IDENTITY, v, d, v);
            let b = encode(&cfg, &Normalizer::IDENTITY, v + Vec3::splat(2.0), d, v + Vec3::splat(2.0));
            let w = 3 * (2 * cfg.position_bands as usize + 1);
            for (x, y) in a[3..w].iter().zip(&b[3..w]) {
                assert!((x - y).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn normalizer_maps_box_into_unit_cube() {
        let b = Aabb::new(Vec3::new(-1.0, 0.0, -1.0), Vec3::new(1.0, 1.6, 3.0));
        let n = Normalizer::enclosing(&b).unwrap();
        for p in [b.min, b.max, b.center()] {
            let q = n.apply(p);
            assert!(q.to_array().iter().all(|c| c.abs() <= 1.0));
        }
        assert!(Normalizer::enclosing(&Aabb::EMPTY).is_err());
    }
}
