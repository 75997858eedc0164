use rayon::prelude::*;

use crate::error::Result;
use crate::math::{Rgb, Vec3};
use crate::rng::{Purpose, RngStream};
use crate::scene::{Hit, Scene};

use super::{path_trace_from_hit, RadianceSplit};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepPoint {
    pub light: Vec3,
    pub split: RadianceSplit,
}

/// Path-traced direct and indirect radiance at a fixed surface point for each
/// light position. Sample `i` uses the same random stream at every position,
/// so differences along the sweep reflect the light motion, not noise.
pub fn shadow_sweep(
    scene: &Scene,
    hit: &Hit,
    wo: Vec3,
    light_path: &[Vec3],
    spp: u32,
    depth: u32,
    seed: u64,
) -> Result<Vec<SweepPoint>> {
    for &xl in light_path {
        scene.check_light_clearance(xl)?;
    }
    let inv = 1.0 / spp.max(1) as f64;
    Ok(light_path
        .par_iter()
        .map(|&xl| {
            let mut acc = RadianceSplit::default();
            for i in 0..spp {
                let mut rng = RngStream::derive(seed, Purpose::Sweep, &[i as u64]);
                let s = path_trace_from_hit(scene, hit, wo, xl, &mut rng, depth);
                acc.direct += s.direct;
                acc.indirect += s.indirect;
            }
            SweepPoint { light: xl, split: RadianceSplit { direct: acc.direct * inv, indirect: acc.indirect * inv } }
        })
        .collect())
}

/// Adjacent absolute differences of a scalar series.
pub fn adjacent_steps(values: &[f64]) -> Vec<f64> {
    values.windows(2).map(|w| (w[1] - w[0]).abs()).collect()
}

pub fn luminance_series(points: &[SweepPoint], pick: impl Fn(&RadianceSplit) -> Rgb) -> Vec<f64> {
    points.iter().map(|p| pick(&p.split).luminance()).collect()
}
