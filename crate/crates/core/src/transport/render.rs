use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::math::{Rgb, Vec3};
use crate::rng::{Purpose, RngStream};
use crate::scene::{Camera, Ray, Scene};

use super::{accumulate_gather, next_event, path_trace, plan_gather, CacheQuery, GatherSample, RadianceField};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RenderMode {
    Path,
    Direct,
    Cache,
    NaiveCache,
}

impl RenderMode {
    pub const ALL: [RenderMode; 4] = [RenderMode::Path, RenderMode::Cache, RenderMode::NaiveCache, RenderMode::Direct];

    pub fn name(self) -> &'static str {
        match self {
            RenderMode::Path => "path",
            RenderMode::Direct => "direct",
            RenderMode::Cache => "cache",
            RenderMode::NaiveCache => "naive_cache",
        }
    }

    pub fn uses_cache(self) -> bool {
        matches!(self, RenderMode::Cache | RenderMode::NaiveCache)
    }
}

impl fmt::Display for RenderMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RenderMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<RenderMode> {
        match s {
            "path" => Ok(RenderMode::Path),
            "direct" => Ok(RenderMode::Direct),
            "cache" => Ok(RenderMode::Cache),
            "naive_cache" | "naive-cache" => Ok(RenderMode::NaiveCache),
            _ => Err(Error::InvalidConfig(format!("unknown render mode '{s}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderConfig {
    pub mode: RenderMode,
    pub spp: u32,
    pub max_depth: u32,
    /// Cache-query branches per primary hit.
    pub m: u32,
    pub seed: u64,
}

impl Default for RenderConfig {
    fn default() -> RenderConfig {
        RenderConfig { mode: RenderMode::Path, spp: 16, max_depth: super::DEFAULT_MAX_DEPTH, m: 1, seed: 0 }
    }
}

impl RenderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.spp == 0 || self.max_depth == 0 || self.m == 0 {
            return Err(Error::InvalidConfig("spp, max_depth and m must all be at least 1".into()));
        }
        Ok(())
    }
}

/// Sub-pixel offset of sample `s` out of `spp`: the pixel center at 1 spp,
/// stratified on an `n x n` grid when `spp = n^2`, uniform otherwise.
#[inline]
pub fn pixel_jitter(s: u32, spp: u32, rng: &mut RngStream) -> (f64, f64) {
    if spp == 1 {
        return (0.5, 0.5);
    }
    let (u, v) = rng.next_2d();
    let n = (spp as f64).sqrt().round() as u32;
    if n * n == spp {
        (((s % n) as f64 + u) / n as f64, ((s / n) as f64 + v) / n as f64)
    } else {
        (u, v)
    }
}

#[inline]
fn primary_ray(camera: &Camera, px: u32, py: u32, s: u32, spp: u32, rng: &mut RngStream) -> Ray {
    let (u, v) = pixel_jitter(s, spp, rng);
    camera.ray_through(px as f64 + u, py as f64 + v)
}

#[inline]
pub(crate) fn pixel_stream(seed: u64, purpose: Purpose, frame_key: u64, camera: &Camera, px: u32, py: u32) -> RngStream {
    RngStream::derive(seed, purpose, &[frame_key, py as u64 * camera.width() as u64 + px as u64])
}

/// A single estimator sample for one pixel, with the primary hit if any.
#[derive(Clone, Copy, Debug)]
pub struct PixelSample {
    pub value: Rgb,
    pub primary: Option<crate::scene::Hit>,
}

fn check_cache(config: &RenderConfig, cache: Option<&dyn RadianceField>) -> Result<()> {
    config.validate()?;
    if config.mode.uses_cache() && cache.is_none() {
        return Err(Error::InvalidConfig(format!("render mode '{}' needs a radiance cache", config.mode)));
    }
    Ok(())
}

/// One estimator sample through an explicit primary ray. Cache queries are
/// evaluated immediately; use [`render_image`] for batched evaluation.
pub fn render_pixel_sample(
    scene: &Scene,
    ray: &Ray,
    xl: Vec3,
    config: &RenderConfig,
    cache: Option<&dyn RadianceField>,
    rng: &mut RngStream,
) -> Result<PixelSample> {
    check_cache(config, cache)?;
    if config.mode == RenderMode::Path {
        let primary = scene.intersect(ray);
        let value = match primary {
            Some(h) => super::path_trace_from_hit(scene, &h, -ray.dir, xl, rng, config.max_depth).total(),
            None => Rgb::ZERO,
        };
        return Ok(PixelSample { value, primary });
    }
    let Some(hit) = scene.intersect(ray) else {
        return Ok(PixelSample { value: Rgb::ZERO, primary: None });
    };
    let wo = -ray.dir;
    let mut value = next_event(scene, &hit, wo, xl);
    if let (true, Some(c)) = (config.mode.uses_cache(), cache) {
        let plan = plan_gather(scene, &hit, wo, xl, rng, config.m);
        let q: Vec<CacheQuery> = plan.iter().map(|s| s.query).collect();
        value += accumulate_gather(&plan, &c.eval_batch(&q));
    }
    Ok(PixelSample { value, primary: Some(hit) })
}

/// Mean over `spp` samples for a list of pixels, with all cache queries batched.
pub fn render_pixels(
    scene: &Scene,
    camera: &Camera,
    xl: Vec3,
    pixels: &[(u32, u32)],
    config: &RenderConfig,
    cache: Option<&dyn RadianceField>,
    frame_key: u64,
) -> Result<Vec<Rgb>> {
    check_cache(config, cache)?;
    for &(px, py) in pixels {
        if px >= camera.width() || py >= camera.height() {
            return Err(Error::InvalidArgument(format!("pixel ({px}, {py}) outside image")));
        }
    }
    let inv = 1.0 / config.spp as f64;
    let mut out = vec![Rgb::ZERO; pixels.len()];
    match config.mode {
        RenderMode::Path | RenderMode::Direct => {
            for (o, &(px, py)) in out.iter_mut().zip(pixels) {
                let mut rng = pixel_stream(config.seed, Purpose::Render, frame_key, camera, px, py);
                let mut acc = Rgb::ZERO;
                for s in 0..config.spp {
                    let ray = primary_ray(camera, px, py, s, config.spp, &mut rng);
                    acc += if config.mode == RenderMode::Path {
                        path_trace(scene, &ray, xl, &mut rng, config.max_depth).total()
                    } else {
                        scene.intersect(&ray).map_or(Rgb::ZERO, |h| next_event(scene, &h, -ray.dir, xl))
                    };
                }
                *o = acc * inv;
            }
        }
        RenderMode::Cache | RenderMode::NaiveCache => {
            let cache = cache.expect("checked above");
            let mut plans: Vec<(usize, Vec<GatherSample>)> = Vec::new();
            for (i, (o, &(px, py))) in out.iter_mut().zip(pixels).enumerate() {
                let mut rng = pixel_stream(config.seed, Purpose::Render, frame_key, camera, px, py);
                let mut acc = Rgb::ZERO;
                for s in 0..config.spp {
                    let ray = primary_ray(camera, px, py, s, config.spp, &mut rng);
                    if let Some(hit) = scene.intersect(&ray) {
                        acc += next_event(scene, &hit, -ray.dir, xl);
                        plans.push((i, plan_gather(scene, &hit, -ray.dir, xl, &mut rng, config.m)));
                    }
                }
                *o = acc;
            }
            let queries: Vec<CacheQuery> = plans.iter().flat_map(|(_, p)| p.iter().map(|s| s.query)).collect();
            let values = cache.eval_batch(&queries);
            let mut k = 0;
            for (i, plan) in &plans {
                out[*i] += accumulate_gather(plan, &values[k..k + plan.len()]);
                k += plan.len();
            }
            for o in &mut out {
                *o = *o * inv;
            }
        }
    }
    Ok(out)
}

pub fn render_pixel(
    scene: &Scene,
    camera: &Camera,
    xl: Vec3,
    px: u32,
    py: u32,
    config: &RenderConfig,
    cache: Option<&dyn RadianceField>,
    frame_key: u64,
) -> Result<Rgb> {
    Ok(render_pixels(scene, camera, xl, &[(px, py)], config, cache, frame_key)?[0])
}

/// Renders a full frame; rows are distributed over the rayon pool and each
/// pixel owns its random stream, so the output does not depend on thread count.
pub fn render_image(
    scene: &Scene,
    camera: &Camera,
    xl: Vec3,
    config: &RenderConfig,
    cache: Option<&dyn RadianceField>,
    frame_key: u64,
) -> Result<Image> {
    check_cache(config, cache)?;
    let (w, h) = (camera.width(), camera.height());
    let rows: Vec<Vec<Rgb>> = (0..h)
        .into_par_iter()
        .map(|py| {
            let pixels: Vec<(u32, u32)> = (0..w).map(|px| (px, py)).collect();
            render_pixels(scene, camera, xl, &pixels, config, cache, frame_key)
        })
        .collect::<Result<_>>()?;
    let mut image = Image::new(w, h);
    for (py, row) in rows.iter().enumerate() {
        for (px, c) in row.iter().enumerate() {
            image.set(px as u32, py as u32, *c);
        }
    }
    Ok(image)
}
