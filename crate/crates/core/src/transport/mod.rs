//! Light transport: next-event direct term, one-bounce cache gather, path
//! tracer with a direct/indirect split, image rendering and the shadow sweep.

mod grad;
mod path;
mod render;
mod sweep;


use crate::error::{Error, Result};
use crate::math::{Rgb, Vec3};
use crate::rng::RngStream;
use crate::scene::{Hit, Scene, LIGHT_CLEARANCE};

pub use grad::{pixel_with_jacobian, plan_pixel, JacobianEntry, PixelJacobian, PixelPlan};
pub use path::{path_trace, path_trace_from_hit, path_trace_total, RadianceSplit};
pub use render::{pixel_jitter, render_image, render_pixel, render_pixel_sample, render_pixels, PixelSample, RenderConfig, RenderMode};
pub use sweep::{adjacent_steps, luminance_series, shadow_sweep, SweepPoint};

pub const DEFAULT_MAX_DEPTH: u32 = 6;

/// One cache lookup: outgoing radiance at `x` towards `wo` under a light at `xl`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CacheQuery {
    pub x: Vec3,
    pub wo: Vec3,
    pub xl: Vec3,
    /// Mesh visibility between `xl` and `x`.
    pub visible: bool,
    /// Surface record at `x`, for fields that need the local frame or material.
    pub hit: Hit,
}

impl CacheQuery {
    pub fn at(scene: &Scene, hit: &Hit, wo: Vec3, xl: Vec3) -> CacheQuery {
        CacheQuery { x: hit.position, wo, xl, visible: scene.visibility(xl, hit.position), hit: *hit }
    }
}

/// Anything that can stand in for outgoing surface radiance.
pub trait RadianceField: Sync {
    fn eval_batch(&self, queries: &[CacheQuery]) -> Vec<Rgb>;

    fn eval(&self, q: &CacheQuery) -> Rgb {
        self.eval_batch(std::slice::from_ref(q))[0]
    }
}

impl<F: RadianceField + ?Sized> RadianceField for &F {
    fn eval_batch(&self, queries: &[CacheQuery]) -> Vec<Rgb> {
        (**self).eval_batch(queries)
    }
}

/// Zero radiance everywhere.
pub struct ZeroField;

impl RadianceField for ZeroField {
    fn eval_batch(&self, queries: &[CacheQuery]) -> Vec<Rgb> {
        vec![Rgb::ZERO; queries.len()]
    }
}

/// Closure-backed field, convenient for analytic caches.
pub struct FnField<F>(pub F);

impl<F: Fn(&CacheQuery) -> Rgb + Sync> RadianceField for FnField<F> {
    fn eval_batch(&self, queries: &[CacheQuery]) -> Vec<Rgb> {
        queries.iter().map(&self.0).collect()
    }
}

/// Direction to the light and squared distance, `None` inside the clearance.
#[inline]
fn light_geometry(x: Vec3, xl: Vec3) -> Option<(Vec3, f64)> {
    let d = xl - x;
    let r2 = d.length_squared();
    if r2 < LIGHT_CLEARANCE * LIGHT_CLEARANCE {
        return None;
    }
    Some((d / r2.sqrt(), r2))
}

/// `f cos I / r^2` ignoring occlusion.
pub fn direct_unshadowed(scene: &Scene, hit: &Hit, wo: Vec3, xl: Vec3) -> Rgb {
    let Some((wl, r2)) = light_geometry(hit.position, xl) else {
        return Rgb::ZERO;
    };
    let cos = hit.normal.dot(wl);
    if cos <= 0.0 || hit.geo_normal.dot(wl) <= 0.0 {
        return Rgb::ZERO;
    }
    let f = scene.materials.params(hit.face as usize).eval(hit.normal, wl, wo);
    f.hadamard(scene.flashlight.intensity) * (cos / r2)
}

/// Next-event term with visibility; zero inside the light clearance.
#[inline]
pub(crate) fn next_event(scene: &Scene, hit: &Hit, wo: Vec3, xl: Vec3) -> Rgb {
    let l = direct_unshadowed(scene, hit, wo, xl);
    if l.is_black() || !scene.visibility(xl, hit.position) {
        return Rgb::ZERO;
    }
    l
}

/// Deterministic first-bounce radiance `V f cos I / r^2` towards `wo`.
pub fn direct_radiance(scene: &Scene, hit: &Hit, wo: Vec3, xl: Vec3) -> Result<Rgb> {
    let r = (xl - hit.position).length();
    if r < LIGHT_CLEARANCE {
        return Err(Error::InvalidScene(format!("light is {r:e} m from the shaded point")));
    }
    Ok(next_event(scene, hit, wo, xl))
}

/// One BSDF-sampled continuation from a hit, already divided by `pdf * m`.
#[derive(Clone, Copy, Debug)]
pub struct GatherSample {
    pub wi: Vec3,
    /// `f cos / (pdf m)`.
    pub weight: Rgb,
    /// `cos / (pdf m)`, used for parameter derivatives of `f`.
    pub cos_over_pdf: f64,
    pub query: CacheQuery,
}

/// Draws `m` continuations; misses and below-horizon samples are dropped.
/// Always consumes exactly `3 m` uniforms.
pub fn plan_gather(scene: &Scene, hit: &Hit, wo: Vec3, xl: Vec3, rng: &mut RngStream, m: u32) -> Vec<GatherSample> {
    let params = scene.materials.params(hit.face as usize);
    let mut out = Vec::with_capacity(m as usize);
    for _ in 0..m {
        let Some(s) = params.sample(hit.normal, wo, rng) else {
            continue;
        };
        if hit.geo_normal.dot(s.wi) <= 0.0 {
            continue;
        }
        let Some(next) = scene.intersect(&scene.spawn_ray(hit.position, s.wi)) else {
            continue;
        };
        let cos = hit.normal.dot(s.wi);
        let cos_over_pdf = cos / (s.pdf * m as f64);
        out.push(GatherSample {
            wi: s.wi,
            weight: s.f * cos_over_pdf,
            cos_over_pdf,
            query: CacheQuery::at(scene, &next, -s.wi, xl),
        });
    }
    out
}

/// Sum of gather weights times cache values.
pub fn accumulate_gather(samples: &[GatherSample], values: &[Rgb]) -> Rgb {
    samples.iter().zip(values).fold(Rgb::ZERO, |acc, (s, v)| acc + s.weight.hadamard(*v))
}

/// `direct + (1/M) sum f cos / pdf * cache(x', -wi, xl, V(xl, x'))`.
pub fn transport_estimate(
    scene: &Scene,
    hit: &Hit,
    wo: Vec3,
    xl: Vec3,
    cache: &dyn RadianceField,
    rng: &mut RngStream,
    m: u32,
) -> Rgb {
    let direct = next_event(scene, hit, wo, xl);
    let plan = plan_gather(scene, hit, wo, xl, rng, m.max(1));
    let values = cache.eval_batch(&plan.iter().map(|s| s.query).collect::<Vec<_>>());
    direct + accumulate_gather(&plan, &values)
}

/// Single BSDF-sampled bounce gathering the full cache; no light term.
pub fn surface_gather(
    scene: &Scene,
    hit: &Hit,
    wo: Vec3,
    xl: Vec3,
    cache: &dyn RadianceField,
    rng: &mut RngStream,
) -> Rgb {
    let plan = plan_gather(scene, hit, wo, xl, rng, 1);
    let values = cache.eval_batch(&plan.iter().map(|s| s.query).collect::<Vec<_>>());
    accumulate_gather(&plan, &values)
}

#[cfg(test)]
mod tests;
