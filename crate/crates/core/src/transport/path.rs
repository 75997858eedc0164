use crate::math::{Rgb, Vec3};
use crate::rng::RngStream;
use crate::scene::{Hit, Ray, Scene};

use super::next_event;

/// Path-traced radiance split into the first bounce and everything after it.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RadianceSplit {
    pub direct: Rgb,
    pub indirect: Rgb,
}

impl RadianceSplit {
    pub fn total(&self) -> Rgb {
        self.direct + self.indirect
    }
}

/// Depth-limited path tracer with next-event estimation at every vertex.
/// Each vertex consumes exactly three uniforms.
pub fn path_trace(scene: &Scene, ray: &Ray, xl: Vec3, rng: &mut RngStream, depth: u32) -> RadianceSplit {
    match scene.intersect(ray) {
        Some(hit) => path_trace_from_hit(scene, &hit, -ray.dir, xl, rng, depth),
        None => RadianceSplit::default(),
    }
}

pub fn path_trace_from_hit(scene: &Scene, hit: &Hit, wo: Vec3, xl: Vec3, rng: &mut RngStream, depth: u32) -> RadianceSplit {
    let mut out = RadianceSplit { direct: next_event(scene, hit, wo, xl), indirect: Rgb::ZERO };
    let mut beta = Rgb::splat(1.0);
    let mut hit = *hit;
    let mut wo = wo;
    for _ in 1..depth {
        let Some((next, weight)) = continue_path(scene, &hit, wo, rng) else {
            break;
        };
        beta = beta.hadamard(weight);
        wo = -next.1;
        hit = next.0;
        out.indirect += beta.hadamard(next_event(scene, &hit, wo, xl));
    }
    out
}

/// Same estimator accumulated into a single sum.
pub fn path_trace_total(scene: &Scene, ray: &Ray, xl: Vec3, rng: &mut RngStream, depth: u32) -> Rgb {
    let Some(first) = scene.intersect(ray) else {
        return Rgb::ZERO;
    };
    let mut hit = first;
    let mut wo = -ray.dir;
    let mut beta = Rgb::splat(1.0);
    let first_term = next_event(scene, &hit, wo, xl);
    let mut rest = Rgb::ZERO;
    for _ in 1..depth {
        let Some((next, weight)) = continue_path(scene, &hit, wo, rng) else {
            break;
        };
        beta = beta.hadamard(weight);
        wo = -next.1;
        hit = next.0;
        rest += beta.hadamard(next_event(scene, &hit, wo, xl));
    }
    first_term + rest
}

/// BSDF-samples a continuation; returns the next hit, the sampled direction and `f cos / pdf`.
#[inline]
pub(crate) fn continue_path(scene: &Scene, hit: &Hit, wo: Vec3, rng: &mut RngStream) -> Option<((Hit, Vec3), Rgb)> {
    let params = scene.materials.params(hit.face as usize);
    let s = params.sample(hit.normal, wo, rng)?;
    if hit.geo_normal.dot(s.wi) <= 0.0 {
        return None;
    }
    let next = scene.intersect(&scene.spawn_ray(hit.position, s.wi))?;
    let weight = s.f * (hit.normal.dot(s.wi) / s.pdf);
    Some(((next, s.wi), weight))
}
