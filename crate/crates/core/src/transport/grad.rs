//! Single-sample pixel estimates with their Jacobian w.r.t. per-face
//! materials. Sampling is detached: directions and pdfs are treated as
//! constants, which keeps the derivative estimator unbiased.

use crate::brdf::BrdfGrad;
use crate::math::{Rgb, Vec3};
use crate::rng::RngStream;
use crate::scene::{Hit, Ray, Scene};

use super::path::continue_path;
use super::{direct_unshadowed, plan_gather, CacheQuery, GatherSample, RenderMode};

/// `d y_c / d albedo_{face, c}` and `d y_c / d roughness_face` for each channel `c`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JacobianEntry {
    pub face: u32,
    pub d_albedo: Rgb,
    pub d_roughness: Rgb,
}

#[derive(Clone, Debug, Default)]
pub struct PixelJacobian {
    pub value: Rgb,
    pub entries: Vec<JacobianEntry>,
}

impl PixelJacobian {
    /// Contracts with `dL/dy` into dense per-face gradients.
    pub fn accumulate(&self, dl_dy: Rgb, d_albedo: &mut [Rgb], d_roughness: &mut [f64]) {
        for e in &self.entries {
            let f = e.face as usize;
            d_albedo[f] += dl_dy.hadamard(e.d_albedo);
            d_roughness[f] += dl_dy.hadamard(e.d_roughness).sum();
        }
    }
}

/// A pixel sample whose cache lookups have been planned but not evaluated.
#[derive(Clone, Debug)]
pub struct PixelPlan {
    pub primary: Option<Hit>,
    partial: PixelJacobian,
    face: u32,
    gather: Vec<(GatherSample, BrdfGrad)>,
}

impl PixelPlan {
    pub fn queries(&self) -> impl Iterator<Item = CacheQuery> + '_ {
        self.gather.iter().map(|(s, _)| s.query)
    }

    pub fn query_count(&self) -> usize {
        self.gather.len()
    }

    /// Completes the estimate with cache values in [`PixelPlan::queries`] order.
    pub fn finish(&self, values: &[Rgb]) -> PixelJacobian {
        let mut out = self.partial.clone();
        if self.gather.is_empty() {
            return out;
        }
        let mut d_albedo = Rgb::ZERO;
        let mut d_roughness = Rgb::ZERO;
        for ((s, g), v) in self.gather.iter().zip(values) {
            out.value += s.weight.hadamard(*v);
            d_albedo += g.d_albedo.hadamard(*v);
            d_roughness += g.d_roughness.hadamard(*v);
        }
        out.entries.push(JacobianEntry { face: self.face, d_albedo, d_roughness });
        out
    }
}

/// Next-event term and its material derivative.
fn next_event_grad(scene: &Scene, hit: &Hit, wo: Vec3, xl: Vec3) -> (Rgb, BrdfGrad) {
    let zero = (Rgb::ZERO, BrdfGrad { d_albedo: Rgb::ZERO, d_roughness: Rgb::ZERO });
    let value = direct_unshadowed(scene, hit, wo, xl);
    if value.is_black() || !scene.visibility(xl, hit.position) {
        return zero;
    }
    let d = xl - hit.position;
    let r2 = d.length_squared();
    let wl = d / r2.sqrt();
    let scale = scene.flashlight.intensity * (hit.normal.dot(wl) / r2);
    let g = scene.materials.params(hit.face as usize).eval_grad(hit.normal, wl, wo);
    (value, BrdfGrad { d_albedo: g.d_albedo.hadamard(scale), d_roughness: g.d_roughness.hadamard(scale) })
}

/// Plans one estimator sample of `mode` through `ray`, consuming `rng`
/// exactly as the matching renderer does.
pub fn plan_pixel(
    scene: &Scene,
    ray: &Ray,
    xl: Vec3,
    mode: RenderMode,
    max_depth: u32,
    m: u32,
    rng: &mut RngStream,
) -> PixelPlan {
    let Some(hit) = scene.intersect(ray) else {
        return PixelPlan { primary: None, partial: PixelJacobian::default(), face: 0, gather: Vec::new() };
    };
    let wo = -ray.dir;
    let partial = match mode {
        RenderMode::Path => path_with_jacobian(scene, &hit, wo, xl, rng, max_depth),
        _ => {
            let (value, g) = next_event_grad(scene, &hit, wo, xl);
            PixelJacobian {
                value,
                entries: vec![JacobianEntry { face: hit.face, d_albedo: g.d_albedo, d_roughness: g.d_roughness }],
            }
        }
    };
    let mut gather = Vec::new();
    if mode.uses_cache() {
        let params = scene.materials.params(hit.face as usize);
        for s in plan_gather(scene, &hit, wo, xl, rng, m) {
            let g = params.eval_grad(hit.normal, s.wi, wo);
            let scaled = BrdfGrad { d_albedo: g.d_albedo * s.cos_over_pdf, d_roughness: g.d_roughness * s.cos_over_pdf };
            gather.push((s, scaled));
        }
    }
    PixelPlan { primary: Some(hit), partial, face: hit.face, gather }
}

/// Convenience wrapper evaluating the planned queries immediately.
pub fn pixel_with_jacobian(
    scene: &Scene,
    ray: &Ray,
    xl: Vec3,
    mode: RenderMode,
    max_depth: u32,
    m: u32,
    cache: Option<&dyn super::RadianceField>,
    rng: &mut RngStream,
) -> PixelJacobian {
    let plan = plan_pixel(scene, ray, xl, mode, max_depth, m, rng);
    let values = match cache {
        Some(c) if plan.query_count() > 0 => c.eval_batch(&plan.queries().collect::<Vec<_>>()),
        _ => vec![Rgb::ZERO; plan.query_count()],
    };
    plan.finish(&values)
}

struct Vertex {
    face: u32,
    ne: Rgb,
    d_ne: BrdfGrad,
    /// Continuation weight `f cos / pdf` to the next vertex and its derivative.
    w: Rgb,
    d_w: BrdfGrad,
}

/// Path estimate with reverse accumulation over the vertex chain:
/// `dy/dp = sum_k beta_k (dN_k/dp + dw_k/dp * R_{k+1})`.
fn path_with_jacobian(scene: &Scene, hit: &Hit, wo: Vec3, xl: Vec3, rng: &mut RngStream, depth: u32) -> PixelJacobian {
    let zero = BrdfGrad { d_albedo: Rgb::ZERO, d_roughness: Rgb::ZERO };
    let mut verts: Vec<Vertex> = Vec::with_capacity(depth as usize);
    let mut hit = *hit;
    let mut wo = wo;
    let (ne, d_ne) = next_event_grad(scene, &hit, wo, xl);
    verts.push(Vertex { face: hit.face, ne, d_ne, w: Rgb::ZERO, d_w: zero });
    for _ in 1..depth {
        let Some(((next, wi), weight)) = continue_path(scene, &hit, wo, rng) else {
            break;
        };
        let params = scene.materials.params(hit.face as usize);
        let pdf = params.pdf(hit.normal, wo, wi);
        let g = params.eval_grad(hit.normal, wi, wo);
        let k = hit.normal.dot(wi) / pdf;
        let last = verts.last_mut().expect("non-empty");
        last.w = weight;
        last.d_w = BrdfGrad { d_albedo: g.d_albedo * k, d_roughness: g.d_roughness * k };
        wo = -wi;
        hit = next;
        let (ne, d_ne) = next_event_grad(scene, &hit, wo, xl);
        verts.push(Vertex { face: hit.face, ne, d_ne, w: Rgb::ZERO, d_w: zero });
    }
    // suffix radiance R_k, computed back to front
    let mut suffix = vec![Rgb::ZERO; verts.len() + 1];
    for k in (0..verts.len()).rev() {
        suffix[k] = verts[k].ne + verts[k].w.hadamard(suffix[k + 1]);
    }
    let mut entries = Vec::with_capacity(verts.len());
    let mut beta = Rgb::splat(1.0);
    for (k, v) in verts.iter().enumerate() {
        let r = suffix[k + 1];
        entries.push(JacobianEntry {
            face: v.face,
            d_albedo: beta.hadamard(v.d_ne.d_albedo + v.d_w.d_albedo.hadamard(r)),
            d_roughness: beta.hadamard(v.d_ne.d_roughness + v.d_w.d_roughness.hadamard(r)),
        });
        beta = beta.hadamard(v.w);
    }
    PixelJacobian { value: suffix[0], entries }
}
