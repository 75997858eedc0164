use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::brdf::SurfaceMaterial;
use crate::cache::{CacheArch, CacheKind, RadianceCache};
use crate::error::{Error, Result};
use crate::math::Rgb;
use crate::rng::{debug_assert_independent, Purpose, RngStream};
use crate::scene::{CaptureFrame, Materials, Scene};
use crate::transport::{plan_pixel, CacheQuery, PixelJacobian, PixelPlan, RadianceField, RenderMode};

use super::{light_angle, loss_rough, saw_weight, training_normalizer, AdamState, CacheTrainer, PixelLoss, TrainConfig};

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[inline]
fn logit(p: f64) -> f64 {
    let p = p.clamp(1e-6, 1.0 - 1e-6);
    (p / (1.0 - p)).ln()
}

/// Per-face albedo and roughness in unconstrained form; four logits per
/// face (albedo r, g, b, roughness) squashed through a sigmoid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaterialParams {
    pub logits: Vec<f64>,
}

impl MaterialParams {
    pub fn uniform(faces: usize, albedo: f64, roughness: f64) -> MaterialParams {
        let face = [logit(albedo), logit(albedo), logit(albedo), logit(roughness)];
        MaterialParams { logits: face.iter().copied().cycle().take(4 * faces).collect() }
    }

    pub fn from_materials(m: &Materials) -> MaterialParams {
        let logits = m
            .faces
            .iter()
            .flat_map(|f| [logit(f.albedo.r), logit(f.albedo.g), logit(f.albedo.b), logit(f.roughness)])
            .collect();
        MaterialParams { logits }
    }

    pub fn face_count(&self) -> usize {
        self.logits.len() / 4
    }

    pub fn albedo(&self, face: usize) -> Rgb {
        let l = &self.logits[4 * face..4 * face + 3];
        Rgb::new(sigmoid(l[0]), sigmoid(l[1]), sigmoid(l[2]))
    }

    pub fn roughness(&self, face: usize) -> f64 {
        sigmoid(self.logits[4 * face + 3])
    }

    pub fn roughness_all(&self) -> Vec<f64> {
        (0..self.face_count()).map(|f| self.roughness(f)).collect()
    }

    pub fn to_materials(&self, specular: f64) -> Materials {
        Materials {
            specular,
            faces: (0..self.face_count()).map(|f| SurfaceMaterial::new(self.albedo(f), self.roughness(f))).collect(),
        }
    }

    /// Chains gradients w.r.t. albedo and roughness through the sigmoid.
    pub fn logit_gradient(&self, d_albedo: &[Rgb], d_roughness: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.logits.len()];
        for f in 0..self.face_count() {
            for c in 0..3 {
                let s = sigmoid(self.logits[4 * f + c]);
                out[4 * f + c] = d_albedo[f][c] * s * (1.0 - s);
            }
            let s = sigmoid(self.logits[4 * f + 3]);
            out[4 * f + 3] = d_roughness[f] * s * (1.0 - s);
        }
        out
    }
}

/// One supervised pixel: frame, pixel, target radiance and its SAW weight.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PixelTarget {
    pub frame: usize,
    pub px: u32,
    pub py: u32,
    pub y: Rgb,
    pub weight: f64,
}

/// Every pixel of every frame whose center ray hits geometry and whose SAW
/// weight is positive. Frames need images.
pub fn pixel_targets(scene: &Scene, frames: &[CaptureFrame], saw_a: f64, saw_b: f64) -> Result<Vec<PixelTarget>> {
    let mut out = Vec::new();
    for (fi, f) in frames.iter().enumerate() {
        let img = f.image.as_ref().ok_or_else(|| Error::InvalidInput(format!("frame {fi} has no image")))?;
        let cam = &f.camera;
        if img.width != cam.width() || img.height != cam.height() {
            return Err(Error::InvalidInput(format!("frame {fi} image size does not match its camera")));
        }
        for py in 0..cam.height() {
            for px in 0..cam.width() {
                if let Some(mask) = &f.mask {
                    if !mask[(py * cam.width() + px) as usize] {
                        continue;
                    }
                }
                let ray = cam.ray_through(px as f64 + 0.5, py as f64 + 0.5);
                let Some(hit) = scene.intersect(&ray) else {
                    continue;
                };
                let weight = saw_weight(light_angle(hit.normal, hit.position, f.light), saw_a, saw_b);
                if weight > 0.0 {
                    out.push(PixelTarget { frame: fi, px, py, y: img.get(px, py), weight });
                }
            }
        }
    }
    Ok(out)
}

/// How `dL/dy` and `dy/dphi` share random numbers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GradEstimator {
    /// Separate renders for the loss derivative and the Jacobian.
    Independent,
    /// One render used for both (biased for nonlinear losses).
    Correlated,
}

/// Estimator settings for the material gradient.
#[derive(Clone, Copy, Debug)]
pub struct GradSettings {
    pub mode: RenderMode,
    pub max_depth: u32,
    pub m: u32,
    pub loss: PixelLoss,
    pub estimator: GradEstimator,
    /// Renders averaged into the loss-value estimate `y1` (independent estimator only).
    pub value_spp: u32,
    pub seed: u64,
}

/// Batch-mean loss and its gradient w.r.t. per-face albedo and roughness.
#[derive(Clone, Debug)]
pub struct MaterialGrad {
    pub loss: f64,
    pub d_albedo: Vec<Rgb>,
    pub d_roughness: Vec<f64>,
}

fn pixel_plan(scene: &Scene, frame: &CaptureFrame, t: &PixelTarget, s: &GradSettings, rng: &mut RngStream) -> PixelPlan {
    let (u, v) = rng.next_2d();
    let ray = frame.camera.ray_through(t.px as f64 + u, t.py as f64 + v);
    plan_pixel(scene, &ray, frame.light, s.mode, s.max_depth, s.m, rng)
}

/// Evaluates every plan's cache queries in one batch.
fn finish_plans(plans: &[PixelPlan], cache: Option<&dyn RadianceField>) -> Result<Vec<PixelJacobian>> {
    let queries: Vec<CacheQuery> = plans.iter().flat_map(|p| p.queries()).collect();
    let values = match cache {
        Some(c) => c.eval_batch(&queries),
        None if queries.is_empty() => Vec::new(),
        None => return Err(Error::InvalidConfig("this render mode needs a radiance cache".into())),
    };
    let mut k = 0;
    Ok(plans
        .iter()
        .map(|p| {
            let j = p.finish(&values[k..k + p.query_count()]);
            k += p.query_count();
            j
        })
        .collect())
}

/// Material gradient over a pixel batch. With [`GradEstimator::Independent`]
/// pixel `i` renders `y1` from the loss-value stream and `(y2, dy2/dphi)`
/// from the render-gradient stream, and contributes `w dL(y1) * dy2/dphi`.
pub fn grad_material(
    scene: &Scene,
    frames: &[CaptureFrame],
    targets: &[PixelTarget],
    cache: Option<&dyn RadianceField>,
    settings: &GradSettings,
    step: u64,
) -> Result<MaterialGrad> {
    if targets.is_empty() {
        return Err(Error::InvalidInput("empty pixel batch".into()));
    }
    let faces = scene.face_count();
    let value_spp = settings.value_spp.max(1) as usize;
    let (plans_value, plans_grad): (Vec<Vec<PixelPlan>>, Vec<PixelPlan>) = targets
        .par_iter()
        .enumerate()
        .map(|(i, t)| {
            let frame = &frames[t.frame];
            let mut g = RngStream::derive(settings.seed, Purpose::RenderGrad, &[step, i as u64]);
            match settings.estimator {
                GradEstimator::Independent => {
                    let mut l = RngStream::derive(settings.seed, Purpose::LossValue, &[step, i as u64]);
                    debug_assert_independent(&l, &g);
                    let value = (0..value_spp).map(|_| pixel_plan(scene, frame, t, settings, &mut l)).collect();
                    (value, pixel_plan(scene, frame, t, settings, &mut g))
                }
                GradEstimator::Correlated => (Vec::new(), pixel_plan(scene, frame, t, settings, &mut g)),
            }
        })
        .unzip();
    let jac = finish_plans(&plans_grad, cache)?;
    // (numerator, stop-gradient denominator) estimates; with two or more value
    // renders the halves are disjoint so the weight is independent of the residual
    let values: Vec<(Rgb, Rgb)> = match settings.estimator {
        GradEstimator::Independent => {
            let plans: Vec<PixelPlan> = plans_value.into_iter().flatten().collect();
            let renders = finish_plans(&plans, cache)?;
            let half = value_spp.div_ceil(2);
            renders
                .chunks(value_spp)
                .map(|c| {
                    let mean = |r: &[PixelJacobian]| r.iter().fold(Rgb::ZERO, |acc, j| acc + j.value) / r.len() as f64;
                    if value_spp == 1 {
                        (c[0].value, c[0].value)
                    } else {
                        (mean(&c[..half]), mean(&c[half..]))
                    }
                })
                .collect()
        }
        GradEstimator::Correlated => jac.iter().map(|j| (j.value, j.value)).collect(),
    };
    let inv = 1.0 / targets.len() as f64;
    let mut d_albedo = vec![Rgb::ZERO; faces];
    let mut d_roughness = vec![0.0; faces];
    let mut loss = 0.0;
    for ((t, &(y1, den)), j) in targets.iter().zip(&values).zip(&jac) {
        let (l, dl) = settings.loss.eval_weighted(y1, den, t.y);
        loss += t.weight * l * inv;
        j.accumulate(dl * (t.weight * inv), &mut d_albedo, &mut d_roughness);
    }
    Ok(MaterialGrad { loss, d_albedo, d_roughness })
}

/// [`grad_material`] with independent sample sets.
pub fn grad_material_unbiased(
    scene: &Scene,
    frames: &[CaptureFrame],
    targets: &[PixelTarget],
    cache: Option<&dyn RadianceField>,
    settings: &GradSettings,
    step: u64,
) -> Result<MaterialGrad> {
    let s = GradSettings { estimator: GradEstimator::Independent, ..*settings };
    grad_material(scene, frames, targets, cache, &s, step)
}

/// One line of the material-optimization log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaterialStepLog {
    pub step: u64,
    pub recons: f64,
    pub rough: f64,
    pub total: f64,
    pub cache_prior: Option<f64>,
    pub wall_seconds: f64,
}

#[derive(Clone, Debug)]
pub struct MaterialRun {
    pub params: MaterialParams,
    pub history: Vec<MaterialStepLog>,
    pub cache_history: Vec<super::CacheStepLog>,
    pub cache: Option<RadianceCache<f32>>,
}

/// Recovers per-face materials on fixed geometry. Cache modes first warm
/// the cache up with materials frozen, then alternate one cache step with
/// one material step.
pub fn optimize_materials(
    scene: &Scene,
    frames: &[CaptureFrame],
    mode: RenderMode,
    config: &TrainConfig,
    mut on_step: impl FnMut(&MaterialStepLog),
) -> Result<MaterialRun> {
    config.validate()?;
    let faces = scene.face_count();
    let segments: Vec<Option<u32>> = scene.mesh.segment_ids.iter().map(|&s| Some(s)).collect();
    let mut params = MaterialParams::uniform(faces, config.init_albedo, config.init_roughness);
    let specular = scene.materials.specular;
    let mut current = scene.with_materials(params.to_materials(specular))?;
    let targets = pixel_targets(scene, frames, config.saw_a, config.saw_b)?;
    if targets.is_empty() {
        return Err(Error::InvalidInput("no supervised pixels".into()));
    }
    let mut trainer = match mode {
        RenderMode::Cache | RenderMode::NaiveCache => {
            let kind = if mode == RenderMode::Cache { CacheKind::Dynamic } else { CacheKind::Naive };
            let arch = CacheArch { kind, ..config.cache };
            let cache = RadianceCache::<f32>::new(arch, training_normalizer(scene, frames)?, config.seed)?;
            Some(CacheTrainer::new(cache, config.clone())?)
        }
        _ => None,
    };
    let mut cache_history = Vec::new();
    if let Some(t) = trainer.as_mut() {
        for _ in 0..config.warmup_steps {
            cache_history.push(t.step(&current, frames)?);
        }
    }
    let settings = GradSettings {
        mode,
        max_depth: config.max_depth,
        m: config.m,
        loss: PixelLoss::Recons { eps: config.eps },
        estimator: GradEstimator::Independent,
        value_spp: config.value_spp,
        seed: config.seed,
    };
    let mut adam = AdamState::new(params.logits.len());
    let mut history = Vec::with_capacity(config.steps as usize);
    let started = Instant::now();
    let mut initial: Option<f64> = None;
    for step in 0..config.steps {
        let mut cache_prior = None;
        if let Some(t) = trainer.as_mut() {
            let log = t.step(&current, frames)?;
            cache_prior = Some(log.total);
            cache_history.push(log);
        }
        let mut rng = RngStream::derive(config.seed, Purpose::MaterialBatch, &[step]);
        let batch: Vec<PixelTarget> = (0..config.batch_size).map(|_| targets[rng.below(targets.len())]).collect();
        let field = trainer.as_ref().map(|t| t.field(&current));
        let g = grad_material_unbiased(&current, frames, &batch, field.as_deref(), &settings, step)?;
        drop(field);
        let (rough, d_rough) = loss_rough(&params.roughness_all(), &segments)?;
        let d_roughness: Vec<f64> =
            g.d_roughness.iter().zip(&d_rough).map(|(a, b)| a + config.lambda_rough * b).collect();
        let total = g.loss + config.lambda_rough * rough;
        let first = *initial.get_or_insert(total);
        if !total.is_finite() || total > config.divergence_factor * first {
            return Err(Error::Diverged(format!("material loss {total} at step {step} exceeds {}x the initial {first}", config.divergence_factor)));
        }
        let grad = params.logit_gradient(&g.d_albedo, &d_roughness);
        let lr = config.material_lr * config.material_lr_decay.powf(step as f64 / config.steps.max(1) as f64);
        adam.step(&mut params.logits, &grad, lr)?;
        current = current.with_materials(params.to_materials(specular))?;
        let log = MaterialStepLog { step, recons: g.loss, rough, total, cache_prior, wall_seconds: started.elapsed().as_secs_f64() };
        on_step(&log);
        history.push(log);
    }
    Ok(MaterialRun { params, history, cache_history, cache: trainer.map(|t| t.cache) })
}
