use std::time::Instant;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cache::{AnalyticDirect, CacheKind, CacheSnapshot, Normalizer, RadianceCache, Real, EVAL_CHUNK};
use crate::error::{Error, Result};
use crate::math::{Aabb, Rgb};
use crate::rng::{Purpose, RngStream};
use crate::scene::{CaptureFrame, Scene};
use crate::transport::{accumulate_gather, direct_unshadowed, plan_gather, CacheQuery, RadianceField};

use super::{AdamState, TrainConfig};

/// A surface point with its two prior targets.
#[derive(Clone, Copy, Debug)]
pub struct PriorSample {
    pub query: CacheQuery,
    /// Unshadowed next-event radiance `f cos I / r^2`.
    pub direct: Rgb,
    /// One-sample estimate of the transport operator applied to the frozen cache.
    pub indirect: Rgb,
}

impl PriorSample {
    /// Target for a single-network cache.
    pub fn full(&self) -> Rgb {
        if self.query.visible {
            self.direct + self.indirect
        } else {
            self.indirect
        }
    }
}

/// Builds targets for `points`; point `i` gathers with `streams(i)`.
pub fn prior_targets(
    scene: &Scene,
    points: &[CacheQuery],
    frozen: &dyn RadianceField,
    streams: impl Fn(usize) -> RngStream + Sync,
) -> Vec<PriorSample> {
    let plans: Vec<_> = points
        .par_iter()
        .enumerate()
        .map(|(i, q)| plan_gather(scene, &q.hit, q.wo, q.xl, &mut streams(i), 1))
        .collect();
    let queries: Vec<CacheQuery> = plans.iter().flat_map(|p| p.iter().map(|s| s.query)).collect();
    let values = frozen.eval_batch(&queries);
    let mut k = 0;
    points
        .iter()
        .zip(&plans)
        .map(|(q, plan)| {
            let indirect = accumulate_gather(plan, &values[k..k + plan.len()]);
            k += plan.len();
            PriorSample { query: *q, direct: direct_unshadowed(scene, &q.hit, q.wo, q.xl), indirect }
        })
        .collect()
}

/// Prior loss value, its two parts, and per-network parameter gradients.
#[derive(Clone, Debug)]
pub struct PriorLoss<T> {
    pub value: f64,
    pub direct: f64,
    pub indirect: f64,
    pub grads: Vec<Vec<T>>,
}

fn sq(r: Rgb) -> f64 {
    r.hadamard(r).sum()
}

fn to_rows<T: Real>(v: &[Rgb]) -> Array2<T> {
    Array2::from_shape_fn((v.len(), 3), |(i, c)| T::of(v[i][c]))
}

/// Mean over samples of `V ||L_direct - direct||^2 + ||L_indirect - indirect||^2`
/// (dynamic) or `||L - target||^2` (naive). With `train_direct = false` the
/// direct network is left out entirely.
pub fn loss_prior<T: Real>(cache: &RadianceCache<T>, samples: &[PriorSample], train_direct: bool) -> Result<PriorLoss<T>> {
    let n = samples.len();
    if n == 0 {
        return Err(Error::InvalidInput("empty prior batch".into()));
    }
    let scale = 2.0 / n as f64;
    let kind = cache.kind();
    let chunks: Vec<(f64, f64, Vec<Vec<T>>)> = samples
        .par_chunks(EVAL_CHUNK)
        .map(|chunk| {
            let queries: Vec<CacheQuery> = chunk.iter().map(|s| s.query).collect();
            let x = cache.features(&queries);
            let mut grads: Vec<Vec<T>> = cache.nets().iter().map(|m| vec![T::zero(); m.param_count()]).collect();
            let (mut ld, mut li) = (0.0, 0.0);
            match kind {
                CacheKind::Dynamic => {
                    let ind = cache.nets()[1].forward(x.view()).expect("width");
                    let mut up_i = Vec::with_capacity(chunk.len());
                    for (s, row) in chunk.iter().zip(ind.output.rows()) {
                        let r = Rgb::new(row[0].f64(), row[1].f64(), row[2].f64()) - s.indirect;
                        li += sq(r);
                        up_i.push(r * scale);
                    }
                    cache.nets()[1].backward(&ind, to_rows::<T>(&up_i).view(), &mut grads[1]).expect("shapes");
                    if train_direct {
                        let dir = cache.nets()[0].forward(x.view()).expect("width");
                        let mut up_d = Vec::with_capacity(chunk.len());
                        for (s, row) in chunk.iter().zip(dir.output.rows()) {
                            if s.query.visible {
                                let r = Rgb::new(row[0].f64(), row[1].f64(), row[2].f64()) - s.direct;
                                ld += sq(r);
                                up_d.push(r * scale);
                            } else {
                                up_d.push(Rgb::ZERO);
                            }
                        }
                        cache.nets()[0].backward(&dir, to_rows::<T>(&up_d).view(), &mut grads[0]).expect("shapes");
                    }
                }
                CacheKind::Naive => {
                    let f = cache.nets()[0].forward(x.view()).expect("width");
                    let mut up = Vec::with_capacity(chunk.len());
                    for (s, row) in chunk.iter().zip(f.output.rows()) {
                        let r = Rgb::new(row[0].f64(), row[1].f64(), row[2].f64()) - s.full();
                        li += sq(r);
                        up.push(r * scale);
                    }
                    cache.nets()[0].backward(&f, to_rows::<T>(&up).view(), &mut grads[0]).expect("shapes");
                }
            }
            (ld, li, grads)
        })
        .collect();
    let mut grads: Vec<Vec<T>> = cache.nets().iter().map(|m| vec![T::zero(); m.param_count()]).collect();
    let (mut ld, mut li) = (0.0, 0.0);
    for (d, i, g) in chunks {
        ld += d;
        li += i;
        for (acc, part) in grads.iter_mut().zip(g) {
            for (a, p) in acc.iter_mut().zip(part) {
                *a = *a + p;
            }
        }
    }
    let inv = 1.0 / n as f64;
    Ok(PriorLoss { value: (ld + li) * inv, direct: ld * inv, indirect: li * inv, grads })
}

/// Cube around the scene geometry and every light position.
pub fn training_normalizer(scene: &Scene, frames: &[CaptureFrame]) -> Result<Normalizer> {
    let mut b: Aabb = scene.bounds;
    for f in frames {
        b.grow(f.light);
    }
    Normalizer::enclosing(&b)
}

/// Primary points from training-camera rays (lit by their own frame) and
/// their one-bounce secondary points (lit by an unrelated frame).
pub fn sample_prior_points(
    scene: &Scene,
    frames: &[CaptureFrame],
    batch: usize,
    seed: u64,
    step: u64,
) -> Result<(Vec<CacheQuery>, Vec<CacheQuery>)> {
    if frames.is_empty() {
        return Err(Error::InvalidInput("no training frames".into()));
    }
    let picked: Vec<(Option<CacheQuery>, Option<CacheQuery>)> = (0..batch)
        .into_par_iter()
        .map(|i| {
            let mut rng = RngStream::derive(seed, Purpose::CacheTrain, &[step, i as u64, 0]);
            for _ in 0..16 {
                let f = &frames[rng.below(frames.len())];
                let cam = &f.camera;
                let (u, v) = rng.next_2d();
                let ray = cam.ray_through(u * cam.width() as f64, v * cam.height() as f64);
                let Some(hit) = scene.intersect(&ray) else {
                    continue;
                };
                let primary = CacheQuery::at(scene, &hit, -ray.dir, f.light);
                let xl2 = frames[rng.below(frames.len())].light;
                let params = scene.materials.params(hit.face as usize);
                let secondary = params
                    .sample(hit.normal, -ray.dir, &mut rng)
                    .filter(|s| hit.geo_normal.dot(s.wi) > 0.0)
                    .and_then(|s| scene.intersect(&scene.spawn_ray(hit.position, s.wi)).map(|h| (h, s.wi)))
                    .map(|(h, wi)| CacheQuery::at(scene, &h, -wi, xl2));
                return (Some(primary), secondary);
            }
            (None, None)
        })
        .collect();
    let primary: Vec<CacheQuery> = picked.iter().filter_map(|p| p.0).collect();
    let secondary: Vec<CacheQuery> = picked.iter().filter_map(|p| p.1).collect();
    if primary.is_empty() {
        return Err(Error::InvalidScene("training cameras see no geometry".into()));
    }
    Ok((primary, secondary))
}

/// One line of the cache-training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CacheStepLog {
    pub step: u64,
    pub prior: f64,
    pub prior_direct: f64,
    pub prior_indirect: f64,
    pub extra_bounce: f64,
    pub total: f64,
    pub wall_seconds: f64,
}

/// Single-writer cache optimizer with a periodically refreshed frozen copy.
pub struct CacheTrainer<T: Real = f32> {
    pub cache: RadianceCache<T>,
    snapshot: CacheSnapshot<T>,
    adam: Vec<AdamState>,
    step: u64,
    initial: Option<f64>,
    config: TrainConfig,
    started: Instant,
}

impl<T: Real> CacheTrainer<T> {
    pub fn new(cache: RadianceCache<T>, config: TrainConfig) -> Result<CacheTrainer<T>> {
        config.validate()?;
        if config.analytic_direct && cache.kind() != CacheKind::Dynamic {
            return Err(Error::InvalidConfig("analytic_direct needs a dynamic cache".into()));
        }
        let adam = cache.nets().iter().map(|n| AdamState::new(n.param_count())).collect();
        let snapshot = cache.snapshot(0);
        Ok(CacheTrainer { cache, snapshot, adam, step: 0, initial: None, config, started: Instant::now() })
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn snapshot(&self) -> &CacheSnapshot<T> {
        &self.snapshot
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    /// The field render and material code should query: the frozen cache,
    /// with the exact direct term when `analytic_direct` is set.
    pub fn field<'a>(&'a self, scene: &'a Scene) -> Box<dyn RadianceField + 'a> {
        if self.config.analytic_direct {
            Box::new(AnalyticDirect::new(scene, self.snapshot.cache()).expect("dynamic cache"))
        } else {
            Box::new(&self.snapshot)
        }
    }

    /// Prior loss (plus the extra-bounce prior) and its gradient at the
    /// current parameters, without updating them.
    pub fn evaluate(&self, scene: &Scene, frames: &[CaptureFrame], step: u64) -> Result<(CacheStepLog, Vec<Vec<T>>)> {
        let cfg = &self.config;
        let seed = cfg.seed;
        let (primary, secondary) = sample_prior_points(scene, frames, cfg.batch_size, seed, step)?;
        let frozen = self.field(scene);
        let targets = |pts: &[CacheQuery], which: u64| {
            prior_targets(scene, pts, frozen.as_ref(), |i| {
                RngStream::derive(seed, Purpose::CacheTrain, &[step, i as u64, which])
            })
        };
        let train_direct = !cfg.analytic_direct;
        let prior = loss_prior(&self.cache, &targets(&primary, 1), train_direct)?;
        let mut grads = prior.grads;
        for g in &mut grads {
            for x in g.iter_mut() {
                *x = *x * T::of(cfg.lambda_prior);
            }
        }
        let mut extra_value = 0.0;
        if cfg.lambda_extra > 0.0 && !secondary.is_empty() {
            let extra = loss_prior(&self.cache, &targets(&secondary, 2), train_direct)?;
            extra_value = extra.value;
            for (acc, g) in grads.iter_mut().zip(extra.grads) {
                for (a, x) in acc.iter_mut().zip(g) {
                    *a = *a + x * T::of(cfg.lambda_extra);
                }
            }
        }
        let total = cfg.lambda_prior * prior.value + cfg.lambda_extra * extra_value;
        let log = CacheStepLog {
            step,
            prior: prior.value,
            prior_direct: prior.direct,
            prior_indirect: prior.indirect,
            extra_bounce: extra_value,
            total,
            wall_seconds: self.started.elapsed().as_secs_f64(),
        };
        Ok((log, grads))
    }

    /// One optimizer step. Refreshes the frozen copy every `snapshot_every`
    /// steps and aborts when the loss exceeds `divergence_factor` times the first one.
    pub fn step(&mut self, scene: &Scene, frames: &[CaptureFrame]) -> Result<CacheStepLog> {
        if self.step > 0 && self.step % self.config.snapshot_every == 0 {
            self.snapshot = self.cache.snapshot(self.step);
        }
        let (log, grads) = self.evaluate(scene, frames, self.step)?;
        let initial = *self.initial.get_or_insert(log.total);
        if !log.total.is_finite() || log.total > self.config.divergence_factor * initial {
            return Err(Error::Diverged(format!(
                "cache loss {} at step {} exceeds {}x the initial {initial}",
                log.total, self.step, self.config.divergence_factor
            )));
        }
        for ((net, adam), g) in self.cache.nets_mut().iter_mut().zip(&mut self.adam).zip(&grads) {
            adam.step(net.params_mut(), g, self.config.lr)?;
        }
        self.step += 1;
        Ok(log)
    }
}

/// Trains a fresh cache of `kind` for `config.steps` steps.
pub fn train_cache(
    scene: &Scene,
    frames: &[CaptureFrame],
    kind: CacheKind,
    config: &TrainConfig,
    mut on_step: impl FnMut(&CacheStepLog),
) -> Result<(RadianceCache<f32>, Vec<CacheStepLog>)> {
    let arch = crate::cache::CacheArch { kind, ..config.cache };
    let cache = RadianceCache::new(arch, training_normalizer(scene, frames)?, config.seed)?;
    let mut trainer = CacheTrainer::new(cache, config.clone())?;
    let mut history = Vec::with_capacity(config.steps as usize);
    for _ in 0..config.steps {
        let log = trainer.step(scene, frames)?;
        on_step(&log);
        history.push(log);
    }
    Ok((trainer.cache, history))
}

/// Medians of consecutive non-overlapping windows.
pub fn windowed_medians(values: &[f64], window: usize) -> Vec<f64> {
    values
        .chunks(window.max(1))
        .filter(|c| c.len() == window.max(1) || values.len() < window)
        .map(|c| {
            let mut v = c.to_vec();
            v.sort_by(f64::total_cmp);
            let m = v.len() / 2;
            if v.len() % 2 == 0 {
                0.5 * (v[m - 1] + v[m])
            } else {
                v[m]
            }
        })
        .collect()
}
