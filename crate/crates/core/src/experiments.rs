//! End-to-end studies: cache convergence, the material ablation and the
//! shadow-boundary sweep.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::cache::{CacheKind, RadianceCache};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::io::{material_maps, metric_albedo_scale_invariant, metric_mse_clipped, metric_roughness_mse, SweepConfig};
use crate::scene::{builtin::SweepSetup, Camera, CaptureFrame, Ray, Scene};
use crate::training::{optimize_materials, train_cache, windowed_medians, CacheStepLog, MaterialParams, TrainConfig};
use crate::transport::{adjacent_steps, luminance_series, render_image, shadow_sweep, RenderConfig, RenderMode, SweepPoint};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub steps: u64,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub loss_ratio: f64,
    pub render_mse: f64,
    pub seconds: f64,
}

/// Trains a dynamic cache and compares a cache-mode render against a
/// path-mode render of `camera`. Losses are medians over `config.window` steps.
pub fn cache_convergence(
    scene: &Scene,
    frames: &[CaptureFrame],
    config: &TrainConfig,
    camera: &Camera,
    spp: u32,
    on_step: impl FnMut(&CacheStepLog),
) -> Result<(ConvergenceReport, RadianceCache<f32>, Image, Image)> {
    let started = Instant::now();
    let (cache, history) = train_cache(scene, frames, CacheKind::Dynamic, config, on_step)?;
    let med = windowed_medians(&history.iter().map(|h| h.total).collect::<Vec<_>>(), config.window);
    let (initial_loss, final_loss) = (med[0], med[med.len() - 1]);
    let xl = scene.flashlight.position_for(camera);
    let rc = |mode| RenderConfig { mode, spp, max_depth: config.max_depth, m: config.m, seed: config.seed };
    let cached = render_image(scene, camera, xl, &rc(RenderMode::Cache), Some(&cache), 0)?;
    let reference = render_image(scene, camera, xl, &rc(RenderMode::Path), None, 0)?;
    let report = ConvergenceReport {
        steps: history.len() as u64,
        initial_loss,
        final_loss,
        loss_ratio: final_loss / initial_loss,
        render_mse: metric_mse_clipped(&cached, &reference)?,
        seconds: started.elapsed().as_secs_f64(),
    };
    Ok((report, cache, cached, reference))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AblationRow {
    pub mode: RenderMode,
    pub albedo_si_mse: f64,
    pub roughness_mse: f64,
    pub rerender_mse: f64,
    pub final_recons: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AblationReport {
    pub rows: Vec<AblationRow>,
    pub albedo_ordering: bool,
    pub roughness_ordering: bool,
}

/// `path ~ cache` (within 2x), `naive >= 2x cache`, `direct >= 5x cache`.
pub fn ordering_holds(path: f64, cache: f64, naive: f64, direct: f64) -> bool {
    path <= 2.0 * cache && cache <= 2.0 * path && naive >= 2.0 * cache && direct >= 5.0 * cache
}

impl AblationReport {
    pub fn row(&self, mode: RenderMode) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.mode == mode)
    }

    fn verdict(rows: &[AblationRow], pick: fn(&AblationRow) -> f64) -> bool {
        let get = |m: RenderMode| rows.iter().find(|r| r.mode == m).map(pick);
        match (get(RenderMode::Path), get(RenderMode::Cache), get(RenderMode::NaiveCache), get(RenderMode::Direct)) {
            (Some(p), Some(c), Some(n), Some(d)) => ordering_holds(p, c, n, d),
            _ => false,
        }
    }

    pub fn from_rows(rows: Vec<AblationRow>) -> AblationReport {
        let albedo_ordering = Self::verdict(&rows, |r| r.albedo_si_mse);
        let roughness_ordering = Self::verdict(&rows, |r| r.roughness_mse);
        AblationReport { rows, albedo_ordering, roughness_ordering }
    }

    pub fn table(&self) -> String {
        let mut s = format!(
            "{:<12} {:>14} {:>14} {:>14} {:>10}\n",
            "mode", "albedo_si_mse", "roughness_mse", "rerender_mse", "seconds"
        );
        for r in &self.rows {
            s += &format!(
                "{:<12} {:>14.6e} {:>14.6e} {:>14.6e} {:>10.1}\n",
                r.mode.name(),
                r.albedo_si_mse,
                r.roughness_mse,
                r.rerender_mse,
                r.seconds
            );
        }
        s += &format!("albedo ordering: {}\n", if self.albedo_ordering { "PASS" } else { "FAIL" });
        s += &format!("roughness ordering: {}\n", if self.roughness_ordering { "PASS" } else { "FAIL" });
        s
    }
}

/// Material-map errors of `params` against the scene's true materials, seen
/// from the validation cameras, plus a path-traced re-render error.
pub fn evaluate_materials(
    scene: &Scene,
    params: &MaterialParams,
    val: &[CaptureFrame],
    rerender_spp: u32,
    seed: u64,
) -> Result<(f64, f64, f64)> {
    if val.is_empty() {
        return Err(Error::InvalidInput("no validation frames".into()));
    }
    let recovered = scene.with_materials(params.to_materials(scene.materials.specular))?;
    let (mut a, mut r, mut y) = (0.0, 0.0, 0.0);
    let rc = RenderConfig { mode: RenderMode::Path, spp: rerender_spp, max_depth: 6, m: 1, seed };
    for (i, f) in val.iter().enumerate() {
        let gt = material_maps(scene, &f.camera);
        let est = material_maps(&recovered, &f.camera);
        a += metric_albedo_scale_invariant(&est.albedo, &gt.albedo, Some(&gt.mask))?;
        r += metric_roughness_mse(&est.roughness, &gt.roughness, Some(&gt.mask))?;
        if rerender_spp > 0 {
            let img = render_image(&recovered, &f.camera, f.light, &rc, None, 1_000 + i as u64)?;
            let target = f.image.as_ref().ok_or_else(|| Error::InvalidInput(format!("validation frame {i} has no image")))?;
            y += metric_mse_clipped(&img, target)?;
        }
    }
    let n = val.len() as f64;
    Ok((a / n, r / n, y / n))
}

/// Recovers materials from `train` once per render mode and scores each
/// result on `val`.
pub fn ablate(
    scene: &Scene,
    train: &[CaptureFrame],
    val: &[CaptureFrame],
    config: &TrainConfig,
    rerender_spp: u32,
    mut on_row: impl FnMut(&AblationRow),
) -> Result<AblationReport> {
    let mut rows = Vec::with_capacity(4);
    for mode in RenderMode::ALL {
        let started = Instant::now();
        let run = optimize_materials(scene, train, mode, config, |_| {})?;
        let (albedo_si_mse, roughness_mse, rerender_mse) =
            evaluate_materials(scene, &run.params, val, rerender_spp, config.seed)?;
        let k = run.history.len().min(config.window);
        let final_recons = run.history[run.history.len() - k..].iter().map(|h| h.recons).sum::<f64>() / k.max(1) as f64;
        let row = AblationRow {
            mode,
            albedo_si_mse,
            roughness_mse,
            rerender_mse,
            final_recons,
            seconds: started.elapsed().as_secs_f64(),
        };
        on_row(&row);
        rows.push(row);
    }
    Ok(AblationReport::from_rows(rows))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepRow {
    pub s: f64,
    pub light: [f64; 3],
    pub direct: f64,
    pub indirect: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepReport {
    pub boundary: f64,
    pub rows: Vec<SweepRow>,
    /// Direct step across the boundary relative to the lit side.
    pub direct_jump: f64,
    pub indirect_max_step: f64,
    pub indirect_median_step: f64,
    pub jump_ok: bool,
    pub continuity_ok: bool,
}

fn median(v: &[f64]) -> f64 {
    let mut v = v.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 0 {
        0.5 * (v[m - 1] + v[m])
    } else {
        v[m]
    }
}

/// Moves the light along the setup's track and records the direct and
/// indirect luminance at the fixed target point.
pub fn shadow_sweep_study(scene: &Scene, setup: &SweepSetup, config: &SweepConfig) -> Result<SweepReport> {
    if config.samples < 3 {
        return Err(Error::InvalidConfig("sweep needs at least 3 samples".into()));
    }
    let ray = Ray::new(setup.target + setup.wo * 0.3, -setup.wo);
    let hit = scene
        .intersect(&ray)
        .filter(|h| (h.position - setup.target).length() < 1e-6)
        .ok_or_else(|| Error::InvalidScene("sweep target is not visible along its view direction".into()))?;
    let n = config.samples;
    let params: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
    let lights: Vec<_> = params.iter().map(|&s| setup.light_at(s)).collect();
    let points: Vec<SweepPoint> = shadow_sweep(scene, &hit, setup.wo, &lights, config.spp, config.max_depth, config.seed)?;
    let direct = luminance_series(&points, |s| s.direct);
    let indirect = luminance_series(&points, |s| s.indirect);
    let boundary = setup.analytic_boundary();
    let k = params
        .windows(2)
        .position(|w| w[0] <= boundary && boundary < w[1])
        .ok_or_else(|| Error::InvalidConfig("shadow boundary lies outside the sweep track".into()))?;
    let lit = direct[k].max(direct[k + 1]);
    let direct_jump = if lit > 0.0 { (direct[k + 1] - direct[k]).abs() / lit } else { 0.0 };
    let steps = adjacent_steps(&indirect);
    let indirect_max_step = steps.iter().copied().fold(0.0, f64::max);
    let indirect_median_step = median(&steps);
    let rows = params
        .iter()
        .zip(&lights)
        .zip(direct.iter().zip(&indirect))
        .map(|((&s, l), (&d, &i))| SweepRow { s, light: [l.x, l.y, l.z], direct: d, indirect: i })
        .collect();
    Ok(SweepReport {
        boundary,
        rows,
        direct_jump,
        indirect_max_step,
        indirect_median_step,
        jump_ok: direct_jump >= 0.5,
        continuity_ok: indirect_max_step <= 5.0 * indirect_median_step,
    })
}
