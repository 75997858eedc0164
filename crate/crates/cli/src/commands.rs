use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use glowlab::cache::{load_checkpoint, save_checkpoint, CacheKind};
use glowlab::experiments::{self, evaluate_materials};
use glowlab::io::{
    self, atomic_write, decode_materials, encode_materials, load_dataset, resolve_scene, to_jsonl, write_pfm, GlowConfig,
    MetricsReport, MetricsRow,
};
use glowlab::scene::{builtin, Camera, CaptureFrame, Intrinsics, Scene};
use glowlab::training::{self, windowed_medians, MaterialParams};
use glowlab::transport::{render_image, RadianceField};
use glowlab::Image;
use image::ImageEncoder;
use log::info;

use crate::Common;

const DEFAULT_SCENE: &str = "cornell-desk";

struct Run {
    config: GlowConfig,
    out: PathBuf,
}

/// Config file, then flag overrides; creates the run directory and records
/// the resolved config in it.
fn setup(common: &Common, command: &str) -> Result<Run> {
    let mut config = match &common.config {
        Some(p) => GlowConfig::load(p)?,
        None => GlowConfig::default(),
    };
    if let Some(s) = &common.scene {
        config.scene = Some(s.clone());
    }
    if let Some(seed) = common.seed {
        config.dataset.seed = seed;
        config.render.seed = seed;
        config.train.seed = seed;
        config.sweep.seed = seed;
    }
    if let Some(spp) = common.spp {
        config.dataset.spp = spp;
        config.render.spp = spp;
        config.sweep.spp = spp;
    }
    if let Some(mode) = common.mode {
        config.render.mode = mode;
    }
    if let Some(steps) = common.steps {
        config.train.steps = steps;
        config.ablate.steps = steps;
    }
    if let Some(frames) = common.frames {
        config.dataset.frames = frames;
    }
    config.validate()?;
    let out = common.out.clone().unwrap_or_else(|| PathBuf::from("runs").join(command));
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    atomic_write(&out.join("config.toml"), config.to_toml().as_bytes())?;
    Ok(Run { config, out })
}

fn scene_of(config: &GlowConfig) -> Result<Scene> {
    Ok(resolve_scene(config.scene.as_deref().unwrap_or(DEFAULT_SCENE))?)
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    atomic_write(path, text.as_bytes())?;
    Ok(())
}

/// 8-bit gamma 2.2 preview; never read back.
fn write_png(path: &Path, img: &Image) -> Result<()> {
    let mut bytes = Vec::new();
    image::codecs::png::PngEncoder::new(&mut bytes).write_image(
        &img.to_srgb8(),
        img.width,
        img.height,
        image::ExtendedColorType::Rgb8,
    )?;
    atomic_write(path, &bytes)?;
    Ok(())
}

fn write_image(out: &Path, stem: &str, img: &Image) -> Result<()> {
    write_pfm(&out.join(format!("{stem}.pfm")), img)?;
    write_png(&out.join(format!("{stem}.png")), img)
}

fn resized(cam: &Camera, size: u32) -> Result<Camera> {
    let k = cam.intrinsics;
    let (sx, sy) = (size as f64 / k.width as f64, size as f64 / k.height as f64);
    let intr = Intrinsics { fx: k.fx * sx, fy: k.fy * sy, cx: k.cx * sx, cy: k.cy * sy, width: size, height: size };
    Ok(Camera::new(cam.rotation, cam.translation, intr)?)
}

pub fn render(common: &Common, cache: Option<&Path>, size: Option<u32>) -> Result<()> {
    let run = setup(common, "render")?;
    let scene = scene_of(&run.config)?;
    let Some(cam) = scene.cameras.first() else {
        bail!("scene '{}' has no camera", scene.name);
    };
    let cam = resized(cam, size.unwrap_or(run.config.dataset.size))?;
    let rc = run.config.render;
    let loaded = match (rc.mode.uses_cache(), cache) {
        (true, Some(p)) => {
            let c = load_checkpoint(p)?;
            let want = if rc.mode == glowlab::transport::RenderMode::Cache { CacheKind::Dynamic } else { CacheKind::Naive };
            if c.kind() != want {
                bail!("{} holds a {:?} cache but mode {} needs {:?}", p.display(), c.kind(), rc.mode, want);
            }
            Some(c)
        }
        (true, None) => bail!("mode {} needs --cache <checkpoint>", rc.mode),
        (false, Some(_)) => bail!("--cache is only used by the cache render modes"),
        (false, None) => None,
    };
    let field = loaded.as_ref().map(|c| c as &dyn RadianceField);
    let xl = scene.flashlight.position_for(&cam);
    let img = render_image(&scene, &cam, xl, &rc, field, 0)?;
    write_image(&run.out, "render", &img)?;
    info!("wrote {}", run.out.join("render.pfm").display());
    Ok(())
}

pub fn make_dataset(common: &Common) -> Result<()> {
    let run = setup(common, "make-dataset")?;
    let scene = scene_of(&run.config)?;
    let m = io::make_dataset(&scene, &run.config.dataset, &run.out)?;
    for rec in &m.frames {
        let img = io::read_pfm(&run.out.join(&rec.image))?;
        write_png(&run.out.join(rec.image.with_extension("png")), &img)?;
    }
    info!("wrote {} frames to {}", m.frames.len(), run.out.display());
    Ok(())
}

fn frames_for(run: &Run, data: Option<&Path>) -> Result<(Scene, Vec<CaptureFrame>, Vec<CaptureFrame>)> {
    match data {
        Some(d) => {
            let ds = load_dataset(d)?;
            Ok((ds.scene, ds.train, ds.val))
        }
        None => {
            let scene = scene_of(&run.config)?;
            let (train, val) = io::render_frames(&scene, &run.config.dataset)?;
            Ok((scene, train, val))
        }
    }
}

pub fn train_cache(common: &Common, data: Option<&Path>, naive: bool) -> Result<()> {
    let run = setup(common, "train-cache")?;
    let (scene, frames) = match data {
        Some(d) => {
            let ds = load_dataset(d)?;
            (ds.scene, ds.train)
        }
        None => {
            let scene = scene_of(&run.config)?;
            let cams = io::capture_cameras(&scene, &run.config.dataset)?;
            let frames = cams[..run.config.dataset.frames].iter().map(|c| CaptureFrame::new(*c, &scene.flashlight)).collect();
            (scene, frames)
        }
    };
    let kind = if naive { CacheKind::Naive } else { CacheKind::Dynamic };
    let every = (run.config.train.steps / 20).max(1);
    let (cache, history) = training::train_cache(&scene, &frames, kind, &run.config.train, |l| {
        if l.step % every == 0 {
            info!("step {} prior {:.5} extra {:.5}", l.step, l.prior, l.extra_bounce);
        }
    })?;
    save_checkpoint(&run.out.join("cache.ckpt"), &cache)?;
    atomic_write(&run.out.join("loss.jsonl"), to_jsonl(&history)?.as_bytes())?;
    let med = windowed_medians(&history.iter().map(|h| h.total).collect::<Vec<_>>(), run.config.train.window);
    let summary = serde_json::json!({
        "kind": kind,
        "steps": history.len(),
        "initial_windowed_loss": med.first(),
        "final_windowed_loss": med.last(),
        "checksum": cache.checksum(),
    });
    write_json(&run.out.join("summary.json"), &summary)?;
    info!("final windowed loss {:?} (initial {:?})", med.last(), med.first());
    Ok(())
}

fn metrics_report(scene: &Scene, params: &MaterialParams, val: &[CaptureFrame], run: &Run) -> Result<MetricsReport> {
    let (albedo_si_mse, roughness_mse, rerender_mse) =
        evaluate_materials(scene, params, val, run.config.render.spp, run.config.render.seed)?;
    Ok(MetricsReport::from_rows(vec![MetricsRow { name: scene.name.clone(), rerender_mse, albedo_si_mse, roughness_mse }])?)
}

pub fn optimize_material(common: &Common, data: &Path) -> Result<()> {
    let run = setup(common, "optimize-material")?;
    let ds = load_dataset(data)?;
    let mode = run.config.render.mode;
    let every = (run.config.train.steps / 20).max(1);
    let result = training::optimize_materials(&ds.scene, &ds.train, mode, &run.config.train, |l| {
        if l.step % every == 0 {
            info!("step {} recons {:.5} rough {:.5}", l.step, l.recons, l.rough);
        }
    })?;
    atomic_write(&run.out.join("materials.bin"), &encode_materials(&result.params))?;
    atomic_write(&run.out.join("loss.jsonl"), to_jsonl(&result.history)?.as_bytes())?;
    if let Some(cache) = &result.cache {
        save_checkpoint(&run.out.join("cache.ckpt"), cache)?;
        atomic_write(&run.out.join("cache_loss.jsonl"), to_jsonl(&result.cache_history)?.as_bytes())?;
    }
    let report = metrics_report(&ds.scene, &result.params, &ds.val, &run)?;
    write_json(&run.out.join("metrics.json"), &report)?;
    info!("albedo si-mse {:.4e}, roughness mse {:.4e}", report.mean.albedo_si_mse, report.mean.roughness_mse);
    Ok(())
}

pub fn ablate(common: &Common, data: Option<&Path>) -> Result<()> {
    let run = setup(common, "ablate")?;
    let (scene, train, val) = frames_for(&run, data)?;
    let cfg = training::TrainConfig {
        steps: run.config.ablate.steps,
        material_lr: run.config.ablate.material_lr,
        ..run.config.train.clone()
    };
    let report = experiments::ablate(&scene, &train, &val, &cfg, run.config.render.spp, |r| {
        info!("{}: albedo {:.4e} roughness {:.4e} ({:.0}s)", r.mode, r.albedo_si_mse, r.roughness_mse, r.seconds);
    })?;
    write_json(&run.out.join("ablation.json"), &report)?;
    let table = report.table();
    atomic_write(&run.out.join("ablation.txt"), table.as_bytes())?;
    print!("{table}");
    Ok(())
}

pub fn shadow_sweep(common: &Common, samples: Option<usize>) -> Result<()> {
    let mut run = setup(common, "shadow-sweep")?;
    if let Some(n) = samples {
        run.config.sweep.samples = n;
        run.config.validate()?;
    }
    let scene = scene_of(&run.config)?;
    if scene.name != "cornell-desk" {
        bail!("shadow-sweep is defined for the cornell-desk scene, got '{}'", scene.name);
    }
    let report = experiments::shadow_sweep_study(&scene, &builtin::cornell_sweep_setup(), &run.config.sweep)?;
    let mut csv = String::from("s,light_x,light_y,light_z,direct,indirect\n");
    for r in &report.rows {
        csv += &format!("{},{},{},{},{},{}\n", r.s, r.light[0], r.light[1], r.light[2], r.direct, r.indirect);
    }
    atomic_write(&run.out.join("sweep.csv"), csv.as_bytes())?;
    write_json(&run.out.join("sweep.json"), &report)?;
    println!("boundary at s = {:.4}", report.boundary);
    println!(
        "direct jump {:.3} of lit value: {}",
        report.direct_jump,
        if report.jump_ok { "PASS" } else { "FAIL" }
    );
    println!(
        "indirect max step {:.3e} vs median {:.3e}: {}",
        report.indirect_max_step,
        report.indirect_median_step,
        if report.continuity_ok { "PASS" } else { "FAIL" }
    );
    Ok(())
}

pub fn eval(common: &Common, data: &Path, materials: &Path) -> Result<()> {
    let run = setup(common, "eval")?;
    let ds = load_dataset(data)?;
    let bytes = std::fs::read(materials).with_context(|| format!("reading {}", materials.display()))?;
    let m = decode_materials(&bytes, ds.scene.materials.specular)?;
    if m.faces.len() != ds.scene.face_count() {
        bail!("{} has {} faces, scene has {}", materials.display(), m.faces.len(), ds.scene.face_count());
    }
    let params = MaterialParams::from_materials(&m);
    let report = metrics_report(&ds.scene, &params, &ds.val, &run)?;
    write_json(&run.out.join("metrics.json"), &report)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}
