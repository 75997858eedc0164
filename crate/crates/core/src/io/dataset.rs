//! Synthetic capture datasets: PFM frames plus a hashed JSON manifest.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::math::Vec3;
use crate::scene::{builtin, Camera, CaptureFrame, Intrinsics, Scene};
use crate::transport::{render_image, RenderConfig, RenderMode};

use super::{atomic_write, load_scene, read_pfm, save_scene, write_pfm};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub frames: usize,
    pub val_frames: usize,
    pub size: u32,
    pub spp: u32,
    pub max_depth: u32,
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> DatasetConfig {
        DatasetConfig { frames: 24, val_frames: 4, size: 64, spp: 256, max_depth: 6, seed: 0 }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.frames == 0 || self.val_frames == 0 {
            return Err(Error::InvalidConfig("need at least one training and one validation frame".into()));
        }
        if self.size == 0 || self.spp == 0 || self.max_depth == 0 {
            return Err(Error::InvalidConfig("size, spp and max_depth must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameRecord {
    pub image: PathBuf,
    pub sha256: String,
    pub pose: [[f64; 4]; 4],
    pub intrinsics: Intrinsics,
    pub light: [f64; 3],
    pub split: Split,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub scene: PathBuf,
    pub seed: u64,
    pub spp: u32,
    pub max_depth: u32,
    pub frames: Vec<FrameRecord>,
}

pub const MANIFEST_NAME: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Training followed by validation cameras for `scene`: a seeded trajectory
/// for bundled scenes, otherwise the cameras stored in the scene file.
pub fn capture_cameras(scene: &Scene, config: &DatasetConfig) -> Result<Vec<Camera>> {
    let n = config.frames + config.val_frames;
    if builtin::SCENE_NAMES.contains(&scene.name.as_str()) {
        return builtin::trajectory(scene, n, config.seed, config.size);
    }
    if scene.cameras.len() < n {
        return Err(Error::InvalidConfig(format!("scene has {} cameras, dataset needs {n}", scene.cameras.len())));
    }
    Ok(scene.cameras[..n].to_vec())
}

/// Renders every frame with the path tracer and writes frames, the scene
/// and the manifest under `out`.
pub fn make_dataset(scene: &Scene, config: &DatasetConfig, out: &Path) -> Result<DatasetManifest> {
    config.validate()?;
    let cams = capture_cameras(scene, config)?;
    for (i, c) in cams.iter().enumerate() {
        scene
            .check_light_clearance(scene.flashlight.position_for(c))
            .map_err(|e| Error::InvalidScene(format!("frame {i}: {e}")))?;
    }
    save_scene(&out.join("scene.json"), scene)?;
    let rc = RenderConfig { mode: RenderMode::Path, spp: config.spp, max_depth: config.max_depth, m: 1, seed: config.seed };
    let mut frames = Vec::with_capacity(cams.len());
    for (i, cam) in cams.iter().enumerate() {
        let light = scene.flashlight.position_for(cam);
        let img = render_image(scene, cam, light, &rc, None, i as u64)?;
        let rel = PathBuf::from(format!("images/frame_{i:03}.pfm"));
        write_pfm(&out.join(&rel), &img)?;
        let bytes = std::fs::read(out.join(&rel)).map_err(|e| Error::io(out.join(&rel), e))?;
        log::info!("rendered frame {}/{}", i + 1, cams.len());
        frames.push(FrameRecord {
            image: rel,
            sha256: sha256_hex(&bytes),
            pose: cam.to_matrix(),
            intrinsics: cam.intrinsics,
            light: [light.x, light.y, light.z],
            split: if i < config.frames { Split::Train } else { Split::Val },
        });
    }
    let manifest =
        DatasetManifest { scene: "scene.json".into(), seed: config.seed, spp: config.spp, max_depth: config.max_depth, frames };
    atomic_write(&out.join(MANIFEST_NAME), serde_json::to_string_pretty(&manifest)?.as_bytes())?;
    Ok(manifest)
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub root: PathBuf,
    pub manifest: DatasetManifest,
    pub scene: Scene,
    pub train: Vec<CaptureFrame>,
    pub val: Vec<CaptureFrame>,
}

/// Loads a dataset directory (or its manifest path), refusing any frame
/// whose bytes do not match the recorded hash.
pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let (root, manifest_path) = if path.is_dir() {
        (path.to_path_buf(), path.join(MANIFEST_NAME))
    } else {
        (path.parent().unwrap_or(Path::new(".")).to_path_buf(), path.to_path_buf())
    };
    let text = std::fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest: DatasetManifest =
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", manifest_path.display())))?;
    if !manifest.frames.iter().any(|f| f.split == Split::Val) {
        return Err(Error::Integrity { path: manifest_path, reason: "no validation frame".into() });
    }
    let scene = load_scene(&root.join(&manifest.scene))?;
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for rec in &manifest.frames {
        let p = root.join(&rec.image);
        let bytes = std::fs::read(&p).map_err(|e| Error::io(&p, e))?;
        let got = sha256_hex(&bytes);
        if got != rec.sha256 {
            return Err(Error::Integrity { path: p, reason: format!("sha256 {got} does not match manifest {}", rec.sha256) });
        }
        let camera = Camera::from_matrix(rec.pose, rec.intrinsics)?;
        let image = read_pfm(&p)?;
        if image.width != camera.width() || image.height != camera.height() {
            return Err(Error::Integrity { path: p, reason: "image size does not match intrinsics".into() });
        }
        let light = Vec3::new(rec.light[0], rec.light[1], rec.light[2]);
        let frame = CaptureFrame { camera, light, image: Some(image), mask: None };
        match rec.split {
            Split::Train => train.push(frame),
            Split::Val => val.push(frame),
        }
    }
    Ok(Dataset { root, manifest, scene, train, val })
}

/// Frames rendered in memory, as `make_dataset` would write them.
pub fn render_frames(scene: &Scene, config: &DatasetConfig) -> Result<(Vec<CaptureFrame>, Vec<CaptureFrame>)> {
    config.validate()?;
    let cams = capture_cameras(scene, config)?;
    let rc = RenderConfig { mode: RenderMode::Path, spp: config.spp, max_depth: config.max_depth, m: 1, seed: config.seed };
    let mut frames = Vec::with_capacity(cams.len());
    for (i, cam) in cams.iter().enumerate() {
        let f = CaptureFrame::new(*cam, &scene.flashlight);
        scene.check_light_clearance(f.light).map_err(|e| Error::InvalidScene(format!("frame {i}: {e}")))?;
        let img = render_image(scene, cam, f.light, &rc, None, i as u64)?;
        frames.push(f.with_image(img));
    }
    let val = frames.split_off(config.frames);
    Ok((frames, val))
}

/// Per-pixel albedo and roughness (red channel) of the surface seen through
/// each pixel center, and which pixels hit geometry.
pub struct MaterialMaps {
    pub albedo: Image,
    pub roughness: Image,
    pub mask: Vec<bool>,
}

pub fn material_maps(scene: &Scene, camera: &Camera) -> MaterialMaps {
    let (w, h) = (camera.width(), camera.height());
    let mut albedo = Image::new(w, h);
    let mut roughness = Image::new(w, h);
    let mut mask = vec![false; (w * h) as usize];
    for y in 0..h {
        for x in 0..w {
            let ray = camera.ray_through(x as f64 + 0.5, y as f64 + 0.5);
            if let Some(hit) = scene.intersect(&ray) {
                let m = scene.materials.faces[hit.face as usize];
                albedo.set(x, y, m.albedo);
                roughness.set(x, y, crate::math::Rgb::splat(m.roughness));
                mask[(y * w + x) as usize] = true;
            }
        }
    }
    MaterialMaps { albedo, roughness, mask }
}
