//! File formats, datasets and metrics.

mod config;
mod dataset;
mod metrics;
mod pfm;
mod scene_file;

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::training::MaterialParams;

pub use config::{AblateConfig, GlowConfig, SweepConfig};
pub use dataset::{
    capture_cameras, load_dataset, make_dataset, material_maps, render_frames, sha256_hex, Dataset, DatasetConfig,
    DatasetManifest, FrameRecord, MaterialMaps, Split, MANIFEST_NAME,
};
pub use metrics::{metric_albedo_scale_invariant, metric_mse_clipped, metric_roughness_mse, MetricsReport, MetricsRow};
pub use pfm::{decode_pfm, encode_pfm, read_pfm, write_pfm, Endian};
pub use scene_file::{load_scene, resolve_scene, save_scene, CameraFile, MeshSource, SceneFile};

/// Writes `bytes` to a temporary sibling and renames it over `path`.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let name = path.file_name().ok_or_else(|| Error::InvalidArgument(format!("{} has no file name", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let mut f = std::fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).and_then(|_| f.sync_all()).map_err(|e| Error::io(&tmp, e))?;
    drop(f);
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// One JSON object per line.
pub fn to_jsonl<T: Serialize>(records: &[T]) -> Result<String> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    Ok(out)
}

/// Per-face float32 little-endian `r g b roughness`.
pub fn encode_materials(params: &MaterialParams) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 * params.face_count());
    for f in 0..params.face_count() {
        let a = params.albedo(f);
        for v in [a.r, a.g, a.b, params.roughness(f)] {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

/// Inverse of [`encode_materials`] up to float32 rounding.
pub fn decode_materials(bytes: &[u8], specular: f64) -> Result<crate::scene::Materials> {
    if bytes.len() % 16 != 0 {
        return Err(Error::Format(format!("materials blob of {} bytes is not a multiple of 16", bytes.len())));
    }
    let faces = bytes
        .chunks_exact(16)
        .map(|c| {
            let v: Vec<f64> = c.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64).collect();
            crate::brdf::SurfaceMaterial::new(crate::math::Rgb::new(v[0], v[1], v[2]), v[3])
        })
        .collect();
    Ok(crate::scene::Materials { specular, faces })
}
