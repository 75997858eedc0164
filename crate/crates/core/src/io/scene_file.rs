//! JSON scene files.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::brdf::SurfaceMaterial;
use crate::error::{Error, Result};
use crate::math::{Aabb, Rgb, Vec3};
use crate::scene::{builtin, Camera, DenseSdfGrid, Flashlight, Intrinsics, Materials, Scene, TriangleMesh};

use super::atomic_write;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MeshSource {
    Inline { vertices: Vec<[f64; 3]>, triangles: Vec<[u32; 3]> },
    Obj { obj: PathBuf },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialsFile {
    #[serde(default)]
    pub specular: f64,
    /// Per-face RGB albedo.
    pub albedo: Vec<[f64; 3]>,
    pub roughness: Vec<f64>,
    /// Per-face material labels; defaults to all zero.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ids: Option<Vec<u32>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlashlightFile {
    pub intensity: [f64; 3],
    #[serde(default)]
    pub offset: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraFile {
    /// Camera-to-world rigid transform, row-major.
    pub pose: [[f64; 4]; 4],
    pub intrinsics: Intrinsics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SdfGridFile {
    pub resolution: [usize; 3],
    pub bbox: [[f64; 3]; 2],
    /// Little-endian float32 values, x fastest.
    pub blob: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneFile {
    pub name: String,
    pub mesh: MeshSource,
    pub materials: MaterialsFile,
    /// Per-face segment labels; default to the material labels.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub segments: Option<Vec<u32>>,
    pub flashlight: FlashlightFile,
    #[serde(default)]
    pub cameras: Vec<CameraFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sdf_grid: Option<SdfGridFile>,
}

fn v3(a: [f64; 3]) -> Vec3 {
    Vec3::new(a[0], a[1], a[2])
}

fn a3(v: Vec3) -> [f64; 3] {
    [v.x, v.y, v.z]
}

fn load_obj(path: &Path) -> Result<TriangleMesh> {
    let opts = tobj::LoadOptions { triangulate: true, single_index: true, ..Default::default() };
    let (models, _) = tobj::load_obj(path, &opts).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let mut mesh = TriangleMesh::new(Vec::new(), Vec::new());
    for m in &models {
        let base = mesh.vertices.len() as u32;
        let pos = &m.mesh.positions;
        mesh.vertices.extend(pos.chunks_exact(3).map(|p| Vec3::new(p[0] as f64, p[1] as f64, p[2] as f64)));
        let tris: Vec<[u32; 3]> = m.mesh.indices.chunks_exact(3).map(|t| [base + t[0], base + t[1], base + t[2]]).collect();
        let id = m.mesh.material_id.unwrap_or(0) as u32;
        mesh.material_ids.extend(std::iter::repeat_n(id, tris.len()));
        mesh.triangles.extend(tris);
    }
    mesh.segment_ids = mesh.material_ids.clone();
    if mesh.triangles.is_empty() {
        return Err(Error::Format(format!("{}: no triangles", path.display())));
    }
    Ok(mesh)
}

fn read_sdf_blob(path: &Path, resolution: [usize; 3], bounds: Aabb) -> Result<DenseSdfGrid> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let n: usize = resolution.iter().product();
    if bytes.len() != 4 * n {
        return Err(Error::Format(format!("{}: {} bytes for {n} sdf values", path.display(), bytes.len())));
    }
    let values = bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64).collect();
    DenseSdfGrid::new(resolution, bounds, values)
}

impl SceneFile {
    /// Resolves relative paths against `base`.
    pub fn build(&self, base: &Path) -> Result<Scene> {
        let mut mesh = match &self.mesh {
            MeshSource::Inline { vertices, triangles } => {
                let mut m = TriangleMesh::new(vertices.iter().map(|&v| v3(v)).collect(), triangles.clone());
                m.material_ids = vec![0; triangles.len()];
                m
            }
            MeshSource::Obj { obj } => load_obj(&base.join(obj))?,
        };
        let faces = mesh.face_count();
        let m = &self.materials;
        if m.albedo.len() != faces || m.roughness.len() != faces {
            return Err(Error::InvalidScene(format!(
                "{} albedo and {} roughness entries for {faces} faces",
                m.albedo.len(),
                m.roughness.len()
            )));
        }
        if let Some(ids) = &m.ids {
            mesh.material_ids = ids.clone();
        }
        mesh.segment_ids = self.segments.clone().unwrap_or_else(|| mesh.material_ids.clone());
        let materials = Materials {
            specular: m.specular,
            faces: m.albedo.iter().zip(&m.roughness).map(|(a, &r)| SurfaceMaterial::new(Rgb::new(a[0], a[1], a[2]), r)).collect(),
        };
        let flashlight = Flashlight {
            intensity: Rgb::new(self.flashlight.intensity[0], self.flashlight.intensity[1], self.flashlight.intensity[2]),
            offset: v3(self.flashlight.offset),
        };
        let cameras = self.cameras.iter().map(|c| Camera::from_matrix(c.pose, c.intrinsics)).collect::<Result<Vec<_>>>()?;
        let sdf = match &self.sdf_grid {
            Some(g) => Some(read_sdf_blob(&base.join(&g.blob), g.resolution, Aabb::new(v3(g.bbox[0]), v3(g.bbox[1])))?),
            None => None,
        };
        Scene::new(self.name.clone(), mesh, materials, flashlight, cameras, sdf)
    }

    /// Inline description of `scene`. The SDF grid, if any, is not included.
    pub fn from_scene(scene: &Scene) -> SceneFile {
        let mesh = &scene.mesh;
        SceneFile {
            name: scene.name.clone(),
            mesh: MeshSource::Inline {
                vertices: mesh.vertices.iter().map(|&v| a3(v)).collect(),
                triangles: mesh.triangles.clone(),
            },
            materials: MaterialsFile {
                specular: scene.materials.specular,
                albedo: scene.materials.faces.iter().map(|f| [f.albedo.r, f.albedo.g, f.albedo.b]).collect(),
                roughness: scene.materials.faces.iter().map(|f| f.roughness).collect(),
                ids: Some(mesh.material_ids.clone()),
            },
            segments: Some(mesh.segment_ids.clone()),
            flashlight: FlashlightFile {
                intensity: [scene.flashlight.intensity.r, scene.flashlight.intensity.g, scene.flashlight.intensity.b],
                offset: a3(scene.flashlight.offset),
            },
            cameras: scene.cameras.iter().map(|c| CameraFile { pose: c.to_matrix(), intrinsics: c.intrinsics }).collect(),
            sdf_grid: None,
        }
    }
}

pub fn load_scene(path: &Path) -> Result<Scene> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: SceneFile =
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    file.build(path.parent().unwrap_or(Path::new(".")))
}

pub fn save_scene(path: &Path, scene: &Scene) -> Result<()> {
    let text = serde_json::to_string_pretty(&SceneFile::from_scene(scene))?;
    atomic_write(path, text.as_bytes())
}

/// A bundled scene name or a path to a scene file.
pub fn resolve_scene(spec: &str) -> Result<Scene> {
    if builtin::SCENE_NAMES.contains(&spec) {
        return builtin::by_name(spec);
    }
    let p = Path::new(spec);
    if p.exists() {
        load_scene(p)
    } else {
        Err(Error::InvalidArgument(format!("'{spec}' is neither a bundled scene ({}) nor a file", builtin::SCENE_NAMES.join(", "))))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_round_trips_through_json() {
        let dir = tempfile::tempdir().unwrap();
        for name in builtin::SCENE_NAMES {
            let scene = builtin::by_name(name).unwrap();
            let p = dir.path().join(format!("{name}.json"));
            save_scene(&p, &scene).unwrap();
            let back = load_scene(&p).unwrap();
            assert_eq!(back.mesh, scene.mesh);
            assert_eq!(back.materials, scene.materials);
            assert_eq!(back.flashlight, scene.flashlight);
            assert_eq!(back.cameras.len(), scene.cameras.len());
            for (a, b) in back.cameras.iter().zip(&scene.cameras) {
                assert_eq!(a.to_matrix(), b.to_matrix());
            }
        }
    }

    #[test]
    fn obj_mesh_and_sdf_blob() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("quad.obj"), "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n").unwrap();
        let blob: Vec<u8> = (0..8).flat_map(|i| (i as f32 - 3.5).to_le_bytes()).collect();
        std::fs::write(dir.path().join("g.bin"), blob).unwrap();
        let json = r#"{
            "name": "quad",
            "mesh": {"obj": "quad.obj"},
            "materials": {"specular": 0.2, "albedo": [[0.5, 0.5, 0.5], [0.2, 0.3, 0.4]], "roughness": [0.3, 0.6]},
            "segments": [0, 1],
            "flashlight": {"intensity": [1, 1, 1]},
            "sdf_grid": {"resolution": [2, 2, 2], "bbox": [[0, 0, -1], [1, 1, 1]], "blob": "g.bin"}
        }"#;
        let p = dir.path().join("s.json");
        std::fs::write(&p, json).unwrap();
        let s = load_scene(&p).unwrap();
        assert_eq!(s.face_count(), 2);
        assert_eq!(s.mesh.segment_ids, vec![0, 1]);
        assert_eq!(s.materials.faces[1].roughness, 0.6);
        let sdf = s.sdf.as_ref().unwrap();
        assert_eq!(sdf.values[7], 3.5);
    }

    #[test]
    fn bad_scene_files() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.json");
        std::fs::write(
            &p,
            r#"{"name": "x", "mesh": {"vertices": [[0,0,0],[1,0,0],[0,1,0]], "triangles": [[0,1,2]]},
                "materials": {"albedo": [], "roughness": []}, "flashlight": {"intensity": [1,1,1]}}"#,
        )
        .unwrap();
        assert!(matches!(load_scene(&p), Err(Error::InvalidScene(_))));
        std::fs::write(&p, "{").unwrap();
        assert!(matches!(load_scene(&p), Err(Error::Format(_))));
        assert!(resolve_scene("no-such-scene").is_err());
        assert_eq!(resolve_scene("plane").unwrap().name, "plane");
    }
}
