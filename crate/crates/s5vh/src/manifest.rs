//! Dataset manifests: JSON listings of per-video feature files.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::io;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VideoEntry {
    pub id: String,
    /// Feature file path, resolved relative to the manifest's directory.
    pub path: String,
    pub n_frames: usize,
    pub dim: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<i64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub split: String,
    pub videos: Vec<VideoEntry>,
}

/// One video's features loaded into memory.
#[derive(Debug, Clone)]
pub struct VideoFeatures {
    pub id: String,
    pub label: Option<i64>,
    pub n_frames: usize,
    pub dim: usize,
    /// Row-major [n_frames, dim].
    pub data: Vec<f32>,
}

impl DatasetManifest {
    pub fn load(path: &Path) -> Result<DatasetManifest> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let manifest: DatasetManifest =
            serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))?;
        if manifest.videos.is_empty() {
            return Err(Error::Manifest(format!(
                "{}: manifest lists no videos",
                path.display()
            )));
        }
        let mut seen = std::collections::BTreeSet::new();
        for v in &manifest.videos {
            if !seen.insert(&v.id) {
                return Err(Error::Manifest(format!("duplicate video id `{}`", v.id)));
            }
            if v.n_frames == 0 || v.dim == 0 {
                return Err(Error::Manifest(format!(
                    "video `{}` declares empty shape {}x{}",
                    v.id, v.n_frames, v.dim
                )));
            }
        }
        Ok(manifest)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| Error::json(path.display().to_string(), e))?;
        fs::write(path, json).map_err(|e| Error::io(path.display().to_string(), e))
    }

    fn resolve(&self, manifest_dir: &Path, entry: &VideoEntry) -> PathBuf {
        let p = Path::new(&entry.path);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            manifest_dir.join(p)
        }
    }

    /// Load every referenced tensor file, verifying declared shapes. Errors
    /// name the offending video id.
    pub fn load_features(&self, manifest_dir: &Path) -> Result<Vec<VideoFeatures>> {
        let mut out = Vec::with_capacity(self.videos.len());
        for entry in &self.videos {
            let path = self.resolve(manifest_dir, entry);
            let (data, shape) = io::read_tensor::<f32>(&path).map_err(|e| {
                Error::Manifest(format!("video `{}`: {e}", entry.id))
            })?;
            if shape != [entry.n_frames, entry.dim] {
                return Err(Error::Manifest(format!(
                    "video `{}` declares {}x{} but file holds {:?}",
                    entry.id, entry.n_frames, entry.dim, shape
                )));
            }
            out.push(VideoFeatures {
                id: entry.id.clone(),
                label: entry.label,
                n_frames: entry.n_frames,
                dim: entry.dim,
                data,
            });
        }
        Ok(out)
    }

    /// Enforce the training invariant that every video shares one (N_t, D).
    pub fn uniform_shape(&self) -> Result<(usize, usize)> {
        let first = &self.videos[0];
        for v in &self.videos {
            if v.n_frames != first.n_frames || v.dim != first.dim {
                return Err(Error::Manifest(format!(
                    "video `{}` has shape {}x{}, expected uniform {}x{}",
                    v.id, v.n_frames, v.dim, first.n_frames, first.dim
                )));
            }
        }
        Ok((first.n_frames, first.dim))
    }

    /// id -> label map for evaluation.
    pub fn labels(&self) -> BTreeMap<String, i64> {
        self.videos
            .iter()
            .filter_map(|v| v.label.map(|l| (v.id.clone(), l)))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn temp_dir(tag: &str) -> PathBuf {
        let dir = std::env::temp_dir().join(format!("s5vh-manifest-{tag}"));
        let _ = fs::remove_dir_all(&dir);
        fs::create_dir_all(&dir).unwrap();
        dir
    }

    #[test]
    fn round_trip_and_feature_loading() {
        let dir = temp_dir("ok");
        io::write_tensor::<f32>(&dir.join("a.s5vt"), &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], &[3, 2])
            .unwrap();
        let manifest = DatasetManifest {
            split: "train".to_string(),
            videos: vec![VideoEntry {
                id: "a".to_string(),
                path: "a.s5vt".to_string(),
                n_frames: 3,
                dim: 2,
                label: Some(1),
            }],
        };
        manifest.save(&dir.join("manifest.json")).unwrap();
        let loaded = DatasetManifest::load(&dir.join("manifest.json")).unwrap();
        let features = loaded.load_features(&dir).unwrap();
        assert_eq!(features.len(), 1);
        assert_eq!(features[0].data, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(loaded.uniform_shape().unwrap(), (3, 2));
    }

    #[test]
    fn shape_mismatch_names_the_video() {
        let dir = temp_dir("mismatch");
        io::write_tensor::<f32>(&dir.join("b.s5vt"), &[1.0, 2.0], &[1, 2]).unwrap();
        let manifest = DatasetManifest {
            split: "train".to_string(),
            videos: vec![VideoEntry {
                id: "vid-b".to_string(),
                path: "b.s5vt".to_string(),
                n_frames: 2,
                dim: 2,
                label: None,
            }],
        };
        let err = manifest.load_features(&dir).unwrap_err();
        assert!(err.to_string().contains("vid-b"), "{err}");
    }

    #[test]
    fn empty_manifest_rejected() {
        let dir = temp_dir("empty");
        fs::write(dir.join("manifest.json"), r#"{"split": "train", "videos": []}"#).unwrap();
        assert!(DatasetManifest::load(&dir.join("manifest.json")).is_err());
    }
}
