//! Point-cloud data model: normalization, XYZ file IO, dataset manifests,
//! mesh ingestion and synthetic shape generation.

mod mesh;
mod shapes;

pub use mesh::{load_obj, load_off, sample_mesh, Mesh};
pub use shapes::{generate_shape, keypoint_count, shape_category_count, ShapeCategory};

use std::collections::HashSet;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A set of 3-D points with optional category label and keypoint annotations.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    pub points: Vec<[f64; 3]>,
    pub category: Option<usize>,
    pub keypoints: Option<Vec<[f64; 3]>>,
}

impl PointCloud {
    pub fn new(points: Vec<[f64; 3]>) -> Self {
        PointCloud {
            points,
            category: None,
            keypoints: None,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn centroid(&self) -> [f64; 3] {
        let mut c = [0.0; 3];
        for p in &self.points {
            for k in 0..3 {
                c[k] += p[k];
            }
        }
        let n = self.points.len() as f64;
        c.map(|v| v / n)
    }

    pub fn max_norm(&self) -> f64 {
        self.points
            .iter()
            .map(|p| (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt())
            .fold(0.0, f64::max)
    }

    /// Centroid to the origin, furthest point to distance 1. Keypoints follow
    /// the same similarity transform.
    pub fn normalize(&self) -> Result<PointCloud> {
        if self.points.is_empty() {
            return Err(Error::InvalidInput("normalize on empty point cloud".into()));
        }
        let c = self.centroid();
        let centered: Vec<[f64; 3]> = self
            .points
            .iter()
            .map(|p| [p[0] - c[0], p[1] - c[1], p[2] - c[2]])
            .collect();
        let scale = centered
            .iter()
            .map(|p| (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt())
            .fold(0.0, f64::max);
        if scale < 1e-12 {
            return Err(Error::Degenerate(
                "normalize: all points identical (zero scale)".into(),
            ));
        }
        let points = centered
            .iter()
            .map(|p| [p[0] / scale, p[1] / scale, p[2] / scale])
            .collect();
        let keypoints = self.keypoints.as_ref().map(|kps| {
            kps.iter()
                .map(|p| {
                    [
                        (p[0] - c[0]) / scale,
                        (p[1] - c[1]) / scale,
                        (p[2] - c[2]) / scale,
                    ]
                })
                .collect()
        });
        Ok(PointCloud {
            points,
            category: self.category,
            keypoints,
        })
    }

    /// Plain-text XYZ: one `x y z` triple per line, shortest round-trip floats.
    pub fn save_xyz(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for p in &self.points {
            out.push_str(&format!("{} {} {}\n", p[0], p[1], p[2]));
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn load_xyz(path: &Path) -> Result<PointCloud> {
        let points = load_xyz_points(path)?;
        if points.is_empty() {
            return Err(Error::parse(path, 0, "no points in file"));
        }
        Ok(PointCloud::new(points))
    }
}

/// Shared reader for XYZ-format files (clouds and keypoint sidecars).
pub fn load_xyz_points(path: &Path) -> Result<Vec<[f64; 3]>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut points = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(Error::parse(
                path,
                idx + 1,
                format!("expected 3 fields, got {}", fields.len()),
            ));
        }
        let mut p = [0.0; 3];
        for (k, f) in fields.iter().enumerate() {
            p[k] = f
                .parse::<f64>()
                .map_err(|_| Error::parse(path, idx + 1, format!("non-numeric token {f:?}")))?;
            if !p[k].is_finite() {
                return Err(Error::parse(path, idx + 1, "non-finite coordinate"));
            }
        }
        points.push(p);
    }
    Ok(points)
}

pub fn save_xyz_points(path: &Path, points: &[[f64; 3]]) -> Result<()> {
    let mut out = String::new();
    for p in points {
        out.push_str(&format!("{} {} {}\n", p[0], p[1], p[2]));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ManifestEntry {
    pub path: String,
    pub label: usize,
    pub keypoints: Option<String>,
}

/// Listing of one dataset split. Paths are relative to the manifest file's
/// directory.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub seed: u64,
    pub split: String,
    pub entries: Vec<ManifestEntry>,
    #[serde(skip)]
    pub root: PathBuf,
}

impl DatasetManifest {
    pub fn validate(&self) -> Result<()> {
        let mut labels: Vec<usize> = self.entries.iter().map(|e| e.label).collect();
        labels.sort_unstable();
        labels.dedup();
        for (want, have) in labels.iter().enumerate() {
            if want != *have {
                return Err(Error::InvalidInput(format!(
                    "manifest labels must form a contiguous range from 0, missing {want}"
                )));
            }
        }
        let mut seen = HashSet::new();
        for e in &self.entries {
            if !seen.insert(&e.path) {
                return Err(Error::InvalidInput(format!(
                    "duplicate manifest path {}",
                    e.path
                )));
            }
        }
        Ok(())
    }

    pub fn label_count(&self) -> usize {
        self.entries.iter().map(|e| e.label + 1).max().unwrap_or(0)
    }

    pub fn load(path: &Path) -> Result<DatasetManifest> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut manifest: DatasetManifest = serde_json::from_str(&text)
            .map_err(|e| Error::parse(path, e.line(), e.to_string()))?;
        manifest.root = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::InvalidInput(e.to_string()))?;
        let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        file.write_all(text.as_bytes())
            .map_err(|e| Error::io(path, e))?;
        file.write_all(b"\n").map_err(|e| Error::io(path, e))
    }

    /// Load the cloud behind entry `idx`, attaching label and keypoints.
    pub fn load_entry(&self, idx: usize) -> Result<PointCloud> {
        let entry = &self.entries[idx];
        let mut cloud = PointCloud::load_xyz(&self.root.join(&entry.path))?;
        cloud.category = Some(entry.label);
        if let Some(kp_path) = &entry.keypoints {
            cloud.keypoints = Some(load_xyz_points(&self.root.join(kp_path))?);
        }
        Ok(cloud)
    }
}

/// Generate the synthetic dataset: `categories` shape classes with `train`
/// and `test` clouds each, written as XYZ files plus keypoint sidecars and
/// per-split JSON manifests.
pub fn generate_dataset(
    out_dir: &Path,
    categories: usize,
    train_per_category: usize,
    test_per_category: usize,
    points: usize,
    seed: u64,
    threads: usize,
) -> Result<()> {
    if categories < 2 || categories > shape_category_count() {
        return Err(Error::InvalidInput(format!(
            "categories must be in 2..={}, got {categories}",
            shape_category_count()
        )));
    }
    // Distinct seed bases keep train and test entry streams disjoint.
    let split_plan = [
        ("train", train_per_category, seed),
        ("test", test_per_category, seed + 1_000_000),
    ];
    for (split, per_category, split_seed) in split_plan {
        let dir = out_dir.join(split);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let count = categories * per_category;
        let jobs: Vec<usize> = (0..count).collect();
        let entries = crate::threads::parallel_map(&jobs, threads, |&i| -> Result<ManifestEntry> {
            let category = ShapeCategory::from_index(i % categories)?;
            // Per-entry seed is manifest seed plus entry index.
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(split_seed + i as u64);
            let cloud = generate_shape(category, points, &mut rng)?;
            let name = format!("cloud_{i:05}.xyz");
            let kp_name = format!("cloud_{i:05}.kp.xyz");
            cloud.save_xyz(&dir.join(&name))?;
            save_xyz_points(
                &dir.join(&kp_name),
                cloud.keypoints.as_deref().unwrap_or(&[]),
            )?;
            Ok(ManifestEntry {
                path: format!("{split}/{name}"),
                label: i % categories,
                keypoints: Some(format!("{split}/{kp_name}")),
            })
        });
        let entries: Result<Vec<ManifestEntry>> = entries.into_iter().collect();
        let manifest = DatasetManifest {
            seed: split_seed,
            split: split.to_string(),
            entries: entries?,
            root: out_dir.to_path_buf(),
        };
        manifest.validate()?;
        manifest.save(&out_dir.join(format!("{split}.json")))?;
    }
    Ok(())
}

use rand_chacha::rand_core::SeedableRng;
