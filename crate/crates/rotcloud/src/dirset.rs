//! K-direction label sets on the unit sphere and the rotation list they
//! induce.
//!
//! K = 6 uses the coordinate axes, K = 18 adds the twelve axis-pair
//! bisectors, K = 32 uses icosahedron vertices plus face centers, and any
//! other K falls back to the golden-spiral sunflower arrangement.

use std::path::Path;

use crate::error::{Error, Result};
use crate::so3::{dot3, norm3, rotation_from_up_to, Rotation, Vec3};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scheme {
    Axes6,
    AxesBisectors18,
    Icosa32,
    Sunflower(usize),
}

#[derive(Clone, Debug)]
pub struct DirectionSet {
    pub k: usize,
    pub dirs: Vec<Vec3>,
    pub scheme: Scheme,
}

const GOLDEN_RATIO: f64 = 1.618033988749894848;

fn axes6() -> Vec<Vec3> {
    vec![
        [1.0, 0.0, 0.0],
        [-1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
        [0.0, -1.0, 0.0],
        [0.0, 0.0, 1.0],
        [0.0, 0.0, -1.0],
    ]
}

fn axes_bisectors18() -> Vec<Vec3> {
    let axes = axes6();
    let mut dirs = axes.clone();
    for i in 0..axes.len() {
        for j in (i + 1)..axes.len() {
            let sum = [
                axes[i][0] + axes[j][0],
                axes[i][1] + axes[j][1],
                axes[i][2] + axes[j][2],
            ];
            if norm3(sum) < 1e-9 {
                continue; // antipodal pair
            }
            let inv = 1.0 / norm3(sum);
            dirs.push([sum[0] * inv, sum[1] * inv, sum[2] * inv]);
        }
    }
    dirs
}

fn icosa32() -> Vec<Vec3> {
    // Standard cyclic vertex set (0, ±1, ±phi), scaled to unit norm.
    let phi = GOLDEN_RATIO;
    let mut vertices: Vec<Vec3> = Vec::with_capacity(12);
    for &a in &[1.0, -1.0] {
        for &b in &[phi, -phi] {
            vertices.push([0.0, a, b]);
            vertices.push([a, b, 0.0]);
            vertices.push([b, 0.0, a]);
        }
    }
    let scale = 1.0 / (1.0 + phi * phi).sqrt();
    for v in vertices.iter_mut() {
        for k in 0..3 {
            v[k] *= scale;
        }
    }

    // Faces are the vertex triples whose pairwise distances all equal the
    // edge length.
    let dist = |a: Vec3, b: Vec3| norm3([a[0] - b[0], a[1] - b[1], a[2] - b[2]]);
    let mut edge = f64::INFINITY;
    for i in 0..12 {
        for j in (i + 1)..12 {
            edge = edge.min(dist(vertices[i], vertices[j]));
        }
    }
    let mut dirs = vertices.clone();
    for i in 0..12 {
        for j in (i + 1)..12 {
            for l in (j + 1)..12 {
                let close = |a: usize, b: usize| (dist(vertices[a], vertices[b]) - edge).abs() < 1e-9;
                if close(i, j) && close(j, l) && close(i, l) {
                    let mut center = [0.0; 3];
                    for k in 0..3 {
                        center[k] =
                            (vertices[i][k] + vertices[j][k] + vertices[l][k]) / 3.0;
                    }
                    let inv = 1.0 / norm3(center);
                    dirs.push([center[0] * inv, center[1] * inv, center[2] * inv]);
                }
            }
        }
    }
    debug_assert_eq!(dirs.len(), 32);
    dirs
}

fn sunflower(k: usize) -> Vec<Vec3> {
    // Latitudes step through y = 1 - (2i+1)/k, azimuths advance by the
    // golden angle 2*pi*(1 - 1/phi).
    let golden_angle = std::f64::consts::TAU * (1.0 - 1.0 / GOLDEN_RATIO);
    (0..k)
        .map(|i| {
            let y = 1.0 - (2.0 * i as f64 + 1.0) / k as f64;
            let radius = (1.0 - y * y).max(0.0).sqrt();
            let theta = golden_angle * i as f64;
            [radius * theta.cos(), y, radius * theta.sin()]
        })
        .collect()
}

impl DirectionSet {
    /// K = 6, 18 and 32 get their exact constructions; any other K >= 2 uses
    /// the sunflower arrangement.
    pub fn build(k: usize) -> Result<DirectionSet> {
        if k < 2 {
            return Err(Error::InvalidInput(format!(
                "direction set needs k >= 2, got {k}"
            )));
        }
        let (dirs, scheme) = match k {
            6 => (axes6(), Scheme::Axes6),
            18 => (axes_bisectors18(), Scheme::AxesBisectors18),
            32 => (icosa32(), Scheme::Icosa32),
            _ => (sunflower(k), Scheme::Sunflower(k)),
        };
        let ds = DirectionSet { k, dirs, scheme };
        ds.validate()?;
        Ok(ds)
    }

    fn validate(&self) -> Result<()> {
        if self.dirs.len() != self.k {
            return Err(Error::InvalidInput(format!(
                "direction set has {} vectors, expected {}",
                self.dirs.len(),
                self.k
            )));
        }
        for d in &self.dirs {
            if (norm3(*d) - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidInput("direction is not unit length".into()));
            }
        }
        if self.min_pairwise_angle() <= 1e-6 {
            return Err(Error::InvalidInput(
                "direction set contains near-duplicate directions".into(),
            ));
        }
        Ok(())
    }

    pub fn min_pairwise_angle(&self) -> f64 {
        let mut min = f64::INFINITY;
        for i in 0..self.dirs.len() {
            for j in (i + 1)..self.dirs.len() {
                let c = dot3(self.dirs[i], self.dirs[j]).clamp(-1.0, 1.0);
                min = min.min(c.acos());
            }
        }
        min
    }

    /// The rotation list R_1..R_K: rotation i carries `up` onto direction i.
    pub fn rotations_for(&self, up: Vec3) -> Result<Vec<Rotation>> {
        self.dirs
            .iter()
            .map(|&d| rotation_from_up_to(d, up))
            .collect()
    }

    /// Index of the direction closest to `v` (largest dot product, ties to
    /// the lowest index).
    pub fn nearest_direction(&self, v: Vec3) -> usize {
        let mut best = 0;
        let mut best_dot = dot3(self.dirs[0], v);
        for (i, d) in self.dirs.iter().enumerate().skip(1) {
            let dp = dot3(*d, v);
            if dp > best_dot {
                best_dot = dp;
                best = i;
            }
        }
        best
    }

    /// CSV export: `index,x,y,z`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,x,y,z\n");
        for (i, d) in self.dirs.iter().enumerate() {
            out.push_str(&format!("{i},{},{},{}\n", d[0], d[1], d[2]));
        }
        out
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Analytic icosahedral vertex-to-adjacent-face-center angle, the minimum
/// pairwise angle of the K = 32 set: cos = sqrt((3*phi + 2) / (3*phi + 6)).
pub fn icosa_vertex_face_angle() -> f64 {
    let phi = GOLDEN_RATIO;
    ((3.0 * phi + 2.0) / (3.0 * phi + 6.0)).sqrt().acos()
}
