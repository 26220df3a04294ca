//! OFF/OBJ triangle-mesh loading and area-weighted surface sampling.

use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::pcdata::PointCloud;

#[derive(Clone, Debug)]
pub struct Mesh {
    pub vertices: Vec<[f64; 3]>,
    pub faces: Vec<[usize; 3]>,
}

impl Mesh {
    pub fn validate(&self) -> Result<()> {
        let v = self.vertices.len();
        for (i, f) in self.faces.iter().enumerate() {
            for &idx in f {
                if idx >= v {
                    return Err(Error::InvalidInput(format!(
                        "face {i} references vertex {idx}, mesh has {v} vertices"
                    )));
                }
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::InvalidInput(format!(
                    "face {i} repeats a vertex index"
                )));
            }
        }
        Ok(())
    }

    pub fn face_area(&self, face: usize) -> f64 {
        let [a, b, c] = self.faces[face];
        triangle_area(self.vertices[a], self.vertices[b], self.vertices[c])
    }
}

fn triangle_area(a: [f64; 3], b: [f64; 3], c: [f64; 3]) -> f64 {
    let u = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
    let v = [c[0] - a[0], c[1] - a[1], c[2] - a[2]];
    let cx = u[1] * v[2] - u[2] * v[1];
    let cy = u[2] * v[0] - u[0] * v[2];
    let cz = u[0] * v[1] - u[1] * v[0];
    0.5 * (cx * cx + cy * cy + cz * cz).sqrt()
}

/// Fan-triangulate a polygon's vertex indices.
fn fan(indices: &[usize], out: &mut Vec<[usize; 3]>) {
    for i in 1..indices.len() - 1 {
        out.push([indices[0], indices[i], indices[i + 1]]);
    }
}

pub fn load_off(path: &Path) -> Result<Mesh> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

    let (line_no, header) = lines
        .next()
        .ok_or_else(|| Error::parse(path, 0, "empty OFF file"))?;
    let mut tokens: Vec<&str> = header.split_whitespace().collect();
    if tokens[0] != "OFF" {
        return Err(Error::parse(path, line_no, "missing OFF header"));
    }
    tokens.remove(0);
    // Counts may share the header line or sit on the next one.
    let counts: Vec<&str> = if tokens.is_empty() {
        let (n, l) = lines
            .next()
            .ok_or_else(|| Error::parse(path, line_no, "missing OFF counts"))?;
        let c: Vec<&str> = l.split_whitespace().collect();
        if c.len() < 2 {
            return Err(Error::parse(path, n, "expected vertex and face counts"));
        }
        c
    } else {
        tokens
    };
    let parse_count = |s: &str, n: usize| -> Result<usize> {
        s.parse::<usize>()
            .map_err(|_| Error::parse(path, n, format!("non-numeric count {s:?}")))
    };
    let num_vertices = parse_count(counts[0], line_no)?;
    let num_faces = parse_count(counts[1], line_no)?;

    let mut vertices = Vec::with_capacity(num_vertices);
    for _ in 0..num_vertices {
        let (n, l) = lines
            .next()
            .ok_or_else(|| Error::parse(path, 0, "unexpected end of vertex list"))?;
        let fields: Vec<&str> = l.split_whitespace().collect();
        if fields.len() < 3 {
            return Err(Error::parse(path, n, "vertex line needs 3 coordinates"));
        }
        let mut v = [0.0; 3];
        for k in 0..3 {
            v[k] = fields[k]
                .parse::<f64>()
                .map_err(|_| Error::parse(path, n, format!("non-numeric token {:?}", fields[k])))?;
        }
        vertices.push(v);
    }

    let mut faces = Vec::with_capacity(num_faces);
    for _ in 0..num_faces {
        let (n, l) = lines
            .next()
            .ok_or_else(|| Error::parse(path, 0, "unexpected end of face list"))?;
        let fields: Vec<&str> = l.split_whitespace().collect();
        let arity: usize = fields[0]
            .parse()
            .map_err(|_| Error::parse(path, n, format!("non-numeric face arity {:?}", fields[0])))?;
        if arity < 3 || fields.len() < 1 + arity {
            return Err(Error::parse(path, n, "face line shorter than its arity"));
        }
        let mut poly = Vec::with_capacity(arity);
        for f in &fields[1..1 + arity] {
            let idx: usize = f
                .parse()
                .map_err(|_| Error::parse(path, n, format!("non-numeric index {f:?}")))?;
            if idx >= vertices.len() {
                return Err(Error::parse(
                    path,
                    n,
                    format!("vertex index {idx} out of range (mesh has {})", vertices.len()),
                ));
            }
            poly.push(idx);
        }
        fan(&poly, &mut faces);
    }

    let mesh = Mesh { vertices, faces };
    mesh.validate()?;
    Ok(mesh)
}

pub fn load_obj(path: &Path) -> Result<Mesh> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let n = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        match fields[0] {
            "v" => {
                if fields.len() < 4 {
                    return Err(Error::parse(path, n, "vertex line needs 3 coordinates"));
                }
                let mut v = [0.0; 3];
                for k in 0..3 {
                    v[k] = fields[k + 1].parse::<f64>().map_err(|_| {
                        Error::parse(path, n, format!("non-numeric token {:?}", fields[k + 1]))
                    })?;
                }
                vertices.push(v);
            }
            "f" => {
                if fields.len() < 4 {
                    return Err(Error::parse(path, n, "face needs at least 3 vertices"));
                }
                let mut poly = Vec::with_capacity(fields.len() - 1);
                for f in &fields[1..] {
                    let first = f.split('/').next().unwrap_or("");
                    let idx: i64 = first
                        .parse()
                        .map_err(|_| Error::parse(path, n, format!("non-numeric index {f:?}")))?;
                    if idx < 1 || idx as usize > vertices.len() {
                        return Err(Error::parse(
                            path,
                            n,
                            format!(
                                "vertex index {idx} out of range (mesh has {})",
                                vertices.len()
                            ),
                        ));
                    }
                    poly.push(idx as usize - 1);
                }
                fan(&poly, &mut faces);
            }
            // Normals, texcoords, groups, materials: ignored.
            _ => {}
        }
    }
    let mesh = Mesh { vertices, faces };
    mesh.validate()?;
    Ok(mesh)
}

/// Draw `n` surface points, faces weighted by area, positions uniform within
/// each face via the square-root barycentric trick.
pub fn sample_mesh<R: Rng>(mesh: &Mesh, n: usize, rng: &mut R) -> Result<PointCloud> {
    if n == 0 {
        return Err(Error::InvalidInput("sample_mesh needs n >= 1".into()));
    }
    mesh.validate()?;
    let areas: Vec<f64> = (0..mesh.faces.len()).map(|f| mesh.face_area(f)).collect();
    let total: f64 = areas.iter().sum();
    if total <= 0.0 {
        return Err(Error::Degenerate("mesh has zero total surface area".into()));
    }
    let mut cumulative = Vec::with_capacity(areas.len());
    let mut acc = 0.0;
    for a in &areas {
        acc += a;
        cumulative.push(acc);
    }

    let mut points = Vec::with_capacity(n);
    for _ in 0..n {
        let target = rng.gen::<f64>() * total;
        let face = cumulative.partition_point(|&c| c <= target).min(mesh.faces.len() - 1);
        let [ia, ib, ic] = mesh.faces[face];
        let (a, b, c) = (mesh.vertices[ia], mesh.vertices[ib], mesh.vertices[ic]);
        let r1 = rng.gen::<f64>().sqrt();
        let r2 = rng.gen::<f64>();
        let (wa, wb, wc) = (1.0 - r1, r1 * (1.0 - r2), r1 * r2);
        points.push([
            wa * a[0] + wb * b[0] + wc * c[0],
            wa * a[1] + wb * b[1] + wc * c[1],
            wa * a[2] + wb * b[2] + wc * c[2],
        ]);
    }
    Ok(PointCloud::new(points))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from;
    use std::path::PathBuf;

    fn tmp(name: &str) -> PathBuf {
        let dir = std::env::temp_dir().join("rotcloud-mesh-test");
        std::fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    fn unit_square() -> Mesh {
        Mesh {
            vertices: vec![
                [0.0, 0.0, 0.0],
                [1.0, 0.0, 0.0],
                [1.0, 1.0, 0.0],
                [0.0, 1.0, 0.0],
            ],
            faces: vec![[0, 1, 3], [1, 2, 3]],
        }
    }

    #[test]
    fn minimal_off_parses() {
        let path = tmp("tri.off");
        std::fs::write(&path, "OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n").unwrap();
        let mesh = load_off(&path).unwrap();
        assert_eq!(mesh.vertices.len(), 3);
        assert_eq!(mesh.faces.len(), 1);
    }

    #[test]
    fn off_counts_on_header_line() {
        let path = tmp("tri2.off");
        std::fs::write(&path, "OFF 3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n").unwrap();
        assert_eq!(load_off(&path).unwrap().faces.len(), 1);
    }

    #[test]
    fn off_out_of_range_index_names_line() {
        let path = tmp("bad.off");
        std::fs::write(&path, "OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 5\n").unwrap();
        let err = load_off(&path).unwrap_err().to_string();
        assert!(err.contains(":6"), "{err}");
        assert!(err.contains('5'), "{err}");
    }

    #[test]
    fn obj_quad_becomes_two_triangles() {
        let path = tmp("quad.obj");
        std::fs::write(
            &path,
            "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n",
        )
        .unwrap();
        let mesh = load_obj(&path).unwrap();
        assert_eq!(mesh.faces.len(), 2);
    }

    #[test]
    fn obj_slash_indices_and_comments() {
        let path = tmp("slash.obj");
        std::fs::write(
            &path,
            "# comment\nv 0 0 0\nv 1 0 0\nv 0 1 0\nvn 0 0 1\nf 1//1 2//1 3//1\n",
        )
        .unwrap();
        assert_eq!(load_obj(&path).unwrap().faces.len(), 1);
    }

    #[test]
    fn single_triangle_samples_stay_inside() {
        let mesh = Mesh {
            vertices: vec![[0.0, 0.0, 0.0], [2.0, 0.0, 0.0], [0.0, 2.0, 0.0]],
            faces: vec![[0, 1, 2]],
        };
        let mut rng = rng_from(5, &[1]);
        let pc = sample_mesh(&mesh, 500, &mut rng).unwrap();
        for p in &pc.points {
            // Barycentric membership for this right triangle.
            assert!(p[0] >= -1e-12 && p[1] >= -1e-12 && p[0] / 2.0 + p[1] / 2.0 <= 1.0 + 1e-12);
            assert!(p[2].abs() < 1e-12);
        }
    }

    #[test]
    fn equal_area_halves_get_equal_samples() {
        let mesh = unit_square();
        let mut rng = rng_from(5, &[2]);
        let pc = sample_mesh(&mesh, 10_000, &mut rng).unwrap();
        let below = pc.points.iter().filter(|p| p[0] + p[1] < 1.0).count() as f64 / 10_000.0;
        assert!((0.47..=0.53).contains(&below), "fraction = {below}");
    }

    #[test]
    fn area_weighting_follows_nine_to_one_ratio() {
        // Two triangles in one plane with area ratio 9:1.
        let mesh = Mesh {
            vertices: vec![
                [0.0, 0.0, 0.0],
                [9.0, 0.0, 0.0],
                [0.0, 2.0, 0.0],
                [-1.0, 0.0, 0.0],
                [0.0, -2.0, 0.0],
            ],
            faces: vec![[0, 1, 2], [0, 3, 4]],
        };
        let mut rng = rng_from(5, &[3]);
        let pc = sample_mesh(&mesh, 10_000, &mut rng).unwrap();
        let big = pc.points.iter().filter(|p| p[1] > 0.0).count() as f64;
        let small = 10_000.0 - big;
        let ratio = big / small;
        assert!((8.0..=10.0).contains(&ratio), "ratio = {ratio}");
    }

    #[test]
    fn zero_area_mesh_is_rejected() {
        let mesh = Mesh {
            vertices: vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]],
            faces: vec![[0, 1, 2]],
        };
        let mut rng = rng_from(5, &[4]);
        assert!(matches!(
            sample_mesh(&mesh, 10, &mut rng),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn sampling_distribution_survives_vertex_reordering() {
        let mesh = unit_square();
        let reordered = Mesh {
            vertices: vec![
                [0.0, 1.0, 0.0],
                [1.0, 1.0, 0.0],
                [1.0, 0.0, 0.0],
                [0.0, 0.0, 0.0],
            ],
            faces: vec![[3, 2, 0], [2, 1, 0]],
        };
        let mut r1 = rng_from(9, &[0]);
        let mut r2 = rng_from(9, &[1]);
        let a = sample_mesh(&mesh, 20_000, &mut r1).unwrap();
        let b = sample_mesh(&reordered, 20_000, &mut r2).unwrap();
        // Coarse coordinate histograms agree within statistical noise.
        for axis in 0..2 {
            let hist = |pc: &PointCloud| -> Vec<f64> {
                let mut bins = vec![0.0; 5];
                for p in &pc.points {
                    let b = ((p[axis] * 5.0) as usize).min(4);
                    bins[b] += 1.0 / pc.points.len() as f64;
                }
                bins
            };
            for (ha, hb) in hist(&a).iter().zip(hist(&b)) {
                assert!((ha - hb).abs() < 0.02, "axis {axis}: {ha} vs {hb}");
            }
        }
    }
}
