//! Rotation mathematics: 3x3 rotation matrices, the axis-angle and 6-D
//! parameterizations, uniform axis sampling, and point-cloud application.

use rand::Rng;

use crate::error::{Error, Result};
use crate::pcdata::PointCloud;
use crate::rng::standard_normal;

pub const ORTHONORMALITY_TOL: f64 = 1e-9;

pub type Vec3 = [f64; 3];

pub fn dot3(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn cross3(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub fn norm3(a: Vec3) -> f64 {
    dot3(a, a).sqrt()
}

pub fn normalize3(a: Vec3) -> Result<Vec3> {
    let n = norm3(a);
    if n < 1e-9 {
        return Err(Error::Degenerate("cannot normalize a near-zero vector".into()));
    }
    Ok([a[0] / n, a[1] / n, a[2] / n])
}

/// Proper rotation matrix (row-major; acts on column vectors as `m * v`).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rotation {
    m: [[f64; 3]; 3],
}

impl Rotation {
    pub fn identity() -> Rotation {
        Rotation {
            m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        }
    }

    /// Validate orthonormality and determinant before accepting the matrix.
    pub fn try_new(m: [[f64; 3]; 3]) -> Result<Rotation> {
        let r = Rotation { m };
        let err = r.orthonormality_error();
        if err > ORTHONORMALITY_TOL {
            return Err(Error::InvalidInput(format!(
                "matrix is not orthonormal (deviation {err:.3e})"
            )));
        }
        let det = r.det();
        if (det - 1.0).abs() > ORTHONORMALITY_TOL {
            return Err(Error::InvalidInput(format!(
                "matrix determinant {det} is not +1"
            )));
        }
        Ok(r)
    }

    pub fn matrix(&self) -> &[[f64; 3]; 3] {
        &self.m
    }

    /// Max absolute deviation of `m^T m` from the identity.
    pub fn orthonormality_error(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..3 {
            for j in 0..3 {
                let mut s = 0.0;
                for k in 0..3 {
                    s += self.m[k][i] * self.m[k][j];
                }
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((s - target).abs());
            }
        }
        worst
    }

    pub fn det(&self) -> f64 {
        let m = &self.m;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    pub fn trace(&self) -> f64 {
        self.m[0][0] + self.m[1][1] + self.m[2][2]
    }

    pub fn apply_vec(&self, v: Vec3) -> Vec3 {
        let m = &self.m;
        [
            m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
            m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
            m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
        ]
    }

    pub fn compose(&self, other: &Rotation) -> Rotation {
        let mut m = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    m[i][j] += self.m[i][k] * other.m[k][j];
                }
            }
        }
        Rotation { m }
    }

    pub fn transpose(&self) -> Rotation {
        let m = &self.m;
        Rotation {
            m: [
                [m[0][0], m[1][0], m[2][0]],
                [m[0][1], m[1][1], m[2][1]],
                [m[0][2], m[1][2], m[2][2]],
            ],
        }
    }

    /// Row-major flattening, handy for regression targets.
    pub fn flatten(&self) -> [f64; 9] {
        let m = &self.m;
        [
            m[0][0], m[0][1], m[0][2], m[1][0], m[1][1], m[1][2], m[2][0], m[2][1], m[2][2],
        ]
    }
}

/// Unit rotation axis plus angle in [0, pi].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AxisAngle {
    pub axis: Vec3,
    pub angle: f64,
}

impl AxisAngle {
    pub fn new(axis: Vec3, angle: f64) -> Result<AxisAngle> {
        if (norm3(axis) - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidInput(format!(
                "axis must be unit length, got norm {}",
                norm3(axis)
            )));
        }
        if !(0.0..=std::f64::consts::PI).contains(&angle) {
            return Err(Error::InvalidInput(format!(
                "angle must lie in [0, pi], got {angle}"
            )));
        }
        Ok(AxisAngle { axis, angle })
    }
}

/// Two unconstrained 3-vectors; the raw 6-D rotation representation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SixD {
    pub a1: Vec3,
    pub a2: Vec3,
}

impl SixD {
    pub fn new(a1: Vec3, a2: Vec3) -> SixD {
        SixD { a1, a2 }
    }

    /// First two columns of a rotation matrix.
    pub fn from_rotation(r: &Rotation) -> SixD {
        let m = r.matrix();
        SixD {
            a1: [m[0][0], m[1][0], m[2][0]],
            a2: [m[0][1], m[1][1], m[2][1]],
        }
    }

    pub fn flatten(&self) -> [f64; 6] {
        [
            self.a1[0], self.a1[1], self.a1[2], self.a2[0], self.a2[1], self.a2[2],
        ]
    }
}

/// Rodrigues construction.
pub fn axis_angle_to_rotation(aa: &AxisAngle) -> Result<Rotation> {
    let n = norm3(aa.axis);
    if (n - 1.0).abs() > 1e-6 {
        return Err(Error::InvalidInput(format!(
            "axis must be unit length, got norm {n}"
        )));
    }
    let [x, y, z] = aa.axis;
    let (s, c) = aa.angle.sin_cos();
    let t = 1.0 - c;
    Ok(Rotation {
        m: [
            [t * x * x + c, t * x * y - s * z, t * x * z + s * y],
            [t * x * y + s * z, t * y * y + c, t * y * z - s * x],
            [t * x * z - s * y, t * y * z + s * x, t * z * z + c],
        ],
    })
}

/// Minimal rotation carrying `up` onto `target`.
///
/// The antipodal case is a half-turn about a deterministic perpendicular:
/// the +x axis when `up` is parallel to y, otherwise `normalize(up x e)` for
/// the first standard basis vector `e` not parallel to `up`.
pub fn rotation_from_up_to(target: Vec3, up: Vec3) -> Result<Rotation> {
    for (name, v) in [("target", target), ("up", up)] {
        if (norm3(v) - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidInput(format!(
                "{name} must be unit length, got norm {}",
                norm3(v)
            )));
        }
    }
    let c = dot3(up, target);
    let axis_raw = cross3(up, target);
    let s = norm3(axis_raw);

    if s < 1e-12 {
        if c > 0.0 {
            return Ok(Rotation::identity());
        }
        // Antipodal: pick the tie-break axis.
        let axis = if up[0].abs() < 0.9 && up[2].abs() < 0.9 {
            [1.0, 0.0, 0.0]
        } else {
            let e = if up[0].abs() < 0.9 {
                [1.0, 0.0, 0.0]
            } else {
                [0.0, 1.0, 0.0]
            };
            normalize3(cross3(up, e))?
        };
        return axis_angle_to_rotation(&AxisAngle {
            axis,
            angle: std::f64::consts::PI,
        });
    }

    let axis = [axis_raw[0] / s, axis_raw[1] / s, axis_raw[2] / s];
    let angle = s.atan2(c);
    axis_angle_to_rotation(&AxisAngle { axis, angle })
}

/// Uniform direction on the unit sphere via normalized Gaussian coordinates.
pub fn sample_uniform_axis<R: Rng>(rng: &mut R) -> Vec3 {
    loop {
        let v = [
            standard_normal(rng),
            standard_normal(rng),
            standard_normal(rng),
        ];
        let n = norm3(v);
        if n >= 1e-9 {
            return [v[0] / n, v[1] / n, v[2] / n];
        }
    }
}

/// Gram-Schmidt mapping from the 6-D representation onto SO(3).
pub fn sixd_to_rotation(s: &SixD) -> Result<Rotation> {
    let n1 = norm3(s.a1);
    if n1 <= 1e-9 {
        return Err(Error::Degenerate(format!(
            "6d first column has near-zero norm {n1:.3e}"
        )));
    }
    let cross_norm = norm3(cross3(s.a1, s.a2));
    if cross_norm <= 1e-9 {
        return Err(Error::Degenerate(format!(
            "6d columns are parallel or the second is near zero (|a1 x a2| = {cross_norm:.3e})"
        )));
    }
    let c1 = [s.a1[0] / n1, s.a1[1] / n1, s.a1[2] / n1];
    let proj = dot3(s.a2, c1);
    let u2 = [
        s.a2[0] - proj * c1[0],
        s.a2[1] - proj * c1[1],
        s.a2[2] - proj * c1[2],
    ];
    let c2 = normalize3(u2)?;
    let c3 = cross3(c1, c2);
    Ok(Rotation {
        m: [
            [c1[0], c2[0], c3[0]],
            [c1[1], c2[1], c3[1]],
            [c1[2], c2[2], c3[2]],
        ],
    })
}

/// Inverse of Rodrigues: recover axis and angle in [0, pi]. The identity maps
/// to angle 0 with the conventional axis (0, 0, 1); at angle pi the axis sign
/// is fixed by making the first nonzero component positive.
pub fn rotation_to_axis_angle(r: &Rotation) -> AxisAngle {
    let m = r.matrix();
    let skew = [
        m[2][1] - m[1][2],
        m[0][2] - m[2][0],
        m[1][0] - m[0][1],
    ];
    let s = norm3(skew) / 2.0;
    let c = (r.trace() - 1.0) / 2.0;
    let angle = s.atan2(c);

    if angle < 1e-9 {
        return AxisAngle {
            axis: [0.0, 0.0, 1.0],
            angle: 0.0,
        };
    }
    if s > 1e-6 {
        let axis = [skew[0] / (2.0 * s), skew[1] / (2.0 * s), skew[2] / (2.0 * s)];
        return AxisAngle { axis, angle };
    }

    // Near pi: extract the axis from the symmetric part, R ~= 2 a a^T - I.
    let diag = [
        ((m[0][0] + 1.0) / 2.0).max(0.0).sqrt(),
        ((m[1][1] + 1.0) / 2.0).max(0.0).sqrt(),
        ((m[2][2] + 1.0) / 2.0).max(0.0).sqrt(),
    ];
    let lead = (0..3).max_by(|&a, &b| diag[a].total_cmp(&diag[b])).expect("3 entries");
    let mut axis = [0.0; 3];
    axis[lead] = diag[lead];
    for k in 0..3 {
        if k != lead {
            // Off-diagonal terms give a_lead * a_k.
            axis[k] = (m[lead][k] + m[k][lead]) / (4.0 * diag[lead]);
        }
    }
    let mut axis = normalize3(axis).expect("leading component bounded away from zero");
    // The skew part is 2 sin(angle) * axis; while it is nonzero it still
    // carries the axis sign. Only at exactly pi does the sign become a free
    // choice, fixed by making the first nonzero component positive.
    let skew_dot = dot3(axis, skew);
    let flip = if skew_dot.abs() > 1e-12 {
        skew_dot < 0.0
    } else {
        matches!(axis.iter().find(|v| v.abs() > 1e-9), Some(first) if *first < 0.0)
    };
    if flip {
        axis = [-axis[0], -axis[1], -axis[2]];
    }
    AxisAngle { axis, angle }
}

/// Rotate every point (and any keypoints) of a cloud.
pub fn apply_rotation(r: &Rotation, pc: &PointCloud) -> PointCloud {
    PointCloud {
        points: pc.points.iter().map(|&p| r.apply_vec(p)).collect(),
        category: pc.category,
        keypoints: pc
            .keypoints
            .as_ref()
            .map(|kps| kps.iter().map(|&p| r.apply_vec(p)).collect()),
    }
}

/// Geodesic distance on SO(3): the angle of `a^T b`.
pub fn geodesic_angle(a: &Rotation, b: &Rotation) -> f64 {
    let rel = a.transpose().compose(b);
    let c = ((rel.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
    c.acos()
}
