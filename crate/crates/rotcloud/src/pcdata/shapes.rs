//! Synthetic canonically-oriented shapes.
//!
//! Every category points "up" along +y and carries a built-in orientation
//! cue (an opening, knob, neck, dome, bead, or apex) so that the applied
//! rotation is recoverable from geometry alone. A shape whose point support
//! is symmetric under a rotation makes the corresponding labels
//! indistinguishable, so the markers are load-bearing for the whole pretext
//! task, not decoration.
//!
//! The roster holds the eight base primitives first (the default dataset)
//! and then eight fine-grained variants, each differing from its base only
//! in a localized attribute (cap width, knob shape, neck length, truncation,
//! bead count, apex offset, bottom cap, rim style). Categories overlap in
//! coarse proportions (cylinder/capsule and cone/pyramid share ranges) and
//! every non-spherical sample gets an anisotropic per-axis stretch, so
//! telling classes apart rests on the same fine structure the rotation
//! pretext has to encode rather than on bounding-box statistics.
//!
//! Each sample draws its proportions from a per-category range, then the
//! stretch, a global scale in [0.8, 1.2] and coordinate jitter (sigma 0.01),
//! and is normalized to the unit sphere. Keypoints are 10 deterministic
//! landmarks computed from the same proportions; they share every geometric
//! transform but are never jittered.

use std::f64::consts::{PI, TAU};

use rand::Rng;

use crate::error::{Error, Result};
use crate::pcdata::PointCloud;
use crate::rng::standard_normal;

pub const JITTER_SIGMA: f64 = 0.01;
pub const SCALE_RANGE: (f64, f64) = (0.8, 1.2);
/// Per-axis anisotropic stretch range (spheres stay round).
pub const STRETCH_RANGE: (f64, f64) = (0.60, 1.50);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ShapeCategory {
    Sphere,
    Cube,
    Cylinder,
    Cone,
    Torus,
    Pyramid,
    Capsule,
    Plate,
    SphereTiltedCap,
    CubeSideKnob,
    CylinderSideNeck,
    ConeFrustum,
    TorusSideBead,
    PyramidOffsetApex,
    CapsuleInverted,
    PlateRimmed,
}

const ALL_CATEGORIES: [ShapeCategory; 16] = [
    ShapeCategory::Sphere,
    ShapeCategory::Cube,
    ShapeCategory::Cylinder,
    ShapeCategory::Cone,
    ShapeCategory::Torus,
    ShapeCategory::Pyramid,
    ShapeCategory::Capsule,
    ShapeCategory::Plate,
    ShapeCategory::SphereTiltedCap,
    ShapeCategory::CubeSideKnob,
    ShapeCategory::CylinderSideNeck,
    ShapeCategory::ConeFrustum,
    ShapeCategory::TorusSideBead,
    ShapeCategory::PyramidOffsetApex,
    ShapeCategory::CapsuleInverted,
    ShapeCategory::PlateRimmed,
];

pub fn shape_category_count() -> usize {
    ALL_CATEGORIES.len()
}

/// Keypoints per shape.
pub fn keypoint_count() -> usize {
    10
}

impl ShapeCategory {
    pub fn from_index(idx: usize) -> Result<ShapeCategory> {
        ALL_CATEGORIES
            .get(idx)
            .copied()
            .ok_or_else(|| Error::InvalidInput(format!("unknown shape category index {idx}")))
    }

    pub fn index(&self) -> usize {
        ALL_CATEGORIES.iter().position(|c| c == self).expect("listed")
    }

    pub fn name(&self) -> &'static str {
        match self {
            ShapeCategory::Sphere => "sphere",
            ShapeCategory::Cube => "cube",
            ShapeCategory::Cylinder => "cylinder",
            ShapeCategory::Cone => "cone",
            ShapeCategory::Torus => "torus",
            ShapeCategory::Pyramid => "pyramid",
            ShapeCategory::Capsule => "capsule",
            ShapeCategory::Plate => "plate",
            ShapeCategory::SphereTiltedCap => "sphere-tilted-cap",
            ShapeCategory::CubeSideKnob => "cube-side-knob",
            ShapeCategory::CylinderSideNeck => "cylinder-side-neck",
            ShapeCategory::ConeFrustum => "cone-frustum",
            ShapeCategory::TorusSideBead => "torus-side-bead",
            ShapeCategory::PyramidOffsetApex => "pyramid-offset-apex",
            ShapeCategory::CapsuleInverted => "capsule-inverted",
            ShapeCategory::PlateRimmed => "plate-rimmed",
        }
    }

    fn is_spherical(&self) -> bool {
        matches!(self, ShapeCategory::Sphere | ShapeCategory::SphereTiltedCap)
    }
}

fn uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.gen::<f64>()
}

/// Uniform direction on the unit sphere.
fn sphere_dir<R: Rng>(rng: &mut R) -> [f64; 3] {
    loop {
        let v = [
            standard_normal(rng),
            standard_normal(rng),
            standard_normal(rng),
        ];
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if n >= 1e-9 {
            return [v[0] / n, v[1] / n, v[2] / n];
        }
    }
}

/// Pick among weighted alternatives; returns the chosen index.
fn pick_weighted<R: Rng>(rng: &mut R, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut target = rng.gen::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if target < *w {
            return i;
        }
        target -= w;
    }
    weights.len() - 1
}

struct RawShape {
    points: Vec<[f64; 3]>,
    keypoints: Vec<[f64; 3]>,
}

/// Rotate a raw shape (points and keypoints) about `axis` by `angle`; used
/// by variants whose canonical pose carries their marker off the +y pole.
fn tilt_raw(raw: &mut RawShape, axis: [f64; 3], angle: f64) {
    let aa = crate::so3::AxisAngle { axis, angle };
    let rotation = crate::so3::axis_angle_to_rotation(&aa).expect("unit axis");
    for p in raw.points.iter_mut().chain(raw.keypoints.iter_mut()) {
        *p = rotation.apply_vec(*p);
    }
}

/// Generate one normalized surface cloud of the given category.
pub fn generate_shape<R: Rng>(
    category: ShapeCategory,
    n: usize,
    rng: &mut R,
) -> Result<PointCloud> {
    if n < 64 {
        return Err(Error::InvalidInput(format!(
            "generate_shape needs n >= 64, got {n}"
        )));
    }
    let mut raw = match category {
        ShapeCategory::Sphere => sphere(n, rng),
        ShapeCategory::SphereTiltedCap => {
            // The variant's canonical pose carries its openings tilted to a
            // fixed oblique latitude, at a free azimuth.
            let mut raw = sphere(n, rng);
            let tilt = uniform(rng, 1.0, 1.4);
            let az = uniform(rng, 0.0, TAU);
            tilt_raw(&mut raw, [az.cos(), 0.0, az.sin()], tilt);
            raw
        }
        ShapeCategory::Cube => box_shape(n, rng),
        ShapeCategory::CubeSideKnob => {
            // Same box, knob on one of the four side faces: a quarter turn
            // about a horizontal axis keeps the box axis-aligned.
            let mut raw = box_shape(n, rng);
            let axis = if rng.gen::<bool>() { [1.0, 0.0, 0.0] } else { [0.0, 0.0, 1.0] };
            let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
            tilt_raw(&mut raw, axis, sign * PI / 2.0);
            raw
        }
        ShapeCategory::Cylinder => cylinder(n, rng, NeckPlacement::Top),
        ShapeCategory::CylinderSideNeck => cylinder(n, rng, NeckPlacement::Side),
        ShapeCategory::Cone => cone(n, rng, false),
        ShapeCategory::ConeFrustum => cone(n, rng, true),
        ShapeCategory::Torus => torus(n, rng, BeadPlacement::Top),
        ShapeCategory::TorusSideBead => torus(n, rng, BeadPlacement::Side),
        ShapeCategory::Pyramid => pyramid(n, rng, (0.0, 0.12)),
        ShapeCategory::PyramidOffsetApex => pyramid(n, rng, (0.40, 0.60)),
        ShapeCategory::Capsule => capsule(n, rng, false),
        ShapeCategory::CapsuleInverted => {
            // Dome down, flat disk up: a half turn about x, axis-aligned.
            let mut raw = capsule(n, rng, false);
            tilt_raw(&mut raw, [1.0, 0.0, 0.0], PI);
            raw
        }
        ShapeCategory::Plate => plate(n, rng, false),
        ShapeCategory::PlateRimmed => plate(n, rng, true),
    };
    debug_assert_eq!(raw.keypoints.len(), keypoint_count());

    let stretch = if category.is_spherical() {
        [1.0, 1.0, 1.0]
    } else {
        [
            uniform(rng, STRETCH_RANGE.0, STRETCH_RANGE.1),
            uniform(rng, STRETCH_RANGE.0, STRETCH_RANGE.1),
            uniform(rng, STRETCH_RANGE.0, STRETCH_RANGE.1),
        ]
    };
    let scale = uniform(rng, SCALE_RANGE.0, SCALE_RANGE.1);
    for p in raw.points.iter_mut().chain(raw.keypoints.iter_mut()) {
        for k in 0..3 {
            p[k] *= stretch[k] * scale;
        }
    }
    for p in raw.points.iter_mut() {
        for k in 0..3 {
            p[k] += JITTER_SIGMA * standard_normal(rng);
        }
    }

    let mut cloud = PointCloud::new(raw.points);
    cloud.category = Some(category.index());
    cloud.keypoints = Some(raw.keypoints);
    cloud.normalize()
}

/// Polar angle of the compensating ring's center (radians from +y).
const SPHERE_RING_CENTER: f64 = 2.25;

/// Unit sphere with a bald polar cap around +y and a bald southern ring
/// sized so the two openings' first moments cancel. Every point stays at
/// radius exactly 1, and the expected centroid stays at the origin, so
/// normalized radii match a plain sampled sphere; the openings are the
/// orientation cue.
fn sphere<R: Rng>(n: usize, rng: &mut R) -> RawShape {
    let cap = uniform(rng, 0.55, 0.70);
    let cos_cap = cap.cos();
    // Moment balance: sin(2w) * sin(tc) * |cos(tc)| / 2 = sin^2(cap) / 4.
    let tc = SPHERE_RING_CENTER;
    let sin2w = (cap.sin().powi(2) / (2.0 * tc.sin() * tc.cos().abs())).min(1.0);
    let w = sin2w.asin() / 2.0;
    let (ring_lo, ring_hi) = ((tc - w).cos(), (tc + w).cos());

    let mut points = Vec::with_capacity(n);
    while points.len() < n {
        let d = sphere_dir(rng);
        if d[1] > cos_cap {
            continue; // polar opening
        }
        if d[1] < ring_lo && d[1] > ring_hi {
            continue; // ring opening
        }
        points.push(d);
    }
    let rim = |az: f64| -> [f64; 3] { [cap.sin() * az.cos(), cos_cap, cap.sin() * az.sin()] };
    let keypoints = vec![
        [0.0, -1.0, 0.0],
        [1.0, 0.0, 0.0],
        [-1.0, 0.0, 0.0],
        [0.0, 0.0, 1.0],
        [0.0, 0.0, -1.0],
        rim(0.0),
        rim(PI / 2.0),
        rim(PI),
        rim(3.0 * PI / 2.0),
        rim(PI / 4.0),
    ];
    RawShape { points, keypoints }
}


/// One box knob: half-width, height and the (x, z) center on the +y face.
struct Knob {
    kw: f64,
    kh: f64,
    cx: f64,
    cz: f64,
}

/// Sample a box surface with square footprints cut out of the +y face and a
/// smaller box knob protruding from each. Knob positions are free nuisance:
/// they never change which face is up.
fn boxed_with_knobs<R: Rng>(
    n: usize,
    rng: &mut R,
    hx: f64,
    hy: f64,
    hz: f64,
    knobs: &[Knob],
) -> Vec<[f64; 3]> {
    // Face order: +y ring, -y, +x, -x, +z, -z, then per knob 4 sides + top.
    let mut areas = vec![
        4.0 * hx * hz - knobs.iter().map(|k| 4.0 * k.kw * k.kw).sum::<f64>(),
        4.0 * hx * hz,
        4.0 * hy * hz,
        4.0 * hy * hz,
        4.0 * hx * hy,
        4.0 * hx * hy,
    ];
    for k in knobs {
        for _ in 0..4 {
            areas.push(2.0 * k.kw * k.kh);
        }
        areas.push(4.0 * k.kw * k.kw);
    }
    let mut points = Vec::with_capacity(n);
    while points.len() < n {
        let face = pick_weighted(rng, &areas);
        let (u, v) = (uniform(rng, -1.0, 1.0), uniform(rng, -1.0, 1.0));
        let p = if face == 0 {
            let (x, z) = (u * hx, v * hz);
            if knobs
                .iter()
                .any(|k| (x - k.cx).abs() < k.kw && (z - k.cz).abs() < k.kw)
            {
                continue;
            }
            [x, hy, z]
        } else if face < 6 {
            match face {
                1 => [u * hx, -hy, v * hz],
                2 => [hx, u * hy, v * hz],
                3 => [-hx, u * hy, v * hz],
                4 => [u * hx, v * hy, hz],
                _ => [u * hx, v * hy, -hz],
            }
        } else {
            let k = &knobs[(face - 6) / 5];
            let side = (face - 6) % 5;
            let wall_y = hy + (v + 1.0) / 2.0 * k.kh;
            match side {
                0 => [k.cx + k.kw, wall_y, k.cz + u * k.kw],
                1 => [k.cx - k.kw, wall_y, k.cz + u * k.kw],
                2 => [k.cx + u * k.kw, wall_y, k.cz + k.kw],
                3 => [k.cx + u * k.kw, wall_y, k.cz - k.kw],
                _ => [k.cx + u * k.kw, hy + k.kh, k.cz + v * k.kw],
            }
        };
        points.push(p);
    }
    points
}

/// Draw `count` knob centers on the top face, separated enough that the
/// knobs do not merge.
fn knob_centers<R: Rng>(
    rng: &mut R,
    count: usize,
    hx: f64,
    hz: f64,
    kw: f64,
) -> Vec<(f64, f64)> {
    let mut centers: Vec<(f64, f64)> = Vec::with_capacity(count);
    while centers.len() < count {
        let cx = uniform(rng, -1.0, 1.0) * (hx - kw) * 0.8;
        let cz = uniform(rng, -1.0, 1.0) * (hz - kw) * 0.8;
        if centers
            .iter()
            .all(|(px, pz)| (cx - px).abs().max((cz - pz).abs()) > 2.5 * kw)
        {
            centers.push((cx, cz));
        }
    }
    centers
}

/// Roughly cubic box with a knob on the +y face at a free position.
fn box_shape<R: Rng>(n: usize, rng: &mut R) -> RawShape {
    let hx = uniform(rng, 0.45, 0.60);
    let hy = uniform(rng, 0.45, 0.60);
    let hz = uniform(rng, 0.45, 0.60);
    let kw = uniform(rng, 0.20, 0.28) * hx.min(hz);
    let kh = uniform(rng, 0.35, 0.70) * hy;
    let centers = knob_centers(rng, 1, hx, hz, kw);
    let knobs: Vec<Knob> = centers
        .iter()
        .map(|&(cx, cz)| Knob { kw, kh, cx, cz })
        .collect();
    let points = boxed_with_knobs(n, rng, hx, hy, hz, &knobs);
    let first = centers[0];
    let last = centers[centers.len() - 1];
    let keypoints = vec![
        [hx, hy, hz],
        [hx, hy, -hz],
        [-hx, hy, hz],
        [-hx, hy, -hz],
        [hx, -hy, hz],
        [hx, -hy, -hz],
        [-hx, -hy, hz],
        [-hx, -hy, -hz],
        [first.0, hy + kh, first.1],
        [last.0, hy + kh, last.1],
    ];
    RawShape { points, keypoints }
}

enum NeckPlacement {
    Top,
    Side,
}

/// Bottle-like cylinder with one neck. The base grows its neck from the top
/// cap at a free position; the variant sticks the same neck radially out of
/// the side wall at a free azimuth and height, like a spout.
fn cylinder<R: Rng>(n: usize, rng: &mut R, placement: NeckPlacement) -> RawShape {
    let r = uniform(rng, 0.35, 0.55);
    let h = uniform(rng, 0.45, 0.80);
    let neck_r = uniform(rng, 0.26, 0.36) * r;
    let neck_h = uniform(rng, 0.80, 1.30) * r;

    // Neck frame: origin on the surface, unit direction the neck grows in.
    let (neck_base, neck_dir): ([f64; 3], [f64; 3]) = match placement {
        NeckPlacement::Top => {
            let mag = uniform(rng, 0.0, 0.95) * (r - neck_r);
            let az = uniform(rng, 0.0, TAU);
            ([mag * az.cos(), h, mag * az.sin()], [0.0, 1.0, 0.0])
        }
        NeckPlacement::Side => {
            let az = uniform(rng, 0.0, TAU);
            let y = uniform(rng, -0.5, 0.5) * (h - neck_r).max(0.1);
            (
                [r * az.cos(), y, r * az.sin()],
                [az.cos(), 0.0, az.sin()],
            )
        }
    };
    // Orthonormal frame around the neck direction.
    let ortho_a = if neck_dir[1].abs() > 0.5 {
        [1.0, 0.0, 0.0]
    } else {
        [0.0, 1.0, 0.0]
    };
    let frame_u = crate::so3::normalize3(crate::so3::cross3(neck_dir, ortho_a)).expect("frame");
    let frame_v = crate::so3::cross3(neck_dir, frame_u);
    let neck_point = |radial: f64, az: f64, along: f64| -> [f64; 3] {
        let mut p = neck_base;
        for k in 0..3 {
            p[k] += radial * (az.cos() * frame_u[k] + az.sin() * frame_v[k])
                + along * neck_dir[k];
        }
        p
    };

    let areas = [
        TAU * r * 2.0 * h,              // side wall
        PI * (r * r - neck_r * neck_r), // top cap (footprint only when on top)
        PI * r * r,                     // bottom disk
        TAU * neck_r * neck_h,          // neck side
        PI * neck_r * neck_r,           // neck top
    ];
    let on_top = matches!(placement, NeckPlacement::Top);
    let mut points = Vec::with_capacity(n);
    while points.len() < n {
        let part = pick_weighted(rng, &areas);
        let az = uniform(rng, 0.0, TAU);
        let p = match part {
            0 => {
                let p = [r * az.cos(), uniform(rng, -h, h), r * az.sin()];
                if !on_top {
                    // Reject the side-neck footprint on the wall.
                    let d = [p[0] - neck_base[0], p[1] - neck_base[1], p[2] - neck_base[2]];
                    if d[0] * d[0] + d[1] * d[1] + d[2] * d[2] < neck_r * neck_r {
                        continue;
                    }
                }
                p
            }
            1 => {
                let rad = r * rng.gen::<f64>().sqrt();
                let (x, z) = (rad * az.cos(), rad * az.sin());
                if on_top {
                    let d = [x - neck_base[0], z - neck_base[2]];
                    if d[0] * d[0] + d[1] * d[1] < neck_r * neck_r {
                        continue;
                    }
                }
                [x, h, z]
            }
            2 => {
                let rad = r * rng.gen::<f64>().sqrt();
                [rad * az.cos(), -h, rad * az.sin()]
            }
            3 => neck_point(neck_r, az, neck_h * rng.gen::<f64>()),
            _ => {
                let rad = neck_r * rng.gen::<f64>().sqrt();
                neck_point(rad, az, neck_h)
            }
        };
        points.push(p);
    }
    let top = |az: f64| [r * f64::cos(az), h, r * f64::sin(az)];
    let bot = |az: f64| [r * f64::cos(az), -h, r * f64::sin(az)];
    let tip = neck_point(0.0, 0.0, neck_h);
    let keypoints = vec![
        top(0.0),
        top(PI / 2.0),
        top(PI),
        top(3.0 * PI / 2.0),
        bot(0.0),
        bot(PI),
        [0.0, -h, 0.0],
        [0.0, h, 0.0],
        neck_base,
        tip,
    ];
    RawShape { points, keypoints }
}

/// Top radius of the cone variant as a fraction of the base radius.
const FRUSTUM_TOP: f64 = 0.28;

/// Cone with apex on +y and a solid base disk; the variant is a frustum of
/// the same height whose tip is a small disk, so the pair differs only in
/// the local structure at the top.
fn cone<R: Rng>(n: usize, rng: &mut R, truncated: bool) -> RawShape {
    let base_r = uniform(rng, 0.45, 0.65);
    let height = uniform(rng, 0.90, 1.30);
    // Lateral parameter u: radius fraction along the slant; area density
    // grows linearly in u. A frustum stops at u = FRUSTUM_TOP but keeps the
    // full height.
    let u_min = if truncated { FRUSTUM_TOP } else { 0.0 };
    let top_r = base_r * u_min;
    let y_of = |u: f64| height * (1.0 - u) / (1.0 - u_min);

    let slant = (base_r * base_r + height * height).sqrt();
    let areas = [
        PI * base_r * slant * (1.0 - u_min * u_min), // lateral band
        PI * base_r * base_r,                        // base disk
        PI * top_r * top_r,                          // top disk (0 when full)
    ];
    let mut points = Vec::with_capacity(n);
    for _ in 0..n {
        let part = pick_weighted(rng, &areas);
        let az = uniform(rng, 0.0, TAU);
        let p = match part {
            0 => {
                let u = (u_min * u_min + (1.0 - u_min * u_min) * rng.gen::<f64>()).sqrt();
                [base_r * u * az.cos(), y_of(u), base_r * u * az.sin()]
            }
            1 => {
                let rad = base_r * rng.gen::<f64>().sqrt();
                [rad * az.cos(), 0.0, rad * az.sin()]
            }
            _ => {
                let rad = top_r * rng.gen::<f64>().sqrt();
                [rad * az.cos(), height, rad * az.sin()]
            }
        };
        points.push(p);
    }
    let rim = |az: f64| [base_r * f64::cos(az), 0.0, base_r * f64::sin(az)];
    let keypoints = if truncated {
        let top_rim = |az: f64| [top_r * f64::cos(az), height, top_r * f64::sin(az)];
        vec![
            [0.0, height, 0.0],
            [0.0, 0.0, 0.0],
            top_rim(0.0),
            top_rim(PI / 2.0),
            top_rim(PI),
            top_rim(3.0 * PI / 2.0),
            rim(0.0),
            rim(PI / 2.0),
            rim(PI),
            rim(3.0 * PI / 2.0),
        ]
    } else {
        vec![
            [0.0, height, 0.0],
            [0.0, 0.0, 0.0],
            rim(0.0),
            rim(PI / 4.0),
            rim(PI / 2.0),
            rim(3.0 * PI / 4.0),
            rim(PI),
            rim(5.0 * PI / 4.0),
            rim(3.0 * PI / 2.0),
            rim(7.0 * PI / 4.0),
        ]
    };
    RawShape { points, keypoints }
}

enum BeadPlacement {
    Top,
    Side,
}

/// Torus in the xz-plane with a bead pearl at a free azimuth. The base rests
/// the bead on top of the tube; the variant pushes the same bead radially
/// outward on the outer equator. The bead still breaks the up/down flip in
/// both cases: it is the only feature off the ring plane or off its
/// silhouette, and the labels never need the axial spin.
fn torus<R: Rng>(n: usize, rng: &mut R, placement: BeadPlacement) -> RawShape {
    let major = uniform(rng, 0.45, 0.60);
    let r0 = uniform(rng, 0.20, 0.28);
    let bead_r = uniform(rng, 0.95, 1.25) * r0;
    let az = uniform(rng, 0.0, TAU);
    let bead_center = match placement {
        BeadPlacement::Top => [major * az.cos(), r0 + 0.6 * bead_r, major * az.sin()],
        BeadPlacement::Side => {
            let reach = major + r0 + 0.6 * bead_r;
            // Slightly above the plane so the flip stays broken.
            [reach * az.cos(), 0.35 * bead_r, reach * az.sin()]
        }
    };

    let torus_area = TAU * major * TAU * r0;
    let bead_area = 4.0 * PI * bead_r * bead_r;
    let mut points = Vec::with_capacity(n);
    while points.len() < n {
        if rng.gen::<f64>() * (torus_area + bead_area) < bead_area {
            let d = sphere_dir(rng);
            points.push([
                bead_center[0] + bead_r * d[0],
                bead_center[1] + bead_r * d[1],
                bead_center[2] + bead_r * d[2],
            ]);
        } else {
            // Tube angle via rejection against the ring jacobian.
            let theta = uniform(rng, 0.0, TAU);
            let weight = major + r0 * theta.cos();
            if rng.gen::<f64>() * (major + r0) > weight {
                continue;
            }
            let phi = uniform(rng, 0.0, TAU);
            let ring = major + r0 * theta.cos();
            points.push([ring * phi.cos(), r0 * theta.sin(), ring * phi.sin()]);
        }
    }
    let outer = |phi: f64| [(major + r0) * f64::cos(phi), 0.0, (major + r0) * f64::sin(phi)];
    let inner = |phi: f64| [(major - r0) * f64::cos(phi), 0.0, (major - r0) * f64::sin(phi)];
    let keypoints = vec![
        outer(0.0),
        outer(PI / 2.0),
        outer(PI),
        outer(3.0 * PI / 2.0),
        inner(0.0),
        inner(PI / 2.0),
        inner(PI),
        inner(3.0 * PI / 2.0),
        [bead_center[0], bead_center[1] + bead_r, bead_center[2]],
        [major * az.cos(), r0, major * az.sin()],
    ];
    RawShape { points, keypoints }
}

/// Square pyramid, apex on +y, solid base. The apex slides off-center by a
/// fraction of the half-width drawn from `offset_range`, in a free
/// direction; the variant uses a much larger offset.
fn pyramid<R: Rng>(n: usize, rng: &mut R, offset_range: (f64, f64)) -> RawShape {
    let half = uniform(rng, 0.45, 0.65);
    let height = uniform(rng, 0.90, 1.30);
    let off = uniform(rng, offset_range.0, offset_range.1) * half;
    let off_az = uniform(rng, 0.0, TAU);

    let apex = [off * off_az.cos(), height, off * off_az.sin()];
    let corners = [
        [half, 0.0, half],
        [half, 0.0, -half],
        [-half, 0.0, -half],
        [-half, 0.0, half],
    ];
    // Four side triangles plus the base split in two.
    let tris: Vec<[[f64; 3]; 3]> = vec![
        [apex, corners[0], corners[1]],
        [apex, corners[1], corners[2]],
        [apex, corners[2], corners[3]],
        [apex, corners[3], corners[0]],
        [corners[0], corners[1], corners[2]],
        [corners[0], corners[2], corners[3]],
    ];
    let area = |t: &[[f64; 3]; 3]| {
        let u = [t[1][0] - t[0][0], t[1][1] - t[0][1], t[1][2] - t[0][2]];
        let v = [t[2][0] - t[0][0], t[2][1] - t[0][1], t[2][2] - t[0][2]];
        let c = [
            u[1] * v[2] - u[2] * v[1],
            u[2] * v[0] - u[0] * v[2],
            u[0] * v[1] - u[1] * v[0],
        ];
        0.5 * (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt()
    };
    let areas: Vec<f64> = tris.iter().map(area).collect();
    let mut points = Vec::with_capacity(n);
    for _ in 0..n {
        let t = &tris[pick_weighted(rng, &areas)];
        let r1 = rng.gen::<f64>().sqrt();
        let r2 = rng.gen::<f64>();
        let (wa, wb, wc) = (1.0 - r1, r1 * (1.0 - r2), r1 * r2);
        points.push([
            wa * t[0][0] + wb * t[1][0] + wc * t[2][0],
            wa * t[0][1] + wb * t[1][1] + wc * t[2][1],
            wa * t[0][2] + wb * t[1][2] + wc * t[2][2],
        ]);
    }
    let mid = |a: [f64; 3], b: [f64; 3]| [(a[0] + b[0]) / 2.0, 0.0, (a[2] + b[2]) / 2.0];
    let keypoints = vec![
        apex,
        corners[0],
        corners[1],
        corners[2],
        corners[3],
        mid(corners[0], corners[1]),
        mid(corners[1], corners[2]),
        mid(corners[2], corners[3]),
        mid(corners[3], corners[0]),
        [0.0, 0.0, 0.0],
    ];
    RawShape { points, keypoints }
}

/// Test-tube capsule: cylindrical body with a hemispherical dome on top and
/// a flat bottom disk. The inverted variant is produced by a half turn at
/// the call site. `concave_bottom` keeps a bowl option for the bottom cap
/// (unused by the current roster but exercised in tests).
fn capsule<R: Rng>(n: usize, rng: &mut R, concave_bottom: bool) -> RawShape {
    let r = uniform(rng, 0.35, 0.55);
    let h = uniform(rng, 0.45, 0.80);
    let bowl = if concave_bottom { 0.5 * r } else { 0.0 };

    let areas = [
        TAU * r * 2.0 * h, // side
        TAU * r * r,       // top dome
        PI * r * r,        // bottom cap (flat or bowl)
    ];
    let mut points = Vec::with_capacity(n);
    for _ in 0..n {
        let part = pick_weighted(rng, &areas);
        let az = uniform(rng, 0.0, TAU);
        let p = match part {
            0 => [r * az.cos(), uniform(rng, -h, h), r * az.sin()],
            1 => {
                // Uniform over the hemisphere: height above the junction is
                // uniform in [0, r].
                let y = r * rng.gen::<f64>();
                let rad = (r * r - y * y).sqrt();
                [rad * az.cos(), h + y, rad * az.sin()]
            }
            _ => {
                let rad = r * rng.gen::<f64>().sqrt();
                // The bowl rises toward the center of the bottom cap.
                let lift = bowl * (1.0 - (rad / r) * (rad / r));
                [rad * az.cos(), -h + lift, rad * az.sin()]
            }
        };
        points.push(p);
    }
    let junction = |az: f64| [r * f64::cos(az), h, r * f64::sin(az)];
    let bottom = |az: f64| [r * f64::cos(az), -h, r * f64::sin(az)];
    let keypoints = vec![
        [0.0, h + r, 0.0],
        [0.0, -h + bowl, 0.0],
        junction(0.0),
        junction(PI / 2.0),
        junction(PI),
        junction(3.0 * PI / 2.0),
        bottom(0.0),
        bottom(PI / 2.0),
        bottom(PI),
        bottom(3.0 * PI / 2.0),
    ];
    RawShape { points, keypoints }
}

/// Height range of both plate markers (spike handle and rim wall), so the
/// pair shares its directional-extent distribution.
const PLATE_MARKER_HEIGHT: (f64, f64) = (0.28, 0.42);

/// Flat plate. The base carries a slender spike handle on the top face, the
/// variant a raised rim wall around the top perimeter (a tray).
fn plate<R: Rng>(n: usize, rng: &mut R, rimmed: bool) -> RawShape {
    let hx = uniform(rng, 0.50, 0.70);
    let hz = uniform(rng, 0.50, 0.70);
    let hy = uniform(rng, 0.10, 0.22);

    if !rimmed {
        let kw = 0.15 * hx.min(hz);
        let kh = uniform(rng, PLATE_MARKER_HEIGHT.0, PLATE_MARKER_HEIGHT.1);
        let cx = uniform(rng, -1.0, 1.0) * (hx - kw) * 0.8;
        let cz = uniform(rng, -1.0, 1.0) * (hz - kw) * 0.8;
        let knobs = [Knob { kw, kh, cx, cz }];
        let points = boxed_with_knobs(n, rng, hx, hy, hz, &knobs);
        let keypoints = vec![
            [hx, hy, hz],
            [hx, hy, -hz],
            [-hx, hy, hz],
            [-hx, hy, -hz],
            [hx, -hy, hz],
            [hx, -hy, -hz],
            [-hx, -hy, hz],
            [-hx, -hy, -hz],
            [cx, hy + kh, cz],
            [0.0, -hy, 0.0],
        ];
        return RawShape { points, keypoints };
    }

    let rim = uniform(rng, PLATE_MARKER_HEIGHT.0, PLATE_MARKER_HEIGHT.1);
    // Box faces plus four upright rim walls along the top edges.
    let areas = [
        4.0 * hx * hz, // top
        4.0 * hx * hz, // bottom
        4.0 * hy * hz,
        4.0 * hy * hz,
        4.0 * hx * hy,
        4.0 * hx * hy,
        2.0 * hz * rim, // wall at +x
        2.0 * hz * rim, // wall at -x
        2.0 * hx * rim, // wall at +z
        2.0 * hx * rim, // wall at -z
    ];
    let mut points = Vec::with_capacity(n);
    for _ in 0..n {
        let face = pick_weighted(rng, &areas);
        let (u, v) = (uniform(rng, -1.0, 1.0), uniform(rng, -1.0, 1.0));
        let wall_y = hy + (v + 1.0) / 2.0 * rim;
        let p = match face {
            0 => [u * hx, hy, v * hz],
            1 => [u * hx, -hy, v * hz],
            2 => [hx, u * hy, v * hz],
            3 => [-hx, u * hy, v * hz],
            4 => [u * hx, v * hy, hz],
            5 => [u * hx, v * hy, -hz],
            6 => [hx, wall_y, u * hz],
            7 => [-hx, wall_y, u * hz],
            8 => [u * hx, wall_y, hz],
            _ => [u * hx, wall_y, -hz],
        };
        points.push(p);
    }
    let keypoints = vec![
        [hx, hy + rim, hz],
        [hx, hy + rim, -hz],
        [-hx, hy + rim, hz],
        [-hx, hy + rim, -hz],
        [hx, -hy, hz],
        [hx, -hy, -hz],
        [-hx, -hy, hz],
        [-hx, -hy, -hz],
        [0.0, hy, 0.0],
        [0.0, -hy, 0.0],
    ];
    RawShape { points, keypoints }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from;

    #[test]
    fn all_categories_generate_and_normalize() {
        for idx in 0..shape_category_count() {
            let cat = ShapeCategory::from_index(idx).unwrap();
            let mut rng = rng_from(42, &[idx as u64]);
            let pc = generate_shape(cat, 256, &mut rng).unwrap();
            assert_eq!(pc.len(), 256, "{}", cat.name());
            assert_eq!(pc.category, Some(idx));
            assert_eq!(pc.keypoints.as_ref().unwrap().len(), keypoint_count());
            assert!((pc.max_norm() - 1.0).abs() < 1e-9);
            let c = pc.centroid();
            assert!(c.iter().all(|v| v.abs() < 1e-9));
            assert!(pc.points.iter().flatten().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn category_roster_has_base_then_variants() {
        assert_eq!(shape_category_count(), 16);
        assert_eq!(ShapeCategory::from_index(0).unwrap(), ShapeCategory::Sphere);
        assert_eq!(ShapeCategory::from_index(7).unwrap(), ShapeCategory::Plate);
        assert_eq!(
            ShapeCategory::from_index(8).unwrap(),
            ShapeCategory::SphereTiltedCap
        );
        for idx in 0..16 {
            assert_eq!(ShapeCategory::from_index(idx).unwrap().index(), idx);
        }
    }

    #[test]
    fn unknown_category_is_rejected() {
        assert!(ShapeCategory::from_index(99).is_err());
    }

    #[test]
    fn small_n_is_rejected() {
        let mut rng = rng_from(1, &[0]);
        assert!(generate_shape(ShapeCategory::Cube, 10, &mut rng).is_err());
    }

    fn norm_spread(pc: &PointCloud) -> f64 {
        let norms: Vec<f64> = pc
            .points
            .iter()
            .map(|p| (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt())
            .collect();
        let min = norms.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = norms.iter().cloned().fold(0.0, f64::max);
        max - min
    }

    #[test]
    fn sphere_norms_are_equal_up_to_jitter() {
        // Control oracle: a plain uniform sphere pushed through the same
        // scale / jitter / normalize pipeline. Its norm spread captures the
        // jitter and sampling-centroid effects; the generated sphere may add
        // at most the stated 0.02 on top.
        let n = 1024;
        let mut worst_excess = f64::NEG_INFINITY;
        for trial in 0..5u64 {
            let mut rng = rng_from(7, &[trial]);
            let pc = generate_shape(ShapeCategory::Sphere, n, &mut rng).unwrap();

            let mut control_rng = rng_from(1007, &[trial]);
            let mut control: Vec<[f64; 3]> =
                (0..n).map(|_| sphere_dir(&mut control_rng)).collect();
            let scale = uniform(&mut control_rng, SCALE_RANGE.0, SCALE_RANGE.1);
            for p in control.iter_mut() {
                for k in 0..3 {
                    p[k] = p[k] * scale + JITTER_SIGMA * standard_normal(&mut control_rng);
                }
            }
            let control = PointCloud::new(control).normalize().unwrap();
            worst_excess = worst_excess.max(norm_spread(&pc) - norm_spread(&control));
        }
        // Slack covers trial-to-trial variation of the control spread itself.
        assert!(
            worst_excess <= 0.02 + 0.05,
            "sphere spread exceeds control by {worst_excess}"
        );
    }

    #[test]
    fn cone_apex_points_up() {
        let mut rng = rng_from(7, &[1]);
        let pc = generate_shape(ShapeCategory::Cone, 1024, &mut rng).unwrap();
        let top = pc
            .points
            .iter()
            .cloned()
            .max_by(|a, b| a[1].total_cmp(&b[1]))
            .unwrap();
        assert!(top[1] > 0.0);
    }

    #[test]
    fn same_seed_is_bit_identical() {
        for idx in [0usize, 4, 12, 15] {
            let cat = ShapeCategory::from_index(idx).unwrap();
            let mut r1 = rng_from(99, &[idx as u64]);
            let mut r2 = rng_from(99, &[idx as u64]);
            let a = generate_shape(cat, 256, &mut r1).unwrap();
            let b = generate_shape(cat, 256, &mut r2).unwrap();
            assert_eq!(a.points, b.points);
            assert_eq!(a.keypoints, b.keypoints);
        }
    }

    #[test]
    fn keypoints_track_cloud_normalization() {
        let mut rng = rng_from(3, &[2]);
        let pc = generate_shape(ShapeCategory::Pyramid, 512, &mut rng).unwrap();
        // All keypoints live inside the unit sphere with margin for jitter.
        for kp in pc.keypoints.as_ref().unwrap() {
            let norm = (kp[0] * kp[0] + kp[1] * kp[1] + kp[2] * kp[2]).sqrt();
            assert!(norm <= 1.1, "keypoint norm {norm}");
        }
        // The pyramid apex keypoint sits near the topmost surface point
        // (sampling rarely hits the apex exactly).
        let apex = pc.keypoints.as_ref().unwrap()[0];
        let top_y = pc
            .points
            .iter()
            .map(|p| p[1])
            .fold(f64::NEG_INFINITY, f64::max);
        assert!((apex[1] - top_y).abs() < 0.1, "apex y {} vs top {}", apex[1], top_y);
    }

    #[test]
    fn frustum_has_a_plateau_where_the_cone_has_an_apex() {
        let mut rng = rng_from(5, &[3]);
        let full = generate_shape(ShapeCategory::Cone, 1024, &mut rng).unwrap();
        let mut rng = rng_from(5, &[4]);
        let cut = generate_shape(ShapeCategory::ConeFrustum, 1024, &mut rng).unwrap();
        // The frustum's top is a disk, so many points share the top band;
        // the full cone has a single sharp apex with few nearby points.
        let top_band = |pc: &PointCloud| {
            let top = pc.points.iter().map(|p| p[1]).fold(f64::NEG_INFINITY, f64::max);
            pc.points.iter().filter(|p| p[1] > top - 0.02).count()
        };
        assert!(top_band(&cut) > 3 * top_band(&full));
    }

    #[test]
    fn inverted_capsule_points_its_dome_down() {
        // Flat end puts many points on one plane; the dome end does not.
        let plane_count = |pc: &PointCloud, top: bool| {
            let extreme = pc
                .points
                .iter()
                .map(|p| p[1])
                .fold(if top { f64::NEG_INFINITY } else { f64::INFINITY }, |a, b| {
                    if top {
                        a.max(b)
                    } else {
                        a.min(b)
                    }
                });
            pc.points
                .iter()
                .filter(|p| (p[1] - extreme).abs() < 0.03)
                .count()
        };
        let mut rng = rng_from(6, &[0]);
        let upright = generate_shape(ShapeCategory::Capsule, 1024, &mut rng).unwrap();
        let mut rng = rng_from(6, &[1]);
        let inverted = generate_shape(ShapeCategory::CapsuleInverted, 1024, &mut rng).unwrap();
        assert!(plane_count(&upright, false) > 2 * plane_count(&upright, true));
        assert!(plane_count(&inverted, true) > 2 * plane_count(&inverted, false));
    }
}
