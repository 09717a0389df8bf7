//! Independent reference implementations and fixtures shared by the
//! integration suites.
#![allow(dead_code)]

use bevgeom::geometry::{CameraRig, DepthBinSpec, OrientedBox, Point3};
use bevgeom::labels::LabelState;
use bevgeom::tensor::{Dim, FeatureTensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn tensor<T: bevgeom::Real>(
    dims: &[(Dim, usize)],
    rng: &mut ChaCha8Rng,
    lo: f64,
    hi: f64,
) -> FeatureTensor<T> {
    let n: usize = dims.iter().map(|d| d.1).product();
    let data = (0..n).map(|_| T::lit(rng.gen_range(lo..hi))).collect();
    FeatureTensor::new(dims.to_vec(), data).unwrap()
}

/// `B[c, d, w] = sum_h img[c, h, w] * depth[d, h, w]`, accumulated in f64.
pub fn naive_radial(
    img: &[f64],
    depth: &[f64],
    c: usize,
    d: usize,
    h: usize,
    w: usize,
) -> Vec<f64> {
    let mut out = vec![0.0; c * d * w];
    for ci in 0..c {
        for di in 0..d {
            for wi in 0..w {
                let mut s = 0.0;
                for hi in 0..h {
                    s += img[(ci * h + hi) * w + wi] * depth[(di * h + hi) * w + wi];
                }
                out[(ci * d + di) * w + wi] = s;
            }
        }
    }
    out
}

pub fn max_rel(a: &[f64], reference: &[f64]) -> f64 {
    let scale = reference.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let diff = a
        .iter()
        .zip(reference)
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

/// Six half-space tests against the box axes.
pub fn inside_halfspaces(p: &Point3<f64>, b: &OrientedBox<f64>) -> bool {
    let (s, c) = b.yaw.sin_cos();
    let axes = [[c, s, 0.0], [-s, c, 0.0], [0.0, 0.0, 1.0]];
    let half = [b.size.x / 2.0, b.size.y / 2.0, b.size.z / 2.0];
    let r = [p.x - b.center.x, p.y - b.center.y, p.z - b.center.z];
    axes.iter().zip(half).all(|(n, hlf)| {
        let t = n[0] * r[0] + n[1] * r[1] + n[2] * r[2];
        t <= hlf && -t <= hlf
    })
}

/// Camera center plus a scaled back-projected direction, built from the
/// raw matrices.
pub fn brute_pseudo_point(cam: &CameraRig<f64>, u: f64, v: f64, depth: f64) -> Point3<f64> {
    let k = &cam.intrinsics;
    let e = &cam.extrinsic;
    let dir_cam = [(u - k[0][2]) / k[0][0], (v - k[1][2]) / k[1][1], 1.0];
    let t = [e[0][3], e[1][3], e[2][3]];
    let mut center = [0.0; 3];
    let mut dir = [0.0; 3];
    for j in 0..3 {
        for i in 0..3 {
            center[j] -= e[i][j] * t[i];
            dir[j] += e[i][j] * dir_cam[i];
        }
    }
    Point3::new(
        center[0] + depth * dir[0],
        center[1] + depth * dir[1],
        center[2] + depth * dir[2],
    )
}

/// Exhaustive point x box labelling: state and box id per `(d, h, w)`.
pub fn brute_labels(
    cam: &CameraRig<f64>,
    boxes: &[OrientedBox<f64>],
) -> (Vec<LabelState>, Vec<i32>) {
    let bins = &cam.depth_bins;
    let (d, h, w) = (bins.count, cam.height, cam.width);
    let mut states = Vec::with_capacity(d * h * w);
    let mut ids = Vec::with_capacity(d * h * w);
    for di in 0..d {
        let depth = bins.d_min + (di as f64 + 0.5) * bins.d_step;
        for hi in 0..h {
            for wi in 0..w {
                let p = brute_pseudo_point(cam, wi as f64, hi as f64, depth);
                let mut best: Option<(f64, usize)> = None;
                for (i, b) in boxes.iter().enumerate() {
                    if inside_halfspaces(&p, b) {
                        let dist = (p.x - b.center.x).powi(2)
                            + (p.y - b.center.y).powi(2)
                            + (p.z - b.center.z).powi(2);
                        if best.is_none() || dist < best.unwrap().0 {
                            best = Some((dist, i));
                        }
                    }
                }
                match best {
                    Some((_, i)) => {
                        states.push(LabelState::Positive);
                        ids.push(i as i32);
                    }
                    None => {
                        states.push(LabelState::Negative);
                        ids.push(-1);
                    }
                }
            }
        }
    }
    (states, ids)
}

/// Ray/box entry by marching local coordinates through the three slabs.
pub fn slab_hits(origin: &Point3<f64>, dir: &Point3<f64>, b: &OrientedBox<f64>) -> bool {
    let (s, c) = b.yaw.sin_cos();
    let rel = [
        origin.x - b.center.x,
        origin.y - b.center.y,
        origin.z - b.center.z,
    ];
    let o = [c * rel[0] + s * rel[1], -s * rel[0] + c * rel[1], rel[2]];
    let d = [c * dir.x + s * dir.y, -s * dir.x + c * dir.y, dir.z];
    let half = [b.size.x / 2.0, b.size.y / 2.0, b.size.z / 2.0];
    let (mut lo, mut hi) = (0.0f64, f64::INFINITY);
    for i in 0..3 {
        if d[i].abs() < 1e-300 {
            if o[i].abs() > half[i] {
                return false;
            }
        } else {
            let a = (-half[i] - o[i]) / d[i];
            let bb = (half[i] - o[i]) / d[i];
            lo = lo.max(a.min(bb));
            hi = hi.min(a.max(bb));
        }
    }
    lo <= hi
}

/// Binary focal loss with the usual `alpha_t`/`p_t` form, per element.
pub fn standard_focal(x: f64, positive: bool, alpha: f64, gamma: f64) -> f64 {
    let p = 1.0 / (1.0 + (-x).exp());
    let (pt, at) = if positive {
        (p, alpha)
    } else {
        (1.0 - p, 1.0 - alpha)
    };
    -at * (1.0 - pt).powf(gamma) * pt.max(1e-12).ln()
}

/// Forward-looking pinhole camera at the origin looking along ego `+x`.
pub fn forward_camera(f: f64, h: usize, w: usize, bins: DepthBinSpec<f64>) -> CameraRig<f64> {
    CameraRig::looking_along_yaw(
        f,
        f,
        (w as f64 - 1.0) / 2.0,
        (h as f64 - 1.0) / 2.0,
        Point3::origin(),
        0.0,
        h,
        w,
        bins,
    )
    .unwrap()
}

pub fn random_box(rng: &mut ChaCha8Rng) -> OrientedBox<f64> {
    OrientedBox::new(
        Point3::new(
            rng.gen_range(-50.0..50.0),
            rng.gen_range(-50.0..50.0),
            rng.gen_range(-3.0..3.0),
        ),
        Point3::new(
            rng.gen_range(0.2..8.0),
            rng.gen_range(0.2..4.0),
            rng.gen_range(0.2..3.0),
        ),
        rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI),
    )
    .unwrap()
}

/// Uniform point in the box interior, via local coordinates.
pub fn point_in(b: &OrientedBox<f64>, rng: &mut ChaCha8Rng, shrink: f64) -> Point3<f64> {
    let l = [
        rng.gen_range(-0.5..0.5) * b.size.x * shrink,
        rng.gen_range(-0.5..0.5) * b.size.y * shrink,
        rng.gen_range(-0.5..0.5) * b.size.z * shrink,
    ];
    local_to_world(b, l)
}

pub fn local_to_world(b: &OrientedBox<f64>, l: [f64; 3]) -> Point3<f64> {
    let (s, c) = b.yaw.sin_cos();
    Point3::new(
        b.center.x + c * l[0] - s * l[1],
        b.center.y + s * l[0] + c * l[1],
        b.center.z + l[2],
    )
}
