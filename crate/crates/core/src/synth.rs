//! Seeded synthetic scenes: a ring of outward-facing cameras, boxes resting
//! on a ground plane, ray-cast surface depth, analytic instance masks and
//! pseudo-random feature/score tensors.
//!
//! Randomness comes from ChaCha8 (`rand_chacha`), seeded with
//! `seed_from_u64(seed)`. Stream 0 draws the scene, stream `1 + k` the
//! features of camera `k`, and stream `u64::MAX` the depth-map decimation.
//! A uniform float in `[0, 1)` is `(next_u64() >> 11) * 2^-53`. Draw order
//! is fixed by the code below, so outputs are a pure function of the params.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CameraRig, DepthBinSpec, OrientedBox, Point3};
use crate::labels::front_box;
use crate::scalar::Real;
use crate::scene::{DepthMap, InstanceMask, Scene, BACKGROUND};
use crate::tensor::{Dim, FeatureTensor};
use crate::transform::BevGridSpec;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DepthMode {
    /// Independent uniform scores in `[0.05, 1)`.
    #[default]
    UniformPositive,
    /// Per-pixel softmax over uniform logits in `[-3, 3)`.
    Softmax,
    /// Softmax of a unit-width Gaussian bump around the surface bin.
    GeometryAware,
}

impl std::str::FromStr for DepthMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform_positive" => Ok(Self::UniformPositive),
            "softmax" => Ok(Self::Softmax),
            "geometry_aware" => Ok(Self::GeometryAware),
            _ => Err(Error::config(format!(
                "unknown depth mode `{s}` (expected uniform_positive, softmax or geometry_aware)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthParams {
    pub seed: u64,
    pub n_cameras: usize,
    pub n_boxes: usize,
    pub image_height: usize,
    pub image_width: usize,
    pub hfov_deg: f64,
    pub camera_height: f64,
    /// Signed offset of each camera along its own optical axis from the ring
    /// center. Negative values pull the cameras behind the ego origin so
    /// neighbouring frusta overlap near the vehicle.
    pub camera_axis_offset: f64,
    pub depth_bins: DepthBinSpec<f64>,
    pub grid: BevGridSpec<f64>,
    pub channels: usize,
    /// Box length, width and height bounds in meters, `[min, max]` each.
    pub box_length: [f64; 2],
    pub box_width: [f64; 2],
    pub box_height: [f64; 2],
    /// Bounds on the horizontal distance of box centers from the ego origin.
    pub box_range: [f64; 2],
    pub ground_z: f64,
    pub z_ref: f64,
    pub depth_mode: DepthMode,
    pub dtype: Precision,
    /// Fraction of surface-depth pixels kept; the rest become no-return.
    pub lidar_keep_fraction: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            seed: 0,
            n_cameras: 6,
            n_boxes: 8,
            image_height: 16,
            image_width: 44,
            hfov_deg: 70.0,
            camera_height: 1.5,
            camera_axis_offset: -1.5,
            depth_bins: DepthBinSpec::default(),
            grid: BevGridSpec {
                x_min: -40.0,
                y_min: -40.0,
                cell_size: 0.3125,
                nx: 256,
                ny: 256,
            },
            channels: 80,
            box_length: [3.5, 5.0],
            box_width: [1.6, 2.2],
            box_height: [1.4, 2.0],
            box_range: [6.0, 35.0],
            ground_z: 0.0,
            z_ref: 0.0,
            depth_mode: DepthMode::UniformPositive,
            dtype: Precision::F32,
            lidar_keep_fraction: 1.0,
        }
    }
}

fn ordered(name: &str, b: [f64; 2], positive: bool) -> Result<()> {
    if !(b[0].is_finite() && b[1].is_finite() && b[0] <= b[1]) {
        return Err(Error::config(format!(
            "{name} bounds must be finite and ordered, got {b:?}"
        )));
    }
    if positive && b[0] <= 0.0 {
        return Err(Error::config(format!(
            "{name} bounds must be > 0, got {b:?}"
        )));
    }
    Ok(())
}

impl SynthParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("n_cameras", self.n_cameras),
            ("image_height", self.image_height),
            ("image_width", self.image_width),
            ("channels", self.channels),
        ] {
            if v == 0 {
                return Err(Error::config(format!("{name} must be >= 1")));
            }
        }
        if !(self.hfov_deg > 0.0 && self.hfov_deg < 180.0) {
            return Err(Error::config(format!(
                "hfov_deg must lie in (0, 180), got {}",
                self.hfov_deg
            )));
        }
        for (name, v) in [
            ("camera_height", self.camera_height),
            ("camera_axis_offset", self.camera_axis_offset),
            ("ground_z", self.ground_z),
            ("z_ref", self.z_ref),
        ] {
            if !v.is_finite() {
                return Err(Error::config(format!("{name} must be finite")));
            }
        }
        if self.camera_height <= self.ground_z {
            return Err(Error::config("cameras must sit above the ground plane"));
        }
        self.depth_bins.validate()?;
        self.grid.validate()?;
        ordered("box_length", self.box_length, true)?;
        ordered("box_width", self.box_width, true)?;
        ordered("box_height", self.box_height, true)?;
        ordered("box_range", self.box_range, false)?;
        if self.box_range[0] < 0.0 {
            return Err(Error::config("box_range must be >= 0"));
        }
        if !(self.lidar_keep_fraction > 0.0 && self.lidar_keep_fraction <= 1.0) {
            return Err(Error::config(format!(
                "lidar_keep_fraction must lie in (0, 1], got {}",
                self.lidar_keep_fraction
            )));
        }
        Ok(())
    }

    pub fn focal_length(&self) -> f64 {
        (self.image_width as f64 / 2.0) / (self.hfov_deg.to_radians() / 2.0).tan()
    }

    pub fn camera_rigs(&self) -> Result<Vec<CameraRig<f64>>> {
        let f = self.focal_length();
        let cx = (self.image_width as f64 - 1.0) / 2.0;
        let cy = (self.image_height as f64 - 1.0) / 2.0;
        (0..self.n_cameras)
            .map(|k| {
                let yaw = std::f64::consts::TAU * k as f64 / self.n_cameras as f64;
                let (s, c) = yaw.sin_cos();
                let pos = Point3::new(
                    self.camera_axis_offset * c,
                    self.camera_axis_offset * s,
                    self.camera_height,
                );
                CameraRig::looking_along_yaw(
                    f,
                    f,
                    cx,
                    cy,
                    pos,
                    yaw,
                    self.image_height,
                    self.image_width,
                    self.depth_bins,
                )
            })
            .collect()
    }
}

struct Uniform(ChaCha8Rng);

impl Uniform {
    fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self(rng)
    }

    #[inline]
    fn unit(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    #[inline]
    fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit()
    }
}

const MAX_ATTEMPTS: usize = 10_000;

/// Boxes rest on the ground, stay inside the grid, keep clear of the camera
/// ring and do not overlap in footprint (bounding-circle test).
fn sample_boxes(params: &SynthParams, rng: &mut Uniform) -> Result<Vec<OrientedBox<f64>>> {
    let g = &params.grid;
    let (x_lo, x_hi) = (g.x_min, g.x_max());
    let (y_lo, y_hi) = (g.y_min, g.y_max());
    let ring = params.camera_axis_offset.abs();
    let mut boxes: Vec<OrientedBox<f64>> = Vec::with_capacity(params.n_boxes);
    let mut radii: Vec<f64> = Vec::with_capacity(params.n_boxes);
    for n in 0..params.n_boxes {
        let mut placed = false;
        for _ in 0..MAX_ATTEMPTS {
            let l = rng.range(params.box_length[0], params.box_length[1]);
            let w = rng.range(params.box_width[0], params.box_width[1]);
            let h = rng.range(params.box_height[0], params.box_height[1]);
            let yaw = rng.range(0.0, std::f64::consts::TAU);
            let r = rng.range(params.box_range[0], params.box_range[1]);
            let theta = rng.range(0.0, std::f64::consts::TAU);
            let (s, c) = theta.sin_cos();
            let (x, y) = (r * c, r * s);
            let half_diag = 0.5 * l.hypot(w);
            let inside = x - half_diag >= x_lo
                && x + half_diag <= x_hi
                && y - half_diag >= y_lo
                && y + half_diag <= y_hi;
            let clear_of_rig = r - half_diag > ring + 0.5;
            let apart = boxes
                .iter()
                .zip(&radii)
                .all(|(b, rb)| (b.center.x - x).hypot(b.center.y - y) > rb + half_diag);
            if inside && clear_of_rig && apart {
                let center = Point3::new(x, y, params.ground_z + h / 2.0);
                boxes.push(OrientedBox::new(center, Point3::new(l, w, h), yaw)?);
                radii.push(half_diag);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::config(format!(
                "could not place box {n} within the configured bounds after {MAX_ATTEMPTS} attempts"
            )));
        }
    }
    Ok(boxes)
}

/// Deterministic scene with ray-cast surface depth and analytic masks.
pub fn synth_scene(params: &SynthParams) -> Result<Scene<f64>> {
    params.validate()?;
    let cameras = params.camera_rigs()?;
    let mut rng = Uniform::new(params.seed, 0);
    let boxes = sample_boxes(params, &mut rng)?;
    let mut scene = Scene {
        cameras,
        boxes,
        surface_depth: None,
        instance_mask: None,
    };
    let mut depth = Vec::with_capacity(scene.cameras.len());
    let mut masks = Vec::with_capacity(scene.cameras.len());
    let mut drop_rng = Uniform::new(params.seed, u64::MAX);
    for k in 0..scene.cameras.len() {
        let (mut d, m) = raycast_with_masks(&scene, k, Some(params.ground_z))?;
        if params.lidar_keep_fraction < 1.0 {
            for v in d.data.iter_mut() {
                if drop_rng.unit() >= params.lidar_keep_fraction {
                    *v = 0.0;
                }
            }
        }
        depth.push(d);
        masks.push(m);
    }
    scene.surface_depth = Some(depth);
    scene.instance_mask = Some(masks);
    scene.validate()?;
    Ok(scene)
}

/// Shared ray cast: front box per pixel (same oracle as the occlusion
/// correction) against the ground-plane hit.
fn raycast_with_masks<T: Real>(
    scene: &Scene<T>,
    cam_index: usize,
    ground_z: Option<T>,
) -> Result<(DepthMap<T>, InstanceMask)> {
    let cam = scene.camera(cam_index)?;
    let (h, w) = (cam.height, cam.width);
    let mut depth = vec![T::zero(); h * w];
    let mut mask = vec![BACKGROUND; h * w];
    for hi in 0..h {
        for wi in 0..w {
            let (origin, dir) = cam.pixel_ray(T::from_usize_(wi), T::from_usize_(hi));
            let ground = ground_z.and_then(|gz| {
                if dir.z < T::zero() {
                    let t = (gz - origin.z) / dir.z;
                    (t > T::zero()).then_some(t)
                } else {
                    None
                }
            });
            let front = front_box(cam, hi, wi, &scene.boxes);
            let hit = match (front, ground) {
                (Some((i, tb)), Some(tg)) if tb <= tg => Some((tb, i as i32)),
                (Some((i, tb)), None) => Some((tb, i as i32)),
                (_, Some(tg)) => Some((tg, BACKGROUND)),
                (None, None) => None,
            };
            if let Some((t, id)) = hit {
                let z = cam.ego_to_camera(&(origin + dir * t)).z;
                if z > T::zero() {
                    depth[hi * w + wi] = z;
                }
                mask[hi * w + wi] = id;
            }
        }
    }
    Ok((
        DepthMap {
            height: h,
            width: w,
            data: depth,
        },
        InstanceMask {
            height: h,
            width: w,
            data: mask,
        },
    ))
}

/// Camera-frame depth of the nearest box or ground hit per pixel; 0 where
/// the ray hits nothing. `ground_z = None` casts against boxes only.
pub fn raycast_depth_map<T: Real>(
    scene: &Scene<T>,
    cam_index: usize,
    ground_z: Option<T>,
) -> Result<DepthMap<T>> {
    Ok(raycast_with_masks(scene, cam_index, ground_z)?.0)
}

/// Index of the visible front box per pixel, [`BACKGROUND`] for ground or sky.
pub fn analytic_masks<T: Real>(
    scene: &Scene<T>,
    cam_index: usize,
    ground_z: Option<T>,
) -> Result<InstanceMask> {
    Ok(raycast_with_masks(scene, cam_index, ground_z)?.1)
}

/// Per-camera image features `[C, H, W]` and depth scores `[D, H, W]`.
pub fn synth_features<T: Real>(
    params: &SynthParams,
    scene: &Scene<f64>,
) -> Result<Vec<(FeatureTensor<T>, FeatureTensor<T>)>> {
    params.validate()?;
    let c = params.channels;
    scene
        .cameras
        .iter()
        .enumerate()
        .map(|(k, cam)| {
            let (h, w, d) = (cam.height, cam.width, cam.depth_bins.count);
            let plane = h * w;
            let mut rng = Uniform::new(params.seed, 1 + k as u64);
            let img: Vec<T> = (0..c * plane)
                .map(|_| T::lit(rng.range(-1.0, 1.0)))
                .collect();
            let scores: Vec<f64> = match params.depth_mode {
                DepthMode::UniformPositive => {
                    (0..d * plane).map(|_| rng.range(0.05, 1.0)).collect()
                }
                DepthMode::Softmax => {
                    let logits: Vec<f64> = (0..d * plane).map(|_| rng.range(-3.0, 3.0)).collect();
                    column_softmax(&logits, d, plane)
                }
                DepthMode::GeometryAware => {
                    let surface = match scene.surface_depth.as_ref() {
                        Some(maps) => maps[k].clone(),
                        None => raycast_depth_map(scene, k, Some(params.ground_z))?,
                    };
                    let mut logits = vec![0.0; d * plane];
                    for pix in 0..plane {
                        let s = surface.data[pix];
                        if s > 0.0 {
                            let ks = cam.depth_bins.frac_index(s);
                            for di in 0..d {
                                let e = di as f64 - ks;
                                logits[di * plane + pix] = -0.5 * e * e;
                            }
                        }
                    }
                    column_softmax(&logits, d, plane)
                }
            };
            let img = FeatureTensor::new(vec![(Dim::C, c), (Dim::H, h), (Dim::W, w)], img)?;
            let scores = FeatureTensor::new(
                vec![(Dim::D, d), (Dim::H, h), (Dim::W, w)],
                scores.into_iter().map(T::lit).collect(),
            )?;
            Ok((img, scores))
        })
        .collect()
}

fn column_softmax(logits: &[f64], d: usize, plane: usize) -> Vec<f64> {
    let mut out = vec![0.0; logits.len()];
    for pix in 0..plane {
        let m = (0..d)
            .map(|di| logits[di * plane + pix])
            .fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for di in 0..d {
            let e = (logits[di * plane + pix] - m).exp();
            out[di * plane + pix] = e;
            sum += e;
        }
        for di in 0..d {
            out[di * plane + pix] /= sum;
        }
    }
    out
}
