//! In-box depth supervision: which `(depth bin, pixel)` pseudo-points lie
//! inside ground-truth boxes, and the corrections applied on top of that.
//!
//! The pipeline is vanilla containment, then (optionally) occlusion,
//! instance-mask and background/LiDAR passes. Every pass only moves states
//! Positive -> Ignore or Negative -> Positive/Ignore; nothing leaves Ignore.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CameraRig, DepthBinSpec, OrientedBox, Point3};
use crate::scalar::Real;
use crate::scene::{DepthMap, InstanceMask, Scene};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum LabelState {
    Negative = 0,
    Positive = 1,
    Ignore = 2,
}

impl LabelState {
    pub fn from_u8(b: u8) -> Option<Self> {
        match b {
            0 => Some(LabelState::Negative),
            1 => Some(LabelState::Positive),
            2 => Some(LabelState::Ignore),
            _ => None,
        }
    }
}

/// Marks a positive without an enclosing box (LiDAR surface one-hot).
pub const NO_BOX: i32 = -1;

/// Notes attached by passes that degrade gracefully.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LabelMeta {
    /// The mask pass ran without a mask and left the labels unchanged.
    pub mask_missing: bool,
}

/// Tri-state labels over a `[D, H, W]` pseudo-point grid, with per-positive
/// CAI weights and box ids. Element `(d, h, w)` lives at `(d * H + h) * W + w`.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelVolume {
    dims: (usize, usize, usize),
    states: Vec<LabelState>,
    cai_weight: Vec<f32>,
    box_id: Vec<i32>,
    pub meta: LabelMeta,
}

impl LabelVolume {
    pub fn filled(dims: (usize, usize, usize), state: LabelState) -> Self {
        let n = dims.0 * dims.1 * dims.2;
        Self {
            dims,
            states: vec![state; n],
            cai_weight: vec![0.0; n],
            box_id: vec![NO_BOX; n],
            meta: LabelMeta::default(),
        }
    }

    pub fn from_parts(
        dims: (usize, usize, usize),
        states: Vec<LabelState>,
        cai_weight: Vec<f32>,
        box_id: Vec<i32>,
    ) -> Result<Self> {
        let n = dims.0 * dims.1 * dims.2;
        if states.len() != n || cai_weight.len() != n || box_id.len() != n {
            return Err(Error::contract("label payload lengths do not match dims"));
        }
        let v = Self {
            dims,
            states,
            cai_weight,
            box_id,
            meta: LabelMeta::default(),
        };
        v.check_invariants()?;
        Ok(v)
    }

    pub fn check_invariants(&self) -> Result<()> {
        for (k, ((&s, &wt), &b)) in self
            .states
            .iter()
            .zip(&self.cai_weight)
            .zip(&self.box_id)
            .enumerate()
        {
            let ok = match s {
                LabelState::Positive => (0.0..=1.0).contains(&wt) && b >= NO_BOX,
                _ => wt == 0.0 && b == NO_BOX,
            };
            if !ok {
                return Err(Error::contract(format!(
                    "label element {k}: state {s:?} with weight {wt} and box {b}"
                )));
            }
        }
        Ok(())
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    #[inline]
    pub fn index(&self, d: usize, h: usize, w: usize) -> usize {
        (d * self.dims.1 + h) * self.dims.2 + w
    }

    pub fn states(&self) -> &[LabelState] {
        &self.states
    }

    pub fn cai_weights(&self) -> &[f32] {
        &self.cai_weight
    }

    pub fn box_ids(&self) -> &[i32] {
        &self.box_id
    }

    pub fn state(&self, d: usize, h: usize, w: usize) -> LabelState {
        self.states[self.index(d, h, w)]
    }

    pub fn box_id(&self, d: usize, h: usize, w: usize) -> Option<usize> {
        let b = self.box_id[self.index(d, h, w)];
        (b >= 0).then_some(b as usize)
    }

    pub(crate) fn set_weight(&mut self, k: usize, w: f32) {
        self.cai_weight[k] = w;
    }

    fn set(&mut self, k: usize, state: LabelState, box_id: i32, weight: f32) {
        self.states[k] = state;
        self.box_id[k] = box_id;
        self.cai_weight[k] = weight;
    }

    fn ignore(&mut self, k: usize) {
        self.set(k, LabelState::Ignore, NO_BOX, 0.0);
    }

    pub fn counts(&self) -> LabelCounts {
        let mut c = LabelCounts::default();
        for s in &self.states {
            match s {
                LabelState::Negative => c.negative += 1,
                LabelState::Positive => c.positive += 1,
                LabelState::Ignore => c.ignore += 1,
            }
        }
        c
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelCounts {
    pub positive: usize,
    pub negative: usize,
    pub ignore: usize,
}

impl LabelCounts {
    pub fn positive_fraction(&self) -> f64 {
        let n = self.positive + self.negative + self.ignore;
        if n == 0 {
            0.0
        } else {
            self.positive as f64 / n as f64
        }
    }
}

/// Ego-frame pseudo-points of one camera, laid out like [`LabelVolume`].
#[derive(Clone, Debug, PartialEq)]
pub struct PseudoPointGrid<T> {
    pub dims: (usize, usize, usize),
    pub points: Vec<Point3<T>>,
}

impl<T: Real> PseudoPointGrid<T> {
    #[inline]
    pub fn at(&self, d: usize, h: usize, w: usize) -> Point3<T> {
        self.points[(d * self.dims.1 + h) * self.dims.2 + w]
    }
}

/// Element `(d, h, w)` is pixel `(w, h)` unprojected at the center of bin `d`.
pub fn pseudo_point_grid<T: Real>(cam: &CameraRig<T>) -> PseudoPointGrid<T> {
    let (d, h, w) = (cam.depth_bins.count, cam.height, cam.width);
    let points = (0..d * h * w)
        .into_par_iter()
        .map(|k| {
            let (di, hi, wi) = (k / (h * w), (k / w) % h, k % w);
            cam.unproject_unchecked(
                T::from_usize_(wi),
                T::from_usize_(hi),
                cam.depth_bins.bin_center(di),
            )
        })
        .collect();
    PseudoPointGrid {
        dims: (d, h, w),
        points,
    }
}

/// The box a point belongs to: among containing boxes, the nearest center
/// wins, then the lowest index.
pub fn assign_box<T: Real>(p: &Point3<T>, boxes: &[OrientedBox<T>]) -> Option<usize> {
    let mut best: Option<(usize, T)> = None;
    for (i, b) in boxes.iter().enumerate() {
        if b.contains(p) {
            let dist = (*p - b.center).dot(&(*p - b.center));
            if best.is_none_or(|(_, bd)| dist < bd) {
                best = Some((i, dist));
            }
        }
    }
    best.map(|(i, _)| i)
}

/// Positive wherever the pseudo-point lies inside any box, Negative elsewhere.
pub fn vanilla_inbox_label<T: Real>(
    points: &PseudoPointGrid<T>,
    boxes: &[OrientedBox<T>],
) -> LabelVolume {
    let mut labels = LabelVolume::filled(points.dims, LabelState::Negative);
    let ids: Vec<Option<usize>> = points
        .points
        .par_iter()
        .map(|p| assign_box(p, boxes))
        .collect();
    for (k, id) in ids.into_iter().enumerate() {
        if let Some(i) = id {
            labels.set(k, LabelState::Positive, i as i32, 0.0);
        }
    }
    labels
}

/// The box whose pixel-ray entry is nearest, ties to the lowest index.
pub fn front_box<T: Real>(
    cam: &CameraRig<T>,
    h: usize,
    w: usize,
    boxes: &[OrientedBox<T>],
) -> Option<(usize, T)> {
    let (origin, dir) = cam.pixel_ray(T::from_usize_(w), T::from_usize_(h));
    let mut best: Option<(usize, T)> = None;
    for (i, b) in boxes.iter().enumerate() {
        if let Some((t_entry, _)) = b.ray_intersect(&origin, &dir) {
            if best.is_none_or(|(_, t)| t_entry < t) {
                best = Some((i, t_entry));
            }
        }
    }
    best
}

fn check_dims<T: Real>(labels: &LabelVolume, cam: &CameraRig<T>) -> Result<()> {
    let want = (cam.depth_bins.count, cam.height, cam.width);
    if labels.dims() != want {
        return Err(Error::contract(format!(
            "labels are {:?} but the camera grid is {want:?}",
            labels.dims()
        )));
    }
    Ok(())
}

/// Ignores positives hidden behind the pixel's front box: on every pixel
/// ray, positives whose pseudo-point is not inside the front box become
/// Ignore. Pixels whose ray misses all boxes are untouched.
pub fn apply_occlusion_correction<T: Real>(
    mut labels: LabelVolume,
    cam: &CameraRig<T>,
    boxes: &[OrientedBox<T>],
) -> Result<LabelVolume> {
    check_dims(&labels, cam)?;
    let (d, h, w) = labels.dims();
    let to_ignore: Vec<Vec<usize>> = (0..h * w)
        .into_par_iter()
        .map(|pix| {
            let (hi, wi) = (pix / w, pix % w);
            let mut out = Vec::new();
            let Some((front, _)) = front_box(cam, hi, wi, boxes) else {
                return out;
            };
            for di in 0..d {
                let k = labels.index(di, hi, wi);
                if labels.states[k] != LabelState::Positive || labels.box_id[k] == front as i32 {
                    continue;
                }
                let p = cam.unproject_unchecked(
                    T::from_usize_(wi),
                    T::from_usize_(hi),
                    cam.depth_bins.bin_center(di),
                );
                if !boxes[front].contains(&p) {
                    out.push(k);
                }
            }
            out
        })
        .collect();
    for k in to_ignore.into_iter().flatten() {
        labels.ignore(k);
    }
    Ok(labels)
}

/// Ignores box positives whose pixel is not masked with their own box id.
/// Without a mask the labels pass through and `meta.mask_missing` is set.
pub fn apply_mask_correction(
    mut labels: LabelVolume,
    mask: Option<&InstanceMask>,
) -> Result<LabelVolume> {
    let Some(mask) = mask else {
        labels.meta.mask_missing = true;
        return Ok(labels);
    };
    let (d, h, w) = labels.dims();
    if (mask.height, mask.width) != (h, w) {
        return Err(Error::contract(format!(
            "mask is {}x{}, labels are {h}x{w}",
            mask.height, mask.width
        )));
    }
    for di in 0..d {
        for hi in 0..h {
            for wi in 0..w {
                let k = labels.index(di, hi, wi);
                let b = labels.box_id[k];
                if labels.states[k] == LabelState::Positive && b != NO_BOX && mask.at(hi, wi) != b {
                    labels.ignore(k);
                }
            }
        }
    }
    Ok(labels)
}

/// How pixels without any box positive are supervised.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BackgroundMode {
    /// One-hot at the surface-depth bin; nearer bins Negative, farther bins
    /// Ignore when `ignore_behind_surface`, Negative otherwise. Pixels
    /// without a return become all-Ignore.
    Lidar { ignore_behind_surface: bool },
    /// Every background bin stays Negative.
    NoLidar,
}

/// Relabels pure-background pixels (every bin Negative) from the surface
/// depth map. Pixels holding any Positive or Ignore are untouched.
pub fn apply_background_labels<T: Real>(
    mut labels: LabelVolume,
    surface_depth: Option<&DepthMap<T>>,
    bins: &DepthBinSpec<T>,
    mode: BackgroundMode,
) -> Result<LabelVolume> {
    let ignore_behind = match mode {
        BackgroundMode::NoLidar => return Ok(labels),
        BackgroundMode::Lidar {
            ignore_behind_surface,
        } => ignore_behind_surface,
    };
    let surface = surface_depth
        .ok_or_else(|| Error::config("LiDAR background labels need a surface depth map"))?;
    let (d, h, w) = labels.dims();
    if (surface.height, surface.width) != (h, w) || bins.count != d {
        return Err(Error::contract(
            "surface depth map or bins do not match the labels",
        ));
    }
    for hi in 0..h {
        for wi in 0..w {
            let pure =
                (0..d).all(|di| labels.states[labels.index(di, hi, wi)] == LabelState::Negative);
            if !pure {
                continue;
            }
            let s = surface.at(hi, wi);
            if s <= T::zero() {
                for di in 0..d {
                    let k = labels.index(di, hi, wi);
                    labels.ignore(k);
                }
                continue;
            }
            // signed index of the bin containing the surface
            let hit = ((s - bins.d_min) / bins.d_step).floor();
            for di in 0..d {
                let k = labels.index(di, hi, wi);
                let j = T::from_usize_(di);
                if j == hit {
                    labels.set(k, LabelState::Positive, NO_BOX, 1.0);
                } else if j > hit && ignore_behind {
                    labels.ignore(k);
                }
            }
        }
    }
    Ok(labels)
}

/// Which corrections [`build_labels`] applies.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelConfig {
    /// Supervise background pixels with the surface one-hot.
    pub use_lidar: bool,
    /// Ignore positives occluded by a nearer box.
    pub occlusion: bool,
    /// Ignore positives whose pixel mask disagrees with their box.
    pub mask: bool,
    /// Ignore background bins behind the surface.
    pub behind_surface: bool,
}

/// Vanilla labels, then occlusion, mask and background passes per `config`.
pub fn build_labels<T: Real>(
    scene: &Scene<T>,
    cam_index: usize,
    config: LabelConfig,
) -> Result<LabelVolume> {
    let cam = scene.camera(cam_index)?;
    let surface = scene.surface_depth.as_ref().map(|m| &m[cam_index]);
    let mask = scene.instance_mask.as_ref().map(|m| &m[cam_index]);
    if config.mask && mask.is_none() {
        return Err(Error::config(
            "the mask correction needs instance_mask in the scene",
        ));
    }
    if (config.use_lidar || config.behind_surface) && surface.is_none() {
        return Err(Error::config(
            "LiDAR labels and the behind-surface correction need surface_depth in the scene",
        ));
    }
    let points = pseudo_point_grid(cam);
    let mut labels = vanilla_inbox_label(&points, &scene.boxes);
    if config.occlusion {
        labels = apply_occlusion_correction(labels, cam, &scene.boxes)?;
    }
    if config.mask {
        labels = apply_mask_correction(labels, mask)?;
    }
    let mode = if config.behind_surface {
        BackgroundMode::Lidar {
            ignore_behind_surface: true,
        }
    } else if config.use_lidar {
        BackgroundMode::Lidar {
            ignore_behind_surface: false,
        }
    } else {
        BackgroundMode::NoLidar
    };
    apply_background_labels(labels, surface, &cam.depth_bins, mode)
}
