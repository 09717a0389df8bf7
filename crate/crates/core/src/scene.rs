//! Scenes: cameras, ground-truth boxes and optional per-camera surface-depth
//! and instance-mask maps, plus their JSON representation.
//!
//! JSON layout:
//!
//! ```json
//! {
//!   "cameras": [{"intrinsics": [9 floats, row-major],
//!                "extrinsic": [16 floats, row-major],
//!                "height": 16, "width": 44,
//!                "depth_bins": [d_min, d_step, count]}],
//!   "boxes": [{"center": [x, y, z], "size": [l, w, h], "yaw": 0.0}],
//!   "surface_depth": ["cam0_surface.bevt", ...],
//!   "instance_mask": ["cam0_mask.bevt", ...]
//! }
//! ```
//!
//! Map paths are relative to the JSON file. Surface depth maps are `[H, W]`
//! float tensors (0 = no return); masks are `[H, W]` i32 tensors holding the
//! box index or -1 for background.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CameraRig, DepthBinSpec, OrientedBox, Point3};
use crate::io;
use crate::scalar::Real;
use crate::tensor::{Dim, FeatureTensor};

/// Per-pixel camera-frame depth of the nearest surface; 0 marks no return.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthMap<T> {
    pub height: usize,
    pub width: usize,
    pub data: Vec<T>,
}

impl<T: Real> DepthMap<T> {
    #[inline]
    pub fn at(&self, h: usize, w: usize) -> T {
        self.data[h * self.width + w]
    }

    pub fn to_tensor(&self) -> FeatureTensor<T> {
        FeatureTensor::from_parts(
            vec![(Dim::H, self.height), (Dim::W, self.width)],
            self.data.clone(),
        )
    }
}

pub const BACKGROUND: i32 = -1;

/// Per-pixel instance index; [`BACKGROUND`] where no object is visible.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InstanceMask {
    pub height: usize,
    pub width: usize,
    pub data: Vec<i32>,
}

impl InstanceMask {
    #[inline]
    pub fn at(&self, h: usize, w: usize) -> i32 {
        self.data[h * self.width + w]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scene<T> {
    pub cameras: Vec<CameraRig<T>>,
    pub boxes: Vec<OrientedBox<T>>,
    pub surface_depth: Option<Vec<DepthMap<T>>>,
    pub instance_mask: Option<Vec<InstanceMask>>,
}

impl<T: Real> Scene<T> {
    pub fn validate(&self) -> Result<()> {
        for cam in &self.cameras {
            cam.validate()?;
        }
        for b in &self.boxes {
            b.validate()?;
        }
        if let Some(maps) = &self.surface_depth {
            if maps.len() != self.cameras.len() {
                return Err(Error::Validation(format!(
                    "{} surface depth maps for {} cameras",
                    maps.len(),
                    self.cameras.len()
                )));
            }
            for (k, (m, cam)) in maps.iter().zip(&self.cameras).enumerate() {
                if (m.height, m.width) != (cam.height, cam.width)
                    || m.data.len() != m.height * m.width
                {
                    return Err(Error::Validation(format!(
                        "surface depth map {k} does not match its camera"
                    )));
                }
                if m.data.iter().any(|v| !(*v >= T::zero() && v.is_finite())) {
                    return Err(Error::Validation(format!(
                        "surface depth map {k} has negative or non-finite values"
                    )));
                }
            }
        }
        if let Some(masks) = &self.instance_mask {
            if masks.len() != self.cameras.len() {
                return Err(Error::Validation(format!(
                    "{} instance masks for {} cameras",
                    masks.len(),
                    self.cameras.len()
                )));
            }
            let n = self.boxes.len() as i32;
            for (k, (m, cam)) in masks.iter().zip(&self.cameras).enumerate() {
                if (m.height, m.width) != (cam.height, cam.width)
                    || m.data.len() != m.height * m.width
                {
                    return Err(Error::Validation(format!(
                        "instance mask {k} does not match its camera"
                    )));
                }
                if m.data
                    .iter()
                    .any(|&v| v != BACKGROUND && !(0..n).contains(&v))
                {
                    return Err(Error::Validation(format!(
                        "instance mask {k} references a missing box"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn camera(&self, index: usize) -> Result<&CameraRig<T>> {
        self.cameras.get(index).ok_or_else(|| {
            Error::Validation(format!(
                "camera {index} does not exist ({} cameras)",
                self.cameras.len()
            ))
        })
    }

    pub fn cast<U: Real>(&self) -> Scene<U> {
        Scene {
            cameras: self.cameras.iter().map(|c| c.cast()).collect(),
            boxes: self.boxes.iter().map(|b| b.cast()).collect(),
            surface_depth: self.surface_depth.as_ref().map(|maps| {
                maps.iter()
                    .map(|m| DepthMap {
                        height: m.height,
                        width: m.width,
                        data: m.data.iter().map(|v| U::lit(v.to_f64_())).collect(),
                    })
                    .collect()
            }),
            instance_mask: self.instance_mask.clone(),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct CameraJson<T> {
    intrinsics: Vec<T>,
    extrinsic: Vec<T>,
    height: usize,
    width: usize,
    depth_bins: (T, T, usize),
}

#[derive(Serialize, Deserialize)]
struct BoxJson<T> {
    center: [T; 3],
    size: [T; 3],
    yaw: T,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneFile<T> {
    cameras: Vec<CameraJson<T>>,
    boxes: Vec<BoxJson<T>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    surface_depth: Option<Vec<PathBuf>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    instance_mask: Option<Vec<PathBuf>>,
}

fn camera_from_json<T: Real>(c: CameraJson<T>) -> Result<CameraRig<T>> {
    if c.intrinsics.len() != 9 || c.extrinsic.len() != 16 {
        return Err(Error::Validation(
            "camera needs 9 intrinsic and 16 extrinsic values".into(),
        ));
    }
    let mut k = [[T::zero(); 3]; 3];
    let mut e = [[T::zero(); 4]; 4];
    for (i, v) in c.intrinsics.into_iter().enumerate() {
        k[i / 3][i % 3] = v;
    }
    for (i, v) in c.extrinsic.into_iter().enumerate() {
        e[i / 4][i % 4] = v;
    }
    let (d_min, d_step, count) = c.depth_bins;
    CameraRig::new(
        k,
        e,
        c.height,
        c.width,
        DepthBinSpec {
            d_min,
            d_step,
            count,
        },
    )
}

impl<T: Real> SceneFile<T> {
    fn from_scene(
        scene: &Scene<T>,
        surface: Option<Vec<PathBuf>>,
        mask: Option<Vec<PathBuf>>,
    ) -> Self {
        Self {
            cameras: scene
                .cameras
                .iter()
                .map(|c| CameraJson {
                    intrinsics: c.intrinsics.iter().flatten().copied().collect(),
                    extrinsic: c.extrinsic.iter().flatten().copied().collect(),
                    height: c.height,
                    width: c.width,
                    depth_bins: (c.depth_bins.d_min, c.depth_bins.d_step, c.depth_bins.count),
                })
                .collect(),
            boxes: scene
                .boxes
                .iter()
                .map(|b| BoxJson {
                    center: b.center.to_array(),
                    size: b.size.to_array(),
                    yaw: b.yaw,
                })
                .collect(),
            surface_depth: surface,
            instance_mask: mask,
        }
    }
}

/// Scene geometry as JSON, without the map references.
pub fn scene_to_json<T: Real>(scene: &Scene<T>) -> String {
    serde_json::to_string_pretty(&SceneFile::from_scene(scene, None, None))
        .expect("scene serializes")
}

/// Parses scene geometry from JSON text; map references are ignored.
pub fn scene_from_json<T: Real>(text: &str) -> std::result::Result<Scene<T>, serde_json::Error> {
    let file: SceneFile<T> = serde_json::from_str(text)?;
    let cameras = file
        .cameras
        .into_iter()
        .map(camera_from_json)
        .collect::<Result<Vec<_>>>()
        .map_err(serde::de::Error::custom)?;
    let boxes = file
        .boxes
        .into_iter()
        .map(|b| {
            OrientedBox::new(
                Point3::from_array(b.center),
                Point3::from_array(b.size),
                b.yaw,
            )
        })
        .collect::<Result<Vec<_>>>()
        .map_err(serde::de::Error::custom)?;
    Ok(Scene {
        cameras,
        boxes,
        surface_depth: None,
        instance_mask: None,
    })
}

/// Writes `<dir>/<stem>.json` plus one surface and mask file per camera
/// when present. Returns the paths written, JSON first.
pub fn save_scene<T: Real>(scene: &Scene<T>, dir: &Path, stem: &str) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let surface = scene.surface_depth.as_ref().map(|maps| {
        maps.iter()
            .enumerate()
            .map(|(k, _)| PathBuf::from(format!("{stem}_cam{k}_surface.bevt")))
            .collect::<Vec<_>>()
    });
    let mask = scene.instance_mask.as_ref().map(|maps| {
        maps.iter()
            .enumerate()
            .map(|(k, _)| PathBuf::from(format!("{stem}_cam{k}_mask.bevt")))
            .collect::<Vec<_>>()
    });
    let json_path = dir.join(format!("{stem}.json"));
    let text =
        serde_json::to_string_pretty(&SceneFile::from_scene(scene, surface.clone(), mask.clone()))
            .expect("scene serializes");
    io::write_bytes(&json_path, text.as_bytes())?;
    written.push(json_path);
    if let (Some(maps), Some(names)) = (&scene.surface_depth, &surface) {
        for (m, name) in maps.iter().zip(names) {
            let p = dir.join(name);
            io::write_tensor(&p, &m.to_tensor())?;
            written.push(p);
        }
    }
    if let (Some(maps), Some(names)) = (&scene.instance_mask, &mask) {
        for (m, name) in maps.iter().zip(names) {
            let p = dir.join(name);
            io::write_bytes(&p, &io::encode_i32_tensor(&[m.height, m.width], &m.data)?)?;
            written.push(p);
        }
    }
    Ok(written)
}

/// Loads a scene JSON file and any map files it references.
pub fn load_scene<T: Real>(path: &Path) -> Result<Scene<T>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: SceneFile<T> = serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    let (surface, mask) = (file.surface_depth.clone(), file.instance_mask.clone());
    let mut scene = scene_from_json::<T>(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    if let Some(files) = surface {
        let maps = files
            .iter()
            .map(|f| {
                let t: FeatureTensor<T> =
                    io::read_tensor(&base.join(f))?.into_tensor(&[Dim::H, Dim::W])?;
                let [height, width] = t.expect_layout([Dim::H, Dim::W])?;
                Ok(DepthMap {
                    height,
                    width,
                    data: t.into_data(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        scene.surface_depth = Some(maps);
    }
    if let Some(files) = mask {
        let maps = files
            .iter()
            .map(|f| {
                let (shape, data) = io::read_tensor(&base.join(f))?.into_i32()?;
                match shape.as_slice() {
                    &[height, width] => Ok(InstanceMask {
                        height,
                        width,
                        data,
                    }),
                    _ => Err(Error::Validation(format!(
                        "mask {} must be rank 2",
                        f.display()
                    ))),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        scene.instance_mask = Some(maps);
    }
    scene.validate()?;
    Ok(scene)
}
