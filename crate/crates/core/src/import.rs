//! Minimal importer for nuScenes-style annotation JSON.
//!
//! Field names follow the dataset's `calibrated_sensor`, `ego_pose` and
//! `sample_annotation` tables; quaternions are `[w, x, y, z]`, sizes are
//! `[width, length, height]`.
//!
//! ```json
//! {
//!   "ego_pose": {"translation": [x, y, z], "rotation": [w, x, y, z]},
//!   "cameras": [{"channel": "CAM_FRONT",
//!                "camera_intrinsic": [[fx, 0, cx], [0, fy, cy], [0, 0, 1]],
//!                "translation": [x, y, z], "rotation": [w, x, y, z],
//!                "width": 1600, "height": 900}],
//!   "annotations": [{"translation": [x, y, z], "size": [w, l, h],
//!                    "rotation": [w, x, y, z]}]
//! }
//! ```
//!
//! Camera poses are sensor-to-ego. Annotations are global when `ego_pose`
//! is present and ego-frame otherwise. Box roll and pitch are dropped.

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::geometry::{CameraRig, DepthBinSpec, OrientedBox, Point3};
use crate::scene::Scene;

type Mat3 = [[f64; 3]; 3];

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct AnnotationFile {
    #[serde(default)]
    ego_pose: Option<Pose>,
    cameras: Vec<CameraRecord>,
    #[serde(default)]
    annotations: Vec<BoxRecord>,
}

#[derive(Debug, Deserialize)]
struct Pose {
    translation: [f64; 3],
    rotation: [f64; 4],
}

#[derive(Debug, Deserialize)]
struct CameraRecord {
    #[serde(default)]
    channel: Option<String>,
    camera_intrinsic: Mat3,
    translation: [f64; 3],
    rotation: [f64; 4],
    width: usize,
    height: usize,
}

#[derive(Debug, Deserialize)]
struct BoxRecord {
    translation: [f64; 3],
    size: [f64; 3],
    rotation: [f64; 4],
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ImportOptions {
    pub depth_bins: DepthBinSpec<f64>,
    /// Image-to-feature downsampling factor; intrinsics and image size are
    /// rescaled to the feature grid.
    pub feature_stride: usize,
}

impl Default for ImportOptions {
    fn default() -> Self {
        Self {
            depth_bins: DepthBinSpec::default(),
            feature_stride: 1,
        }
    }
}

fn quat_to_matrix(q: [f64; 4], what: &str) -> Result<Mat3> {
    let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(n.is_finite() && n > 1e-9) {
        return Err(Error::Validation(format!(
            "{what}: degenerate quaternion {q:?}"
        )));
    }
    let [w, x, y, z] = q.map(|v| v / n);
    Ok([
        [
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
        ],
        [
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
        ],
        [
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        ],
    ])
}

fn transpose(m: &Mat3) -> Mat3 {
    let mut t = [[0.0; 3]; 3];
    for (i, row) in m.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            t[j][i] = *v;
        }
    }
    t
}

fn mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

fn apply(m: &Mat3, v: [f64; 3]) -> [f64; 3] {
    [0, 1, 2].map(|i| m[i][0] * v[0] + m[i][1] * v[1] + m[i][2] * v[2])
}

fn camera(rec: &CameraRecord, k: usize, opts: &ImportOptions) -> Result<CameraRig<f64>> {
    let name = rec.channel.clone().unwrap_or_else(|| format!("camera {k}"));
    let s = opts.feature_stride as f64;
    let (height, width) = (
        rec.height / opts.feature_stride,
        rec.width / opts.feature_stride,
    );
    let kmat = &rec.camera_intrinsic;
    // pixel centers sit at integer coordinates on both grids
    let rescale = |c: f64| (c + 0.5) / s - 0.5;
    let to_ego = quat_to_matrix(rec.rotation, &name)?;
    let rotation = transpose(&to_ego);
    let t = apply(&rotation, rec.translation).map(|v| -v);
    CameraRig::from_parts(
        kmat[0][0] / s,
        kmat[1][1] / s,
        rescale(kmat[0][2]),
        rescale(kmat[1][2]),
        rotation,
        t,
        height,
        width,
        opts.depth_bins,
    )
    .map_err(|e| Error::Validation(format!("{name}: {e}")))
}

/// Parses annotation JSON into an ego-frame scene without surface or mask maps.
pub fn import_annotations(text: &str, opts: &ImportOptions) -> Result<Scene<f64>> {
    if opts.feature_stride == 0 {
        return Err(Error::config("feature_stride must be >= 1"));
    }
    let file: AnnotationFile = serde_json::from_str(text)
        .map_err(|e| Error::Validation(format!("annotation JSON: {e}")))?;
    let cameras = file
        .cameras
        .iter()
        .enumerate()
        .map(|(k, c)| camera(c, k, opts))
        .collect::<Result<Vec<_>>>()?;
    let (to_ego, origin) = match &file.ego_pose {
        Some(p) => (
            transpose(&quat_to_matrix(p.rotation, "ego_pose")?),
            p.translation,
        ),
        None => (
            [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            [0.0; 3],
        ),
    };
    let boxes = file
        .annotations
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let what = format!("annotation {i}");
            let r = mul(&to_ego, &quat_to_matrix(b.rotation, &what)?);
            let c = apply(&to_ego, [0, 1, 2].map(|k| b.translation[k] - origin[k]));
            let [w, l, h] = b.size;
            OrientedBox::new(
                Point3::from_array(c),
                Point3::new(l, w, h),
                r[1][0].atan2(r[0][0]),
            )
            .map_err(|e| Error::Validation(format!("{what}: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let scene = Scene {
        cameras,
        boxes,
        surface_depth: None,
        instance_mask: None,
    };
    scene.validate()?;
    Ok(scene)
}
