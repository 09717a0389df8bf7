use serde::{Deserialize, Serialize};

use super::Point3;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Camera-frame depths at or below this value are reported as behind the camera.
pub const BEHIND_CAMERA_EPS: f64 = 1e-6;

/// Uniform depth discretization. Bin `k` covers
/// `[d_min + k * d_step, d_min + (k + 1) * d_step)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DepthBinSpec<T> {
    pub d_min: T,
    pub d_step: T,
    pub count: usize,
}

impl<T: Real> Default for DepthBinSpec<T> {
    fn default() -> Self {
        Self {
            d_min: T::one(),
            d_step: T::lit(0.5),
            count: 118,
        }
    }
}

impl<T: Real> DepthBinSpec<T> {
    pub fn new(d_min: T, d_step: T, count: usize) -> Result<Self> {
        let spec = Self {
            d_min,
            d_step,
            count,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.d_min > T::zero() && self.d_min.is_finite()) {
            return Err(Error::config(format!(
                "d_min must be > 0, got {}",
                self.d_min
            )));
        }
        if !(self.d_step > T::zero() && self.d_step.is_finite()) {
            return Err(Error::config(format!(
                "d_step must be > 0, got {}",
                self.d_step
            )));
        }
        if self.count == 0 {
            return Err(Error::config("depth bin count must be >= 1"));
        }
        Ok(())
    }

    #[inline]
    pub fn bin_center(&self, k: usize) -> T {
        self.d_min + (T::from_usize_(k) + T::lit(0.5)) * self.d_step
    }

    /// Index of the bin whose half-open interval contains `depth`.
    pub fn bin_of(&self, depth: T) -> Option<usize> {
        let k = ((depth - self.d_min) / self.d_step).floor();
        if k < T::zero() || !k.is_finite() {
            return None;
        }
        let k = k.to_usize()?;
        (k < self.count).then_some(k)
    }

    /// Fractional bin index; bin centers land on integers.
    #[inline]
    pub fn frac_index(&self, depth: T) -> T {
        (depth - self.d_min) / self.d_step - T::lit(0.5)
    }

    /// Far edge of the last bin.
    pub fn d_max(&self) -> T {
        self.d_min + T::from_usize_(self.count) * self.d_step
    }

    pub fn cast<U: Real>(&self) -> DepthBinSpec<U> {
        DepthBinSpec {
            d_min: U::lit(self.d_min.to_f64_()),
            d_step: U::lit(self.d_step.to_f64_()),
            count: self.count,
        }
    }
}

/// Result of projecting a 3D point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Projection<T> {
    Visible { u: T, v: T, depth: T },
    BehindCamera,
}

impl<T: Copy> Projection<T> {
    pub fn visible(self) -> Option<(T, T, T)> {
        match self {
            Projection::Visible { u, v, depth } => Some((u, v, depth)),
            Projection::BehindCamera => None,
        }
    }
}

/// Fractional coordinates of a BEV location on a camera's radial grid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RadialCoord<T> {
    pub d_frac: T,
    pub w_frac: T,
}

/// Pinhole camera with an ego-to-camera rigid transform.
///
/// Camera frame convention: `+z` forward, `+x` right, `+y` down. Pixel
/// `(w, h)` has its center at `(u, v) = (w, h)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraRig<T> {
    pub intrinsics: [[T; 3]; 3],
    pub extrinsic: [[T; 4]; 4],
    pub height: usize,
    pub width: usize,
    pub depth_bins: DepthBinSpec<T>,
}

impl<T: Real> CameraRig<T> {
    pub fn new(
        intrinsics: [[T; 3]; 3],
        extrinsic: [[T; 4]; 4],
        height: usize,
        width: usize,
        depth_bins: DepthBinSpec<T>,
    ) -> Result<Self> {
        let cam = Self {
            intrinsics,
            extrinsic,
            height,
            width,
            depth_bins,
        };
        cam.validate()?;
        Ok(cam)
    }

    /// Builds a camera from focal lengths, principal point and an
    /// ego-to-camera rotation/translation.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        fx: T,
        fy: T,
        cx: T,
        cy: T,
        rotation: [[T; 3]; 3],
        translation: [T; 3],
        height: usize,
        width: usize,
        depth_bins: DepthBinSpec<T>,
    ) -> Result<Self> {
        let z = T::zero();
        let intrinsics = [[fx, z, cx], [z, fy, cy], [z, z, T::one()]];
        let mut extrinsic = [[z; 4]; 4];
        for r in 0..3 {
            extrinsic[r][..3].copy_from_slice(&rotation[r]);
            extrinsic[r][3] = translation[r];
        }
        extrinsic[3][3] = T::one();
        Self::new(intrinsics, extrinsic, height, width, depth_bins)
    }

    /// Camera at `position` (ego frame) looking horizontally along `yaw`
    /// (radians about ego `+z`, 0 = ego `+x`), ego `+z` up.
    #[allow(clippy::too_many_arguments)]
    pub fn looking_along_yaw(
        fx: T,
        fy: T,
        cx: T,
        cy: T,
        position: Point3<T>,
        yaw: T,
        height: usize,
        width: usize,
        depth_bins: DepthBinSpec<T>,
    ) -> Result<Self> {
        let (s, c) = yaw.sin_cos();
        let z = T::zero();
        // rows: camera x (right), camera y (down), camera z (forward) in ego coordinates
        let rotation = [[s, -c, z], [z, z, -T::one()], [c, s, z]];
        let t = rotate(&rotation, &position);
        Self::from_parts(
            fx,
            fy,
            cx,
            cy,
            rotation,
            [-t.x, -t.y, -t.z],
            height,
            width,
            depth_bins,
        )
    }

    pub fn validate(&self) -> Result<()> {
        let k = &self.intrinsics;
        let z = T::zero();
        if !(k[0][0] > z && k[1][1] > z) {
            return Err(Error::config("intrinsics must have positive focal lengths"));
        }
        if k[0][1] != z || k[1][0] != z || k[2][0] != z || k[2][1] != z || k[2][2] != T::one() {
            return Err(Error::config(
                "intrinsics must be zero-skew with last row (0, 0, 1)",
            ));
        }
        if self.height == 0 || self.width == 0 {
            return Err(Error::config("image height and width must be >= 1"));
        }
        let tol = T::lit(1e-9).max(T::epsilon() * T::lit(64.0));
        let r = self.rotation();
        for i in 0..3 {
            for j in 0..3 {
                let dot = (0..3).fold(z, |acc, m| acc + r[i][m] * r[j][m]);
                let expect = if i == j { T::one() } else { z };
                if (dot - expect).abs() > tol {
                    return Err(Error::config("extrinsic rotation block is not orthonormal"));
                }
            }
        }
        let e = &self.extrinsic;
        if e[3][0] != z || e[3][1] != z || e[3][2] != z || e[3][3] != T::one() {
            return Err(Error::config("extrinsic last row must be (0, 0, 0, 1)"));
        }
        if e.iter()
            .flatten()
            .chain(k.iter().flatten())
            .any(|v| !v.is_finite())
        {
            return Err(Error::config("camera matrices must be finite"));
        }
        self.depth_bins.validate()
    }

    #[inline]
    pub fn fx(&self) -> T {
        self.intrinsics[0][0]
    }
    #[inline]
    pub fn fy(&self) -> T {
        self.intrinsics[1][1]
    }
    #[inline]
    pub fn cx(&self) -> T {
        self.intrinsics[0][2]
    }
    #[inline]
    pub fn cy(&self) -> T {
        self.intrinsics[1][2]
    }

    pub fn rotation(&self) -> [[T; 3]; 3] {
        let e = &self.extrinsic;
        [
            [e[0][0], e[0][1], e[0][2]],
            [e[1][0], e[1][1], e[1][2]],
            [e[2][0], e[2][1], e[2][2]],
        ]
    }

    pub fn translation(&self) -> Point3<T> {
        Point3::new(
            self.extrinsic[0][3],
            self.extrinsic[1][3],
            self.extrinsic[2][3],
        )
    }

    #[inline]
    pub fn ego_to_camera(&self, p: &Point3<T>) -> Point3<T> {
        let e = &self.extrinsic;
        Point3::new(
            e[0][0] * p.x + e[0][1] * p.y + e[0][2] * p.z + e[0][3],
            e[1][0] * p.x + e[1][1] * p.y + e[1][2] * p.z + e[1][3],
            e[2][0] * p.x + e[2][1] * p.y + e[2][2] * p.z + e[2][3],
        )
    }

    #[inline]
    pub fn camera_to_ego(&self, q: &Point3<T>) -> Point3<T> {
        let d = *q - self.translation();
        let e = &self.extrinsic;
        Point3::new(
            e[0][0] * d.x + e[1][0] * d.y + e[2][0] * d.z,
            e[0][1] * d.x + e[1][1] * d.y + e[2][1] * d.z,
            e[0][2] * d.x + e[1][2] * d.y + e[2][2] * d.z,
        )
    }

    /// Optical center in the ego frame.
    pub fn center(&self) -> Point3<T> {
        self.camera_to_ego(&Point3::origin())
    }

    /// Pinhole projection of an ego-frame point.
    #[inline]
    pub fn project(&self, p: &Point3<T>) -> Projection<T> {
        let q = self.ego_to_camera(p);
        if q.z <= T::lit(BEHIND_CAMERA_EPS) {
            return Projection::BehindCamera;
        }
        let inv = T::one() / q.z;
        Projection::Visible {
            u: self.fx() * q.x * inv + self.cx(),
            v: self.fy() * q.y * inv + self.cy(),
            depth: q.z,
        }
    }

    /// Ego-frame point at camera-frame `depth` behind pixel `(u, v)`.
    pub fn unproject(&self, u: T, v: T, depth: T) -> Result<Point3<T>> {
        if depth.partial_cmp(&T::zero()) != Some(std::cmp::Ordering::Greater) {
            return Err(Error::contract(format!(
                "unproject needs depth > 0, got {depth}"
            )));
        }
        Ok(self.unproject_unchecked(u, v, depth))
    }

    #[inline]
    pub(crate) fn unproject_unchecked(&self, u: T, v: T, depth: T) -> Point3<T> {
        let q = Point3::new(
            (u - self.cx()) / self.fx() * depth,
            (v - self.cy()) / self.fy() * depth,
            depth,
        );
        self.camera_to_ego(&q)
    }

    /// Unit ray through pixel `(u, v)`, starting at the optical center.
    pub fn pixel_ray(&self, u: T, v: T) -> (Point3<T>, Point3<T>) {
        let origin = self.center();
        let through = self.unproject_unchecked(u, v, T::one());
        (origin, (through - origin).normalized())
    }

    /// Projects the BEV location `(x, y, z_ref)` onto this camera's radial
    /// `(depth bin, column)` lattice. `None` when behind the camera or when
    /// the column or fractional bin leaves `[0, W-1]` / `[0, D-1]`.
    #[inline]
    pub fn bev_to_radial(&self, x: T, y: T, z_ref: T) -> Option<RadialCoord<T>> {
        let (u, _v, depth) = self.project(&Point3::new(x, y, z_ref)).visible()?;
        let d_frac = self.depth_bins.frac_index(depth);
        let w_max = T::from_usize_(self.width - 1);
        let d_max = T::from_usize_(self.depth_bins.count - 1);
        if u >= T::zero() && u <= w_max && d_frac >= T::zero() && d_frac <= d_max {
            Some(RadialCoord { d_frac, w_frac: u })
        } else {
            None
        }
    }

    pub fn cast<U: Real>(&self) -> CameraRig<U> {
        let c = |v: T| U::lit(v.to_f64_());
        CameraRig {
            intrinsics: self.intrinsics.map(|r| r.map(c)),
            extrinsic: self.extrinsic.map(|r| r.map(c)),
            height: self.height,
            width: self.width,
            depth_bins: self.depth_bins.cast(),
        }
    }
}

fn rotate<T: Real>(r: &[[T; 3]; 3], p: &Point3<T>) -> Point3<T> {
    Point3::new(
        r[0][0] * p.x + r[0][1] * p.y + r[0][2] * p.z,
        r[1][0] * p.x + r[1][1] * p.y + r[1][2] * p.z,
        r[2][0] * p.x + r[2][1] * p.y + r[2][2] * p.z,
    )
}
