//! Feature transforms from per-camera image features and depth scores into
//! a bird's-eye-view grid.
//!
//! * [`radial_bev`]: per-column matrix products producing `[C, D, W]` radial
//!   features without materializing the `[C, D, H, W]` frustum.
//! * [`radial_bev_oracle`]: the explicit frustum route, kept as a test oracle
//!   and memory foil.
//! * [`cartesian_bev`]: bilinear sampling of radial features at each BEV cell.
//! * [`voxel_sampling`] and [`lss_pool`]: the two baselines.
//!
//! Every engine is parallel over independent output slices with a fixed
//! per-element accumulation order, so results are bitwise identical for any
//! rayon thread count.

mod cartesian;
mod lss;
mod radial;
mod sample;
mod voxel;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::CameraRig;
use crate::scalar::Real;
use crate::tensor::{Dim, FeatureTensor};

pub use cartesian::{cartesian_bev, oracle_pipeline, rc_pipeline};
pub use lss::lss_pool;
pub use radial::{radial_bev, radial_bev_oracle, upsample_depth_scores_2x};
pub use sample::{bilinear_sample, bilinear_weights, BilinearTap};
pub use voxel::voxel_sampling;

/// Regular BEV grid. Cell `(i, j)` is centered at
/// `(x_min + (i + 0.5) * cell_size, y_min + (j + 0.5) * cell_size)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BevGridSpec<T> {
    pub x_min: T,
    pub y_min: T,
    pub cell_size: T,
    pub nx: usize,
    pub ny: usize,
}

impl<T: Real> BevGridSpec<T> {
    pub fn new(x_min: T, y_min: T, cell_size: T, nx: usize, ny: usize) -> Result<Self> {
        let g = Self {
            x_min,
            y_min,
            cell_size,
            nx,
            ny,
        };
        g.validate()?;
        Ok(g)
    }

    /// Square grid of `n x n` cells spanning `[-half_extent, half_extent]`.
    pub fn centered(half_extent: T, n: usize) -> Result<Self> {
        let cell = half_extent * T::lit(2.0) / T::from_usize_(n.max(1));
        Self::new(-half_extent, -half_extent, cell, n, n)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.cell_size > T::zero() && self.cell_size.is_finite()) {
            return Err(Error::config("BEV cell_size must be > 0"));
        }
        if self.nx == 0 || self.ny == 0 {
            return Err(Error::config("BEV grid needs at least one cell per axis"));
        }
        if !self.x_min.is_finite() || !self.y_min.is_finite() {
            return Err(Error::config("BEV grid origin must be finite"));
        }
        Ok(())
    }

    #[inline]
    pub fn cell_center(&self, i: usize, j: usize) -> (T, T) {
        let half = T::lit(0.5);
        (
            self.x_min + (T::from_usize_(i) + half) * self.cell_size,
            self.y_min + (T::from_usize_(j) + half) * self.cell_size,
        )
    }

    /// Cell containing `(x, y)`, half-open on the upper edges.
    #[inline]
    pub fn cell_of(&self, x: T, y: T) -> Option<(usize, usize)> {
        let fi = ((x - self.x_min) / self.cell_size).floor();
        let fj = ((y - self.y_min) / self.cell_size).floor();
        if !(fi >= T::zero() && fj >= T::zero()) {
            return None;
        }
        let (i, j) = (fi.to_usize()?, fj.to_usize()?);
        (i < self.nx && j < self.ny).then_some((i, j))
    }

    pub fn x_max(&self) -> T {
        self.x_min + T::from_usize_(self.nx) * self.cell_size
    }

    pub fn y_max(&self) -> T {
        self.y_min + T::from_usize_(self.ny) * self.cell_size
    }

    pub fn cells(&self) -> usize {
        self.nx * self.ny
    }

    pub fn cast<U: Real>(&self) -> BevGridSpec<U> {
        BevGridSpec {
            x_min: U::lit(self.x_min.to_f64_()),
            y_min: U::lit(self.y_min.to_f64_()),
            cell_size: U::lit(self.cell_size.to_f64_()),
            nx: self.nx,
            ny: self.ny,
        }
    }
}

/// Exact element counts of what a transform allocates, plus wall time.
///
/// `intermediate_floats` is the tensor each route reduces over before its
/// output exists: the `[C, D, H, W]` frustum for the oracle, the `[C, D, W]`
/// radial accumulator for RC-Sampling, the `[C, X, Y, Z]` voxel volume for
/// voxel sampling and the `[C, D, H, W]` pseudo-point features for pooling.
/// `workspace_floats` counts transposition and gather scratch.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AllocationReport {
    pub intermediate_floats: u64,
    pub workspace_floats: u64,
    pub output_floats: u64,
    pub wall_time: f64,
    /// BEV cells seen by no camera (Cartesian sampling only).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub uncovered_cells: Option<u64>,
}

impl AllocationReport {
    pub(crate) fn merge(&mut self, other: &AllocationReport) {
        self.intermediate_floats += other.intermediate_floats;
        self.workspace_floats = self.workspace_floats.max(other.workspace_floats);
        self.wall_time += other.wall_time;
    }
}

/// How overlapping camera contributions combine in a BEV cell.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Fusion {
    #[default]
    Sum,
    Mean,
}

/// One camera's inputs to a transform.
#[derive(Clone, Copy, Debug)]
pub struct CameraView<'a, T> {
    /// `[C, H, W]`
    pub image: &'a FeatureTensor<T>,
    /// `[D, H, W]`
    pub depth: &'a FeatureTensor<T>,
    pub camera: &'a CameraRig<T>,
}

impl<'a, T: Real> CameraView<'a, T> {
    /// Checks that tensor layouts agree with each other and with the camera.
    /// Returns `(C, D, H, W)`.
    pub fn validate(&self) -> Result<(usize, usize, usize, usize)> {
        let [c, h, w] = self.image.expect_layout([Dim::C, Dim::H, Dim::W])?;
        let [d, hd, wd] = self.depth.expect_layout([Dim::D, Dim::H, Dim::W])?;
        if (h, w) != (hd, wd) {
            return Err(Error::contract(format!(
                "image features are {h}x{w} but depth scores are {hd}x{wd}"
            )));
        }
        if (h, w) != (self.camera.height, self.camera.width) {
            return Err(Error::contract(format!(
                "features are {h}x{w} but the camera image is {}x{}",
                self.camera.height, self.camera.width
            )));
        }
        if d != self.camera.depth_bins.count {
            return Err(Error::contract(format!(
                "depth scores have {d} bins, camera expects {}",
                self.camera.depth_bins.count
            )));
        }
        Ok((c, d, h, w))
    }
}

pub(crate) fn common_channels<T: Real>(views: &[CameraView<'_, T>]) -> Result<usize> {
    let first = views
        .first()
        .ok_or_else(|| Error::contract("at least one camera is required"))?;
    let (c, ..) = first.validate()?;
    for v in &views[1..] {
        let (ci, ..) = v.validate()?;
        if ci != c {
            return Err(Error::contract(format!("channel mismatch: {c} vs {ci}")));
        }
    }
    Ok(c)
}

/// Fraction of BEV cells whose features have zero L1 norm over channels.
pub fn vacancy_ratio<T: Real>(bev: &FeatureTensor<T>) -> Result<f64> {
    let [c, x, y] = bev.expect_layout([Dim::C, Dim::X, Dim::Y])?;
    let cells = x * y;
    if cells == 0 {
        return Ok(0.0);
    }
    let data = bev.data();
    let vacant = (0..cells)
        .filter(|&k| (0..c).all(|ci| data[ci * cells + k] == T::zero()))
        .count();
    Ok(vacant as f64 / cells as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bev(values: Vec<f32>) -> FeatureTensor<f32> {
        FeatureTensor::new(vec![(Dim::C, 1), (Dim::X, 2), (Dim::Y, 2)], values).unwrap()
    }

    #[test]
    fn vacancy_examples() {
        assert_eq!(vacancy_ratio(&bev(vec![0.0; 4])).unwrap(), 1.0);
        assert_eq!(vacancy_ratio(&bev(vec![0.0, 0.0, 3.0, 0.0])).unwrap(), 0.75);
        assert_eq!(vacancy_ratio(&bev(vec![1.0, -1.0, 3.0, 2.0])).unwrap(), 0.0);
    }

    #[test]
    fn grid_cell_lookup() {
        let g = BevGridSpec::<f64>::centered(2.0, 4).unwrap();
        assert_eq!(g.cell_center(0, 0), (-1.5, -1.5));
        assert_eq!(g.cell_of(-1.5, 1.9), Some((0, 3)));
        assert_eq!(g.cell_of(2.0, 0.0), None);
        assert_eq!(g.cell_of(-2.1, 0.0), None);
        assert!(BevGridSpec::<f64>::new(0.0, 0.0, 0.0, 1, 1).is_err());
        assert!(BevGridSpec::<f64>::new(0.0, 0.0, 1.0, 0, 1).is_err());
    }
}
