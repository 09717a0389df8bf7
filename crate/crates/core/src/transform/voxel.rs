use std::time::Instant;

use rayon::prelude::*;

use super::sample::bilinear_weights;
use super::{common_channels, AllocationReport, BevGridSpec, CameraView};
use crate::error::{Error, Result};
use crate::geometry::Point3;
use crate::scalar::Real;
use crate::tensor::{Dim, FeatureTensor};

/// Voxel-sampling baseline: every `(cell, height)` voxel center is projected
/// into each camera, the image feature is sampled bilinearly at `(v, u)` and
/// the depth score trilinearly at `(d_frac, v, u)`, and their product is
/// written into the voxel volume, which is then summed over heights.
///
/// The volume is materialized one BEV row at a time (`[Y, Z, C]`); the
/// reported intermediate is the full `C * X * Y * Z` volume the method defines.
pub fn voxel_sampling<T: Real>(
    views: &[CameraView<'_, T>],
    grid: &BevGridSpec<T>,
    heights: &[T],
) -> Result<(FeatureTensor<T>, AllocationReport)> {
    if heights.is_empty() {
        return Err(Error::contract("voxel_sampling needs at least one height"));
    }
    grid.validate()?;
    let c = common_channels(views)?;
    let start = Instant::now();
    let (nx, ny, nz) = (grid.nx, grid.ny, heights.len());

    let rows: Vec<Vec<T>> = (0..nx)
        .into_par_iter()
        .map(|i| {
            let mut voxels = vec![T::zero(); ny * nz * c];
            let mut feat = vec![T::zero(); c];
            for j in 0..ny {
                let (x, y) = grid.cell_center(i, j);
                for (k, &z) in heights.iter().enumerate() {
                    let voxel = &mut voxels[(j * nz + k) * c..(j * nz + k + 1) * c];
                    for view in views {
                        if let Some(score) = sample_view(view, &Point3::new(x, y, z), &mut feat) {
                            for (acc, &f) in voxel.iter_mut().zip(&feat) {
                                *acc += f * score;
                            }
                        }
                    }
                }
            }
            // squeeze heights
            let mut row = vec![T::zero(); ny * c];
            for j in 0..ny {
                for k in 0..nz {
                    let voxel = &voxels[(j * nz + k) * c..(j * nz + k + 1) * c];
                    for (acc, &v) in row[j * c..(j + 1) * c].iter_mut().zip(voxel) {
                        *acc += v;
                    }
                }
            }
            row
        })
        .collect();

    let plane = nx * ny;
    let mut data = vec![T::zero(); c * plane];
    for (i, row) in rows.iter().enumerate() {
        for j in 0..ny {
            for ci in 0..c {
                data[ci * plane + i * ny + j] = row[j * c + ci];
            }
        }
    }
    let report = AllocationReport {
        intermediate_floats: (c * nx * ny * nz) as u64,
        workspace_floats: (c * 2) as u64,
        output_floats: (c * plane) as u64,
        wall_time: start.elapsed().as_secs_f64(),
        uncovered_cells: None,
    };
    Ok((
        FeatureTensor::from_parts(vec![(Dim::C, c), (Dim::X, nx), (Dim::Y, ny)], data),
        report,
    ))
}

/// Samples features into `feat` and returns the depth score, or `None` when
/// the point falls outside the camera's image or depth range.
#[inline]
fn sample_view<T: Real>(view: &CameraView<'_, T>, p: &Point3<T>, feat: &mut [T]) -> Option<T> {
    let cam = view.camera;
    let (u, v, depth) = cam.project(p).visible()?;
    let (h, w, d) = (cam.height, cam.width, cam.depth_bins.count);
    let d_frac = cam.depth_bins.frac_index(depth);
    let inside = |x: T, n: usize| x >= T::zero() && x <= T::from_usize_(n - 1);
    if !(inside(u, w) && inside(v, h) && inside(d_frac, d)) {
        return None;
    }
    let tap = bilinear_weights(v, u, h, w);
    let plane = h * w;
    let img = view.image.data();
    for (ci, f) in feat.iter_mut().enumerate() {
        *f = tap.apply(&img[ci * plane..(ci + 1) * plane], w);
    }
    let scores = view.depth.data();
    let d0f = d_frac.floor();
    let d0 = d0f.to_usize()?.min(d - 1);
    let d1 = (d0 + 1).min(d - 1);
    let fd = d_frac - d0f;
    let s0 = tap.apply(&scores[d0 * plane..(d0 + 1) * plane], w);
    let s1 = tap.apply(&scores[d1 * plane..(d1 + 1) * plane], w);
    Some(s0 * (T::one() - fd) + s1 * fd)
}
