use std::time::Instant;

use rayon::prelude::*;

use super::{common_channels, AllocationReport, BevGridSpec, CameraView};
use crate::error::Result;
use crate::scalar::Real;
use crate::tensor::{Dim, FeatureTensor};

/// Lift-splat pooling baseline: each `(d, h, w)` pseudo-point is unprojected
/// at its bin-center depth and `img[:, h, w] * depth[d, h, w]` is added to
/// the BEV cell containing it. Points outside the grid are dropped.
///
/// Accumulation order is camera, then `d`, `h`, `w` ascending, per channel.
pub fn lss_pool<T: Real>(
    views: &[CameraView<'_, T>],
    grid: &BevGridSpec<T>,
) -> Result<(FeatureTensor<T>, AllocationReport)> {
    grid.validate()?;
    let c = common_channels(views)?;
    let start = Instant::now();

    // flat BEV cell index per pseudo-point, per camera
    let targets: Vec<Vec<Option<u32>>> = views
        .iter()
        .map(|view| {
            let cam = view.camera;
            let (d, h, w) = (cam.depth_bins.count, cam.height, cam.width);
            (0..d * h * w)
                .into_par_iter()
                .map(|k| {
                    let (di, hi, wi) = (k / (h * w), (k / w) % h, k % w);
                    let p = cam.unproject_unchecked(
                        T::from_usize_(wi),
                        T::from_usize_(hi),
                        cam.depth_bins.bin_center(di),
                    );
                    grid.cell_of(p.x, p.y)
                        .map(|(i, j)| (i * grid.ny + j) as u32)
                })
                .collect()
        })
        .collect();

    let plane = grid.cells();
    let mut data = vec![T::zero(); c * plane];
    data.par_chunks_mut(plane)
        .enumerate()
        .for_each(|(ci, out)| {
            for (view, cells) in views.iter().zip(&targets) {
                let (h, w) = (view.camera.height, view.camera.width);
                let img = &view.image.data()[ci * h * w..(ci + 1) * h * w];
                let scores = view.depth.data();
                for (k, cell) in cells.iter().enumerate() {
                    if let Some(cell) = cell {
                        out[*cell as usize] += img[k % (h * w)] * scores[k];
                    }
                }
            }
        });

    let points: usize = views
        .iter()
        .map(|v| v.camera.depth_bins.count * v.camera.height * v.camera.width)
        .sum();
    let report = AllocationReport {
        intermediate_floats: (c * points) as u64,
        workspace_floats: points as u64,
        output_floats: (c * plane) as u64,
        wall_time: start.elapsed().as_secs_f64(),
        uncovered_cells: None,
    };
    Ok((
        FeatureTensor::from_parts(
            vec![(Dim::C, c), (Dim::X, grid.nx), (Dim::Y, grid.ny)],
            data,
        ),
        report,
    ))
}
