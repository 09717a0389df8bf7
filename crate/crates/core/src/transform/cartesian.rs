use std::time::Instant;

use rayon::prelude::*;

use super::sample::bilinear_weights;
use super::{
    common_channels, radial_bev, radial_bev_oracle, AllocationReport, BevGridSpec, CameraView,
    Fusion,
};
use crate::error::{Error, Result};
use crate::geometry::CameraRig;
use crate::scalar::Real;
use crate::tensor::{Dim, FeatureTensor};

/// Fills a `[C, X, Y]` grid by bilinearly sampling each camera's `[C, D, W]`
/// radial features at the projection of the cell center `(x, y, z_ref)`.
///
/// Contributions from several cameras are fused with `fusion`; cells no
/// camera sees stay zero and are counted in `uncovered_cells`.
pub fn cartesian_bev<T: Real>(
    radials: &[(&FeatureTensor<T>, &CameraRig<T>)],
    grid: &BevGridSpec<T>,
    z_ref: T,
    fusion: Fusion,
) -> Result<(FeatureTensor<T>, AllocationReport)> {
    let (first, _) = radials
        .first()
        .ok_or_else(|| Error::contract("cartesian_bev needs at least one camera"))?;
    grid.validate()?;
    let [c, ..] = first.expect_layout([Dim::C, Dim::D, Dim::W])?;
    for (r, cam) in radials {
        let [ci, d, w] = r.expect_layout([Dim::C, Dim::D, Dim::W])?;
        if ci != c {
            return Err(Error::contract(format!("channel mismatch: {c} vs {ci}")));
        }
        if d != cam.depth_bins.count || w != cam.width {
            return Err(Error::contract(format!(
                "radial tensor is {d}x{w}, camera expects {}x{}",
                cam.depth_bins.count, cam.width
            )));
        }
    }
    let start = Instant::now();
    let (nx, ny) = (grid.nx, grid.ny);

    // rows of [Y][C] cell features plus the per-row uncovered count
    let rows: Vec<(Vec<T>, u64)> = (0..nx)
        .into_par_iter()
        .map(|i| {
            let mut row = vec![T::zero(); ny * c];
            let mut uncovered = 0u64;
            for j in 0..ny {
                let (x, y) = grid.cell_center(i, j);
                let cell = &mut row[j * c..(j + 1) * c];
                let mut hits = 0usize;
                for (radial, cam) in radials {
                    let Some(rc) = cam.bev_to_radial(x, y, z_ref) else {
                        continue;
                    };
                    let (d, w) = (cam.depth_bins.count, cam.width);
                    let tap = bilinear_weights(rc.d_frac, rc.w_frac, d, w);
                    let data = radial.data();
                    for (ci, v) in cell.iter_mut().enumerate() {
                        *v += tap.apply(&data[ci * d * w..(ci + 1) * d * w], w);
                    }
                    hits += 1;
                }
                if hits == 0 {
                    uncovered += 1;
                } else if fusion == Fusion::Mean && hits > 1 {
                    let inv = T::one() / T::from_usize_(hits);
                    cell.iter_mut().for_each(|v| *v *= inv);
                }
            }
            (row, uncovered)
        })
        .collect();

    let plane = nx * ny;
    let mut data = vec![T::zero(); c * plane];
    let mut uncovered = 0;
    for (i, (row, u)) in rows.iter().enumerate() {
        uncovered += u;
        for j in 0..ny {
            for ci in 0..c {
                data[ci * plane + i * ny + j] = row[j * c + ci];
            }
        }
    }
    let report = AllocationReport {
        intermediate_floats: 0,
        workspace_floats: (ny * c) as u64,
        output_floats: (c * plane) as u64,
        wall_time: start.elapsed().as_secs_f64(),
        uncovered_cells: Some(uncovered),
    };
    Ok((
        FeatureTensor::from_parts(vec![(Dim::C, c), (Dim::X, nx), (Dim::Y, ny)], data),
        report,
    ))
}

type RadialFn<T> =
    fn(&FeatureTensor<T>, &FeatureTensor<T>) -> Result<(FeatureTensor<T>, AllocationReport)>;

fn pipeline<T: Real>(
    views: &[CameraView<'_, T>],
    grid: &BevGridSpec<T>,
    z_ref: T,
    fusion: Fusion,
    radial: RadialFn<T>,
) -> Result<(FeatureTensor<T>, AllocationReport)> {
    common_channels(views)?;
    let mut report = AllocationReport::default();
    let mut radials = Vec::with_capacity(views.len());
    for v in views {
        let (r, rep) = radial(v.image, v.depth)?;
        report.merge(&rep);
        radials.push(r);
    }
    let pairs: Vec<_> = radials.iter().zip(views.iter().map(|v| v.camera)).collect();
    let (bev, rep) = cartesian_bev(&pairs, grid, z_ref, fusion)?;
    report.merge(&rep);
    report.output_floats = rep.output_floats;
    report.uncovered_cells = rep.uncovered_cells;
    Ok((bev, report))
}

/// Full RC-Sampling: radial features per camera, then Cartesian sampling.
pub fn rc_pipeline<T: Real>(
    views: &[CameraView<'_, T>],
    grid: &BevGridSpec<T>,
    z_ref: T,
    fusion: Fusion,
) -> Result<(FeatureTensor<T>, AllocationReport)> {
    pipeline(views, grid, z_ref, fusion, radial_bev)
}

/// Same as [`rc_pipeline`] with the explicit-frustum radial stage.
pub fn oracle_pipeline<T: Real>(
    views: &[CameraView<'_, T>],
    grid: &BevGridSpec<T>,
    z_ref: T,
    fusion: Fusion,
) -> Result<(FeatureTensor<T>, AllocationReport)> {
    pipeline(views, grid, z_ref, fusion, radial_bev_oracle)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{DepthBinSpec, Point3};

    /// Camera at the origin, height 0, looking along ego `yaw`.
    fn cam(yaw: f64) -> CameraRig<f64> {
        let bins = DepthBinSpec::new(1.0, 1.0, 10).unwrap();
        CameraRig::looking_along_yaw(10.0, 10.0, 5.0, 2.0, Point3::origin(), yaw, 5, 11, bins)
            .unwrap()
    }

    fn radial(
        c: usize,
        d: usize,
        w: usize,
        f: impl Fn(usize, usize, usize) -> f64,
    ) -> FeatureTensor<f64> {
        let mut v = Vec::new();
        for ci in 0..c {
            for di in 0..d {
                for wi in 0..w {
                    v.push(f(ci, di, wi));
                }
            }
        }
        FeatureTensor::new(vec![(Dim::C, c), (Dim::D, d), (Dim::W, w)], v).unwrap()
    }

    #[test]
    fn cell_on_lattice_point_takes_lattice_value() {
        let camera = cam(0.0);
        let r = radial(2, 10, 11, |c, d, w| (100 * c + 10 * d + w) as f64);
        // cell centered at (4.5, 0): depth 4.5 -> d_frac 3, column 5
        let grid = BevGridSpec::new(4.0, -0.5, 1.0, 1, 1).unwrap();
        let (bev, rep) = cartesian_bev(&[(&r, &camera)], &grid, 0.0, Fusion::Sum).unwrap();
        assert_eq!(bev.data(), &[35.0, 135.0]);
        assert_eq!(rep.uncovered_cells, Some(0));
    }

    #[test]
    fn overlapping_cameras_sum_or_average() {
        // two identical cameras see the same cell
        let (a, b) = (cam(0.0), cam(0.0));
        let r1 = radial(1, 10, 11, |_, _, _| 2.0);
        let r2 = radial(1, 10, 11, |_, _, _| 5.0);
        let grid = BevGridSpec::new(4.0, -0.5, 1.0, 1, 1).unwrap();
        let (bev, _) = cartesian_bev(&[(&r1, &a), (&r2, &b)], &grid, 0.0, Fusion::Sum).unwrap();
        assert_eq!(bev.data(), &[7.0]);
        let (bev, _) = cartesian_bev(&[(&r1, &a), (&r2, &b)], &grid, 0.0, Fusion::Mean).unwrap();
        assert_eq!(bev.data(), &[3.5]);
    }

    #[test]
    fn unseen_cells_are_zero_and_counted() {
        let camera = cam(0.0);
        let r = radial(1, 10, 11, |_, _, _| 1.0);
        // second cell lies behind the camera
        let grid = BevGridSpec::new(-5.5, -0.5, 10.0, 2, 1).unwrap();
        let (bev, rep) = cartesian_bev(&[(&r, &camera)], &grid, 0.0, Fusion::Sum).unwrap();
        assert_eq!(bev.data()[0], 0.0);
        assert_eq!(bev.data()[1], 1.0);
        assert_eq!(rep.uncovered_cells, Some(1));
    }

    #[test]
    fn empty_camera_list_is_a_contract_violation() {
        let grid = BevGridSpec::new(0.0, 0.0, 1.0, 1, 1).unwrap();
        assert!(matches!(
            cartesian_bev::<f64>(&[], &grid, 0.0, Fusion::Sum),
            Err(Error::Contract(_))
        ));
    }
}
