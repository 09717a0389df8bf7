use std::time::Instant;

use rayon::prelude::*;

use super::AllocationReport;
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::tensor::{Dim, FeatureTensor};

fn check_inputs<T: Real>(
    img: &FeatureTensor<T>,
    depth: &FeatureTensor<T>,
) -> Result<(usize, usize, usize, usize)> {
    let [c, h, w] = img.expect_layout([Dim::C, Dim::H, Dim::W])?;
    let [d, hd, wd] = depth.expect_layout([Dim::D, Dim::H, Dim::W])?;
    if (h, w) != (hd, wd) {
        return Err(Error::contract(format!(
            "image features are {h}x{w} but depth scores are {hd}x{wd}"
        )));
    }
    if depth.data().iter().any(|&v| v < T::zero()) {
        return Err(Error::contract("depth scores must be non-negative"));
    }
    Ok((c, d, h, w))
}

/// Radial BEV features `[C, D, W]`: for every column `w` the product of the
/// `C x H` image slice with the transposed `D x H` depth slice.
///
/// The frustum `[C, D, H, W]` is never formed. Each slice accumulates over
/// `h` in ascending order.
pub fn radial_bev<T: Real>(
    img: &FeatureTensor<T>,
    depth: &FeatureTensor<T>,
) -> Result<(FeatureTensor<T>, AllocationReport)> {
    let (c, d, h, w) = check_inputs(img, depth)?;
    let start = Instant::now();
    let (a, b) = (img.data(), depth.data());

    // [W][C x D] slice products
    let slices: Vec<Vec<T>> = (0..w)
        .into_par_iter()
        .map(|wi| {
            let mut img_w = vec![T::zero(); c * h];
            for ci in 0..c {
                for hi in 0..h {
                    img_w[ci * h + hi] = a[(ci * h + hi) * w + wi];
                }
            }
            let mut depth_w = vec![T::zero(); d * h];
            for di in 0..d {
                for hi in 0..h {
                    depth_w[di * h + hi] = b[(di * h + hi) * w + wi];
                }
            }
            let mut out = vec![T::zero(); c * d];
            for ci in 0..c {
                let row = &img_w[ci * h..(ci + 1) * h];
                for di in 0..d {
                    let col = &depth_w[di * h..(di + 1) * h];
                    let mut acc = T::zero();
                    for hi in 0..h {
                        acc += row[hi] * col[hi];
                    }
                    out[ci * d + di] = acc;
                }
            }
            out
        })
        .collect();

    let mut data = vec![T::zero(); c * d * w];
    for (wi, slice) in slices.iter().enumerate() {
        for (k, &v) in slice.iter().enumerate() {
            data[k * w + wi] = v;
        }
    }
    let report = AllocationReport {
        intermediate_floats: (c * d * w) as u64,
        workspace_floats: ((c + d) * h) as u64,
        output_floats: (c * d * w) as u64,
        wall_time: start.elapsed().as_secs_f64(),
        uncovered_cells: None,
    };
    Ok((
        FeatureTensor::from_parts(vec![(Dim::C, c), (Dim::D, d), (Dim::W, w)], data),
        report,
    ))
}

/// Radial BEV features via the explicit frustum `F[c,d,h,w] = img[c,h,w] *
/// depth[d,h,w]`, summed over ascending `h`.
pub fn radial_bev_oracle<T: Real>(
    img: &FeatureTensor<T>,
    depth: &FeatureTensor<T>,
) -> Result<(FeatureTensor<T>, AllocationReport)> {
    let (c, d, h, w) = check_inputs(img, depth)?;
    let start = Instant::now();
    let (a, b) = (img.data(), depth.data());
    let chw = d * h * w;
    let mut frustum = vec![T::zero(); c * chw];
    frustum
        .par_chunks_mut(chw)
        .enumerate()
        .for_each(|(ci, block)| {
            for di in 0..d {
                for hi in 0..h {
                    for wi in 0..w {
                        block[(di * h + hi) * w + wi] =
                            a[(ci * h + hi) * w + wi] * b[(di * h + hi) * w + wi];
                    }
                }
            }
        });
    let mut data = vec![T::zero(); c * d * w];
    data.par_chunks_mut(d * w)
        .enumerate()
        .for_each(|(ci, out)| {
            let block = &frustum[ci * chw..(ci + 1) * chw];
            for di in 0..d {
                for wi in 0..w {
                    let mut acc = T::zero();
                    for hi in 0..h {
                        acc += block[(di * h + hi) * w + wi];
                    }
                    out[di * w + wi] = acc;
                }
            }
        });
    drop(frustum);
    let report = AllocationReport {
        intermediate_floats: (c * d * h * w) as u64,
        workspace_floats: 0,
        output_floats: (c * d * w) as u64,
        wall_time: start.elapsed().as_secs_f64(),
        uncovered_cells: None,
    };
    Ok((
        FeatureTensor::from_parts(vec![(Dim::C, c), (Dim::D, d), (Dim::W, w)], data),
        report,
    ))
}

/// Bilinear 2x upsampling of `[D, H, W]` depth scores to `[D, 2H, 2W]`,
/// half-pixel aligned with edge clamping. Stands in for the learned
/// enlargement that pairs denser depth scores with a larger BEV grid.
pub fn upsample_depth_scores_2x<T: Real>(depth: &FeatureTensor<T>) -> Result<FeatureTensor<T>> {
    let [d, h, w] = depth.expect_layout([Dim::D, Dim::H, Dim::W])?;
    let (h2, w2) = (2 * h, 2 * w);
    let src = |dst: usize, n: usize| -> (usize, usize, T) {
        let s = ((T::from_usize_(dst) + T::lit(0.5)) * T::lit(0.5) - T::lit(0.5))
            .max(T::zero())
            .min(T::from_usize_(n - 1));
        let i0 = s.floor().to_usize().unwrap_or(0);
        let i1 = (i0 + 1).min(n - 1);
        (i0, i1, s - T::from_usize_(i0))
    };
    let rows: Vec<_> = (0..h2).map(|i| src(i, h)).collect();
    let cols: Vec<_> = (0..w2).map(|j| src(j, w)).collect();
    let mut out = vec![T::zero(); d * h2 * w2];
    let one = T::one();
    out.par_chunks_mut(h2 * w2)
        .enumerate()
        .for_each(|(di, plane)| {
            let p = &depth.data()[di * h * w..(di + 1) * h * w];
            for (i, &(r0, r1, fr)) in rows.iter().enumerate() {
                for (j, &(c0, c1, fc)) in cols.iter().enumerate() {
                    plane[i * w2 + j] = p[r0 * w + c0] * (one - fr) * (one - fc)
                        + p[r0 * w + c1] * (one - fr) * fc
                        + p[r1 * w + c0] * fr * (one - fc)
                        + p[r1 * w + c1] * fr * fc;
                }
            }
        });
    Ok(FeatureTensor::from_parts(
        vec![(Dim::D, d), (Dim::H, h2), (Dim::W, w2)],
        out,
    ))
}
