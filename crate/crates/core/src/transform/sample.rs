use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::tensor::{Dim, FeatureTensor};

/// The four lattice neighbours of a fractional `(row, col)` coordinate and
/// their interpolation weights, ordered `(r0,c0), (r0,c1), (r1,c0), (r1,c1)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BilinearTap<T> {
    pub rows: [usize; 2],
    pub cols: [usize; 2],
    pub weights: [T; 4],
}

impl<T: Real> BilinearTap<T> {
    /// Flat offsets into a `rows x cols` plane with row stride `stride`.
    #[inline]
    pub fn offsets(&self, stride: usize) -> [usize; 4] {
        [
            self.rows[0] * stride + self.cols[0],
            self.rows[0] * stride + self.cols[1],
            self.rows[1] * stride + self.cols[0],
            self.rows[1] * stride + self.cols[1],
        ]
    }

    #[inline]
    pub fn apply(&self, plane: &[T], stride: usize) -> T {
        let o = self.offsets(stride);
        plane[o[0]] * self.weights[0]
            + plane[o[1]] * self.weights[1]
            + plane[o[2]] * self.weights[2]
            + plane[o[3]] * self.weights[3]
    }
}

/// Interpolation weights for `(r, c)` inside a `n_rows x n_cols` lattice.
/// Coordinates must already lie in `[0, n-1]`.
#[inline]
pub fn bilinear_weights<T: Real>(r: T, c: T, n_rows: usize, n_cols: usize) -> BilinearTap<T> {
    let r0f = r.floor();
    let c0f = c.floor();
    let r0 = r0f.to_usize().unwrap_or(0).min(n_rows - 1);
    let c0 = c0f.to_usize().unwrap_or(0).min(n_cols - 1);
    let r1 = (r0 + 1).min(n_rows - 1);
    let c1 = (c0 + 1).min(n_cols - 1);
    let fr = r - r0f;
    let fc = c - c0f;
    let one = T::one();
    BilinearTap {
        rows: [r0, r1],
        cols: [c0, c1],
        weights: [
            (one - fr) * (one - fc),
            (one - fr) * fc,
            fr * (one - fc),
            fr * fc,
        ],
    }
}

/// Samples every channel of a `[C, D, W]` radial tensor at `(d_frac, w_frac)`.
pub fn bilinear_sample<T: Real>(grid: &FeatureTensor<T>, d_frac: T, w_frac: T) -> Result<Vec<T>> {
    let [c, d, w] = grid.expect_layout([Dim::C, Dim::D, Dim::W])?;
    let d_max = T::from_usize_(d.saturating_sub(1));
    let w_max = T::from_usize_(w.saturating_sub(1));
    if !(d_frac >= T::zero() && d_frac <= d_max && w_frac >= T::zero() && w_frac <= w_max) {
        return Err(Error::contract(format!(
            "sample ({d_frac}, {w_frac}) outside [0, {d_max}] x [0, {w_max}]"
        )));
    }
    let tap = bilinear_weights(d_frac, w_frac, d, w);
    let plane = d * w;
    Ok((0..c)
        .map(|ci| tap.apply(&grid.data()[ci * plane..(ci + 1) * plane], w))
        .collect())
}
