//! Dense row-major tensors with named dimensions.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Dim {
    C,
    D,
    H,
    W,
    X,
    Y,
}

impl fmt::Display for Dim {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Dim::C => "C",
            Dim::D => "D",
            Dim::H => "H",
            Dim::W => "W",
            Dim::X => "X",
            Dim::Y => "Y",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureTensor<T> {
    dims: Vec<(Dim, usize)>,
    data: Vec<T>,
}

impl<T: Real> FeatureTensor<T> {
    pub fn new(dims: Vec<(Dim, usize)>, data: Vec<T>) -> Result<Self> {
        let numel: usize = dims.iter().map(|&(_, n)| n).product();
        if numel != data.len() {
            return Err(Error::contract(format!(
                "tensor {} expects {numel} elements, got {}",
                fmt_dims(&dims),
                data.len()
            )));
        }
        for (i, (a, _)) in dims.iter().enumerate() {
            if dims[..i].iter().any(|(b, _)| a == b) {
                return Err(Error::contract(format!("duplicate dimension {a}")));
            }
        }
        if let Some(bad) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::contract(format!(
                "non-finite value at flat index {bad}"
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: Vec<(Dim, usize)>) -> Self {
        let numel = dims.iter().map(|&(_, n)| n).product();
        Self {
            dims,
            data: vec![T::zero(); numel],
        }
    }

    /// Skips the finiteness scan; callers guarantee finite data of the right length.
    pub(crate) fn from_parts(dims: Vec<(Dim, usize)>, data: Vec<T>) -> Self {
        debug_assert_eq!(dims.iter().map(|&(_, n)| n).product::<usize>(), data.len());
        Self { dims, data }
    }

    pub fn dims(&self) -> &[(Dim, usize)] {
        &self.dims
    }

    pub fn shape(&self) -> Vec<usize> {
        self.dims.iter().map(|&(_, n)| n).collect()
    }

    pub fn names(&self) -> Vec<Dim> {
        self.dims.iter().map(|&(d, _)| d).collect()
    }

    pub fn extent(&self, dim: Dim) -> Option<usize> {
        self.dims.iter().find(|(d, _)| *d == dim).map(|&(_, n)| n)
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Checks the dimension names and returns the extents in order.
    pub fn expect_layout<const N: usize>(&self, names: [Dim; N]) -> Result<[usize; N]> {
        if self.dims.len() != N || self.dims.iter().zip(names.iter()).any(|((a, _), b)| a != b) {
            return Err(Error::contract(format!(
                "expected layout {}, got {}",
                names
                    .iter()
                    .map(|d| d.to_string())
                    .collect::<Vec<_>>()
                    .join("x"),
                fmt_dims(&self.dims)
            )));
        }
        let mut out = [0; N];
        for (o, &(_, n)) in out.iter_mut().zip(&self.dims) {
            *o = n;
        }
        Ok(out)
    }

    pub fn scale(&self, s: T) -> Self {
        Self::from_parts(
            self.dims.clone(),
            self.data.iter().map(|&v| v * s).collect(),
        )
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    pub fn cast<U: Real>(&self) -> FeatureTensor<U> {
        FeatureTensor::from_parts(
            self.dims.clone(),
            self.data.iter().map(|v| U::lit(v.to_f64_())).collect(),
        )
    }

    /// `max |a - b| / max(max |b|, tiny)` over matching layouts.
    pub fn max_rel_diff(&self, reference: &Self) -> Result<T> {
        if self.dims != reference.dims {
            return Err(Error::contract(format!(
                "layout mismatch {} vs {}",
                fmt_dims(&self.dims),
                fmt_dims(&reference.dims)
            )));
        }
        let diff = self
            .data
            .iter()
            .zip(&reference.data)
            .fold(T::zero(), |m, (a, b)| m.max((*a - *b).abs()));
        Ok(diff / reference.max_abs().max(T::min_positive_value()))
    }
}

pub(crate) fn fmt_dims(dims: &[(Dim, usize)]) -> String {
    let parts: Vec<String> = dims.iter().map(|(d, n)| format!("{d}={n}")).collect();
    format!("[{}]", parts.join(", "))
}
