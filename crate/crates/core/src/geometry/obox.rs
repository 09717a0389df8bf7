use serde::{Deserialize, Serialize};

use super::Point3;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Yaw-only oriented box. `size` is the full extent along the box-local
/// x (length), y (width) and z (height) axes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrientedBox<T> {
    pub center: Point3<T>,
    pub size: Point3<T>,
    pub yaw: T,
}

/// Distances from an interior point to the six faces, box-local frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FaceDistances<T> {
    pub front: T,
    pub back: T,
    pub left: T,
    pub right: T,
    pub up: T,
    pub down: T,
}

impl<T: Real> FaceDistances<T> {
    pub fn to_array(self) -> [T; 6] {
        [
            self.front, self.back, self.left, self.right, self.up, self.down,
        ]
    }
}

impl<T: Real> OrientedBox<T> {
    pub fn new(center: Point3<T>, size: Point3<T>, yaw: T) -> Result<Self> {
        let b = Self { center, size, yaw };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        let z = T::zero();
        if !(self.size.x > z && self.size.y > z && self.size.z > z) {
            return Err(Error::config(format!(
                "box size components must be > 0, got {:?}",
                self.size
            )));
        }
        if !self.center.is_finite() || !self.size.is_finite() || !self.yaw.is_finite() {
            return Err(Error::config("box parameters must be finite"));
        }
        Ok(())
    }

    #[inline]
    pub fn half_extents(&self) -> Point3<T> {
        self.size * T::lit(0.5)
    }

    /// Rotates a free vector from the ego frame into the box frame.
    #[inline]
    pub fn rotate_to_local(&self, v: &Point3<T>) -> Point3<T> {
        let (s, c) = self.yaw.sin_cos();
        Point3::new(c * v.x + s * v.y, -s * v.x + c * v.y, v.z)
    }

    /// Box-local coordinates of an ego-frame point.
    #[inline]
    pub fn to_local(&self, p: &Point3<T>) -> Point3<T> {
        self.rotate_to_local(&(*p - self.center))
    }

    /// Boundary-inclusive containment test.
    #[inline]
    pub fn contains(&self, p: &Point3<T>) -> bool {
        let l = self.to_local(p);
        let h = self.half_extents();
        l.x.abs() <= h.x && l.y.abs() <= h.y && l.z.abs() <= h.z
    }

    pub fn face_distances(&self, p: &Point3<T>) -> Result<FaceDistances<T>> {
        if !self.contains(p) {
            return Err(Error::contract(
                "face_distances requires a point inside the box",
            ));
        }
        Ok(self.face_distances_local(&self.to_local(p)))
    }

    #[inline]
    pub(crate) fn face_distances_local(&self, l: &Point3<T>) -> FaceDistances<T> {
        let h = self.half_extents();
        FaceDistances {
            front: h.x - l.x,
            back: h.x + l.x,
            left: h.y - l.y,
            right: h.y + l.y,
            up: h.z - l.z,
            down: h.z + l.z,
        }
    }

    /// Slab-method intersection of the ray `origin + t * dir`, `t >= 0`.
    /// Returns `(t_entry, t_exit)` with `t_entry` clamped to 0 for rays that
    /// start inside the box.
    pub fn ray_intersect(&self, origin: &Point3<T>, dir: &Point3<T>) -> Option<(T, T)> {
        let o = self.to_local(origin).to_array();
        let d = self.rotate_to_local(dir).to_array();
        let h = self.half_extents().to_array();
        let mut t_lo = T::neg_infinity();
        let mut t_hi = T::infinity();
        for i in 0..3 {
            if d[i] == T::zero() {
                if o[i].abs() > h[i] {
                    return None;
                }
                continue;
            }
            let inv = T::one() / d[i];
            let (mut t0, mut t1) = ((-h[i] - o[i]) * inv, (h[i] - o[i]) * inv);
            if t0 > t1 {
                std::mem::swap(&mut t0, &mut t1);
            }
            t_lo = t_lo.max(t0);
            t_hi = t_hi.min(t1);
        }
        let t_entry = t_lo.max(T::zero());
        if t_hi < t_entry {
            None
        } else {
            Some((t_entry, t_hi))
        }
    }

    pub fn cast<U: Real>(&self) -> OrientedBox<U> {
        OrientedBox {
            center: self.center.cast(),
            size: self.size.cast(),
            yaw: U::lit(self.yaw.to_f64_()),
        }
    }
}
