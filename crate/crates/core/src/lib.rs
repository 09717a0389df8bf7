//! Geometry-aware bird's-eye-view feature transforms and depth supervision.
//!
//! The crate is generic over the scalar type ([`Real`], implemented for
//! `f32` and `f64`); the aliases below fix the common choices.

pub mod bench;
pub mod error;
pub mod geometry;
pub mod import;
pub mod io;
pub mod labels;
pub mod loss;
pub mod render;
pub mod scalar;
pub mod scene;
pub mod synth;
pub mod tensor;
pub mod transform;

pub use error::{Error, Result};
pub use geometry::{CameraRig, DepthBinSpec, OrientedBox, Point3};
pub use labels::{LabelState, LabelVolume};
pub use scalar::{DType, Real};
pub use scene::Scene;
pub use tensor::{Dim, FeatureTensor};
pub use transform::{AllocationReport, BevGridSpec};

pub type Camera = CameraRig<f64>;
pub type Camera32 = CameraRig<f32>;
pub type Box3 = OrientedBox<f64>;
pub type Tensor = FeatureTensor<f64>;
pub type Tensor32 = FeatureTensor<f32>;
pub type Scene64 = Scene<f64>;
pub type Grid = BevGridSpec<f64>;
