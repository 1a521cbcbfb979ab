//! Camera-conditioning geometry for multi-view video generation.
//!
//! * [`camera`]: pinhole intrinsics, world→camera extrinsics, relative poses
//!   and rigs with left/right neighbors.
//! * [`plucker`]: per-pixel Plücker ray embeddings `(d, C × d)` as
//!   `(frames, 6, h, w)` tensors.
//! * [`epipolar`]: fundamental matrices between neighboring views and the
//!   boolean cross-view attention masks derived from epipolar residuals.
//! * [`attention`], [`injection`]: a reference multi-head attention with
//!   masking, and the zero-initialized camera-injection block, both with
//!   analytic gradients ([`gradcheck`] verifies them).
//! * [`metrics`], [`dropout`]: trajectory error metrics weighted by estimator
//!   success, and the seeded condition-dropout schedule.
//! * [`io`]: text pose/trajectory formats and binary tensor/mask files.
//!
//! Numeric code is generic over [`Real`] (`f32` or `f64`); the aliases below
//! name the common instantiations.
//!
//! ```
//! use camgeom::{plucker_grid, CameraPose64, Extrinsics64, Intrinsics64};
//!
//! let k = Intrinsics64::from_params(100.0, 100.0, 32.0, 24.0, 64, 48).unwrap();
//! let pose = CameraPose64::new(k, Extrinsics64::identity(), 0, "front");
//! let t = plucker_grid(&pose, 12, 16).unwrap();
//! assert_eq!(t.shape(), [1, 6, 12, 16]);
//! ```

pub mod attention;
pub mod camera;
pub mod dropout;
pub mod epipolar;
pub mod error;
pub mod gradcheck;
pub mod injection;
pub mod io;
pub mod metrics;
pub mod plucker;
pub mod sampling;
pub mod scalar;
pub mod selfcheck;

pub use nalgebra;

pub use attention::{masked_cross_attention, temporal_attention, AttentionParams, LatentFeature};
pub use camera::{
    normalize_trajectory, relative_pose, relative_pose_camera_to_world, skew, CameraPose,
    Extrinsics, Intrinsics, Neighbors, Rig,
};
pub use dropout::{sample_dropout, DropoutPolicy};
pub use epipolar::{
    epipolar_mask, fundamental_matrix, residual_field, rig_masks, view_mask, EpipolarMask,
    EpipolarResidualField, FundamentalForm, FundamentalMatrix, MaskOptions, ResidualKind, TauMode,
    DEFAULT_MASK_RATIO,
};
pub use error::{Error, Result};
pub use injection::{inject_camera, inject_camera_condition, InjectionBlockWeights, Linear};
pub use metrics::{evaluate, rotation_geodesic, EstimatedTrajectory, TrajectoryEvalReport};
pub use plucker::{
    downsample_pyramid, plucker_grid, plucker_trajectory, PluckerTensor, ResolutionPyramid,
};
pub use scalar::Real;

pub type Intrinsics64 = Intrinsics<f64>;
pub type Intrinsics32 = Intrinsics<f32>;
pub type Extrinsics64 = Extrinsics<f64>;
pub type Extrinsics32 = Extrinsics<f32>;
pub type CameraPose64 = CameraPose<f64>;
pub type CameraPose32 = CameraPose<f32>;
pub type PluckerTensor64 = PluckerTensor<f64>;
pub type PluckerTensor32 = PluckerTensor<f32>;
pub type FundamentalMatrix64 = FundamentalMatrix<f64>;
pub type FundamentalMatrix32 = FundamentalMatrix<f32>;
pub type EpipolarResidualField64 = EpipolarResidualField<f64>;
pub type EpipolarResidualField32 = EpipolarResidualField<f32>;
pub type LatentFeature64 = LatentFeature<f64>;
pub type LatentFeature32 = LatentFeature<f32>;
pub type InjectionBlockWeights64 = InjectionBlockWeights<f64>;
pub type InjectionBlockWeights32 = InjectionBlockWeights<f32>;
pub type EstimatedTrajectory64 = EstimatedTrajectory<f64>;
pub type TrajectoryEvalReport64 = TrajectoryEvalReport<f64>;
