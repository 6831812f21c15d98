//! Relative pose estimation for rolling-shutter cameras aided by inertial
//! measurements.
//!
//! The crate estimates the rotation and up-to-scale translation between two
//! rolling-shutter frames from point correspondences, using the gravity
//! direction and/or angular velocity measured by an IMU. Five minimal
//! solvers are provided (see [`AlgorithmKind`]); each builds a homogeneous
//! linear system `A(R) x = 0` in the translation/velocity unknowns, finds the
//! rotation that makes `A` rank deficient, and reads `x` off the nullspace.
//!
//! On top of the minimal solvers sit a seeded RANSAC loop ([`robust`]), a
//! Sampson-error refinement ([`refine`]), a synthetic scene generator
//! ([`sim`]) and the benchmark harness used by the `rspose` binary
//! ([`bench`]).

pub mod bench;
pub mod coeffs;
pub mod error;
pub mod geometry;
pub mod io;
pub mod lm;
pub mod refine;
pub mod robust;
pub mod sim;
pub mod solvers;

pub use coeffs::{AlgorithmKind, CoefficientMatrix, RotationHypothesis};
pub use error::{Error, Result};
pub use geometry::{
    CameraIntrinsics, Correspondence, InertialMeasurement, Mat3, NormalizedPoint,
    RelativePoseEstimate, Rotation, Vec3,
};
pub use refine::RefineConfig;
pub use robust::{RansacConfig, RansacResult};
pub use solvers::{SolverConfig, SolverOutput};
