//! Green and Martin kernels for transient random walks on finitely generated
//! groups, Monte Carlo harmonic measures, and numerical checks of conformality
//! and KMS conditions for measures on the Martin boundary.

pub mod error;
pub mod group;

pub use error::{Error, Result};
pub use group::{Ball, GroupElement, GroupKind, GroupModel};
pub mod boundary;
pub mod conformal;
pub mod feasibility;
pub mod kernel;
pub mod lamplighter;
pub mod measure;
pub mod sampler;
pub mod walk;

pub use kernel::KernelTable;
pub use walk::WalkSpec;
