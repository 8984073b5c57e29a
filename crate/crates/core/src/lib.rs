//! Fast corrective updates for static output feedback under known
//! state-matrix perturbations, with distance-to-instability certificates and
//! guaranteed stability region characterization.
//!
//! The crate answers three questions about a linear system `(A, B, C)` that
//! is stabilized by a nominal static output feedback gain and then hit by a
//! known additive state-matrix perturbation `delta`:
//!
//! 1. **What is the best cheap gain correction?** [`update`] computes the
//!    closed-form least-squares update `G* = -B^+ delta C^+` (three
//!    equivalent routes) and the residual cost `J*` that no static update
//!    can remove.
//! 2. **Is the corrected loop certifiably stable?** [`mdrp`] bounds and
//!    estimates the distance from the nominal closed loop to the nearest
//!    destabilizing real perturbation; `sqrt(J*)` below that distance is a
//!    sufficient certificate.
//! 3. **Which perturbations are covered in advance?** [`perturb`] puts
//!    perturbations into spherical-style coordinates aligned with the
//!    cancellable subspace, and [`region`] / [`scan`] characterize and
//!    measure the guaranteed stability region in those coordinates.
//!
//! [`sim`] integrates closed-loop trajectories for before/after comparisons,
//! and [`io`] reads and writes the JSON model files shared with the
//! command-line front end.

pub mod error;
pub mod io;
pub mod linalg;
pub mod mdrp;
pub mod perturb;
pub mod region;
pub mod scan;
pub mod sim;
pub mod statespace;
pub mod streams;
pub mod update;

pub mod quad;

pub use error::{Error, MatrixId, Result};
