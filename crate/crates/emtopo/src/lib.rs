//! Time-domain electromagnetic solver and topology optimizer for port-fed
//! planar conductor layouts.
//!
//! The crate is organized bottom-up:
//!
//! * [`grid`] / [`scene`] — uniform cubic Yee grid, material maps, design
//!   regions and scene configuration (parsed from structured text).
//! * [`fdtd`] — leapfrog field update with convolutional PML absorbing
//!   boundaries, sources (column probes, stencil injectors, plane-wave
//!   total-field/scattered-field boxes) and recorders.
//! * [`port`] — quasi-TEM line ports: voltage/current stencils, incident and
//!   outgoing wave splitting, port energies.
//! * [`irbc`] — impulse-response boundary conditions: kernel estimation from
//!   recorded port waves and causal convolution termination.
//! * [`adjoint`] — adjoint runs and conductivity sensitivities.
//! * [`filters`] — linear and smooth-morphology density filters with exact
//!   transpose-Jacobian backpropagation, plus the continuation schedule.
//! * [`mma`] — globally convergent method of moving asymptotes for
//!   box-constrained minimization.
//! * [`objective`] / [`optimize`] — port-energy objectives and the outer
//!   optimization driver.
//! * [`io`] — tape/kernel binary formats, CSV writers, grayscale rasters,
//!   manifests.

pub mod adjoint;
pub mod constants;
pub mod error;
pub mod fdtd;
pub mod filters;
pub mod grid;
pub mod io;
pub mod irbc;
pub mod mma;
pub mod objective;
pub mod optimize;
pub mod port;
pub mod scene;
pub mod scenes;
pub mod solve;
pub mod spectrum;
pub mod waveform;

pub use error::{Error, Result};
pub use grid::{DesignRegion, DesignVector, EdgeId, GridSpec, MaterialMap};
pub use scene::Scene;
