//! Simulation toolkit for selective process tomography of continuous-variable
//! quantum channels.
//!
//! A channel acting on a single bosonic mode is described by its position-basis
//! process matrix `E(x, y; w, z)`. This crate simulates a selective measurement
//! protocol that estimates individual values of `E` without reconstructing the
//! full channel: an ancilla qubit controls squeezed/translated probe states, a
//! narrow position detector is read out together with the qubit, and the channel
//! element is recovered from the two Pauli readout channels.
//!
//! Modules:
//! - [`quadrature`]: tensor-product Gauss-Legendre integration over boxes.
//! - [`probe`]: Gaussian probe states, Hermite functions, the two-mode
//!   correlation kernel used for Choi-state constructions.
//! - [`kernels`]: built-in process kernels and a small expression language for
//!   user-defined ones.
//! - [`tomography`]: expectation values, the element estimator, region
//!   refinement, shot-noise simulation and mesh scans.
//! - [`choi`]: discretized Choi-state grids, trace distance and fidelity
//!   bounds for comparing a reconstruction against a reference channel.

pub mod choi;
pub mod kernels;
pub mod probe;
pub mod quadrature;
pub mod tomography;
