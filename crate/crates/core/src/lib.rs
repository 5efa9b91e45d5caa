//! Memory-kernel master equations for random-unitary (Pauli-diagonal) qubit
//! evolution.
//!
//! A kernel is parameterized by a waiting function `f(t)` (equivalently
//! `W(s) = 1/f̃(s)`) and three anisotropy parameters `a_k`. The crate certifies
//! such kernels, solves the non-local master equation by three independent
//! routes (closed form, direct Volterra integration, Laplace-domain inversion)
//! and classifies the resulting dynamics (CPTP, CP-divisible, BLP-Markovian).
//!
//! Data-parallel loops (time grids, probe sweeps, per-axis solves) run on rayon
//! when the default `parallel` feature is enabled; see [`exec`] for the
//! sequential fallback.

pub mod error;
pub mod evolution;
pub mod exec;
pub mod kernel_families;
pub mod laplace_tools;
pub mod markovianity;
pub mod pauli_channel;
pub mod poly;
pub mod verdict;

mod dd;

pub use error::{Error, Result};
pub use evolution::{TimeGrid, TrajectorySet};
pub use kernel_families::{AnisotropyParameters, DeltaPlusRegular, KernelSpec, WaitingFunction};
pub use pauli_channel::{BlochVector, PauliEigenvalues, ProbabilityVector};
pub use verdict::Verdict;
