//! Energy-based local-to-nonlocal (LtN) coupling and interface identification
//! on 2D triangle meshes.
//!
//! The library solves a scalar diffusion problem on a domain Ω split by an
//! interface Γ into a local subdomain Ω_l (classical Laplace operator) and a
//! nonlocal subdomain Ω_nl (integral operator with a finite interaction
//! horizon δ), coupled through a single energy functional rather than through
//! transmission conditions. On top of the forward solver it implements the
//! adjoint-based shape derivative of a tracking-type objective and a
//! Hilbert-space L-BFGS loop that moves Γ by deforming the mesh.
//!
//! Module map:
//!
//! - [`mesh`] — labeled triangle meshes, interface extraction, interaction
//!   pairs, deformation, interpolation ([`samples`] builds structured
//!   fixtures).
//! - [`kernels`] — interaction kernels γ(x, y) and their validation.
//! - [`quad`] — triangle quadrature rules.
//! - [`dofs`] — the broken P1 space (continuous per side, discontinuous
//!   across Γ) and fields on it.
//! - [`sparse`] — triplet/CSR plumbing and symmetric solvers.
//! - [`assembly_local`] / [`assembly_nonlocal`] — element-wise and
//!   pair-wise operator assembly.
//! - [`coupling`] — the monolithic LtN system, state/adjoint solves, Schwarz
//!   iterations and the discrete energy.
//! - [`shape`] — objective, shape derivative, descent-direction metric
//!   (μ-weighted elasticity) and the Riesz gradient.
//! - [`optimizer`] — L-BFGS with Armijo backtracking on mesh deformations,
//!   checkpointing.
//! - [`config`] / [`io`] — run configuration and file formats (MSH 2.2,
//!   legacy VTK, CSV, flat binary fields).

pub mod assembly_local;
pub mod assembly_nonlocal;
pub mod config;
pub mod coupling;
pub mod dofs;
pub mod fields;
pub mod geometry;
pub mod io;
pub mod kernels;
pub mod mesh;
pub mod optimizer;
pub mod quad;
pub mod samples;
pub mod shape;
pub mod sparse;

pub use mesh::{LabeledMesh, Label};
