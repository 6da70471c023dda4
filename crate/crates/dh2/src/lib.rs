//! Directional H²-matrix approximation of the acoustic single-layer operator
//! at complex frequency.
//!
//! The library assembles the Galerkin matrix of the single-layer potential
//! with kernel `exp(-zeta*r)/(4*pi*r)` on a triangulated closed surface,
//! using piecewise-constant elements. Matrix blocks that are far apart (in a
//! frequency-dependent sense) are replaced by low-rank directional Chebyshev
//! expansions; the remaining near blocks are integrated with singularity-
//! removing quadrature. The result is a compressed operator with fast
//! matrix-vector products whose block structure adapts to the real part of
//! the frequency: the more damping, the fewer far blocks survive.
//!
//! Pipeline:
//!
//! 1. [`geometry`] — triangulated sphere meshes, mesh metrics, panel-pair
//!    quadrature (regularizing coordinate transforms for touching panels).
//! 2. [`clustering`] — binary cluster tree over panels with axis-parallel
//!    bounding boxes.
//! 3. [`directions`] — per-level unit direction sets on the sphere, sized by
//!    the imaginary frequency and the cluster diameters.
//! 4. [`partition`] — admissibility test and block partition of the matrix
//!    index set into near and far blocks.
//! 5. [`chebyshev`] — tensor Chebyshev interpolation on boxes, transfer
//!    matrices between parent and child grids.
//! 6. [`kernel`] — the kernel, its direction-modulated factorization,
//!    expansion-order schedules and an explicit interpolation error bound.
//! 7. [`operator`] — assembly of the compressed operator, matvec, dense
//!    reference assembly and spectral error estimation.
//! 8. [`experiments`] — reproducible parameter-sweep drivers with CSV/JSON
//!    output, used by the command line tool.
//!
//! # Example
//!
//! ```
//! use dh2::geometry::build_sphere_mesh;
//! use dh2::kernel::ComplexFrequency;
//! use dh2::operator::{DH2Operator, OperatorConfig};
//!
//! let mesh = build_sphere_mesh(2).unwrap();          // 128 panels
//! let zeta = ComplexFrequency::new(1.0, 4.0).unwrap();
//! let op = DH2Operator::assemble(&mesh, zeta, &OperatorConfig::default()).unwrap();
//! let x = vec![num_complex::Complex64::new(1.0, 0.0); mesh.num_panels()];
//! let y = op.matvec(&x).unwrap();
//! assert_eq!(y.len(), 128);
//! ```

pub mod chebyshev;
pub mod clustering;
pub mod directions;
pub mod error;
pub mod experiments;
pub mod geometry;
pub mod kernel;
pub mod operator;
pub mod partition;

pub use error::Error;

/// Convenience alias used throughout: double-precision complex scalar.
pub type Cplx = num_complex::Complex64;
