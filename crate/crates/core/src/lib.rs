//! Hierarchical matrices (H-matrices) built from an abstract entry evaluator.
//!
//! The pipeline is:
//!
//! 1. [`clustering`]: sort the nodes along a Morton curve and split the sorted
//!    range into a balanced binary cluster tree with tight bounding boxes.
//! 2. [`blocktree`]: pair row and column clusters recursively, stopping at
//!    admissible or small blocks, and flatten the leaves into two task lists.
//! 3. [`hmatrix`]: fill the dense leaves entry by entry and compress the
//!    admissible leaves with adaptive cross approximation ([`lowrank`]).
//! 4. [`parallel`]: split both task lists over `p` workers, assemble the
//!    shards independently and reduce partial matrix-vector products.
//!
//! The [`bem`] module provides the model application, a piecewise-constant
//! Galerkin discretization of the Laplace single-layer operator on the unit
//! cube, and [`solver`] solves the resulting system with conjugate gradients.
//! [`studies`] wires everything together into the convergence and scaling
//! experiments exposed by the command-line tool.

pub mod bem;
pub mod blocktree;
pub mod clustering;
pub mod dense;
pub mod entry;
mod error;
pub mod geometry;
pub mod hmatrix;
pub mod lowrank;
pub mod parallel;
pub mod quadrature;
pub mod solver;
pub mod studies;

pub use bem::{LaplaceSlpEvaluator, QuadratureConfig};
pub use blocktree::{BlockKind, BlockStructure, BlockTree, BlockTreeConfig, LeafBlock, TaskLists};
pub use clustering::{BoundingBox, ClusterId, ClusterTree, MortonCode};
pub use dense::DenseMatrix;
pub use entry::EntryEvaluator;
pub use error::{Error, Result};
pub use geometry::{Point3, QuadElement, SurfaceMesh};
pub use hmatrix::{HMatrix, StorageStats};
pub use lowrank::{AcaConfig, RkMatrix};
pub use parallel::{Shard, WorkerLoad, WorkerPartition};
pub use solver::{CgConfig, CgResult};
