//! Small fixed-size and dense symmetric linear algebra used throughout the crate.

pub mod dense;
pub mod jacobi;
pub mod small;
pub mod sym3;

pub use dense::{DenseEigen, SymMatrix};
pub use jacobi::{eigh_small, SmallEigen};
pub use small::{Mat, Mat3, Mat4, Vec3, Vec4, Vector};
pub use sym3::eigvals_sym3;
