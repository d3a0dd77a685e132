//! Dense linear algebra, seeded randomness and statistical primitives.

pub mod linalg;
pub mod rng;
pub mod stats;

pub use linalg::{
    cholesky_logdet_solve, conjugate_gradient, matrix, CgSolution, Cholesky, Matrix, Vector,
};
pub use rng::SeededRng;
pub use stats::{gaussian_kde, pearson, spearman};
