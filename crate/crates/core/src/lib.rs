pub mod acquisition;
pub mod config;
pub mod continuation;
pub mod error;
pub mod experiment;
pub mod grid;
pub mod helmholtz;
pub mod io;
pub mod scalar;
pub mod solver;
pub mod sparse;
pub mod tv;
pub mod wri;

pub use num_complex::Complex64;

pub type RealMatrix = sparse::CsrMatrix<f64>;
pub type ComplexMatrix = sparse::CsrMatrix<Complex64>;
pub type ComplexFactorization = solver::Factorization<Complex64>;
pub type RealFactorization = solver::Factorization<f64>;
