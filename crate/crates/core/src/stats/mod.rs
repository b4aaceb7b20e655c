pub mod bootstrap;
pub mod delta;
pub mod fit;
pub mod heckman;
pub mod local_poly;
pub mod normal;
pub mod ols;
pub mod optimize;
pub mod probit;
pub mod quadrature;

pub use fit::{Design, FitResult};
