//! Exact formal Fourier-Laplace transforms of meromorphic connections on the
//! projective line: coefficient field, formal series, microlocal operators,
//! formal decomposition of germs, local transform rules and the global driver.

pub mod scalar;
pub mod series;
pub mod matrix;
pub mod micro;
pub mod germ;
pub mod local_fl;
pub mod driver;
pub mod catalog;
pub mod properties;
pub mod cli;
