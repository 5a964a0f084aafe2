//! Numerical building blocks: adaptive quadrature, Bessel functions and
//! small dense least squares.

pub mod bessel;
pub mod lsq;
pub mod quad;
