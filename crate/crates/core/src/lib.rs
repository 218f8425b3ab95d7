//! Quadratic interior-penalty discontinuous Galerkin methods for
//! frictionless unilateral contact in linear elasticity on the unit square,
//! with a pointwise a posteriori error estimator and adaptive refinement.

pub mod afem;
pub mod assembly;
pub mod contact;
pub mod estimator;
pub mod linalg;
pub mod mesh;
pub mod problems;
pub mod quadrature;
pub mod space;
