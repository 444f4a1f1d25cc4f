//! Morin singular strata of frames and coframes on implicitly defined
//! manifolds.

pub mod analysis;
pub mod expr;
pub mod linalg;
pub mod model;
pub mod solver;
