//! Concentrating quasimodes on spherical and flat compact space forms.

pub mod geometry;
pub mod halton;
pub mod linalg;
pub mod sum;
pub mod sphere_mode;
pub mod bump;
pub mod flat_mode;
pub mod norm;
