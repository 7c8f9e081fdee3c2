//! Covering data for spherical and flat space forms, and the group searches
//! the quasimode constructions need.

mod flat;
mod sphere;

pub use flat::{
    align_lattice, axis_at, choose_axis_line, geodesic_period, AxisChoice, AxisOptions, CosetRep,
    ExcludedLine, FlatQuotient, GeodesicPeriod, RigidMotion,
};
pub use sphere::{
    base_point_avoiding, choose_base_point_sphere, equator_stabilizer, BasePoint, GreatCircle,
    EquatorStabilizer, SphereQuotient, StabilizerElement,
};

use thiserror::Error;

/// Default matrix tolerance for group validation.
pub const DEFAULT_TOL: f64 = 1e-10;
/// Default cap on the size of a generated group.
pub const DEFAULT_MAX_ORDER: usize = 10_000;
/// Default number of candidates tried by the base-point and axis searches.
pub const DEFAULT_MAX_TRIALS: u64 = 100_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("generator {index} is not orthogonal (defect {defect:.3e})")]
    NotOrthogonal { index: usize, defect: f64 },
    #[error("group closure not reached within {cap} elements")]
    ClosureNotReached { cap: usize },
    #[error("action is not free: {0}")]
    NotFreeAction(String),
    #[error("lattice basis is singular (condition number {condition:.3e})")]
    SingularBasis { condition: f64 },
    #[error("generator {index} does not preserve the lattice (residual {residual:.3e})")]
    LatticeNotPreserved { index: usize, residual: f64 },
    #[error("group contains a translation outside the declared lattice: {0:?}")]
    TranslationOutsideLattice(Vec<f64>),
    #[error("stabilizer element {index} of the reference circle is not a block rotation: {reason}")]
    StabilizerNotCyclicRotations { index: usize, reason: String },
    #[error("no admissible base point found (best clearance {best:.3e})")]
    NoBasePoint { best: f64 },
    #[error("axis search exhausted after {trials} candidates")]
    SearchExhausted { trials: u64 },
    #[error("no closing element found for the axis geodesic")]
    NoPeriodFound,
    #[error("lattice is not aligned: last basis column must be (0, .., 0, s) with s > 0")]
    NotAligned,
}
