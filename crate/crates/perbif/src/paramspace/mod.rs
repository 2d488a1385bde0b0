//! Parameter-space machinery: slices, grid fields, the discrete bifurcation
//! measure, locus roots in one-dimensional slices, and equidistribution
//! diagnostics.

pub mod equidist;
pub mod field;
pub mod roots;
pub mod slice;

pub use equidist::{equidist_report, equidist_reports, EquidistOptions, EquidistReport};
pub use field::{
    activity_field, bifurcation_measure, field_level_potential, field_lyapunov,
    membership_field, FieldKind, GridField, LyapunovFieldEstimator,
};
pub use roots::{pern_roots_in_slice, PernOptions, PernRoot, PernRootsReport};
pub use slice::SliceSpec;
