//! Construction of the approximating family of eigenvalue maps.

pub mod coefficients;
pub mod family;
pub mod pipeline;
pub mod profile;
pub mod schedule;
pub mod select;

pub use coefficients::{build_coefficients, concentrated_snapshot, snap_endpoints, CoefficientField};
pub use family::{assemble_family, EigenvalueFamily, MapFamily, MatrixFamily, Selection};
pub use pipeline::{
    approximate, choose_delta, project, ApproxOptions, Approximation, BuildReport, DeltaInputs, Mode,
    DEFAULT_CAP_DENOMINATOR, DEFAULT_CAP_N1,
};
pub use profile::{build_profile, t_of, End, ScaledEnds, TransportProfile};
pub use schedule::{interleave_coefficients, same_schedule, BlockSchedule};
pub use select::{
    exclusion_formulas, select_indices_cross, select_indices_same, CrossCase, CrossSelection, Designation,
    ExclusionTallies, IndexSet,
};
