//! Explicit short paths from the identity to a shear target.

pub mod affine;
pub mod correction;
pub mod assemble;
mod params;
pub mod profiles;
pub mod squeeze;
pub mod squeezed;
mod strips;
pub mod transport;
mod target;

pub use params::{admissibility, default_params, moderate_params, Admissibility, ConstructionParams, Resolutions, Schedule, Strategy, ADMISSIBILITY_RATIO};
pub use strips::{lattice_order, split_strips, split_strips_2d, split_strips_nd, Lattice, PieceBounds, StripDecomposition, StripPiece};
pub use target::{shear_map, state_grid, AnalyticForm, TargetSpec, DEFAULT_SLOPE};
pub use assemble::{assemble_full_path, build_run, step_of, target_map, ConstructionRun, CostBreakdown, PieceRun, Pricing};
