//! Grid diffeomorphisms, velocity paths, flows and path pricing.

mod cost;
mod flow;
mod map;
mod path;
mod snapshot;

pub use cost::{path_cost, path_cost_many, segment_cost, segment_costs, CostReport, SegmentCost};
pub use flow::{advect, advect_segment, advect_until, flow, flow_from, flow_until};
pub use map::{compose, invert, GridDiffeo};
pub(crate) use map::invert_row;
pub use path::{concat, reverse, uniform_nodes, FnSource, SampledSource, Segment, Stepping, VelocityPath, VelocitySource};
pub use snapshot::{read_snapshot, write_snapshot};
