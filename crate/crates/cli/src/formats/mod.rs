//! Text formats: feeder descriptions, fleet tables, market traces,
//! scenario configs, and the run outputs.

pub mod feeder;
pub mod fleet;
pub mod output;
pub mod scenario;
pub mod trace;

pub use feeder::parse_feeder;
pub use fleet::{parse_fleet, FleetSpec};
pub use output::{write_dual_trace, write_metrics, write_trajectory};
pub use scenario::parse_scenario;
pub use trace::{parse_trace, write_trace};
