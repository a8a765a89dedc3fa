//! Shipped data: two synthetic radial feeders with matching fleets and the
//! benchmark scenario configurations. Embedded from `data/` at the
//! workspace root so tests and the CLI agree on the bytes.

use gridstor_core::grid::Feeder;
use gridstor_core::market::Scenario;

use crate::formats::scenario::ScenarioSpec;
use crate::formats::{parse_feeder, parse_fleet, parse_scenario, FleetSpec};

pub const FEEDER12: &str = include_str!("../../../data/feeder12.txt");
pub const FEEDER33: &str = include_str!("../../../data/feeder33.txt");
pub const FLEET12: &str = include_str!("../../../data/fleet12.csv");
pub const FLEET33: &str = include_str!("../../../data/fleet33.csv");
pub const SCENARIO1: &str = include_str!("../../../data/scenario1.cfg");
pub const RANDOM33: &str = include_str!("../../../data/random33.cfg");

pub fn feeder12() -> Feeder {
    parse_feeder(FEEDER12).expect("shipped feeder12 parses")
}

pub fn feeder33() -> Feeder {
    parse_feeder(FEEDER33).expect("shipped feeder33 parses")
}

pub fn fleet12() -> FleetSpec {
    parse_fleet(FLEET12, 12).expect("shipped fleet12 parses")
}

pub fn fleet33() -> FleetSpec {
    parse_fleet(FLEET33, 33).expect("shipped fleet33 parses")
}

/// The periodic benchmark scenario, sized to `bus_count` buses.
pub fn scenario1(bus_count: usize) -> Scenario {
    match parse_scenario(SCENARIO1, bus_count).expect("shipped scenario1 parses") {
        ScenarioSpec::Synthetic(cfg) => Scenario::Synthetic(cfg),
        ScenarioSpec::Random(_) => unreachable!("scenario1 is synthetic"),
    }
}

/// The randomized benchmark scenario, sized to `bus_count` buses.
pub fn random_scenario(bus_count: usize, seed: u64) -> Scenario {
    match parse_scenario(RANDOM33, bus_count).expect("shipped random33 parses") {
        ScenarioSpec::Random(cfg) => Scenario::Random { cfg, seed },
        ScenarioSpec::Synthetic(_) => unreachable!("random33 is random"),
    }
}
