//! Scenario config: `key=value` lines selecting and parameterizing a tick
//! generator. `kind=synthetic` takes price levels, dwells, and constant
//! loads; `kind=random` takes world bounds. Per-bus values accept either a
//! scalar (applied to every bus) or a comma list of length N.

use std::collections::BTreeMap;

use gridstor_core::market::{Interval, RandomConfig, SyntheticConfig, WorldBounds};

use crate::FormatError;

/// Parsed scenario settings, independent of the seed.
#[derive(Debug, Clone)]
pub enum ScenarioSpec {
    Synthetic(SyntheticConfig),
    Random(RandomConfig),
}

pub fn parse_scenario(text: &str, bus_count: usize) -> Result<ScenarioSpec, FormatError> {
    let mut map: BTreeMap<String, (String, usize)> = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw.find('#') {
            Some(pos) => raw[..pos].trim(),
            None => raw.trim(),
        };
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            FormatError::new(line_no, format!("expected key=value, got `{line}`"))
        })?;
        map.insert(key.trim().to_string(), (value.trim().to_string(), line_no));
    }
    let kind = map
        .get("kind")
        .ok_or_else(|| FormatError::new(1, "missing `kind=` entry"))?
        .0
        .clone();
    match kind.as_str() {
        "synthetic" => parse_synthetic(&map, bus_count).map(ScenarioSpec::Synthetic),
        "random" => parse_random(&map, bus_count).map(ScenarioSpec::Random),
        other => Err(FormatError::new(
            1,
            format!("unknown scenario kind `{other}`"),
        )),
    }
}

type Entries = BTreeMap<String, (String, usize)>;

fn get_f64(map: &Entries, key: &str) -> Result<f64, FormatError> {
    let (value, line) = map
        .get(key)
        .ok_or_else(|| FormatError::new(1, format!("missing `{key}=`")))?;
    value
        .parse()
        .map_err(|_| FormatError::new(*line, format!("invalid number `{value}` for {key}")))
}

fn get_u32(map: &Entries, key: &str) -> Result<u32, FormatError> {
    let (value, line) = map
        .get(key)
        .ok_or_else(|| FormatError::new(1, format!("missing `{key}=`")))?;
    value
        .parse()
        .map_err(|_| FormatError::new(*line, format!("invalid integer `{value}` for {key}")))
}

/// Scalar applied to every bus, or a comma list of length N.
fn get_per_bus(map: &Entries, key: &str, n: usize) -> Result<Vec<f64>, FormatError> {
    let (value, line) = map
        .get(key)
        .ok_or_else(|| FormatError::new(1, format!("missing `{key}=`")))?;
    let parts: Vec<&str> = value.split(',').map(str::trim).collect();
    let nums: Vec<f64> = parts
        .iter()
        .map(|p| {
            p.parse()
                .map_err(|_| FormatError::new(*line, format!("invalid number `{p}` for {key}")))
        })
        .collect::<Result<_, _>>()?;
    match nums.len() {
        1 => Ok(vec![nums[0]; n]),
        len if len == n => Ok(nums),
        len => Err(FormatError::new(
            *line,
            format!("{key} needs 1 or {n} values, got {len}"),
        )),
    }
}

fn parse_synthetic(map: &Entries, n: usize) -> Result<SyntheticConfig, FormatError> {
    Ok(SyntheticConfig {
        c0_levels: (get_f64(map, "c0_low")?, get_f64(map, "c0_high")?),
        cp_sum_levels: (get_f64(map, "cp_sum_low")?, get_f64(map, "cp_sum_high")?),
        cr_levels: (get_f64(map, "cr_low")?, get_f64(map, "cr_high")?),
        low_dwell: get_u32(map, "low_dwell")?,
        high_dwell: get_u32(map, "high_dwell")?,
        reg_half_period: get_u32(map, "reg_half_period")?,
        loads: get_per_bus(map, "load", n)?,
        reactive: get_per_bus(map, "reactive", n)?,
    })
}

fn parse_random(map: &Entries, n: usize) -> Result<RandomConfig, FormatError> {
    let load_lo = get_per_bus(map, "load_min", n)?;
    let load_hi = get_per_bus(map, "load_max", n)?;
    let q_lo = get_per_bus(map, "reactive_min", n)?;
    let q_hi = get_per_bus(map, "reactive_max", n)?;
    let cp_tied_to_c0 = match map.get("cp_tied_to_c0") {
        Some((value, line)) => value
            .parse()
            .map_err(|_| FormatError::new(*line, format!("invalid bool `{value}`")))?,
        None => false,
    };
    let bounds = WorldBounds {
        c0: Interval::new(get_f64(map, "c0_min")?, get_f64(map, "c0_max")?),
        cp: Interval::new(get_f64(map, "cp_min")?, get_f64(map, "cp_max")?),
        cr: Interval::new(get_f64(map, "cr_min")?, get_f64(map, "cr_max")?),
        loads: load_lo
            .iter()
            .zip(&load_hi)
            .map(|(lo, hi)| Interval::new(*lo, *hi))
            .collect(),
        reactive: q_lo
            .iter()
            .zip(&q_hi)
            .map(|(lo, hi)| Interval::new(*lo, *hi))
            .collect(),
    };
    bounds
        .validate()
        .map_err(|e| FormatError::new(1, e.to_string()))?;
    Ok(RandomConfig {
        bounds,
        cp_tied_to_c0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_with_scalar_loads() {
        let text = "kind=synthetic\nc0_low=5\nc0_high=20\ncp_sum_low=5\ncp_sum_high=20\n\
                    cr_low=5\ncr_high=20\nlow_dwell=10\nhigh_dwell=5\nreg_half_period=15\n\
                    load=0.004\nreactive=0.002\n";
        let ScenarioSpec::Synthetic(cfg) = parse_scenario(text, 3).unwrap() else {
            panic!("wrong kind");
        };
        assert_eq!(cfg.loads, vec![0.004; 3]);
        assert_eq!(cfg.low_dwell, 10);
    }

    #[test]
    fn random_with_per_bus_list() {
        let text = "kind=random\nc0_min=5\nc0_max=20\ncp_min=0.5\ncp_max=2\ncr_min=0\ncr_max=20\n\
                    load_min=0.001,0.002\nload_max=0.005,0.006\nreactive_min=0\nreactive_max=0.003\n";
        let ScenarioSpec::Random(cfg) = parse_scenario(text, 2).unwrap() else {
            panic!("wrong kind");
        };
        assert_eq!(cfg.bounds.loads[1].lo, 0.002);
        assert!(!cfg.cp_tied_to_c0);
    }

    #[test]
    fn wrong_list_length_names_the_line() {
        let text = "kind=synthetic\nc0_low=5\nc0_high=20\ncp_sum_low=5\ncp_sum_high=20\n\
                    cr_low=5\ncr_high=20\nlow_dwell=10\nhigh_dwell=5\nreg_half_period=15\n\
                    load=0.004,0.005\nreactive=0.002\n";
        let err = parse_scenario(text, 3).unwrap_err();
        assert_eq!(err.line, 11);
    }
}
