//! Fleet file: CSV with header `bus,s_min,s_max,b_min,b_max` and an
//! optional trailing `s0` column declaring the initial state of charge.
//! Every feeder bus must appear exactly once.

use gridstor_core::storage::StorageUnit;

use crate::FormatError;

#[derive(Debug, Clone)]
pub struct FleetSpec {
    /// Units ordered by bus index 1..=N.
    pub units: Vec<StorageUnit>,
    /// Declared initial states of charge, when the file carries them.
    pub initial_soc: Option<Vec<f64>>,
}

pub fn parse_fleet(text: &str, bus_count: usize) -> Result<FleetSpec, FormatError> {
    let mut units: Vec<Option<StorageUnit>> = vec![None; bus_count];
    let mut soc: Vec<Option<f64>> = vec![None; bus_count];
    let mut with_soc = false;
    let mut saw_header = false;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw.find('#') {
            Some(pos) => raw[..pos].trim(),
            None => raw.trim(),
        };
        if line.is_empty() {
            continue;
        }
        if !saw_header {
            match line {
                "bus,s_min,s_max,b_min,b_max" => with_soc = false,
                "bus,s_min,s_max,b_min,b_max,s0" => with_soc = true,
                other => {
                    return Err(FormatError::new(
                        line_no,
                        format!("unexpected header `{other}`"),
                    ))
                }
            }
            saw_header = true;
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let expected = if with_soc { 6 } else { 5 };
        if fields.len() != expected {
            return Err(FormatError::new(
                line_no,
                format!("expected {expected} fields, got {}", fields.len()),
            ));
        }
        let bus: usize = fields[0]
            .parse()
            .map_err(|_| FormatError::new(line_no, format!("invalid bus `{}`", fields[0])))?;
        if bus == 0 || bus > bus_count {
            return Err(FormatError::new(
                line_no,
                format!("bus {bus} outside 1..={bus_count}"),
            ));
        }
        if units[bus - 1].is_some() {
            return Err(FormatError::new(line_no, format!("duplicate bus {bus}")));
        }
        let num = |i: usize| -> Result<f64, FormatError> {
            fields[i]
                .parse()
                .map_err(|_| FormatError::new(line_no, format!("invalid number `{}`", fields[i])))
        };
        let unit = StorageUnit::new(num(1)?, num(2)?, num(3)?, num(4)?)
            .map_err(|e| FormatError::new(line_no, e.to_string()))?;
        units[bus - 1] = Some(unit);
        if with_soc {
            soc[bus - 1] = Some(num(5)?);
        }
    }

    if !saw_header {
        return Err(FormatError::new(1, "missing fleet header"));
    }
    let units: Vec<StorageUnit> = units
        .into_iter()
        .enumerate()
        .map(|(i, u)| u.ok_or_else(|| FormatError::new(1, format!("bus {} has no unit", i + 1))))
        .collect::<Result<_, _>>()?;
    let initial_soc = if with_soc {
        Some(soc.into_iter().map(|s| s.unwrap()).collect())
    } else {
        None
    };
    Ok(FleetSpec { units, initial_soc })
}
