//! Feeder file: a header line `v0=<f> alpha=<f> beta=<f>` followed by one
//! `parent child r_pu x_pu` line per branch. `#` starts a comment.

use gridstor_core::grid::{Branch, Feeder};

use crate::FormatError;

pub fn parse_feeder(text: &str) -> Result<Feeder, FormatError> {
    let mut header: Option<(f64, f64, f64)> = None;
    let mut branches = Vec::new();
    let mut first_branch_line = 0;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = strip_comment(raw);
        if line.is_empty() {
            continue;
        }
        if header.is_none() {
            header = Some(parse_header(line, line_no)?);
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(FormatError::new(
                line_no,
                format!(
                    "expected `parent child r_pu x_pu`, got {} fields",
                    fields.len()
                ),
            ));
        }
        let parent = parse_num::<usize>(fields[0], "parent bus", line_no)?;
        let child = parse_num::<usize>(fields[1], "child bus", line_no)?;
        let resistance = parse_num::<f64>(fields[2], "resistance", line_no)?;
        let reactance = parse_num::<f64>(fields[3], "reactance", line_no)?;
        if branches.is_empty() {
            first_branch_line = line_no;
        }
        branches.push(Branch {
            parent,
            child,
            resistance,
            reactance,
        });
    }

    let (v0, alpha, beta) =
        header.ok_or_else(|| FormatError::new(1, "missing `v0= alpha= beta=` header"))?;
    Feeder::new(v0, alpha, beta, branches)
        .map_err(|e| FormatError::new(first_branch_line.max(1), e.to_string()))
}

fn strip_comment(line: &str) -> &str {
    match line.find('#') {
        Some(pos) => line[..pos].trim(),
        None => line.trim(),
    }
}

fn parse_header(line: &str, line_no: usize) -> Result<(f64, f64, f64), FormatError> {
    let mut v0 = None;
    let mut alpha = None;
    let mut beta = None;
    for field in line.split_whitespace() {
        let (key, value) = field.split_once('=').ok_or_else(|| {
            FormatError::new(
                line_no,
                format!("expected key=value in header, got `{field}`"),
            )
        })?;
        let parsed = parse_num::<f64>(value, key, line_no)?;
        match key {
            "v0" => v0 = Some(parsed),
            "alpha" => alpha = Some(parsed),
            "beta" => beta = Some(parsed),
            other => {
                return Err(FormatError::new(
                    line_no,
                    format!("unknown header key `{other}`"),
                ))
            }
        }
    }
    match (v0, alpha, beta) {
        (Some(v0), Some(alpha), Some(beta)) => Ok((v0, alpha, beta)),
        _ => Err(FormatError::new(
            line_no,
            "header must set v0, alpha, and beta",
        )),
    }
}

fn parse_num<T: std::str::FromStr>(
    text: &str,
    what: &str,
    line_no: usize,
) -> Result<T, FormatError> {
    text.parse::<T>()
        .map_err(|_| FormatError::new(line_no, format!("invalid {what}: `{text}`")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_single_bus_feeder() {
        let feeder = parse_feeder("v0=1.0 alpha=-0.0199 beta=0.020\n0 1 0.01 0.01\n").unwrap();
        assert_eq!(feeder.bus_count(), 1);
        assert_eq!(feeder.v0(), 1.0);
        assert_eq!(feeder.alpha(), -0.0199);
        assert_eq!(feeder.beta(), 0.020);
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let text = "# header comment\nv0=1.0 alpha=-0.01 beta=0.01\n\n0 1 0.01 0.01 # leaf\n";
        assert_eq!(parse_feeder(text).unwrap().bus_count(), 1);
    }

    #[test]
    fn cycle_is_a_topology_error() {
        let text = "v0=1.0 alpha=-0.01 beta=0.01\n0 1 0.01 0.01\n1 2 0.01 0.01\n2 1 0.01 0.01\n";
        let err = parse_feeder(text).unwrap_err();
        assert!(err.to_string().contains("more than one branch"), "{err}");
    }

    #[test]
    fn malformed_line_number_is_reported() {
        let text = "v0=1.0 alpha=-0.01 beta=0.01\n0 1 0.01\n";
        let err = parse_feeder(text).unwrap_err();
        assert_eq!(err.line, 2);
    }

    #[test]
    fn nonpositive_impedance_is_rejected() {
        let text = "v0=1.0 alpha=-0.01 beta=0.01\n0 1 0.0 0.01\n";
        let err = parse_feeder(text).unwrap_err();
        assert!(err.to_string().contains("impedance"), "{err}");
    }
}
