//! Market trace file: CSV with header `t,r,c0,cp,cr,l_1..l_N,q_1..q_N`,
//! one row per period. Optional `#bounds <name> <lo> <hi>` comment lines
//! declare world bounds explicitly; anything undeclared is inferred as the
//! componentwise min/max over the data.

use gridstor_core::market::{infer_bounds, Interval, MarketTick, TraceData, WorldBounds};

use crate::FormatError;

pub fn parse_trace(text: &str) -> Result<TraceData, FormatError> {
    let mut declared: Vec<(String, f64, f64, usize)> = Vec::new();
    let mut n: Option<usize> = None;
    let mut ticks: Vec<MarketTick> = Vec::new();
    let mut row_lines: Vec<usize> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix("#bounds") {
            let fields: Vec<&str> = rest.split_whitespace().collect();
            if fields.len() != 3 {
                return Err(FormatError::new(
                    line_no,
                    "expected `#bounds <name> <lo> <hi>`",
                ));
            }
            let lo: f64 = fields[1]
                .parse()
                .map_err(|_| FormatError::new(line_no, format!("invalid bound `{}`", fields[1])))?;
            let hi: f64 = fields[2]
                .parse()
                .map_err(|_| FormatError::new(line_no, format!("invalid bound `{}`", fields[2])))?;
            declared.push((fields[0].to_string(), lo, hi, line_no));
            continue;
        }
        if trimmed.starts_with('#') {
            continue;
        }
        if n.is_none() {
            n = Some(parse_header(trimmed, line_no)?);
            continue;
        }
        let n = n.unwrap();
        let fields: Vec<&str> = trimmed.split(',').map(str::trim).collect();
        if fields.len() != 5 + 2 * n {
            return Err(FormatError::new(
                line_no,
                format!("expected {} fields, got {}", 5 + 2 * n, fields.len()),
            ));
        }
        let t: usize = fields[0]
            .parse()
            .map_err(|_| FormatError::new(line_no, format!("invalid period `{}`", fields[0])))?;
        if t != ticks.len() {
            return Err(FormatError::new(
                line_no,
                format!("period {t} out of order, expected {}", ticks.len()),
            ));
        }
        let reg: i8 = fields[1]
            .parse()
            .map_err(|_| FormatError::new(line_no, format!("invalid signal `{}`", fields[1])))?;
        if reg != 1 && reg != -1 {
            return Err(FormatError::new(
                line_no,
                format!("regulation signal must be +1 or -1, got {reg}"),
            ));
        }
        let num = |i: usize| -> Result<f64, FormatError> {
            fields[i]
                .parse()
                .map_err(|_| FormatError::new(line_no, format!("invalid number `{}`", fields[i])))
        };
        let c0 = num(2)?;
        let cp = num(3)?;
        let cr = num(4)?;
        for (what, v) in [("c0", c0), ("cp", cp), ("cr", cr)] {
            if v < 0.0 {
                return Err(FormatError::new(
                    line_no,
                    format!("negative price {what}={v}"),
                ));
            }
        }
        let mut loads = Vec::with_capacity(n);
        let mut reactive = Vec::with_capacity(n);
        for i in 0..n {
            loads.push(num(5 + i)?);
            reactive.push(num(5 + n + i)?);
        }
        ticks.push(MarketTick {
            reg,
            c0,
            cp,
            cr,
            loads,
            reactive,
        });
        row_lines.push(line_no);
    }

    let n = n.ok_or_else(|| FormatError::new(1, "missing trace header"))?;
    if ticks.is_empty() {
        return Err(FormatError::new(1, "trace has no data rows"));
    }
    let mut bounds = infer_bounds(&ticks).unwrap();
    for (name, lo, hi, line_no) in &declared {
        let iv = Interval::new(*lo, *hi);
        match name.as_str() {
            "c0" => bounds.c0 = iv,
            "cp" => bounds.cp = iv,
            "cr" => bounds.cr = iv,
            "load" => bounds.loads = vec![iv; n],
            "reactive" => bounds.reactive = vec![iv; n],
            other => {
                return Err(FormatError::new(
                    *line_no,
                    format!("unknown bounds name `{other}`"),
                ))
            }
        }
    }
    bounds
        .validate()
        .map_err(|e| FormatError::new(1, e.to_string()))?;
    // Declared bounds must cover every row.
    for (tick, line_no) in ticks.iter().zip(&row_lines) {
        bounds
            .admits(tick, 0.0)
            .map_err(|e| FormatError::new(*line_no, e.to_string()))?;
    }
    Ok(TraceData { ticks, bounds })
}

fn parse_header(line: &str, line_no: usize) -> Result<usize, FormatError> {
    let fields: Vec<&str> = line.split(',').map(str::trim).collect();
    if fields.len() < 7 || fields[0] != "t" || fields[1] != "r" {
        return Err(FormatError::new(
            line_no,
            "expected header `t,r,c0,cp,cr,l_1..l_N,q_1..q_N`",
        ));
    }
    let l_count = fields.iter().filter(|f| f.starts_with("l_")).count();
    let q_count = fields.iter().filter(|f| f.starts_with("q_")).count();
    if l_count == 0 || l_count != q_count || fields.len() != 5 + l_count + q_count {
        return Err(FormatError::new(
            line_no,
            "header must carry matching l_i and q_i columns",
        ));
    }
    Ok(l_count)
}

/// Serializes ticks (and optionally explicit bounds) in the trace format;
/// floats use the shortest round-trip representation.
pub fn write_trace(ticks: &[MarketTick], bounds: Option<&WorldBounds>) -> String {
    let n = ticks.first().map_or(0, |t| t.loads.len());
    let mut out = String::new();
    if let Some(b) = bounds {
        out.push_str(&format!("#bounds c0 {} {}\n", b.c0.lo, b.c0.hi));
        out.push_str(&format!("#bounds cp {} {}\n", b.cp.lo, b.cp.hi));
        out.push_str(&format!("#bounds cr {} {}\n", b.cr.lo, b.cr.hi));
    }
    out.push_str("t,r");
    out.push_str(",c0,cp,cr");
    for i in 1..=n {
        out.push_str(&format!(",l_{i}"));
    }
    for i in 1..=n {
        out.push_str(&format!(",q_{i}"));
    }
    out.push('\n');
    for (t, tick) in ticks.iter().enumerate() {
        out.push_str(&format!(
            "{t},{},{},{},{}",
            tick.reg, tick.c0, tick.cp, tick.cr
        ));
        for l in &tick.loads {
            out.push_str(&format!(",{l}"));
        }
        for q in &tick.reactive {
            out.push_str(&format!(",{q}"));
        }
        out.push('\n');
    }
    out
}
