//! Run outputs: the per-period trajectory CSV, the metrics summary, and
//! the per-iteration trace of the message-passing solver. All floats use
//! the shortest round-trip representation, so identical runs serialize to
//! identical bytes.

use gridstor_core::dualnet::DualRun;
use gridstor_core::sim::{FeasibilityReport, Metrics, TrajectoryRecord};

/// Schema-versioned trajectory CSV.
pub fn write_trajectory(records: &[TrajectoryRecord]) -> String {
    let n = records.first().map_or(0, |r| r.charge.len());
    let mut out = String::from("# trajectory v1\n");
    out.push_str("t,r,c0,cp,cr,cost,fallback,dual_iters,drift_slack,volt_slack,min_v,max_v");
    for i in 1..=n {
        out.push_str(&format!(",b_{i}"));
    }
    for i in 1..=n {
        out.push_str(&format!(",soc_{i}"));
    }
    out.push('\n');
    for rec in records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            rec.t,
            rec.tick.reg,
            rec.tick.c0,
            rec.tick.cp,
            rec.tick.cr,
            rec.cost,
            u8::from(rec.fallback),
            rec.dual_iterations.map_or(0, |i| i),
            rec.drift_slack,
            rec.volt_slack,
            rec.min_voltage,
            rec.max_voltage,
        ));
        for b in &rec.charge {
            out.push_str(&format!(",{b}"));
        }
        for s in &rec.soc {
            out.push_str(&format!(",{s}"));
        }
        out.push('\n');
    }
    out
}

/// Flat `key=value` metrics block, optionally extended with the audit.
pub fn write_metrics(metrics: &Metrics, report: Option<&FeasibilityReport>) -> String {
    let mut out = String::new();
    out.push_str(&format!("horizon={}\n", metrics.horizon));
    out.push_str(&format!("avg_cost={}\n", metrics.avg_cost));
    for (i, c) in metrics.user_avg_costs.iter().enumerate() {
        out.push_str(&format!("user_avg_cost_{}={}\n", i + 1, c));
    }
    out.push_str(&format!("weighted_gap={}\n", metrics.weighted_gap));
    out.push_str(&format!(
        "common_weight_gap={}\n",
        metrics.common_weight_gap
    ));
    out.push_str(&format!("distance_bound={}\n", metrics.distance_bound));
    out.push_str(&format!("soc_violations={}\n", metrics.soc_violations));
    out.push_str(&format!(
        "voltage_violations={}\n",
        metrics.voltage_violations
    ));
    out.push_str(&format!("sign_violations={}\n", metrics.sign_violations));
    out.push_str(&format!("fallback_steps={}\n", metrics.fallback_steps));
    if let Some(rep) = report {
        out.push_str(&format!("sign_alignment={}\n", rep.sign_alignment));
        out.push_str(&format!("time_average_ok={}\n", rep.time_average_ok));
        out.push_str(&format!("max_soc_excursion={}\n", rep.max_soc_excursion));
        out.push_str(&format!(
            "characterization_breaches={}\n",
            rep.characterization_breaches
        ));
    }
    out
}

/// Per-iteration solver trace:
/// `j,nu,residual,b_1..b_N,lambda_lo_1..,lambda_hi_1..`.
pub fn write_dual_trace(run: &DualRun) -> String {
    let n = run.trace.first().map_or(0, |it| it.charge.len());
    let mut out = String::from("j,nu,residual");
    for i in 1..=n {
        out.push_str(&format!(",b_{i}"));
    }
    for i in 1..=n {
        out.push_str(&format!(",lambda_lo_{i}"));
    }
    for i in 1..=n {
        out.push_str(&format!(",lambda_hi_{i}"));
    }
    out.push('\n');
    for (j, it) in run.trace.iter().enumerate() {
        out.push_str(&format!("{j},{},{}", it.nu, it.residual));
        for b in &it.charge {
            out.push_str(&format!(",{b}"));
        }
        for l in &it.lam_lo {
            out.push_str(&format!(",{l}"));
        }
        for l in &it.lam_hi {
            out.push_str(&format!(",{l}"));
        }
        out.push('\n');
    }
    out
}
