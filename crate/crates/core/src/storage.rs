//! Battery fleet: charge dynamics, virtual queues, and parameter tuning.
//!
//! Each unit carries a shifted copy of its state of charge, the virtual
//! queue `x = s + soc_shift`. The tuning below picks the queue weight and
//! shift from a per-unit price envelope so that the per-period minimizer
//! keeps every state of charge inside its limits without ever constraining
//! it explicitly, and so that the additive suboptimality gap of the policy
//! is as small as the feasibility condition allows.

use alloc::vec::Vec;

use crate::market::WorldBounds;

/// Tolerance on state-of-charge bound violations; exceeding it is an audit
/// failure, not something to clamp away.
pub const SOC_TOL: f64 = 1e-9;
/// Tolerance on the pathwise drift-bound slack.
pub const DRIFT_TOL: f64 = 1e-9;

#[derive(Debug, thiserror::Error)]
pub enum StorageError {
    #[error("unit violates slow-charging assumption: capacity span {span} must exceed charge span {swing}")]
    FastCharging { span: f64, swing: f64 },
    #[error("charge limits must satisfy lo < 0 < hi, got [{lo}, {hi}]")]
    InvalidChargeLimits { lo: f64, hi: f64 },
    #[error("state-of-charge limits must satisfy 0 <= lo < hi, got [{lo}, {hi}]")]
    InvalidSocLimits { lo: f64, hi: f64 },
    #[error("degenerate price envelope: ceiling {ceil} does not exceed floor {floor}")]
    DegenerateEnvelope { floor: f64, ceil: f64 },
    #[error("unit {unit}: state of charge {soc} leaves [{lo}, {hi}]")]
    SocViolation {
        unit: usize,
        soc: f64,
        lo: f64,
        hi: f64,
    },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
}

/// One energy-storage unit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StorageUnit {
    pub soc_min: f64,
    pub soc_max: f64,
    pub charge_min: f64,
    pub charge_max: f64,
}

impl StorageUnit {
    pub fn new(
        soc_min: f64,
        soc_max: f64,
        charge_min: f64,
        charge_max: f64,
    ) -> Result<Self, StorageError> {
        if !(soc_min >= 0.0 && soc_min < soc_max) {
            return Err(StorageError::InvalidSocLimits {
                lo: soc_min,
                hi: soc_max,
            });
        }
        if !(charge_min < 0.0 && charge_max > 0.0) {
            return Err(StorageError::InvalidChargeLimits {
                lo: charge_min,
                hi: charge_max,
            });
        }
        let unit = Self {
            soc_min,
            soc_max,
            charge_min,
            charge_max,
        };
        if !(unit.headroom() > 0.0) {
            return Err(StorageError::FastCharging {
                span: soc_max - soc_min,
                swing: charge_max - charge_min,
            });
        }
        Ok(unit)
    }

    /// Capacity left over after one full charge swing; positive by the
    /// slow-charging assumption.
    pub fn headroom(&self) -> f64 {
        (self.soc_max - self.soc_min) - (self.charge_max - self.charge_min)
    }

    /// Largest squared per-period charge magnitude.
    pub fn max_charge_sq(&self) -> f64 {
        (self.charge_max * self.charge_max).max(self.charge_min * self.charge_min)
    }
}

/// Bounds on the marginal energy price a unit can face.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriceEnvelope {
    pub floor: f64,
    pub ceil: f64,
}

impl PriceEnvelope {
    pub fn width(&self) -> f64 {
        self.ceil - self.floor
    }
}

/// Which reading of the envelope to use.
///
/// `TotalLoad` derives the envelope from the total-load terms that actually
/// bound the marginal price and is the default. `MeanLoad` divides the
/// competitive terms by the bus count, a weaker published variant kept for
/// comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EnvelopeConvention {
    #[default]
    TotalLoad,
    MeanLoad,
}

/// Price envelope for unit `n` (zero-based) from the world bounds.
pub fn price_envelope(
    n: usize,
    bounds: &WorldBounds,
    convention: EnvelopeConvention,
) -> Result<PriceEnvelope, StorageError> {
    let scale = match convention {
        EnvelopeConvention::TotalLoad => 1.0,
        EnvelopeConvention::MeanLoad => 1.0 / bounds.bus_count() as f64,
    };
    let floor = bounds.c0.lo + scale * bounds.cp.lo * (bounds.total_load_lo() + bounds.loads[n].lo)
        - bounds.cr.hi;
    let ceil = bounds.c0.hi
        + scale * bounds.cp.hi * (bounds.total_load_hi() + bounds.loads[n].hi)
        + bounds.cr.hi;
    if !(ceil > floor) {
        return Err(StorageError::DegenerateEnvelope { floor, ceil });
    }
    Ok(PriceEnvelope { floor, ceil })
}

/// Tuned policy parameters for one unit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TunedParams {
    pub envelope: PriceEnvelope,
    /// Capacity headroom per unit of envelope width; positive under the
    /// slow-charging assumption.
    pub headroom_ratio: f64,
    /// Virtual-queue weight.
    pub weight: f64,
    /// Shift applied to the state of charge to form the virtual queue.
    pub soc_shift: f64,
    /// This unit's additive contribution to the suboptimality gap.
    pub gap_contribution: f64,
}

/// Admissible interval for the queue shift at a given weight. Feasibility
/// of the tuned policy requires the shift to lie between these endpoints;
/// at the optimal weight the interval collapses to a point.
pub fn soc_shift_interval(unit: &StorageUnit, env: PriceEnvelope, weight: f64) -> (f64, f64) {
    let lo = -env.floor / weight + unit.charge_max - unit.soc_max;
    let hi = -env.ceil / weight + unit.charge_min - unit.soc_min;
    (lo, hi)
}

fn headroom_ratio(unit: &StorageUnit, env: PriceEnvelope) -> Result<f64, StorageError> {
    if !(env.width() > 0.0) {
        return Err(StorageError::DegenerateEnvelope {
            floor: env.floor,
            ceil: env.ceil,
        });
    }
    Ok(unit.headroom() / env.width())
}

/// Per-unit tuning that minimizes the suboptimality gap: weight is the
/// reciprocal headroom ratio, at which the admissible shift interval
/// collapses to a single point.
pub fn tune_weighted(unit: &StorageUnit, env: PriceEnvelope) -> Result<TunedParams, StorageError> {
    let ratio = headroom_ratio(unit, env)?;
    let weight = 1.0 / ratio;
    let soc_shift = -(env.ceil * (unit.soc_max - unit.charge_max)
        - env.floor * (unit.soc_min - unit.charge_min))
        / env.width();
    Ok(TunedParams {
        envelope: env,
        headroom_ratio: ratio,
        weight,
        soc_shift,
        gap_contribution: 0.5 * weight * unit.max_charge_sq(),
    })
}

/// Common-weight tuning: every unit gets the weight dictated by the least
/// flexible one, and each shift sits at the midpoint of its admissible
/// interval at that weight.
pub fn tune_nonweighted(
    units: &[StorageUnit],
    envs: &[PriceEnvelope],
) -> Result<Vec<TunedParams>, StorageError> {
    if units.len() != envs.len() {
        return Err(StorageError::Dimension {
            expected: units.len(),
            got: envs.len(),
        });
    }
    let mut min_ratio = f64::INFINITY;
    for (unit, env) in units.iter().zip(envs) {
        min_ratio = min_ratio.min(headroom_ratio(unit, *env)?);
    }
    let weight = 1.0 / min_ratio;
    units
        .iter()
        .zip(envs)
        .map(|(unit, env)| {
            let (lo, hi) = soc_shift_interval(unit, *env, weight);
            Ok(TunedParams {
                envelope: *env,
                headroom_ratio: headroom_ratio(unit, *env)?,
                weight,
                soc_shift: 0.5 * (lo + hi),
                gap_contribution: 0.5 * weight * unit.max_charge_sq(),
            })
        })
        .collect()
}

/// States of charge with their virtual queues.
///
/// The queue is the state of charge plus a constant per-unit shift. It is
/// derived, never integrated separately, so `queue − soc` equals the shift
/// identically after any number of steps.
#[derive(Debug, Clone, PartialEq)]
pub struct FleetState {
    soc: Vec<f64>,
    shift: Vec<f64>,
}

impl FleetState {
    pub fn new(initial_soc: Vec<f64>, shifts: &[f64]) -> Result<Self, StorageError> {
        if initial_soc.len() != shifts.len() {
            return Err(StorageError::Dimension {
                expected: shifts.len(),
                got: initial_soc.len(),
            });
        }
        Ok(Self {
            soc: initial_soc,
            shift: shifts.to_vec(),
        })
    }

    pub fn soc(&self) -> &[f64] {
        &self.soc
    }

    pub fn shifts(&self) -> &[f64] {
        &self.shift
    }

    pub fn queue_at(&self, unit: usize) -> f64 {
        self.soc[unit] + self.shift[unit]
    }

    pub fn queue(&self) -> Vec<f64> {
        self.soc
            .iter()
            .zip(&self.shift)
            .map(|(s, g)| s + g)
            .collect()
    }

    pub fn len(&self) -> usize {
        self.soc.len()
    }

    pub fn is_empty(&self) -> bool {
        self.soc.is_empty()
    }

    /// Applies one period's charging decision. Rejects the step (leaving
    /// the state untouched) if any updated state of charge leaves its
    /// limits by more than [`SOC_TOL`].
    pub fn advance(&mut self, charge: &[f64], units: &[StorageUnit]) -> Result<(), StorageError> {
        if charge.len() != self.soc.len() || units.len() != self.soc.len() {
            return Err(StorageError::Dimension {
                expected: self.soc.len(),
                got: charge.len(),
            });
        }
        for (n, ((s, b), unit)) in self.soc.iter().zip(charge).zip(units).enumerate() {
            let next = s + b;
            if next < unit.soc_min - SOC_TOL || next > unit.soc_max + SOC_TOL {
                return Err(StorageError::SocViolation {
                    unit: n,
                    soc: next,
                    lo: unit.soc_min,
                    hi: unit.soc_max,
                });
            }
        }
        for (s, b) in self.soc.iter_mut().zip(charge) {
            *s += b;
        }
        Ok(())
    }
}

/// Slack of the pathwise drift bound
/// `½Σw(x+b)² − ½Σwx² ≤ Σw·x·b + ½Σw·max(charge²)`;
/// non-negative whenever every charge respects its limits.
pub fn drift_bound_slack(
    state: &FleetState,
    charge: &[f64],
    weights: &[f64],
    units: &[StorageUnit],
) -> f64 {
    let mut bound = 0.0;
    let mut growth = 0.0;
    for (n, ((b, w), unit)) in charge.iter().zip(weights).zip(units).enumerate() {
        let x = state.queue_at(n);
        let next = x + b;
        growth += 0.5 * w * (next * next - x * x);
        bound += w * x * b + 0.5 * w * unit.max_charge_sq();
    }
    bound - growth
}

/// Drift bound as a pass/fail with its slack.
pub fn drift_bound_holds(
    state: &FleetState,
    charge: &[f64],
    weights: &[f64],
    units: &[StorageUnit],
) -> (bool, f64) {
    let slack = drift_bound_slack(state, charge, weights, units);
    (slack >= -DRIFT_TOL, slack)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{Interval, WorldBounds};
    use crate::rng::DetRng;

    fn two_bus_bounds() -> WorldBounds {
        WorldBounds {
            c0: Interval::new(5.0, 20.0),
            cp: Interval::new(0.5, 2.0),
            cr: Interval::new(0.0, 20.0),
            loads: vec![Interval::new(1.0, 2.0), Interval::new(1.0, 2.0)],
            reactive: vec![Interval::new(0.0, 0.0); 2],
        }
    }

    #[test]
    fn envelope_formula_example() {
        let env = price_envelope(0, &two_bus_bounds(), EnvelopeConvention::TotalLoad).unwrap();
        assert!((env.floor - (-13.5)).abs() < 1e-12);
        assert!((env.ceil - 52.0).abs() < 1e-12);
    }

    #[test]
    fn mean_load_convention_divides_competitive_terms() {
        let b = two_bus_bounds();
        let total = price_envelope(0, &b, EnvelopeConvention::TotalLoad).unwrap();
        let mean = price_envelope(0, &b, EnvelopeConvention::MeanLoad).unwrap();
        // N = 2: the competitive terms shrink by half, the rest is shared.
        assert!((mean.floor - (5.0 + 0.25 * 2.0 + 0.25 * 1.0 - 20.0)).abs() < 1e-12);
        assert!((mean.ceil - (20.0 + 1.0 * 4.0 + 1.0 * 2.0 + 20.0)).abs() < 1e-12);
        // Shrinking the positive competitive terms narrows the envelope.
        assert!(mean.width() < total.width());
    }

    #[test]
    fn collapsed_envelope_is_rejected() {
        // Tight equal price bounds, constant loads, no regulation price:
        // the envelope has zero width.
        let b = WorldBounds {
            c0: Interval::new(5.0, 5.0),
            cp: Interval::new(1.0, 1.0),
            cr: Interval::new(0.0, 0.0),
            loads: vec![Interval::new(1.0, 1.0)],
            reactive: vec![Interval::new(0.0, 0.0)],
        };
        assert!(matches!(
            price_envelope(0, &b, EnvelopeConvention::TotalLoad),
            Err(StorageError::DegenerateEnvelope { .. })
        ));
    }

    #[test]
    fn envelope_bounds_realized_marginal_price() {
        // Monte-Carlo oracle: for admissible ticks and sign-aligned charges,
        // the realized marginal-price bracket stays inside the envelope.
        let bounds = two_bus_bounds();
        let env0 = price_envelope(0, &bounds, EnvelopeConvention::TotalLoad).unwrap();
        let charge_cap = 0.5;
        let mut rng = DetRng::new(99);
        for _ in 0..10_000 {
            let reg = rng.sign() as f64;
            let c0 = rng.uniform(5.0, 20.0);
            let cp = rng.uniform(0.5, 2.0);
            let cr = rng.uniform(0.0, 20.0);
            let l: Vec<f64> = (0..2).map(|_| rng.uniform(1.0, 2.0)).collect();
            let b: Vec<f64> = (0..2).map(|_| reg * rng.uniform(0.0, charge_cap)).collect();
            let total: f64 = l.iter().sum::<f64>() + b.iter().sum::<f64>();
            let bracket = c0 + cp * total + cp * l[0] - reg * cr;
            if reg > 0.0 {
                assert!(bracket >= env0.floor - 1e-12);
            } else {
                assert!(bracket <= env0.ceil + 1e-12);
            }
        }
    }

    fn example_unit() -> StorageUnit {
        StorageUnit::new(0.0, 1.5, -0.1, 0.1).unwrap()
    }

    #[test]
    fn weighted_tuning_example() {
        let env = PriceEnvelope {
            floor: -13.5,
            ceil: 52.0,
        };
        let p = tune_weighted(&example_unit(), env).unwrap();
        assert!((p.headroom_ratio - 1.3 / 65.5).abs() < 1e-12);
        assert!((p.weight - 65.5 / 1.3).abs() < 1e-10);
        assert!((p.soc_shift - (-74.15 / 65.5)).abs() < 1e-10);
        assert!((p.gap_contribution - 0.01 / (2.0 * 1.3 / 65.5)).abs() < 1e-10);
        // At the tuned weight the admissible shift interval collapses onto
        // the tuned shift.
        let (lo, hi) = soc_shift_interval(&example_unit(), env, p.weight);
        assert!((lo - hi).abs() <= 1e-12 * hi.abs().max(1.0));
        assert!((lo - p.soc_shift).abs() <= 1e-12 * hi.abs().max(1.0));
    }

    #[test]
    fn symmetric_envelope_collapses_to_midpoint() {
        let env = PriceEnvelope {
            floor: -30.0,
            ceil: 30.0,
        };
        let unit = example_unit();
        let p = tune_weighted(&unit, env).unwrap();
        let (lo, hi) = soc_shift_interval(&unit, env, p.weight);
        let mid = 0.5 * (lo + hi);
        assert!((p.soc_shift - mid).abs() < 1e-12);
    }

    #[test]
    fn shift_interval_collapse_on_random_units() {
        let mut rng = DetRng::new(5);
        for _ in 0..1000 {
            let smax = rng.uniform(0.2, 3.0);
            let bmax = rng.uniform(0.01, smax / 2.5);
            let bmin = -rng.uniform(0.01, smax / 2.5);
            let unit = StorageUnit::new(0.0, smax, bmin, bmax).unwrap();
            let floor = rng.uniform(-40.0, 10.0);
            let env = PriceEnvelope {
                floor,
                ceil: floor + rng.uniform(1.0, 80.0),
            };
            let p = tune_weighted(&unit, env).unwrap();
            let (lo, hi) = soc_shift_interval(&unit, env, p.weight);
            let scale = lo.abs().max(hi.abs()).max(1.0);
            assert!((lo - hi).abs() <= 1e-12 * scale);
            assert!((p.soc_shift - lo).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn common_weight_picks_least_flexible_unit() {
        let u1 = StorageUnit::new(0.0, 1.0, -0.1, 0.1).unwrap();
        let u2 = StorageUnit::new(0.0, 2.0, -0.1, 0.1).unwrap();
        // Same envelope; ratios are headroom/width = 0.8/80 and 1.8/80.
        let env = PriceEnvelope {
            floor: -40.0,
            ceil: 40.0,
        };
        let params = tune_nonweighted(&[u1, u2], &[env, env]).unwrap();
        assert!((params[0].weight - 100.0).abs() < 1e-10);
        assert!((params[1].weight - 100.0).abs() < 1e-10);
    }

    #[test]
    fn common_weight_gap_dominates_weighted_gap() {
        let mut rng = DetRng::new(17);
        for _ in 0..1000 {
            let n = 1 + rng.index(6);
            let mut units = Vec::new();
            let mut envs = Vec::new();
            for _ in 0..n {
                let smax = rng.uniform(0.2, 3.0);
                let bmax = rng.uniform(0.01, smax / 2.5);
                units.push(StorageUnit::new(0.0, smax, -bmax, bmax).unwrap());
                let floor = rng.uniform(-40.0, 0.0);
                envs.push(PriceEnvelope {
                    floor,
                    ceil: floor + rng.uniform(5.0, 80.0),
                });
            }
            let weighted: f64 = units
                .iter()
                .zip(&envs)
                .map(|(u, e)| tune_weighted(u, *e).unwrap().gap_contribution)
                .sum();
            let common: f64 = tune_nonweighted(&units, &envs)
                .unwrap()
                .iter()
                .map(|p| p.gap_contribution)
                .sum();
            assert!(weighted <= common + 1e-9 * common.abs().max(1.0));
        }
    }

    #[test]
    fn homogeneous_fleet_common_weight_equals_weighted() {
        let unit = example_unit();
        let env = PriceEnvelope {
            floor: -13.5,
            ceil: 52.0,
        };
        let units = [unit, unit, unit];
        let envs = [env, env, env];
        let weighted: Vec<TunedParams> = units
            .iter()
            .map(|u| tune_weighted(u, env).unwrap())
            .collect();
        let common = tune_nonweighted(&units, &envs).unwrap();
        for (a, b) in weighted.iter().zip(&common) {
            assert!((a.weight - b.weight).abs() < 1e-12);
            assert!((a.soc_shift - b.soc_shift).abs() < 1e-12);
            assert!((a.gap_contribution - b.gap_contribution).abs() < 1e-12);
        }
    }

    #[test]
    fn advance_zero_charge_is_identity() {
        let unit = example_unit();
        let mut state = FleetState::new(vec![0.5], &[-1.0]).unwrap();
        let before = state.clone();
        state.advance(&[0.0], &[unit]).unwrap();
        assert_eq!(state, before);
    }

    #[test]
    fn advance_errors_exactly_at_saturation() {
        let unit = StorageUnit::new(0.0, 0.35, -0.1, 0.1).unwrap();
        let mut state = FleetState::new(vec![0.0], &[0.0]).unwrap();
        state.advance(&[0.1], &[unit]).unwrap();
        state.advance(&[0.1], &[unit]).unwrap();
        state.advance(&[0.1], &[unit]).unwrap();
        let err = state.advance(&[0.1], &[unit]).unwrap_err();
        assert!(matches!(err, StorageError::SocViolation { unit: 0, .. }));
        // Rejected step leaves the state unchanged.
        assert!((state.soc()[0] - 0.3).abs() < 1e-15);
    }

    #[test]
    fn queue_tracks_soc_exactly() {
        let unit = StorageUnit::new(0.0, 2.0, -0.2, 0.2).unwrap();
        let shift = -0.7;
        let mut state = FleetState::new(vec![1.0], &[shift]).unwrap();
        let mut rng = DetRng::new(3);
        for _ in 0..10_000 {
            let b = rng.uniform(-0.2, 0.2);
            let next = state.soc()[0] + b;
            if next < 0.0 || next > 2.0 {
                continue;
            }
            state.advance(&[b], &[unit]).unwrap();
            // Derived queue: the identity holds bit-exactly forever.
            assert_eq!(
                state.queue_at(0).to_bits(),
                (state.soc()[0] + shift).to_bits()
            );
            assert_eq!(state.shifts()[0], shift);
        }
    }

    #[test]
    fn drift_slack_at_zero_charge() {
        let unit = example_unit();
        let state = FleetState::new(vec![0.4], &[-1.0]).unwrap();
        let slack = drift_bound_slack(&state, &[0.0], &[50.0], &[unit]);
        assert!((slack - 0.5 * 50.0 * 0.01).abs() < 1e-12);
    }

    #[test]
    fn drift_slack_at_full_charge() {
        // ½(x+b)² − ½x² = xb + b²/2, so the slack is ½w(max² − b²) ≥ 0.
        let unit = example_unit();
        let state = FleetState::new(vec![0.4], &[-1.0]).unwrap();
        let slack = drift_bound_slack(&state, &[0.1], &[50.0], &[unit]);
        assert!(slack >= -1e-15);
        assert!(slack.abs() < 1e-12);
    }

    #[test]
    fn drift_slack_fuzz() {
        let mut rng = DetRng::new(23);
        for _ in 0..100_000 {
            let smax = rng.uniform(0.5, 2.0);
            let bmax = rng.uniform(0.05, 0.2);
            let unit = StorageUnit::new(0.0, smax, -bmax, bmax).unwrap();
            let s = rng.uniform(0.0, smax);
            let shift = rng.uniform(-2.0, 2.0);
            let state = FleetState::new(vec![s], &[shift]).unwrap();
            let b = rng.uniform(-bmax, bmax);
            let w = rng.uniform(0.1, 100.0);
            let (holds, slack) = drift_bound_holds(&state, &[b], &[w], &[unit]);
            assert!(holds, "slack {slack}");
        }
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            // Any in-box charge keeps the pathwise drift bound slack
            // non-negative, for arbitrary admissible units and weights.
            #[test]
            fn drift_bound_never_negative(
                smax in 0.2f64..5.0,
                swing_frac in 0.05f64..0.9,
                asym in 0.1f64..0.9,
                soc_frac in 0.0f64..1.0,
                shift in -5.0f64..5.0,
                charge_frac in 0.0f64..1.0,
                weight in 0.01f64..500.0,
            ) {
                let swing = swing_frac * smax;
                let bmax = (asym * swing).max(1e-6);
                let bmin = -(swing - bmax).min(swing - 1e-9).max(1e-6);
                let unit = StorageUnit::new(0.0, smax, bmin, bmax).unwrap();
                let state = FleetState::new(vec![soc_frac * smax], &[shift]).unwrap();
                let b = bmin + charge_frac * (bmax - bmin);
                let (holds, slack) = drift_bound_holds(&state, &[b], &[weight], &[unit]);
                prop_assert!(holds, "slack {slack}");
            }

            // The tuned shift always sits at the collapsed admissible
            // interval, whatever the envelope.
            #[test]
            fn tuned_shift_interval_collapses(
                smax in 0.1f64..4.0,
                swing_frac in 0.05f64..0.9,
                floor in -60.0f64..20.0,
                width in 0.5f64..120.0,
            ) {
                let swing = swing_frac * smax;
                let bmax = 0.5 * swing;
                let unit = StorageUnit::new(0.0, smax, -bmax, bmax).unwrap();
                let env = PriceEnvelope { floor, ceil: floor + width };
                let tuned = tune_weighted(&unit, env).unwrap();
                let (lo, hi) = soc_shift_interval(&unit, env, tuned.weight);
                let scale = lo.abs().max(hi.abs()).max(1.0);
                prop_assert!((hi - lo).abs() <= 1e-12 * scale);
                prop_assert!((tuned.soc_shift - lo).abs() <= 1e-12 * scale);
            }
        }
    }
}
