//! Horizon simulation: binds the feeder, fleet, market, and controller
//! into a sequential run, and audits every guarantee the tuning promises.

use alloc::vec;
use alloc::vec::Vec;

use crate::controller::{aggregate_cost, per_user_cost, policy_step, Mode, SolverChoice, VOLT_TOL};
use crate::grid::{build_sensitivities, ldf_voltages, Feeder, GridError, SensitivityMatrices};
use crate::market::{MarketError, MarketTick, Scenario, WorldBounds};
use crate::storage::{
    drift_bound_slack, price_envelope, tune_nonweighted, tune_weighted, EnvelopeConvention,
    FleetState, StorageError, StorageUnit, TunedParams, SOC_TOL,
};

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Market(#[from] MarketError),
    #[error(transparent)]
    Storage(#[from] StorageError),
    #[error("fleet size {fleet} does not match feeder bus count {buses}")]
    FleetSize { fleet: usize, buses: usize },
    #[error("scenario is sized for {scenario} buses, feeder has {buses}")]
    ScenarioSize { scenario: usize, buses: usize },
    #[error("initial state of charge of unit {unit} is outside its limits")]
    InitialSoc { unit: usize },
    #[error("period {period}: {source}")]
    Step {
        period: usize,
        source: crate::controller::ControllerError,
    },
    #[error("period {period}: {source}")]
    StorageStep { period: usize, source: StorageError },
    #[error("period {period}: {source}")]
    MarketStep { period: usize, source: MarketError },
}

/// Everything a run needs: grid, fleet, tuned parameters, and the market.
#[derive(Debug)]
pub struct World {
    pub feeder: Feeder,
    pub sens: SensitivityMatrices,
    pub units: Vec<StorageUnit>,
    pub weighted: Vec<TunedParams>,
    pub nonweighted: Vec<TunedParams>,
    pub bounds: WorldBounds,
    pub scenario: Scenario,
    pub initial_soc: Vec<f64>,
}

impl World {
    /// Builds the world and tunes both parameter sets from the scenario
    /// bounds. Initial states of charge default to each unit's minimum.
    pub fn new(
        feeder: Feeder,
        units: Vec<StorageUnit>,
        scenario: Scenario,
        convention: EnvelopeConvention,
        initial_soc: Option<Vec<f64>>,
    ) -> Result<Self, SimError> {
        let n = feeder.bus_count();
        if units.len() != n {
            return Err(SimError::FleetSize {
                fleet: units.len(),
                buses: n,
            });
        }
        if scenario.bus_count() != n {
            return Err(SimError::ScenarioSize {
                scenario: scenario.bus_count(),
                buses: n,
            });
        }
        let bounds = scenario.bounds();
        bounds.validate()?;
        let mut envelopes = Vec::with_capacity(n);
        for i in 0..n {
            envelopes.push(price_envelope(i, &bounds, convention)?);
        }
        let weighted: Vec<TunedParams> = units
            .iter()
            .zip(&envelopes)
            .map(|(u, e)| tune_weighted(u, *e))
            .collect::<Result<_, _>>()?;
        let nonweighted = tune_nonweighted(&units, &envelopes)?;
        let initial_soc = match initial_soc {
            Some(s) => {
                if s.len() != n {
                    return Err(SimError::FleetSize {
                        fleet: s.len(),
                        buses: n,
                    });
                }
                for (i, (v, u)) in s.iter().zip(&units).enumerate() {
                    if *v < u.soc_min - SOC_TOL || *v > u.soc_max + SOC_TOL {
                        return Err(SimError::InitialSoc { unit: i });
                    }
                }
                s
            }
            None => units.iter().map(|u| u.soc_min).collect(),
        };
        let sens = build_sensitivities(&feeder);
        Ok(Self {
            feeder,
            sens,
            units,
            weighted,
            nonweighted,
            bounds,
            scenario,
            initial_soc,
        })
    }

    /// Parameter set a mode runs with. Greedy ignores the queue term but
    /// still books the virtual queue with the weighted shifts so its drift
    /// diagnostics are comparable.
    pub fn params_for(&self, mode: Mode) -> &[TunedParams] {
        match mode {
            Mode::NonWeighted => &self.nonweighted,
            _ => &self.weighted,
        }
    }
}

/// Run settings.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub mode: Mode,
    pub solver: SolverChoice,
    pub horizon: usize,
}

/// One period of a finished run.
#[derive(Debug, Clone)]
pub struct TrajectoryRecord {
    pub t: usize,
    pub tick: MarketTick,
    pub charge: Vec<f64>,
    /// Aggregate cost at the decision.
    pub cost: f64,
    pub user_costs: Vec<f64>,
    /// States of charge after the update.
    pub soc: Vec<f64>,
    /// Smallest and largest voltage magnitude at the decision, pu.
    pub min_voltage: f64,
    pub max_voltage: f64,
    /// Worst voltage-band slack at the decision, pu²; negative means a
    /// violation (possible only on fallback steps).
    pub volt_slack: f64,
    /// Slack of the pathwise drift bound at this step.
    pub drift_slack: f64,
    pub dual_iterations: Option<u32>,
    pub fallback: bool,
}

/// Aggregated run outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub horizon: usize,
    /// Running average of the aggregate cost over the horizon.
    pub avg_cost: f64,
    pub user_avg_costs: Vec<f64>,
    /// Suboptimality gap of the per-unit tuning.
    pub weighted_gap: f64,
    /// Suboptimality gap of the common-weight tuning.
    pub common_weight_gap: f64,
    /// Bound on the mean squared distance to the equilibrium decisions.
    pub distance_bound: f64,
    pub soc_violations: u64,
    pub voltage_violations: u64,
    pub sign_violations: u64,
    pub fallback_steps: u64,
}

#[derive(Debug)]
pub struct RunOutput {
    pub metrics: Metrics,
    pub records: Vec<TrajectoryRecord>,
}

/// Sequential simulation loop: tick, solve, advance, record.
pub fn run(world: &World, cfg: &RunConfig) -> Result<RunOutput, SimError> {
    let n = world.units.len();
    let params = world.params_for(cfg.mode);
    let shifts: Vec<f64> = params.iter().map(|p| p.soc_shift).collect();
    let weights: Vec<f64> = params.iter().map(|p| p.weight).collect();
    let mut state = FleetState::new(world.initial_soc.clone(), &shifts)?;
    let mut prev_charge = vec![0.0; n];
    let mut records = Vec::with_capacity(cfg.horizon);

    let mut cost_sum = 0.0;
    let mut user_cost_sums = vec![0.0; n];
    let mut soc_violations = 0u64;
    let mut voltage_violations = 0u64;
    let mut sign_violations = 0u64;
    let mut fallback_steps = 0u64;

    for t in 0..cfg.horizon {
        let tick = world
            .scenario
            .tick(t)
            .map_err(|source| SimError::MarketStep { period: t, source })?;
        let decision = policy_step(
            cfg.mode,
            &tick,
            &state,
            &world.units,
            params,
            &world.sens,
            world.feeder.alpha(),
            world.feeder.beta(),
            &cfg.solver,
            &prev_charge,
        )
        .map_err(|source| SimError::Step { period: t, source })?;

        let drift_slack = drift_bound_slack(&state, &decision.charge, &weights, &world.units);
        state
            .advance(&decision.charge, &world.units)
            .map_err(|source| SimError::StorageStep { period: t, source })?;

        let net: Vec<f64> = decision
            .charge
            .iter()
            .zip(&tick.loads)
            .map(|(b, l)| b + l)
            .collect();
        let v = ldf_voltages(&world.sens, &net, &tick.reactive, world.feeder.v0())?;
        let mut min_voltage = f64::INFINITY;
        let mut max_voltage = f64::NEG_INFINITY;
        let mut volt_slack = f64::INFINITY;
        for vi in &v {
            let mag = libm::sqrt(*vi);
            min_voltage = min_voltage.min(mag);
            max_voltage = max_voltage.max(mag);
            let dev = vi - world.feeder.v0();
            volt_slack = volt_slack
                .min(dev - world.feeder.alpha())
                .min(world.feeder.beta() - dev);
        }
        let cost = aggregate_cost(&decision.charge, &tick);
        let user_costs = per_user_cost(&decision.charge, &tick);

        cost_sum += cost;
        for (acc, c) in user_cost_sums.iter_mut().zip(&user_costs) {
            *acc += c;
        }
        for (i, (s, u)) in state.soc().iter().zip(&world.units).enumerate() {
            let _ = i;
            if *s < u.soc_min - SOC_TOL || *s > u.soc_max + SOC_TOL {
                soc_violations += 1;
            }
        }
        if volt_slack < -VOLT_TOL {
            voltage_violations += 1;
        }
        if cfg.mode.sign_constrained() {
            for b in &decision.charge {
                if (tick.reg as f64) * b < -VOLT_TOL {
                    sign_violations += 1;
                }
            }
        }
        if decision.fallback {
            fallback_steps += 1;
        }

        records.push(TrajectoryRecord {
            t,
            charge: decision.charge.clone(),
            cost,
            user_costs,
            soc: state.soc().to_vec(),
            min_voltage,
            max_voltage,
            volt_slack,
            drift_slack,
            dual_iterations: decision.dual_iterations,
            fallback: decision.fallback,
            tick,
        });
        prev_charge = decision.charge;
    }

    let horizon = cfg.horizon.max(1) as f64;
    let report = suboptimality_report(&world.weighted, &world.nonweighted, world.bounds.cp.lo);
    Ok(RunOutput {
        metrics: Metrics {
            horizon: cfg.horizon,
            avg_cost: cost_sum / horizon,
            user_avg_costs: user_cost_sums.iter().map(|c| c / horizon).collect(),
            weighted_gap: report.weighted_gap,
            common_weight_gap: report.common_weight_gap,
            distance_bound: report.distance_bound,
            soc_violations,
            voltage_violations,
            sign_violations,
            fallback_steps,
        },
        records,
    })
}

/// Feasibility audit over a finished trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityReport {
    pub periods: usize,
    pub soc_violations: u64,
    pub voltage_violations: u64,
    pub sign_violations: u64,
    /// Fraction of per-user decisions aligned with the regulation signal.
    pub sign_alignment: f64,
    /// Whether every unit's mean charge satisfies the telescoping bound
    /// `|mean b| ≤ (soc span)/T`.
    pub time_average_ok: bool,
    /// Largest `|soc_T − soc_0| / span` across units; at most 1 whenever
    /// the states of charge stayed within limits.
    pub max_soc_excursion: f64,
    /// Steps on which the characterization of the queue-policy minimizer
    /// (zero charge under the envelope hypotheses) failed.
    pub characterization_breaches: u64,
    pub fallback_steps: u64,
}

impl FeasibilityReport {
    /// No violations of any audited property.
    pub fn clean(&self) -> bool {
        self.soc_violations == 0
            && self.voltage_violations == 0
            && self.sign_violations == 0
            && self.time_average_ok
            && self.characterization_breaches == 0
    }
}

/// Audits a trajectory: state-of-charge bounds, voltage-band slack, sign
/// compliance, the telescoping time-average bound, and the zero-charge
/// characterization of the queue policies.
pub fn audit(
    records: &[TrajectoryRecord],
    units: &[StorageUnit],
    params: &[TunedParams],
    initial_soc: &[f64],
    mode: Mode,
) -> FeasibilityReport {
    let n = units.len();
    let mut soc_violations = 0u64;
    let mut voltage_violations = 0u64;
    let mut sign_violations = 0u64;
    let mut aligned = 0u64;
    let mut decisions = 0u64;
    let mut characterization_breaches = 0u64;
    let mut fallback_steps = 0u64;

    for rec in records {
        for (s, u) in rec.soc.iter().zip(units) {
            if *s < u.soc_min - SOC_TOL || *s > u.soc_max + SOC_TOL {
                soc_violations += 1;
            }
        }
        if rec.volt_slack < -VOLT_TOL {
            voltage_violations += 1;
        }
        let reg = rec.tick.reg as f64;
        for b in &rec.charge {
            decisions += 1;
            if reg * b >= -VOLT_TOL {
                aligned += 1;
            } else if mode.sign_constrained() {
                sign_violations += 1;
            }
        }
        if rec.fallback {
            fallback_steps += 1;
        }
        // Zero-charge characterization: when the queue sits above the
        // floor threshold under a charge-only signal (or below the ceiling
        // threshold under discharge-only), the minimizer must be zero.
        if matches!(mode, Mode::Weighted | Mode::NonWeighted) && !rec.fallback {
            for i in 0..n {
                let queue_before = rec.soc[i] - rec.charge[i] + params[i].soc_shift;
                let hyp_a = rec.tick.reg > 0
                    && queue_before + params[i].envelope.floor / params[i].weight >= 0.0;
                let hyp_b = rec.tick.reg < 0
                    && queue_before + params[i].envelope.ceil / params[i].weight <= 0.0;
                if (hyp_a || hyp_b) && libm::fabs(rec.charge[i]) > 1e-9 {
                    characterization_breaches += 1;
                }
            }
        }
    }

    // Telescoping: the summed charge is exactly the state-of-charge swing.
    let mut time_average_ok = true;
    let mut max_soc_excursion = 0.0f64;
    if let Some(last) = records.last() {
        for i in 0..n {
            let swing = libm::fabs(last.soc[i] - initial_soc[i]);
            let span = units[i].soc_max - units[i].soc_min;
            max_soc_excursion = max_soc_excursion.max(swing / span);
            if swing > span + SOC_TOL {
                time_average_ok = false;
            }
        }
    }

    FeasibilityReport {
        periods: records.len(),
        soc_violations,
        voltage_violations,
        sign_violations,
        sign_alignment: if decisions == 0 {
            1.0
        } else {
            aligned as f64 / decisions as f64
        },
        time_average_ok,
        max_soc_excursion,
        characterization_breaches,
        fallback_steps,
    }
}

/// Suboptimality gaps of the two tunings and the resulting bound on the
/// mean squared distance to the equilibrium decisions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuboptReport {
    pub weighted_gap: f64,
    pub common_weight_gap: f64,
    pub distance_bound: f64,
}

pub fn suboptimality_report(
    weighted: &[TunedParams],
    nonweighted: &[TunedParams],
    cp_floor: f64,
) -> SuboptReport {
    let weighted_gap: f64 = weighted.iter().map(|p| p.gap_contribution).sum();
    let common_weight_gap: f64 = nonweighted.iter().map(|p| p.gap_contribution).sum();
    debug_assert!(weighted_gap <= common_weight_gap + 1e-9 * common_weight_gap.abs().max(1.0));
    SuboptReport {
        weighted_gap,
        common_weight_gap,
        distance_bound: 2.0 * weighted_gap / cp_floor,
    }
}
