//! Per-period decision problem: assembly, cost functions, and the
//! centralized oracle.
//!
//! Every policy minimizes a strictly convex quadratic over a per-user box,
//! optionally intersected with the state-of-charge box, under the voltage
//! band. The virtual-queue policies add a linear queue term to the
//! aggregate cost; the greedy baseline minimizes the aggregate cost alone.

use alloc::vec;
use alloc::vec::Vec;

use crate::grid::SensitivityMatrices;
use crate::market::MarketTick;
use crate::qp::{self, QpError, QpInput, VoltRows};
use crate::storage::{FleetState, StorageUnit, TunedParams};

/// Voltage slacks below this count as violations.
pub const VOLT_TOL: f64 = 1e-9;

#[derive(Debug, thiserror::Error)]
pub enum ControllerError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("competitive price slope must be positive, got {0}")]
    NonPositiveSlope(f64),
    #[error("step is infeasible: no charging vector satisfies the constraints")]
    InfeasibleStep,
    #[error("centralized solver failed to converge")]
    SolverFailure,
    #[error("empty feasible box for unit {unit}: [{lo}, {hi}]")]
    EmptyBox { unit: usize, lo: f64, hi: f64 },
}

/// Charging policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Virtual-queue cost with per-unit weights, sign-constrained box.
    Weighted,
    /// Virtual-queue cost with the common weight, sign-constrained box.
    NonWeighted,
    /// Instantaneous cost only, sign box intersected with the SoC box.
    Greedy,
    /// Virtual-queue cost, full charge box intersected with the SoC box,
    /// no sign constraint.
    RelaxedSign,
}

impl Mode {
    pub fn uses_queue(self) -> bool {
        !matches!(self, Mode::Greedy)
    }

    pub fn sign_constrained(self) -> bool {
        matches!(self, Mode::Weighted | Mode::NonWeighted | Mode::Greedy)
    }
}

/// One period's convex program.
#[derive(Debug)]
pub struct StepProblem<'a> {
    pub mode: Mode,
    pub reg: i8,
    pub c0: f64,
    pub cp: f64,
    pub cr: f64,
    /// Per-user linear coefficient: queue weight times queue value, minus
    /// the regulation credit, plus the base charge.
    pub lin: Vec<f64>,
    pub loads: Vec<f64>,
    pub reactive: Vec<f64>,
    pub box_lo: Vec<f64>,
    pub box_hi: Vec<f64>,
    pub sens: &'a SensitivityMatrices,
    pub alpha: f64,
    pub beta: f64,
}

impl StepProblem<'_> {
    pub fn user_count(&self) -> usize {
        self.lin.len()
    }

    /// `R·loads + X·reactive`, the voltage deviation of the background
    /// demand; the band constraint on charging is expressed against it.
    pub fn background(&self) -> Vec<f64> {
        let rl = self.sens.resistance.matvec(&self.loads);
        let xq = self.sens.reactance.matvec(&self.reactive);
        rl.iter().zip(&xq).map(|(a, b)| a + b).collect()
    }
}

/// Result of one per-period solve.
#[derive(Debug, Clone)]
pub struct Decision {
    pub charge: Vec<f64>,
    /// Value of the mode's objective at the decision (queue term plus the
    /// aggregate cost for queue policies, aggregate cost alone for greedy).
    pub objective: f64,
    pub kkt_residual: f64,
    pub active_box_lo: Vec<usize>,
    pub active_box_hi: Vec<usize>,
    pub active_volt_lo: Vec<usize>,
    pub active_volt_hi: Vec<usize>,
    pub volt_mult_lo: Vec<f64>,
    pub volt_mult_hi: Vec<f64>,
    /// Set when the step was infeasible and the zero fallback was used.
    pub fallback: bool,
    /// Iterations of the message-passing solver, when it produced this.
    pub dual_iterations: Option<u32>,
}

/// Builds the period program for the selected mode.
pub fn assemble_step<'a>(
    mode: Mode,
    tick: &MarketTick,
    state: &FleetState,
    units: &[StorageUnit],
    params: &[TunedParams],
    sens: &'a SensitivityMatrices,
    alpha: f64,
    beta: f64,
) -> Result<StepProblem<'a>, ControllerError> {
    let n = units.len();
    if state.len() != n || tick.loads.len() != n || params.len() != n {
        return Err(ControllerError::Dimension {
            expected: n,
            got: state.len().min(tick.loads.len()).min(params.len()),
        });
    }
    if !(tick.cp > 0.0) {
        return Err(ControllerError::NonPositiveSlope(tick.cp));
    }
    let reg = tick.reg as f64;
    let mut lin = vec![0.0; n];
    let mut box_lo = vec![0.0; n];
    let mut box_hi = vec![0.0; n];
    for i in 0..n {
        lin[i] = if mode.uses_queue() {
            params[i].weight * state.queue_at(i) - reg * tick.cr + tick.c0
        } else {
            -reg * tick.cr + tick.c0
        };
        // Sign box: charge-only when the signal is +1, discharge-only at -1.
        let (mut lo, mut hi) = if mode.sign_constrained() {
            if tick.reg > 0 {
                (0.0, units[i].charge_max)
            } else {
                (units[i].charge_min, 0.0)
            }
        } else {
            (units[i].charge_min, units[i].charge_max)
        };
        if matches!(mode, Mode::Greedy | Mode::RelaxedSign) {
            lo = lo.max(units[i].soc_min - state.soc()[i]);
            hi = hi.min(units[i].soc_max - state.soc()[i]);
        }
        if lo > hi {
            return Err(ControllerError::EmptyBox { unit: i, lo, hi });
        }
        box_lo[i] = lo;
        box_hi[i] = hi;
    }
    Ok(StepProblem {
        mode,
        reg: tick.reg,
        c0: tick.c0,
        cp: tick.cp,
        cr: tick.cr,
        lin,
        loads: tick.loads.clone(),
        reactive: tick.reactive.clone(),
        box_lo,
        box_hi,
        sens,
        alpha,
        beta,
    })
}

/// Per-user electricity cost at a decision:
/// `(c0 + cp·1ᵀ(b+ℓ))·(bₙ+ℓₙ) − reg·cr·bₙ`.
pub fn per_user_cost(charge: &[f64], tick: &MarketTick) -> Vec<f64> {
    let total: f64 = charge.iter().zip(&tick.loads).map(|(b, l)| b + l).sum();
    let price = tick.c0 + tick.cp * total;
    charge
        .iter()
        .zip(&tick.loads)
        .map(|(b, l)| price * (b + l) - (tick.reg as f64) * tick.cr * b)
        .collect()
}

/// Aggregate cost `c0·1ᵀp + (cp/2)·pᵀ(I + 11ᵀ)p − reg·cr·1ᵀb` with
/// `p = b + ℓ`; its unilateral differences equal the per-user cost
/// differences, which makes it the potential of the charging game.
pub fn aggregate_cost(charge: &[f64], tick: &MarketTick) -> f64 {
    let reg = tick.reg as f64;
    let mut total = 0.0;
    let mut sq = 0.0;
    let mut charge_sum = 0.0;
    for (b, l) in charge.iter().zip(&tick.loads) {
        let p = b + l;
        total += p;
        sq += p * p;
        charge_sum += b;
    }
    tick.c0 * total + 0.5 * tick.cp * (sq + total * total) - reg * tick.cr * charge_sum
}

/// Objective value of the mode's program at a charging vector: the queue
/// term plus the aggregate cost.
pub fn step_objective(problem: &StepProblem, charge: &[f64]) -> f64 {
    let reg = problem.reg as f64;
    let mut queue = 0.0;
    for (c, b) in problem.lin.iter().zip(charge) {
        // lin already folds −reg·cr + c0 into the coefficient.
        queue += (c + reg * problem.cr - problem.c0) * b;
    }
    let mut total = 0.0;
    let mut sq = 0.0;
    let mut charge_sum = 0.0;
    for (b, l) in charge.iter().zip(&problem.loads) {
        let p = b + l;
        total += p;
        sq += p * p;
        charge_sum += b;
    }
    queue + problem.c0 * total + 0.5 * problem.cp * (sq + total * total)
        - reg * problem.cr * charge_sum
}

/// Centralized oracle: solves the period program to optimality.
pub fn solve_centralized(problem: &StepProblem) -> Result<Decision, ControllerError> {
    let n = problem.user_count();
    // Rewriting in the charge variable: quadratic stays cp(I + 11ᵀ), the
    // load coupling moves into the linear term.
    let load_sum: f64 = problem.loads.iter().sum();
    let lin: Vec<f64> = problem
        .lin
        .iter()
        .zip(&problem.loads)
        .map(|(c, l)| c + problem.cp * (l + load_sum))
        .collect();
    let background = problem.background();
    let volt = VoltRows {
        rows: &problem.sens.resistance,
        rhs_lo: background.iter().map(|w| -problem.alpha - w).collect(),
        rhs_hi: background.iter().map(|w| problem.beta + w).collect(),
    };
    let input = QpInput {
        cp: problem.cp,
        lin,
        lo: problem.box_lo.clone(),
        hi: problem.box_hi.clone(),
        volt: Some(volt),
    };
    let sol = qp::solve(&input).map_err(|e| match e {
        QpError::Infeasible => ControllerError::InfeasibleStep,
        QpError::NumericalFailure => ControllerError::SolverFailure,
    })?;

    let mut active_box_lo = Vec::new();
    let mut active_box_hi = Vec::new();
    for i in 0..n {
        if sol.b[i] - problem.box_lo[i] <= VOLT_TOL || sol.box_mult_lo[i] > VOLT_TOL {
            active_box_lo.push(i);
        }
        if problem.box_hi[i] - sol.b[i] <= VOLT_TOL || sol.box_mult_hi[i] > VOLT_TOL {
            active_box_hi.push(i);
        }
    }
    let rb = problem.sens.resistance.matvec(&sol.b);
    let mut active_volt_lo = Vec::new();
    let mut active_volt_hi = Vec::new();
    for k in 0..n {
        let dev = -(rb[k] + background[k]);
        if dev - problem.alpha <= VOLT_TOL {
            active_volt_lo.push(k);
        }
        if problem.beta - dev <= VOLT_TOL {
            active_volt_hi.push(k);
        }
    }
    Ok(Decision {
        objective: step_objective(problem, &sol.b),
        charge: sol.b,
        kkt_residual: sol.kkt_residual,
        active_box_lo,
        active_box_hi,
        active_volt_lo,
        active_volt_hi,
        volt_mult_lo: sol.volt_mult_lo,
        volt_mult_hi: sol.volt_mult_hi,
        fallback: false,
        dual_iterations: None,
    })
}

/// Solver selection for `policy_step`.
#[derive(Debug, Clone)]
pub enum SolverChoice {
    Centralized,
    Distributed(crate::dualnet::DualConfig),
}

/// Assembles and solves one period. An infeasible program falls back to a
/// zero decision when zero charging lies in the box (it always does for a
/// state within limits); the fallback is flagged, not hidden.
pub fn policy_step(
    mode: Mode,
    tick: &MarketTick,
    state: &FleetState,
    units: &[StorageUnit],
    params: &[TunedParams],
    sens: &SensitivityMatrices,
    alpha: f64,
    beta: f64,
    solver: &SolverChoice,
    prev_charge: &[f64],
) -> Result<Decision, ControllerError> {
    let problem = assemble_step(mode, tick, state, units, params, sens, alpha, beta)?;
    let solved = match solver {
        SolverChoice::Centralized => solve_centralized(&problem),
        SolverChoice::Distributed(cfg) => {
            crate::dualnet::solve_distributed(&problem, prev_charge, cfg)
                .map(|run| run.decision)
                .map_err(|e| match e {
                    crate::dualnet::DualNetError::Infeasible => ControllerError::InfeasibleStep,
                    crate::dualnet::DualNetError::Dimension { expected, got } => {
                        ControllerError::Dimension { expected, got }
                    }
                    _ => ControllerError::SolverFailure,
                })
        }
    };
    match solved {
        Ok(decision) => Ok(decision),
        Err(ControllerError::InfeasibleStep) => {
            let n = problem.user_count();
            let zero_ok = (0..n).all(|i| problem.box_lo[i] <= 0.0 && problem.box_hi[i] >= 0.0);
            if !zero_ok {
                return Err(ControllerError::InfeasibleStep);
            }
            let charge = vec![0.0; n];
            Ok(Decision {
                objective: step_objective(&problem, &charge),
                charge,
                kkt_residual: f64::NAN,
                active_box_lo: Vec::new(),
                active_box_hi: Vec::new(),
                active_volt_lo: Vec::new(),
                active_volt_hi: Vec::new(),
                volt_mult_lo: vec![0.0; n],
                volt_mult_hi: vec![0.0; n],
                fallback: true,
                dual_iterations: None,
            })
        }
        Err(e) => Err(e),
    }
}
