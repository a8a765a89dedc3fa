//! Message-passing solver for the per-period program.
//!
//! An aggregator holds the dual variables: one multiplier for the
//! total-demand coupling and one per voltage-band side and bus. Each round
//! it broadcasts a per-user coupling price, every user answers with the
//! closed-form clipped minimizer of its own subproblem, and the aggregator
//! takes a projected gradient-ascent step on the duals. The aggregator
//! never sees loads, charge limits, or states of charge: it works from the
//! user responses, a spanning-tree total-load sum, and the feeder voltage
//! measurement rearranged into the background term `Rℓ + Xq`.
//!
//! The solver shares no solution code with the centralized oracle in
//! `controller`, so agreement between the two is an end-to-end check of
//! both.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use crate::controller::{step_objective, Decision, StepProblem};
use crate::grid::SensitivityMatrices;
use crate::mat::Matrix;

#[derive(Debug, thiserror::Error)]
pub enum DualNetError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("per-user box is empty")]
    Infeasible,
    #[error("communication tree does not span all buses")]
    DisconnectedTree,
    #[error("no convergence after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence {
        iterations: u32,
        residual: f64,
        run: Box<DualRun>,
    },
}

/// Dual variables of the decomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct DualState {
    /// Multiplier of the total-demand coupling constraint.
    pub nu: f64,
    /// Multipliers of the lower voltage bound, one per bus; non-negative.
    pub lam_lo: Vec<f64>,
    /// Multipliers of the upper voltage bound; non-negative.
    pub lam_hi: Vec<f64>,
    pub iteration: u32,
}

impl DualState {
    pub fn zeros(n: usize) -> Self {
        Self {
            nu: 0.0,
            lam_lo: vec![0.0; n],
            lam_hi: vec![0.0; n],
            iteration: 0,
        }
    }
}

/// Closed-form user subproblem: clip the unconstrained stationary point
/// onto the charge box.
pub fn user_response(coupling: f64, lin: f64, cp: f64, load: f64, lo: f64, hi: f64) -> f64 {
    let unclipped = -(lin + coupling) / cp - load;
    unclipped.max(lo).min(hi)
}

/// Aggregator-side primal recovery of the total demand: `a = −nu / cp`.
pub fn primal_total(nu: f64, cp: f64) -> f64 {
    -nu / cp
}

/// Projected gradient-ascent step on the duals, written against the raw
/// loads. The aggregator path in [`Aggregator::absorb`] performs the same
/// update from its background estimate instead; the two are tested to
/// agree.
#[allow(clippy::too_many_arguments)]
pub fn dual_ascent(
    state: &mut DualState,
    total: f64,
    charge: &[f64],
    loads: &[f64],
    reactive: &[f64],
    sens: &SensitivityMatrices,
    alpha: f64,
    beta: f64,
    eta_nu: f64,
    eta_lambda: f64,
) {
    let n = charge.len();
    let p: Vec<f64> = charge.iter().zip(loads).map(|(b, l)| b + l).collect();
    let rp = sens.resistance.matvec(&p);
    let xq = sens.reactance.matvec(reactive);
    let demand: f64 = p.iter().sum();
    state.nu += eta_nu * (total - demand);
    for k in 0..n {
        let u = rp[k] + xq[k];
        state.lam_lo[k] = (state.lam_lo[k] + eta_lambda * (u + alpha)).max(0.0);
        state.lam_hi[k] = (state.lam_hi[k] - eta_lambda * (u + beta)).max(0.0);
    }
    state.iteration += 1;
}

/// Spanning tree over the aggregator (node 0) and the buses (nodes 1..=N)
/// used to accumulate the total load without point-to-point disclosure.
#[derive(Debug, Clone)]
pub struct CommTree {
    /// Parent of each node; the aggregator root has none.
    parent: Vec<Option<usize>>,
}

impl CommTree {
    /// Every bus reports directly to the aggregator.
    pub fn star(n: usize) -> Self {
        let mut parent = vec![Some(0); n + 1];
        parent[0] = None;
        Self { parent }
    }

    /// Buses form a line hanging off the aggregator.
    pub fn chain(n: usize) -> Self {
        let parent = (0..=n)
            .map(|i| if i == 0 { None } else { Some(i - 1) })
            .collect();
        Self { parent }
    }

    /// Random recursive tree rooted at the aggregator.
    pub fn random(n: usize, seed: u64) -> Self {
        let mut rng = crate::rng::DetRng::new(seed);
        let mut parent = vec![None; n + 1];
        for i in 1..=n {
            parent[i] = Some(rng.index(i));
        }
        Self { parent }
    }

    pub fn node_count(&self) -> usize {
        self.parent.len()
    }
}

/// Leaf-to-root accumulation of per-bus values over the tree. Children are
/// folded in ascending node index, so the result is bit-reproducible for a
/// given tree.
pub fn tree_sum(tree: &CommTree, values: &[f64]) -> Result<f64, DualNetError> {
    let nodes = tree.node_count();
    if nodes != values.len() + 1 {
        return Err(DualNetError::Dimension {
            expected: nodes,
            got: values.len() + 1,
        });
    }
    // Depth of each node; also validates connectivity.
    let mut depth = vec![usize::MAX; nodes];
    for start in 0..nodes {
        let mut cur = start;
        let mut hops = 0;
        while let Some(p) = tree.parent[cur] {
            cur = p;
            hops += 1;
            if hops > nodes {
                return Err(DualNetError::DisconnectedTree);
            }
        }
        if cur != 0 {
            return Err(DualNetError::DisconnectedTree);
        }
        depth[start] = {
            let mut cur = start;
            let mut d = 0;
            while let Some(p) = tree.parent[cur] {
                cur = p;
                d += 1;
            }
            d
        };
    }
    let max_depth = depth.iter().copied().max().unwrap_or(0);
    let mut subtotal: Vec<f64> = (0..nodes)
        .map(|i| if i == 0 { 0.0 } else { values[i - 1] })
        .collect();
    // Process deepest levels first; each parent folds its children in
    // ascending index order.
    for level in (1..=max_depth).rev() {
        for node in 1..nodes {
            if depth[node] == level {
                let p = tree.parent[node].unwrap();
                subtotal[p] += subtotal[node];
            }
        }
    }
    Ok(subtotal[0])
}

/// Rearranges the linearized voltage model around a measurement taken
/// while the previous decision still persists:
/// `Rℓ + Xq = v0·1 − v_measured − R·b_prev`.
pub fn estimate_background(
    v_measured: &[f64],
    v0: f64,
    resistance: &Matrix,
    prev_charge: &[f64],
) -> Vec<f64> {
    let rb = resistance.matvec(prev_charge);
    v_measured
        .iter()
        .zip(&rb)
        .map(|(v, rbi)| v0 - v - rbi)
        .collect()
}

/// Step-size schedule for the dual ascent.
#[derive(Debug, Clone, PartialEq)]
pub enum StepSchedule {
    /// `nu0/(j+1)` and `lambda0/(j+1)`.
    Diminishing {
        nu0: f64,
        lambda0: f64,
    },
    Constant {
        nu: f64,
        lambda: f64,
    },
    /// Base steps sized from the problem (the coupling step from the user
    /// count, the band step from the Frobenius mass of the sensitivity
    /// matrix), with the band step adapted while the solve runs: it
    /// doubles on response plateaus, grows while a row's pressure keeps
    /// its sign, and every move is capped relative to the multiplier it
    /// changes.
    Auto,
}

impl Default for StepSchedule {
    fn default() -> Self {
        StepSchedule::Diminishing {
            nu0: 3e6,
            lambda0: 2.0,
        }
    }
}

impl StepSchedule {
    fn resolve(&self, cp: f64, n: usize, sens: &SensitivityMatrices) -> ResolvedSchedule {
        match self {
            StepSchedule::Diminishing { nu0, lambda0 } => ResolvedSchedule::Diminishing {
                nu0: *nu0,
                lambda0: *lambda0,
            },
            StepSchedule::Constant { nu, lambda } => ResolvedSchedule::Constant {
                nu: *nu,
                lambda: *lambda,
                adaptive: false,
            },
            StepSchedule::Auto => {
                let mut fro_sq = 0.0;
                for i in 0..n {
                    for v in sens.resistance.row(i) {
                        fro_sq += v * v;
                    }
                }
                ResolvedSchedule::Constant {
                    nu: 1.2 * cp / (n as f64 + 2.0),
                    lambda: 0.4 * cp / fro_sq.max(1e-12),
                    adaptive: true,
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum ResolvedSchedule {
    Diminishing {
        nu0: f64,
        lambda0: f64,
    },
    Constant {
        nu: f64,
        lambda: f64,
        adaptive: bool,
    },
}

impl ResolvedSchedule {
    fn at(&self, j: u32) -> (f64, f64) {
        match self {
            ResolvedSchedule::Diminishing { nu0, lambda0 } => {
                let d = (j + 1) as f64;
                (nu0 / d, lambda0 / d)
            }
            ResolvedSchedule::Constant { nu, lambda, .. } => (*nu, *lambda),
        }
    }

    /// Whether the band step may grow while the responses sit frozen.
    fn adaptive(&self) -> bool {
        matches!(self, ResolvedSchedule::Constant { adaptive: true, .. })
    }
}

/// Solver configuration. The default schedule is the diminishing pair the
/// experiments shipped with; `Auto` rescales to the feeder at hand and is
/// what the test suites use.
#[derive(Debug, Clone)]
pub struct DualConfig {
    pub max_iters: u32,
    pub tol: f64,
    pub schedule: StepSchedule,
    /// Seed for a per-solve random communication tree; `None` uses the
    /// star tree.
    pub comm_seed: Option<u64>,
}

impl Default for DualConfig {
    fn default() -> Self {
        Self {
            max_iters: 2000,
            tol: 1e-8,
            schedule: StepSchedule::default(),
            comm_seed: None,
        }
    }
}

impl DualConfig {
    pub fn auto() -> Self {
        Self {
            schedule: StepSchedule::Auto,
            ..Self::default()
        }
    }
}

/// One user's private view of the period program.
#[derive(Debug, Clone, Copy)]
pub struct UserAgent {
    pub lin: f64,
    pub cp: f64,
    pub load: f64,
    pub lo: f64,
    pub hi: f64,
}

impl UserAgent {
    pub fn respond(&self, coupling: f64) -> f64 {
        user_response(coupling, self.lin, self.cp, self.load, self.lo, self.hi)
    }
}

/// Aggregator side of the decomposition. Constructed from public grid data
/// plus the two aggregate observations (background voltage term, total
/// load); per-user private data never enters.
#[derive(Debug)]
pub struct Aggregator<'a> {
    sens: &'a SensitivityMatrices,
    alpha: f64,
    beta: f64,
    cp: f64,
    background: Vec<f64>,
    total_load: f64,
    state: DualState,
}

impl<'a> Aggregator<'a> {
    pub fn new(
        sens: &'a SensitivityMatrices,
        alpha: f64,
        beta: f64,
        cp: f64,
        background: Vec<f64>,
        total_load: f64,
    ) -> Self {
        let n = sens.resistance.dim();
        Self {
            sens,
            alpha,
            beta,
            cp,
            background,
            total_load,
            state: DualState::zeros(n),
        }
    }

    /// Per-user coupling prices `R(λ_lo − λ_hi) − nu·1`; entry n goes to
    /// user n.
    pub fn broadcast(&self) -> Vec<f64> {
        let n = self.sens.resistance.dim();
        let diff: Vec<f64> = self
            .state
            .lam_lo
            .iter()
            .zip(&self.state.lam_hi)
            .map(|(lo, hi)| lo - hi)
            .collect();
        let rdiff = self.sens.resistance.matvec(&diff);
        (0..n).map(|i| rdiff[i] - self.state.nu).collect()
    }

    pub fn primal_total(&self) -> f64 {
        primal_total(self.state.nu, self.cp)
    }

    /// Band pressure `R·b + (Rℓ + Xq)` per bus; the negated voltage
    /// deviation the dual updates react to.
    pub fn band_pressure(&self, responses: &[f64]) -> Vec<f64> {
        let rb = self.sens.resistance.matvec(responses);
        rb.iter()
            .zip(&self.background)
            .map(|(a, b)| a + b)
            .collect()
    }

    /// Signed worst slack of the band rows at the responses: positive
    /// means some bus violates the band, negative means all are interior.
    pub fn band_violation(&self, responses: &[f64]) -> f64 {
        let mut viol = f64::NEG_INFINITY;
        for u in self.band_pressure(responses) {
            viol = viol.max(u + self.alpha).max(-(u + self.beta));
        }
        viol
    }

    /// Primal residual at the current responses: the larger of the
    /// total-demand gap and the worst voltage-band violation.
    pub fn residual(&self, responses: &[f64]) -> f64 {
        let demand: f64 = responses.iter().sum::<f64>() + self.total_load;
        let gap = libm::fabs(self.primal_total() - demand);
        gap.max(self.band_violation(responses).max(0.0))
    }

    /// Dual update from the responses alone.
    pub fn absorb(&mut self, responses: &[f64], eta_nu: f64, eta_lambda: f64) {
        let pressure = self.band_pressure(responses);
        self.absorb_with(responses, &pressure, eta_nu, |_| (eta_lambda, eta_lambda));
    }

    /// Dual update reusing a precomputed band pressure, with per-row band
    /// steps supplied by `steps(k) -> (lower, upper)`.
    pub fn absorb_with(
        &mut self,
        responses: &[f64],
        pressure: &[f64],
        eta_nu: f64,
        steps: impl Fn(usize) -> (f64, f64),
    ) {
        let demand: f64 = responses.iter().sum::<f64>() + self.total_load;
        self.state.nu += eta_nu * (self.primal_total() - demand);
        for (k, u) in pressure.iter().enumerate() {
            let (eta_lo, eta_hi) = steps(k);
            self.state.lam_lo[k] = (self.state.lam_lo[k] + eta_lo * (u + self.alpha)).max(0.0);
            self.state.lam_hi[k] = (self.state.lam_hi[k] - eta_hi * (u + self.beta)).max(0.0);
        }
        self.state.iteration += 1;
    }

    pub fn state(&self) -> &DualState {
        &self.state
    }
}

/// One recorded round.
#[derive(Debug, Clone)]
pub struct DualIterate {
    pub nu: f64,
    pub residual: f64,
    pub charge: Vec<f64>,
    pub lam_lo: Vec<f64>,
    pub lam_hi: Vec<f64>,
}

/// Outcome of a distributed solve.
#[derive(Debug, Clone)]
pub struct DualRun {
    pub decision: Decision,
    pub state: DualState,
    pub trace: Vec<DualIterate>,
    pub residual: f64,
    pub iterations: u32,
}

/// Runs synchronous rounds of broadcast, user response, tree summation,
/// and dual ascent until the primal residual drops below `cfg.tol`.
/// Non-convergence is an error that still carries the full run.
pub fn solve_distributed(
    problem: &StepProblem,
    prev_charge: &[f64],
    cfg: &DualConfig,
) -> Result<DualRun, DualNetError> {
    let n = problem.user_count();
    if prev_charge.len() != n {
        return Err(DualNetError::Dimension {
            expected: n,
            got: prev_charge.len(),
        });
    }
    for i in 0..n {
        if problem.box_lo[i] > problem.box_hi[i] {
            return Err(DualNetError::Infeasible);
        }
    }

    // The aggregator's voltage measurement is taken while the previous
    // decision persists; under the linearized model the substation value
    // cancels out of the rearrangement, so any reference works here.
    let v0 = 1.0;
    let p_prev: Vec<f64> = problem
        .loads
        .iter()
        .zip(prev_charge)
        .map(|(l, b)| l + b)
        .collect();
    let rp = problem.sens.resistance.matvec(&p_prev);
    let xq = problem.sens.reactance.matvec(&problem.reactive);
    let v_measured: Vec<f64> = (0..n).map(|i| v0 - rp[i] - xq[i]).collect();
    let background = estimate_background(&v_measured, v0, &problem.sens.resistance, prev_charge);

    let tree = match cfg.comm_seed {
        Some(seed) => CommTree::random(n, seed),
        None => CommTree::star(n),
    };
    let total_load = tree_sum(&tree, &problem.loads)?;

    let users: Vec<UserAgent> = (0..n)
        .map(|i| UserAgent {
            lin: problem.lin[i],
            cp: problem.cp,
            load: problem.loads[i],
            lo: problem.box_lo[i],
            hi: problem.box_hi[i],
        })
        .collect();
    let mut agg = Aggregator::new(
        problem.sens,
        problem.alpha,
        problem.beta,
        problem.cp,
        background,
        total_load,
    );
    let schedule = cfg.schedule.resolve(problem.cp, n, problem.sens);

    let mut trace = Vec::new();
    let mut responses = vec![0.0; n];
    let mut prev_responses: Option<Vec<f64>> = None;
    // While every response is clipped, the dual is locally linear in the
    // band multipliers and they may have a long ramp to climb against a
    // small constant violation: the adaptive preset doubles the band gain
    // on such plateaus, making ramp climbs logarithmic. A row whose
    // pressure sign persists is over-damped and its gain grows gently; a
    // sign flip resets it. The relative step cap below keeps any single
    // move proportionate, which bounds the overshoot either rule can cause.
    let mut band_gain = 1.0f64;
    let mut gain_lo = vec![1.0f64; n];
    let mut gain_hi = vec![1.0f64; n];
    let mut sign_lo: Vec<Option<bool>> = vec![None; n];
    let mut sign_hi: Vec<Option<bool>> = vec![None; n];
    let mut step_lo = vec![0.0f64; n];
    let mut step_hi = vec![0.0f64; n];
    for j in 0..cfg.max_iters {
        let coupling = agg.broadcast();
        for (i, user) in users.iter().enumerate() {
            responses[i] = user.respond(coupling[i]);
        }
        let pressure = agg.band_pressure(&responses);
        let residual = {
            let demand: f64 = responses.iter().sum::<f64>() + total_load;
            let gap = libm::fabs(agg.primal_total() - demand);
            let viol = pressure
                .iter()
                .map(|u| (u + problem.alpha).max(-(u + problem.beta)))
                .fold(f64::NEG_INFINITY, f64::max);
            gap.max(viol.max(0.0))
        };
        // Complementarity guard: a feasible point with overshot multipliers
        // (slack rows priced as if tight) can satisfy the primal residual
        // without being optimal, so termination also requires every priced
        // row to be tight in proportion to its price.
        let comp = {
            let state = agg.state();
            let mut worst = 0.0f64;
            for (k, u) in pressure.iter().enumerate() {
                let slack_lo = (-(u + problem.alpha)).max(0.0);
                let slack_hi = (u + problem.beta).max(0.0);
                let l = state.lam_lo[k];
                let h = state.lam_hi[k];
                worst = worst
                    .max(slack_lo * l / (1.0 + l))
                    .max(slack_hi * h / (1.0 + h));
            }
            worst
        };
        trace.push(DualIterate {
            nu: agg.state().nu,
            residual,
            charge: responses.clone(),
            lam_lo: agg.state().lam_lo.clone(),
            lam_hi: agg.state().lam_hi.clone(),
        });
        if residual <= cfg.tol && comp <= cfg.tol {
            let run = assemble_run(
                problem,
                &responses,
                agg.state().clone(),
                trace,
                residual,
                j + 1,
            );
            return Ok(run);
        }
        let (eta_nu, eta_lambda) = schedule.at(j);
        if schedule.adaptive() {
            let frozen = prev_responses.as_deref() == Some(responses.as_slice());
            band_gain = if frozen {
                (band_gain * 2.0).min(1e9)
            } else {
                1.0
            };
            for k in 0..n {
                let push_lo = pressure[k] + problem.alpha > 0.0;
                let push_hi = -(pressure[k] + problem.beta) > 0.0;
                let grow = |gain: f64, prev: &mut Option<bool>, sign: bool| {
                    let same = *prev == Some(sign);
                    *prev = Some(sign);
                    if same {
                        (gain * 1.3).min(1e9)
                    } else {
                        1.0
                    }
                };
                gain_lo[k] = grow(gain_lo[k], &mut sign_lo[k], push_lo);
                gain_hi[k] = grow(gain_hi[k], &mut sign_hi[k], push_hi);
            }
            prev_responses = Some(responses.clone());
        }
        // A boosted step may raise a multiplier by at most half of itself
        // plus one base step, so a ramp still climbs geometrically but the
        // exit overshoot stays proportional.
        let state = agg.state();
        for k in 0..n {
            step_lo[k] = eta_lambda * band_gain.max(gain_lo[k]);
            step_hi[k] = eta_lambda * band_gain.max(gain_hi[k]);
            let grad_lo = pressure[k] + problem.alpha;
            if grad_lo > 0.0 {
                let cap = (0.5 * state.lam_lo[k] + eta_lambda * grad_lo) / grad_lo;
                step_lo[k] = step_lo[k].min(cap);
            }
            let grad_hi = -(pressure[k] + problem.beta);
            if grad_hi > 0.0 {
                let cap = (0.5 * state.lam_hi[k] + eta_lambda * grad_hi) / grad_hi;
                step_hi[k] = step_hi[k].min(cap);
            }
        }
        agg.absorb_with(&responses, &pressure, eta_nu, |k| (step_lo[k], step_hi[k]));
    }
    let residual = trace.last().map_or(f64::INFINITY, |it| it.residual);
    let run = assemble_run(
        problem,
        &responses,
        agg.state().clone(),
        trace,
        residual,
        cfg.max_iters,
    );
    Err(DualNetError::NonConvergence {
        iterations: cfg.max_iters,
        residual,
        run: Box::new(run),
    })
}

fn assemble_run(
    problem: &StepProblem,
    charge: &[f64],
    state: DualState,
    trace: Vec<DualIterate>,
    residual: f64,
    iterations: u32,
) -> DualRun {
    let n = problem.user_count();
    let mut active_box_lo = Vec::new();
    let mut active_box_hi = Vec::new();
    for i in 0..n {
        if charge[i] - problem.box_lo[i] <= 1e-9 {
            active_box_lo.push(i);
        }
        if problem.box_hi[i] - charge[i] <= 1e-9 {
            active_box_hi.push(i);
        }
    }
    let background = problem.background();
    let rb = problem.sens.resistance.matvec(charge);
    let mut active_volt_lo = Vec::new();
    let mut active_volt_hi = Vec::new();
    for k in 0..n {
        let dev = -(rb[k] + background[k]);
        if dev - problem.alpha <= 1e-9 {
            active_volt_lo.push(k);
        }
        if problem.beta - dev <= 1e-9 {
            active_volt_hi.push(k);
        }
    }
    let decision = Decision {
        objective: step_objective(problem, charge),
        charge: charge.to_vec(),
        kkt_residual: residual,
        active_box_lo,
        active_box_hi,
        active_volt_lo,
        active_volt_hi,
        volt_mult_lo: state.lam_lo.clone(),
        volt_mult_hi: state.lam_hi.clone(),
        fallback: false,
        dual_iterations: Some(iterations),
    };
    DualRun {
        decision,
        state,
        trace,
        residual,
        iterations,
    }
}
