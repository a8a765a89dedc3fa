//! Radial feeder model: topology, voltage sensitivities, and power flow.
//!
//! The feeder is a tree rooted at the substation (bus 0) with one load bus
//! per remaining node. Voltages come in two flavours: the linearized model
//! `v = v0·1 − R p − X q` built from the reduced branch-bus incidence
//! algebra, and an exact backward/forward sweep of the nonlinear branch-flow
//! equations used to validate the linearization.

use alloc::vec;
use alloc::vec::Vec;

use crate::mat::Matrix;

/// Convergence target for the exact sweep, in pu² of squared voltage.
pub const SWEEP_RESIDUAL_TOL: f64 = 1e-10;
/// Iteration cap for the exact sweep.
pub const SWEEP_MAX_ITERS: u32 = 200;

#[derive(Debug, thiserror::Error)]
pub enum GridError {
    #[error("feeder has no branches")]
    Empty,
    #[error("bus {0} appears as child of more than one branch")]
    DuplicateChild(usize),
    #[error("invalid child bus {0}: children must be 1..=N, each exactly once")]
    InvalidChild(usize),
    #[error("invalid parent bus {0}: parents must be 0..=N")]
    InvalidParent(usize),
    #[error("bus {0} is not reachable from the substation")]
    Unreachable(usize),
    #[error("branch {parent}->{child} has non-positive impedance")]
    NonPositiveImpedance { parent: usize, child: usize },
    #[error("voltage band must satisfy alpha < 0 < beta, got alpha={alpha}, beta={beta}")]
    InvalidBand { alpha: f64, beta: f64 },
    #[error("substation squared voltage must be positive, got {0}")]
    InvalidSubstationVoltage(f64),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("sweep did not converge after {iterations} iterations (residual {residual:.3e})")]
    SweepDiverged { iterations: u32, residual: f64 },
}

/// One distribution line, oriented parent -> child.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Branch {
    pub parent: usize,
    pub child: usize,
    pub resistance: f64,
    pub reactance: f64,
}

/// Validated radial feeder.
///
/// Branches are stored topologically ordered, parent before child. The
/// voltage band `(alpha, beta)` is expressed as offsets of squared voltage
/// magnitude from the substation value `v0`.
#[derive(Debug, Clone)]
pub struct Feeder {
    branches: Vec<Branch>,
    v0: f64,
    alpha: f64,
    beta: f64,
    /// parent[b] is the parent bus of bus b+1.
    parent: Vec<usize>,
}

impl Feeder {
    pub fn new(v0: f64, alpha: f64, beta: f64, branches: Vec<Branch>) -> Result<Self, GridError> {
        if branches.is_empty() {
            return Err(GridError::Empty);
        }
        if !(v0 > 0.0) {
            return Err(GridError::InvalidSubstationVoltage(v0));
        }
        if !(alpha < 0.0 && beta > 0.0) {
            return Err(GridError::InvalidBand { alpha, beta });
        }
        let n = branches.len();
        let mut parent = vec![usize::MAX; n];
        for b in &branches {
            if !(b.resistance > 0.0 && b.reactance > 0.0) {
                return Err(GridError::NonPositiveImpedance {
                    parent: b.parent,
                    child: b.child,
                });
            }
            if b.child == 0 || b.child > n {
                return Err(GridError::InvalidChild(b.child));
            }
            if b.parent > n {
                return Err(GridError::InvalidParent(b.parent));
            }
            if parent[b.child - 1] != usize::MAX {
                return Err(GridError::DuplicateChild(b.child));
            }
            parent[b.child - 1] = b.parent;
        }
        // Every bus has exactly one parent branch; the graph is a tree iff
        // each parent chain reaches the substation.
        for bus in 1..=n {
            let mut cur = bus;
            let mut steps = 0;
            while cur != 0 {
                cur = parent[cur - 1];
                steps += 1;
                if steps > n {
                    return Err(GridError::Unreachable(bus));
                }
            }
        }
        // Topological order: walk down from the root.
        let mut children: Vec<Vec<usize>> = vec![Vec::new(); n + 1];
        for b in &branches {
            children[b.parent].push(b.child);
        }
        for c in &mut children {
            c.sort_unstable();
        }
        let mut order = Vec::with_capacity(n);
        let mut stack = vec![0usize];
        while let Some(bus) = stack.pop() {
            for &c in children[bus].iter().rev() {
                order.push(c);
                stack.push(c);
            }
        }
        let by_child: Vec<Branch> = {
            let mut v = vec![
                Branch {
                    parent: 0,
                    child: 0,
                    resistance: 0.0,
                    reactance: 0.0
                };
                n
            ];
            for b in &branches {
                v[b.child - 1] = *b;
            }
            v
        };
        let sorted: Vec<Branch> = order.iter().map(|&c| by_child[c - 1]).collect();
        Ok(Self {
            branches: sorted,
            v0,
            alpha,
            beta,
            parent,
        })
    }

    /// Number of load buses (excluding the substation).
    pub fn bus_count(&self) -> usize {
        self.branches.len()
    }

    /// Branches in topological order, parent before child.
    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn v0(&self) -> f64 {
        self.v0
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn parent_of(&self, bus: usize) -> usize {
        self.parent[bus - 1]
    }

    /// Buses on the path from `bus` up to (excluding) the substation.
    pub fn path_to_root(&self, bus: usize) -> Vec<usize> {
        let mut path = Vec::new();
        let mut cur = bus;
        while cur != 0 {
            path.push(cur);
            cur = self.parent_of(cur);
        }
        path
    }
}

/// Voltage sensitivity matrices of the linearized model.
///
/// Both are symmetric positive definite with non-negative entries; entry
/// (n, m) is twice the common-path impedance from the substation to buses
/// n+1 and m+1.
#[derive(Debug, Clone)]
pub struct SensitivityMatrices {
    pub resistance: Matrix,
    pub reactance: Matrix,
}

/// Builds the sensitivity matrices `R = 2(Aᵀ diag⁻¹(r) A)⁻¹` and the
/// analogous `X`, where `A` is the reduced branch-bus incidence matrix.
pub fn build_sensitivities(feeder: &Feeder) -> SensitivityMatrices {
    let n = feeder.bus_count();
    let mut lap_r = Matrix::zeros(n);
    let mut lap_x = Matrix::zeros(n);
    for b in feeder.branches() {
        let wr = 1.0 / b.resistance;
        let wx = 1.0 / b.reactance;
        let c = b.child - 1;
        lap_r.add_to(c, c, wr);
        lap_x.add_to(c, c, wx);
        if b.parent >= 1 {
            let p = b.parent - 1;
            lap_r.add_to(p, p, wr);
            lap_x.add_to(p, p, wx);
            lap_r.add_to(p, c, -wr);
            lap_r.add_to(c, p, -wr);
            lap_x.add_to(p, c, -wx);
            lap_x.add_to(c, p, -wx);
        }
    }
    // The reduced weighted Laplacian of a tree is SPD, so inversion cannot
    // fail for a validated feeder.
    let mut resistance = lap_r
        .inverse_spd()
        .expect("reduced incidence matrix of a tree is invertible");
    let mut reactance = lap_x
        .inverse_spd()
        .expect("reduced incidence matrix of a tree is invertible");
    scale(&mut resistance, 2.0);
    scale(&mut reactance, 2.0);
    SensitivityMatrices {
        resistance,
        reactance,
    }
}

fn scale(m: &mut Matrix, s: f64) {
    let n = m.dim();
    for i in 0..n {
        for j in 0..n {
            m.set(i, j, m.get(i, j) * s);
        }
    }
}

/// Linearized squared voltage magnitudes: `v = v0·1 − R p − X q`.
pub fn ldf_voltages(
    sens: &SensitivityMatrices,
    active: &[f64],
    reactive: &[f64],
    v0: f64,
) -> Result<Vec<f64>, GridError> {
    let n = sens.resistance.dim();
    check_dim(n, active.len())?;
    check_dim(n, reactive.len())?;
    let rp = sens.resistance.matvec(active);
    let xq = sens.reactance.matvec(reactive);
    Ok((0..n).map(|i| v0 - rp[i] - xq[i]).collect())
}

/// Per-bus slack against the voltage band.
#[derive(Debug, Clone)]
pub struct VoltageMargins {
    /// `(−Rp − Xq) − alpha`, per bus; negative means under-voltage.
    pub lower: Vec<f64>,
    /// `beta − (−Rp − Xq)`, per bus; negative means over-voltage.
    pub upper: Vec<f64>,
}

impl VoltageMargins {
    pub fn feasible(&self, tol: f64) -> bool {
        self.worst() >= -tol
    }

    /// The smallest slack across both sides and all buses.
    pub fn worst(&self) -> f64 {
        let lo = self.lower.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.upper.iter().copied().fold(f64::INFINITY, f64::min);
        lo.min(hi)
    }
}

/// Slack of the band constraints `alpha·1 ≤ −Rp − Xq ≤ beta·1`.
pub fn voltage_margins(
    sens: &SensitivityMatrices,
    active: &[f64],
    reactive: &[f64],
    alpha: f64,
    beta: f64,
) -> Result<VoltageMargins, GridError> {
    let n = sens.resistance.dim();
    check_dim(n, active.len())?;
    check_dim(n, reactive.len())?;
    let rp = sens.resistance.matvec(active);
    let xq = sens.reactance.matvec(reactive);
    let mut lower = vec![0.0; n];
    let mut upper = vec![0.0; n];
    for i in 0..n {
        let dev = -rp[i] - xq[i];
        lower[i] = dev - alpha;
        upper[i] = beta - dev;
    }
    Ok(VoltageMargins { lower, upper })
}

/// Exact power-flow solution from the backward/forward sweep.
#[derive(Debug, Clone)]
pub struct SweepSolution {
    /// Squared voltage magnitude per load bus.
    pub voltages: Vec<f64>,
    /// Squared current magnitude per branch (topological order).
    pub current_sq: Vec<f64>,
    /// Sending-end active power per branch.
    pub active_flow: Vec<f64>,
    /// Sending-end reactive power per branch.
    pub reactive_flow: Vec<f64>,
    pub iterations: u32,
}

/// Solves the nonlinear branch-flow equations for constant-power demands by
/// backward current aggregation and forward voltage update from a flat start.
pub fn ac_sweep(
    feeder: &Feeder,
    active: &[f64],
    reactive: &[f64],
) -> Result<SweepSolution, GridError> {
    let n = feeder.bus_count();
    check_dim(n, active.len())?;
    check_dim(n, reactive.len())?;
    let branches = feeder.branches();
    // branch index feeding bus b+1
    let mut branch_of = vec![0usize; n];
    for (k, b) in branches.iter().enumerate() {
        branch_of[b.child - 1] = k;
    }
    let mut v = vec![feeder.v0(); n];
    let mut cur_sq = vec![0.0; n];
    let mut flow_p = vec![0.0; n];
    let mut flow_q = vec![0.0; n];

    let voltage_at = |v: &[f64], bus: usize| -> f64 {
        if bus == 0 {
            feeder.v0()
        } else {
            v[bus - 1]
        }
    };

    let mut residual = f64::INFINITY;
    for it in 1..=SWEEP_MAX_ITERS {
        // Backward: receiving-end flows, then losses from the current
        // squared-current estimates.
        for (k, b) in branches.iter().enumerate().rev() {
            let bus = b.child - 1;
            let mut p = active[bus];
            let mut q = reactive[bus];
            for (kc, bc) in branches.iter().enumerate().skip(k + 1) {
                if bc.parent == b.child {
                    p += flow_p[kc];
                    q += flow_q[kc];
                }
            }
            flow_p[k] = p + b.resistance * cur_sq[k];
            flow_q[k] = q + b.reactance * cur_sq[k];
        }
        // Forward: voltage drop along each branch.
        for (k, b) in branches.iter().enumerate() {
            let vp = voltage_at(&v, b.parent);
            v[b.child - 1] = vp - 2.0 * (b.resistance * flow_p[k] + b.reactance * flow_q[k])
                + (b.resistance * b.resistance + b.reactance * b.reactance) * cur_sq[k];
            if v[b.child - 1] <= 0.0 {
                return Err(GridError::SweepDiverged {
                    iterations: it,
                    residual: f64::INFINITY,
                });
            }
        }
        // Squared current from the sending end.
        for (k, b) in branches.iter().enumerate() {
            let vp = voltage_at(&v, b.parent);
            cur_sq[k] = (flow_p[k] * flow_p[k] + flow_q[k] * flow_q[k]) / vp;
        }
        let sol = SweepSolution {
            voltages: v.clone(),
            current_sq: cur_sq.clone(),
            active_flow: flow_p.clone(),
            reactive_flow: flow_q.clone(),
            iterations: it,
        };
        residual = branch_flow_residual(feeder, active, reactive, &sol);
        if residual <= SWEEP_RESIDUAL_TOL {
            return Ok(sol);
        }
    }
    Err(GridError::SweepDiverged {
        iterations: SWEEP_MAX_ITERS,
        residual,
    })
}

/// Largest violation of the branch-flow equations at a candidate solution:
/// power balance per bus, voltage drop per branch, and the squared-current
/// definition.
pub fn branch_flow_residual(
    feeder: &Feeder,
    active: &[f64],
    reactive: &[f64],
    sol: &SweepSolution,
) -> f64 {
    let branches = feeder.branches();
    let mut worst = 0.0f64;
    for (k, b) in branches.iter().enumerate() {
        let bus = b.child - 1;
        let mut child_p = 0.0;
        let mut child_q = 0.0;
        for (kc, bc) in branches.iter().enumerate() {
            if bc.parent == b.child {
                child_p += sol.active_flow[kc];
                child_q += sol.reactive_flow[kc];
            }
        }
        // Receiving-end balance.
        let rp = child_p + active[bus] - (sol.active_flow[k] - b.resistance * sol.current_sq[k]);
        let rq = child_q + reactive[bus] - (sol.reactive_flow[k] - b.reactance * sol.current_sq[k]);
        let vp = if b.parent == 0 {
            feeder.v0()
        } else {
            sol.voltages[b.parent - 1]
        };
        // Voltage drop.
        let rv = sol.voltages[bus]
            - (vp - 2.0 * (b.resistance * sol.active_flow[k] + b.reactance * sol.reactive_flow[k])
                + (b.resistance * b.resistance + b.reactance * b.reactance) * sol.current_sq[k]);
        // Current definition at the sending end.
        let ri = sol.current_sq[k] * vp
            - (sol.active_flow[k] * sol.active_flow[k]
                + sol.reactive_flow[k] * sol.reactive_flow[k]);
        worst = worst
            .max(libm::fabs(rp))
            .max(libm::fabs(rq))
            .max(libm::fabs(rv))
            .max(libm::fabs(ri));
    }
    worst
}

fn check_dim(expected: usize, got: usize) -> Result<(), GridError> {
    if expected == got {
        Ok(())
    } else {
        Err(GridError::Dimension { expected, got })
    }
}

/// Common-path construction of the sensitivity entries, used as an
/// independent oracle for `build_sensitivities` in tests.
pub fn common_path_matrix(feeder: &Feeder, use_reactance: bool) -> Matrix {
    let n = feeder.bus_count();
    let mut by_child = vec![0.0; n];
    for b in feeder.branches() {
        by_child[b.child - 1] = if use_reactance {
            b.reactance
        } else {
            b.resistance
        };
    }
    let mut m = Matrix::zeros(n);
    for i in 1..=n {
        let pi = feeder.path_to_root(i);
        for j in 1..=n {
            let pj = feeder.path_to_root(j);
            let mut s = 0.0;
            for bus in &pi {
                if pj.contains(bus) {
                    s += by_child[bus - 1];
                }
            }
            m.set(i - 1, j - 1, 2.0 * s);
        }
    }
    m
}
