//! Dense interior-point solver for the per-period program.
//!
//! Minimizes `½ bᵀH b + cᵀb` with `H = cp(I + 11ᵀ)` subject to a per-entry
//! box and optional linear rows from the voltage band. Mehrotra
//! predictor-corrector iterations drive the barrier parameter down, then a
//! polish step re-solves the equality-constrained program on the detected
//! active set so that active bounds hold exactly. Problems whose voltage
//! rows are slack at the box-constrained optimum never form the dense
//! normal matrix: the box-only Newton system is diagonal plus rank one.
//!
//! This code path is the centralized oracle; it shares nothing with the
//! message-passing solver in `dualnet`, which is what makes their agreement
//! a meaningful check.

use alloc::vec;
use alloc::vec::Vec;

use crate::mat::{dot, Matrix};

const MAX_ITERS: u32 = 120;
const MU_TOL: f64 = 1e-13;
const FEAS_TOL: f64 = 1e-11;
const STEP_SHRINK: f64 = 0.995;
const INFEAS_PRIMAL: f64 = 1e-7;
/// Box widths below this are treated as fixed variables.
const FIXED_WIDTH: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum QpError {
    #[error("problem is infeasible")]
    Infeasible,
    #[error("interior-point iterations failed to converge")]
    NumericalFailure,
}

/// Voltage-band rows `A y ≤ rhs_lo` and `−A y ≤ rhs_hi`, with `A` the
/// resistance sensitivity matrix.
pub struct VoltRows<'a> {
    pub rows: &'a Matrix,
    pub rhs_lo: Vec<f64>,
    pub rhs_hi: Vec<f64>,
}

pub struct QpInput<'a> {
    pub cp: f64,
    pub lin: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub volt: Option<VoltRows<'a>>,
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub b: Vec<f64>,
    pub box_mult_lo: Vec<f64>,
    pub box_mult_hi: Vec<f64>,
    pub volt_mult_lo: Vec<f64>,
    pub volt_mult_hi: Vec<f64>,
    pub kkt_residual: f64,
}

pub fn solve(input: &QpInput) -> Result<QpSolution, QpError> {
    let n = input.lin.len();
    debug_assert_eq!(input.lo.len(), n);
    debug_assert_eq!(input.hi.len(), n);
    for i in 0..n {
        if input.hi[i] < input.lo[i] - 1e-12 {
            return Err(QpError::Infeasible);
        }
    }

    // Try the box-only relaxation first; if its optimum already satisfies
    // the voltage rows it solves the full problem with zero row multipliers.
    let relaxed = solve_reduced(input, false)?;
    if let Some(volt) = &input.volt {
        let m = volt.rows.dim();
        let ay = volt.rows.matvec(&relaxed.b);
        let mut ok = true;
        for k in 0..m {
            if ay[k] > volt.rhs_lo[k] + 1e-12 || -ay[k] > volt.rhs_hi[k] + 1e-12 {
                ok = false;
                break;
            }
        }
        if ok {
            return Ok(relaxed);
        }
        solve_reduced(input, true)
    } else {
        Ok(relaxed)
    }
}

/// Elimination of fixed variables plus the interior-point run.
fn solve_reduced(input: &QpInput, with_volt: bool) -> Result<QpSolution, QpError> {
    let n = input.lin.len();
    let cp = input.cp;
    let free: Vec<usize> = (0..n)
        .filter(|&i| input.hi[i] - input.lo[i] > FIXED_WIDTH)
        .collect();
    let mut b_full = input.lo.clone();
    let fixed_sum: f64 = (0..n)
        .filter(|i| !free.contains(i))
        .map(|i| input.lo[i])
        .sum();

    let m_volt = if with_volt {
        input.volt.as_ref().map_or(0, |v| v.rows.dim())
    } else {
        0
    };

    let nf = free.len();
    if nf == 0 {
        // Everything pinned; just validate the voltage rows.
        if let Some(volt) = input.volt.as_ref() {
            let ay = volt.rows.matvec(&b_full);
            for k in 0..volt.rows.dim() {
                if ay[k] > volt.rhs_lo[k] + 1e-9 || -ay[k] > volt.rhs_hi[k] + 1e-9 {
                    return Err(QpError::Infeasible);
                }
            }
        }
        return Ok(QpSolution {
            b: b_full,
            box_mult_lo: vec![0.0; n],
            box_mult_hi: vec![0.0; n],
            volt_mult_lo: vec![0.0; input.volt.as_ref().map_or(0, |v| v.rows.dim())],
            volt_mult_hi: vec![0.0; input.volt.as_ref().map_or(0, |v| v.rows.dim())],
            kkt_residual: 0.0,
        });
    }

    // Reduced data: coupling through 11ᵀ turns fixed mass into a linear
    // shift, voltage rows lose their fixed columns into the rhs.
    let lin: Vec<f64> = free
        .iter()
        .map(|&i| input.lin[i] + cp * fixed_sum)
        .collect();
    let lo: Vec<f64> = free.iter().map(|&i| input.lo[i]).collect();
    let hi: Vec<f64> = free.iter().map(|&i| input.hi[i]).collect();

    // Constraint rows over free variables: volt-lo rows then volt-hi rows.
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut rhs: Vec<f64> = Vec::new();
    if m_volt > 0 {
        let volt = input.volt.as_ref().unwrap();
        for k in 0..m_volt {
            let full = volt.rows.row(k);
            let fixed_part: f64 = (0..n)
                .filter(|i| !free.contains(i))
                .map(|i| full[i] * b_full[i])
                .sum();
            let reduced: Vec<f64> = free.iter().map(|&i| full[i]).collect();
            rows.push(reduced.clone());
            rhs.push(volt.rhs_lo[k] - fixed_part);
            rows.push(reduced.iter().map(|v| -v).collect());
            rhs.push(volt.rhs_hi[k] + fixed_part);
        }
    }

    let core = ipm(cp, &lin, &lo, &hi, &rows, &rhs)?;

    // Scatter back.
    for (slot, &i) in core.y.iter().zip(&free) {
        b_full[i] = *slot;
    }
    let mut box_mult_lo = vec![0.0; n];
    let mut box_mult_hi = vec![0.0; n];
    for (j, &i) in free.iter().enumerate() {
        box_mult_lo[i] = core.z_lo[j];
        box_mult_hi[i] = core.z_hi[j];
    }
    let total_m = input.volt.as_ref().map_or(0, |v| v.rows.dim());
    let mut volt_mult_lo = vec![0.0; total_m];
    let mut volt_mult_hi = vec![0.0; total_m];
    for k in 0..m_volt {
        volt_mult_lo[k] = core.z_rows[2 * k];
        volt_mult_hi[k] = core.z_rows[2 * k + 1];
    }
    Ok(QpSolution {
        b: b_full,
        box_mult_lo,
        box_mult_hi,
        volt_mult_lo,
        volt_mult_hi,
        kkt_residual: core.kkt_residual,
    })
}

struct IpmCore {
    y: Vec<f64>,
    z_lo: Vec<f64>,
    z_hi: Vec<f64>,
    z_rows: Vec<f64>,
    kkt_residual: f64,
}

/// Mehrotra predictor-corrector on
/// `min ½cp(‖y‖² + (1ᵀy)²) + linᵀy  s.t.  lo ≤ y ≤ hi, rows·y ≤ rhs`.
#[allow(clippy::too_many_lines)]
fn ipm(
    cp: f64,
    lin: &[f64],
    lo: &[f64],
    hi: &[f64],
    rows: &[Vec<f64>],
    rhs: &[f64],
) -> Result<IpmCore, QpError> {
    let n = lin.len();
    let mr = rows.len();
    let m = 2 * n + mr;

    // Constraint i slack h_i − g_i(y): 0..n lower box, n..2n upper box,
    // then the extra rows.
    let slack_of = |y: &[f64], out: &mut [f64]| {
        for i in 0..n {
            out[i] = y[i] - lo[i];
            out[n + i] = hi[i] - y[i];
        }
        for (k, row) in rows.iter().enumerate() {
            out[2 * n + k] = rhs[k] - dot(row, y);
        }
    };

    // Gᵀ t with the same ordering.
    let gt_mul = |t: &[f64], out: &mut [f64]| {
        for i in 0..n {
            out[i] = -t[i] + t[n + i];
        }
        for (k, row) in rows.iter().enumerate() {
            let tk = t[2 * n + k];
            if tk != 0.0 {
                for i in 0..n {
                    out[i] += row[i] * tk;
                }
            }
        }
    };

    let grad = |y: &[f64], out: &mut [f64]| {
        let total: f64 = y.iter().sum();
        for i in 0..n {
            out[i] = cp * (y[i] + total) + lin[i];
        }
    };

    let mut y = vec![0.0; n];
    for i in 0..n {
        y[i] = 0.5 * (lo[i] + hi[i]);
    }
    let mut s = vec![0.0; m];
    slack_of(&y, &mut s);
    for (i, si) in s.iter_mut().enumerate() {
        let floor = if i < 2 * n {
            0.25 * (hi[i % n] - lo[i % n])
        } else {
            1e-3
        };
        *si = si.max(floor);
    }
    let mut z = vec![1.0; m];

    let mut r_d = vec![0.0; n];
    let mut r_p = vec![0.0; m];
    let mut tmp_n = vec![0.0; n];
    let mut best_primal = f64::INFINITY;

    for iter in 1..=MAX_ITERS {
        // Residuals.
        grad(&y, &mut r_d);
        gt_mul(&z, &mut tmp_n);
        for i in 0..n {
            r_d[i] += tmp_n[i];
        }
        slack_of(&y, &mut r_p);
        for i in 0..m {
            // r_p = Gy + s − h = s_actual_deficit; using slack_of gives
            // h − Gy, so the residual is s − (h − Gy).
            r_p[i] = s[i] - r_p[i];
        }
        let mu = dot(&s, &z) / m as f64;
        let pri_inf = r_p.iter().fold(0.0f64, |a, v| a.max(libm::fabs(*v)));
        let dual_inf = r_d.iter().fold(0.0f64, |a, v| a.max(libm::fabs(*v)));
        best_primal = best_primal.min(pri_inf);
        // Tolerances scale with the multipliers: for large multipliers the
        // attainable residual floor in f64 grows with them, and the polish
        // recovers the exact active set anyway.
        let scale = z.iter().fold(1.0f64, |a, v| a.max(*v));
        if mu <= MU_TOL * scale && pri_inf <= FEAS_TOL * scale && dual_inf <= FEAS_TOL * scale {
            return Ok(finish(cp, lin, lo, hi, rows, rhs, y, s, z, slack_of));
        }
        if z.iter().any(|v| *v > 1e14) || iter == MAX_ITERS {
            if best_primal > INFEAS_PRIMAL {
                return Err(QpError::Infeasible);
            }
            if mu <= 1e-9 * scale && pri_inf <= 1e-8 {
                // Good enough to polish.
                return Ok(finish(cp, lin, lo, hi, rows, rhs, y, s, z, slack_of));
            }
            return Err(QpError::NumericalFailure);
        }

        // Normal matrix: cp·I + diag(w_box) + cp·11ᵀ + rowsᵀ·W·rows.
        let mut diag = vec![cp; n];
        for i in 0..n {
            diag[i] += z[i] / s[i] + z[n + i] / s[n + i];
        }
        let factor_or_degenerate = if mr == 0 {
            Some(Factor::rank_one(diag, cp))
        } else {
            // diag(diag) + cp·11ᵀ, then the weighted row blocks.
            let mut mmat = Matrix::zeros(n);
            for i in 0..n {
                for j in 0..n {
                    mmat.set(i, j, cp + if i == j { diag[i] } else { 0.0 });
                }
            }
            for (k, row) in rows.iter().enumerate() {
                let w = z[2 * n + k] / s[2 * n + k];
                for i in 0..n {
                    if row[i] == 0.0 {
                        continue;
                    }
                    let wi = w * row[i];
                    for j in 0..n {
                        mmat.add_to(i, j, wi * row[j]);
                    }
                }
            }
            Factor::dense(mmat)
        };
        let Some(factor) = factor_or_degenerate else {
            // The scaling matrix degrades once slacks underflow; if the
            // iterate is effectively converged hand it to the polish,
            // otherwise report the failure.
            if mu <= 1e-9 * scale && pri_inf <= 1e-8 {
                return Ok(finish(cp, lin, lo, hi, rows, rhs, y, s, z, slack_of));
            }
            return Err(QpError::NumericalFailure);
        };

        let solve_dirs = |factor: &Factor,
                          r_c: &[f64],
                          r_d: &[f64],
                          r_p: &[f64],
                          tmp_n: &mut Vec<f64>|
         -> (Vec<f64>, Vec<f64>, Vec<f64>) {
            // rhs = −r_d + Gᵀ(r_c/s − (z/s)·r_p)
            let mut t = vec![0.0; m];
            for i in 0..m {
                t[i] = r_c[i] / s[i] - (z[i] / s[i]) * r_p[i];
            }
            gt_mul(&t, tmp_n);
            let mut rhs_vec = vec![0.0; n];
            for i in 0..n {
                rhs_vec[i] = -r_d[i] + tmp_n[i];
            }
            let dy = factor.solve(&rhs_vec);
            // Δs = −r_p − G·Δy
            let mut ds = vec![0.0; m];
            for i in 0..n {
                ds[i] = -r_p[i] + dy[i];
                ds[n + i] = -r_p[n + i] - dy[i];
            }
            for (k, row) in rows.iter().enumerate() {
                ds[2 * n + k] = -r_p[2 * n + k] - dot(row, &dy);
            }
            let mut dz = vec![0.0; m];
            for i in 0..m {
                dz[i] = (-r_c[i] - z[i] * ds[i]) / s[i];
            }
            (dy, ds, dz)
        };

        // Predictor.
        let r_c_aff: Vec<f64> = (0..m).map(|i| s[i] * z[i]).collect();
        let (_dy_a, ds_a, dz_a) = solve_dirs(&factor, &r_c_aff, &r_d, &r_p, &mut tmp_n);
        let alpha_p_aff = max_step(&s, &ds_a).min(1.0);
        let alpha_d_aff = max_step(&z, &dz_a).min(1.0);
        let mut mu_aff = 0.0;
        for i in 0..m {
            mu_aff += (s[i] + alpha_p_aff * ds_a[i]) * (z[i] + alpha_d_aff * dz_a[i]);
        }
        mu_aff /= m as f64;
        let sigma = {
            let ratio = (mu_aff / mu).clamp(0.0, 1.0);
            ratio * ratio * ratio
        };

        // Corrector.
        let r_c: Vec<f64> = (0..m)
            .map(|i| s[i] * z[i] + ds_a[i] * dz_a[i] - sigma * mu)
            .collect();
        let (dy, ds, dz) = solve_dirs(&factor, &r_c, &r_d, &r_p, &mut tmp_n);
        let alpha_p = (STEP_SHRINK * max_step(&s, &ds)).min(1.0);
        let alpha_d = (STEP_SHRINK * max_step(&z, &dz)).min(1.0);
        for i in 0..n {
            y[i] += alpha_p * dy[i];
        }
        for i in 0..m {
            s[i] += alpha_p * ds[i];
            z[i] += alpha_d * dz[i];
        }
    }
    Err(QpError::NumericalFailure)
}

/// Largest step in [0, 1] keeping `v + α·dv ≥ (1−shrink)·v` positive.
fn max_step(v: &[f64], dv: &[f64]) -> f64 {
    let mut alpha = 1.0f64;
    for i in 0..v.len() {
        if dv[i] < 0.0 {
            alpha = alpha.min(-v[i] / dv[i]);
        }
    }
    alpha
}

enum Factor {
    /// diag + cp·11ᵀ, solved by Sherman-Morrison.
    RankOne {
        diag: Vec<f64>,
        cp: f64,
    },
    Dense(crate::mat::Cholesky),
}

impl Factor {
    fn rank_one(diag: Vec<f64>, cp: f64) -> Self {
        Factor::RankOne { diag, cp }
    }

    fn dense(m: Matrix) -> Option<Self> {
        m.cholesky().map(Factor::Dense)
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        match self {
            Factor::RankOne { diag, cp } => {
                let inv_b: Vec<f64> = b.iter().zip(diag).map(|(v, d)| v / d).collect();
                let inv_1: Vec<f64> = diag.iter().map(|d| 1.0 / d).collect();
                let denom = 1.0 + cp * inv_1.iter().sum::<f64>();
                let coef = cp * inv_b.iter().sum::<f64>() / denom;
                inv_b
                    .iter()
                    .zip(&inv_1)
                    .map(|(v, u)| v - coef * u)
                    .collect()
            }
            Factor::Dense(chol) => chol.solve(b),
        }
    }
}

/// Polish on the detected active set, then assemble the solution.
#[allow(clippy::too_many_arguments)]
fn finish(
    cp: f64,
    lin: &[f64],
    lo: &[f64],
    hi: &[f64],
    rows: &[Vec<f64>],
    rhs: &[f64],
    mut y: Vec<f64>,
    s: Vec<f64>,
    z: Vec<f64>,
    slack_of: impl Fn(&[f64], &mut [f64]),
) -> IpmCore {
    let n = lin.len();
    let mr = rows.len();
    let m = 2 * n + mr;
    let mut z_out = z.clone();

    if let Some((py, pz)) = polish(cp, lin, lo, hi, rows, rhs, &s, &z) {
        y = py;
        z_out = pz;
    }
    // Exact projection onto the box; the polish already puts active bounds
    // exactly on their limits, this only trims float dust on the rest.
    for i in 0..n {
        y[i] = y[i].clamp(lo[i], hi[i]);
    }

    let mut slack = vec![0.0; m];
    slack_of(&y, &mut slack);
    let mut r_d = vec![0.0; n];
    let total: f64 = y.iter().sum();
    for i in 0..n {
        r_d[i] = cp * (y[i] + total) + lin[i] - z_out[i] + z_out[n + i];
    }
    for (k, row) in rows.iter().enumerate() {
        let zk = z_out[2 * n + k];
        if zk != 0.0 {
            for i in 0..n {
                r_d[i] += row[i] * zk;
            }
        }
    }
    let mut kkt = r_d.iter().fold(0.0f64, |a, v| a.max(libm::fabs(*v)));
    for i in 0..m {
        kkt = kkt.max(-slack[i].min(0.0)).max(-z_out[i].min(0.0));
        kkt = kkt.max(libm::fabs(slack[i].max(0.0) * z_out[i]));
    }

    IpmCore {
        y,
        z_lo: z_out[..n].to_vec(),
        z_hi: z_out[n..2 * n].to_vec(),
        z_rows: z_out[2 * n..].to_vec(),
        kkt_residual: kkt,
    }
}

/// Equality re-solve on the active set. Returns `(y, z)` when the polished
/// point is feasible with sign-correct multipliers.
fn polish(
    cp: f64,
    lin: &[f64],
    lo: &[f64],
    hi: &[f64],
    rows: &[Vec<f64>],
    rhs: &[f64],
    s: &[f64],
    z: &[f64],
) -> Option<(Vec<f64>, Vec<f64>)> {
    let n = lin.len();
    let mr = rows.len();
    let mut fixed = vec![None::<f64>; n];
    for i in 0..n {
        if z[i] > s[i] {
            fixed[i] = Some(lo[i]);
        }
        if z[n + i] > s[n + i] {
            // Both box sides flagged active can only happen on degenerate
            // boxes; prefer the side with the larger multiplier.
            if fixed[i].is_none() || z[n + i] > z[i] {
                fixed[i] = Some(hi[i]);
            }
        }
    }
    let active_rows: Vec<usize> = (0..mr).filter(|&k| z[2 * n + k] > s[2 * n + k]).collect();
    let free: Vec<usize> = (0..n).filter(|&i| fixed[i].is_none()).collect();
    let nf = free.len();

    let mut y = vec![0.0; n];
    for i in 0..n {
        if let Some(v) = fixed[i] {
            y[i] = v;
        }
    }
    let fixed_sum: f64 = (0..n).filter_map(|i| fixed[i]).sum();

    let mut z_new = vec![0.0; 2 * n + mr];

    if nf > 0 {
        // H over free vars is cp(I + 11ᵀ): H⁻¹v = (v − 1ᵀv/(nf+1)·1)/cp.
        let hinv = |v: &[f64]| -> Vec<f64> {
            let t: f64 = v.iter().sum::<f64>() / (nf as f64 + 1.0);
            v.iter().map(|x| (x - t) / cp).collect()
        };
        let lin_f: Vec<f64> = free.iter().map(|&i| lin[i] + cp * fixed_sum).collect();
        let neg_c: Vec<f64> = lin_f.iter().map(|v| -v).collect();
        let y_unc = hinv(&neg_c);

        let k = active_rows.len();
        let mut y_f = y_unc.clone();
        let mut lambda = vec![0.0; k];
        if k > 0 {
            let a_f: Vec<Vec<f64>> = active_rows
                .iter()
                .map(|&r| free.iter().map(|&i| rows[r][i]).collect())
                .collect();
            let rhs_f: Vec<f64> = active_rows
                .iter()
                .map(|&r| {
                    rhs[r]
                        - (0..n)
                            .filter_map(|i| fixed[i].map(|v| rows[r][i] * v))
                            .sum::<f64>()
                })
                .collect();
            // Schur system: (A H⁻¹ Aᵀ) λ = A y_unc − rhs.
            let hinv_at: Vec<Vec<f64>> = a_f.iter().map(|row| hinv(row)).collect();
            let mut schur = Matrix::zeros(k);
            for a in 0..k {
                for b in 0..k {
                    schur.set(a, b, dot(&a_f[a], &hinv_at[b]));
                }
            }
            let chol = schur.cholesky()?;
            let resid: Vec<f64> = (0..k).map(|a| dot(&a_f[a], &y_unc) - rhs_f[a]).collect();
            lambda = chol.solve(&resid);
            for i in 0..nf {
                let mut corr = 0.0;
                for a in 0..k {
                    corr += hinv_at[a][i] * lambda[a];
                }
                y_f[i] = y_unc[i] - corr;
            }
        }
        for (slot, &i) in y_f.iter().zip(&free) {
            y[i] = *slot;
        }
        for (a, &r) in active_rows.iter().enumerate() {
            z_new[2 * n + r] = lambda[a];
        }
    } else if !active_rows.is_empty() {
        // Fully pinned point cannot satisfy extra equalities beyond luck;
        // fall back to the interior iterate.
        return None;
    }

    // Box multipliers from stationarity.
    let total: f64 = y.iter().sum();
    for i in 0..n {
        if fixed[i].is_none() {
            continue;
        }
        let mut g = cp * (y[i] + total) + lin[i];
        for (k, row) in rows.iter().enumerate() {
            g += row[i] * z_new[2 * n + k];
        }
        if fixed[i] == Some(lo[i]) {
            z_new[i] = g; // must be ≥ 0
        } else {
            z_new[n + i] = -g;
        }
    }

    // Accept only sign-correct, feasible polishes.
    for v in &z_new {
        if *v < -1e-9 {
            return None;
        }
    }
    for i in 0..n {
        if y[i] < lo[i] - 1e-9 || y[i] > hi[i] + 1e-9 {
            return None;
        }
    }
    for (k, row) in rows.iter().enumerate() {
        if dot(row, &y) > rhs[k] + 1e-9 {
            return None;
        }
    }
    for v in &mut z_new {
        *v = v.max(0.0);
    }
    Some((y, z_new))
}
