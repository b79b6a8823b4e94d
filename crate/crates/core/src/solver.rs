//! Symmetric Gauss-Seidel ADMM on the dual of the nuclear-norm model.
//!
//! The primal problem is
//!
//! ```text
//! min ||M||_*   s.t.  B1 M = R,  B2 M <= S,  B3 M 1 = 0,  M >= 0.
//! ```
//!
//! Its dual, after splitting off the spectral-norm ball constraint into `H`, is
//!
//! ```text
//! min <U,R> + <V,S> + delta_B(H) + delta_+(V) + delta_+(G)
//! s.t. Gamma(U,V,y,G,H) = -B1^T U - B2^T V + B3^T y 1^T + G - H = 0
//! ```
//!
//! with `M` acting as the multiplier of `Gamma = 0`. One sweep minimizes the
//! augmented Lagrangian
//! `L_sigma = <U,R> + <V,S> + ... + <Gamma, M> + sigma/2 ||Gamma||_F^2`
//! block by block in the order `U, V, G, U, y, H, y` (always at the latest
//! iterates) and then takes the multiplier step `M += gamma * sigma * Gamma`.
//!
//! Every block update is closed form. `B1 B1^T = m I` and `B2 B2^T = m I`
//! make the `U` and `V` subproblems diagonal, `B3 B3^T` is block diagonal with
//! tridiagonal `A A^T` blocks, and the `H` update is a projection onto the
//! spectral-norm unit ball (clip singular values at 1).

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constraints::{
    apply_b1, apply_b1_adjoint, apply_b2, apply_b2_adjoint, apply_b3_rowsum,
    apply_b3_rowsum_adjoint, ConstraintError, ConstraintSystem, Dims, SubSketchStack,
};

/// Largest step length for which the multiplier update is known to converge.
pub const GAMMA_MAX: f64 = 1.618;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("invalid solver parameters: {0}")]
    BadParams(String),
    #[error("SVD did not converge at iteration {iteration}")]
    Svd {
        iteration: usize,
        /// JSON dump of the iterate that failed.
        checkpoint: Box<String>,
    },
    #[error(transparent)]
    Constraint(#[from] ConstraintError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverParams {
    pub sigma: f64,
    pub gamma: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverParams {
    fn default() -> Self {
        SolverParams {
            sigma: 1.0,
            gamma: GAMMA_MAX,
            tol: 1e-4,
            max_iter: 5000,
        }
    }
}

impl SolverParams {
    pub fn validate(&self) -> Result<(), SolverError> {
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(SolverError::BadParams(format!(
                "sigma must be positive, got {}",
                self.sigma
            )));
        }
        if !(self.gamma > 0.0 && self.gamma <= GAMMA_MAX + 1e-9) {
            return Err(SolverError::BadParams(format!(
                "gamma must lie in (0, {GAMMA_MAX}], got {}",
                self.gamma
            )));
        }
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(SolverError::BadParams(format!(
                "tol must be positive, got {}",
                self.tol
            )));
        }
        if self.max_iter == 0 {
            return Err(SolverError::BadParams("max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

/// Normalized optimality measures; all are zero at an exact KKT point.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct KktResiduals {
    pub r_eq: f64,
    pub r_ineq: f64,
    pub r_rowsum: f64,
    pub r_nonneg: f64,
    pub r_dualfeas: f64,
    pub gap: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.as_array().into_iter().fold(0.0, f64::max)
    }

    pub fn as_array(&self) -> [f64; 6] {
        [
            self.r_eq,
            self.r_ineq,
            self.r_rowsum,
            self.r_nonneg,
            self.r_dualfeas,
            self.gap,
        ]
    }

    pub const NAMES: [&'static str; 6] = [
        "r_eq",
        "r_ineq",
        "r_rowsum",
        "r_nonneg",
        "r_dualfeas",
        "gap",
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub residuals: KktResiduals,
    /// `||M||_*`.
    pub objective: f64,
    /// `-<U,R> - <V,S>`, a lower bound on the optimal nuclear norm at dual
    /// feasible points.
    pub dual_objective: f64,
}

mod matrix_serde {
    use nalgebra::{DMatrix, DVector};
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Repr {
        rows: usize,
        cols: usize,
        data: Vec<f64>,
    }

    pub fn serialize<S: Serializer>(x: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        Repr {
            rows: x.nrows(),
            cols: x.ncols(),
            data: x.transpose().as_slice().to_vec(),
        }
        .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let r = Repr::deserialize(d)?;
        if r.data.len() != r.rows * r.cols {
            return Err(serde::de::Error::custom("matrix data length mismatch"));
        }
        Ok(DMatrix::from_row_slice(r.rows, r.cols, &r.data))
    }

    pub mod vector {
        use super::*;

        pub fn serialize<S: Serializer>(x: &DVector<f64>, s: S) -> Result<S::Ok, S::Error> {
            x.as_slice().serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DVector<f64>, D::Error> {
            Ok(DVector::from_vec(Vec::<f64>::deserialize(d)?))
        }
    }
}

/// All iterates of the method. `y` is the multiplier vector of the row-sum
/// constraints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverState {
    pub dims: Dims,
    #[serde(with = "matrix_serde")]
    pub u: DMatrix<f64>,
    #[serde(with = "matrix_serde")]
    pub v: DMatrix<f64>,
    #[serde(with = "matrix_serde::vector")]
    pub y: DVector<f64>,
    #[serde(with = "matrix_serde")]
    pub g: DMatrix<f64>,
    #[serde(with = "matrix_serde")]
    pub h: DMatrix<f64>,
    #[serde(with = "matrix_serde")]
    pub m: DMatrix<f64>,
    pub iteration: usize,
    #[serde(skip)]
    pub history: Vec<IterationRecord>,
}

impl SolverState {
    pub fn zeros(dims: Dims) -> Self {
        let (lambda, w) = (dims.lambda(), dims.w);
        SolverState {
            dims,
            u: DMatrix::zeros(dims.eq_rows(), w),
            v: DMatrix::zeros(dims.ineq_rows(), w),
            y: DVector::zeros(dims.rowsum_len()),
            g: DMatrix::zeros(lambda, w),
            h: DMatrix::zeros(lambda, w),
            m: DMatrix::zeros(lambda, w),
            iteration: 0,
            history: Vec::new(),
        }
    }

    pub fn checkpoint_json(&self) -> String {
        serde_json::to_string(self).unwrap_or_else(|e| format!("{{\"error\":\"{e}\"}}"))
    }
}

/// Adjoint images of the dual blocks; `Gamma = -b1u - b2v + b3y + G - H`.
struct Terms {
    b1u: DMatrix<f64>,
    b2v: DMatrix<f64>,
    b3y: DMatrix<f64>,
}

impl Terms {
    fn new(dims: &Dims, s: &SolverState) -> Result<Self, ConstraintError> {
        Ok(Terms {
            b1u: apply_b1_adjoint(dims, &s.u)?,
            b2v: apply_b2_adjoint(dims, &s.v)?,
            b3y: apply_b3_rowsum_adjoint(dims, &s.y)?,
        })
    }
}

/// `Gamma(U, V, y, G, H) = -B1^T U - B2^T V + B3^T y 1^T + G - H`.
pub fn gamma(
    dims: &Dims,
    u: &DMatrix<f64>,
    v: &DMatrix<f64>,
    y: &DVector<f64>,
    g: &DMatrix<f64>,
    h: &DMatrix<f64>,
) -> Result<DMatrix<f64>, ConstraintError> {
    dims.check_stack(g)?;
    dims.check_stack(h)?;
    Ok(
        apply_b3_rowsum_adjoint(dims, y)? - apply_b1_adjoint(dims, u)? - apply_b2_adjoint(dims, v)?
            + g
            - h,
    )
}

pub fn state_gamma(state: &SolverState) -> Result<DMatrix<f64>, ConstraintError> {
    gamma(
        &state.dims,
        &state.u,
        &state.v,
        &state.y,
        &state.g,
        &state.h,
    )
}

/// Exact minimizer over `U` of `<U,R> - <B1^T U, M> + sigma/2 ||Gamma||^2`:
/// `U = (B1 (sigma C + M) - R) / (sigma m)` with `C = Gamma + B1^T U`.
pub fn update_u(
    system: &ConstraintSystem,
    state: &SolverState,
    sigma: f64,
) -> Result<DMatrix<f64>, ConstraintError> {
    let dims = &system.dims;
    let t = Terms::new(dims, state)?;
    let c = &t.b3y - &t.b2v + &state.g - &state.h;
    let mut u = apply_b1(dims, &(c * sigma + &state.m))? - &system.r_stack;
    u /= sigma * dims.m as f64;
    Ok(u)
}

/// Exact minimizer over `V >= 0` of `<V,S> - <B2^T V, M> + sigma/2 ||Gamma||^2`.
/// The quadratic is `sigma m / 2 ||V||^2` up to linear terms, so clamping the
/// unconstrained minimizer is exact.
pub fn update_v(
    system: &ConstraintSystem,
    state: &SolverState,
    sigma: f64,
) -> Result<DMatrix<f64>, ConstraintError> {
    let dims = &system.dims;
    let t = Terms::new(dims, state)?;
    let c = &t.b3y - &t.b1u + &state.g - &state.h;
    let mut v = apply_b2(dims, &(c * sigma + &state.m))? - &system.s_stack;
    v /= sigma * dims.m as f64;
    Ok(v.map(|x| x.max(0.0)))
}

/// `G = max(-D - M / sigma, 0)` with `D = Gamma - G`.
pub fn update_g(
    system: &ConstraintSystem,
    state: &SolverState,
    sigma: f64,
) -> Result<DMatrix<f64>, ConstraintError> {
    let dims = &system.dims;
    let t = Terms::new(dims, state)?;
    let d = &t.b3y - &t.b1u - &t.b2v - &state.h;
    Ok(DMatrix::from_fn(d.nrows(), d.ncols(), |r, c| {
        (-d[(r, c)] - state.m[(r, c)] / sigma).max(0.0)
    }))
}

/// `H = P_B(E + M / sigma)` with `E = Gamma + H`.
pub fn update_h(
    system: &ConstraintSystem,
    state: &SolverState,
    sigma: f64,
) -> Result<DMatrix<f64>, SolverError> {
    let dims = &system.dims;
    let t = Terms::new(dims, state)?;
    let e = &t.b3y - &t.b1u - &t.b2v + &state.g;
    project_spectral_ball(&(e + &state.m / sigma)).ok_or_else(|| SolverError::Svd {
        iteration: state.iteration,
        checkpoint: Box::new(state.checkpoint_json()),
    })
}

/// Solves `sigma w (B3 B3^T) y = -B3 (M + sigma F) 1`, `F = Gamma - B3^T y 1^T`,
/// one tridiagonal `A A^T` system per block.
pub fn update_y(
    system: &ConstraintSystem,
    state: &SolverState,
    sigma: f64,
) -> Result<DVector<f64>, ConstraintError> {
    let dims = &system.dims;
    let t = Terms::new(dims, state)?;
    let f = &state.g - &t.b1u - &t.b2v - &state.h;
    let rhs = apply_b3_rowsum(dims, &(f * sigma + &state.m))?;
    let scale = -1.0 / (sigma * dims.w as f64);
    let p = dims.d - 1;
    let mut y = rhs * scale;
    for block in y.as_mut_slice().chunks_mut(p) {
        solve_second_difference(block);
    }
    Ok(y)
}

/// `M + gamma * sigma * Gamma` at the current dual iterates.
pub fn update_m(
    state: &SolverState,
    sigma: f64,
    gamma_step: f64,
) -> Result<DMatrix<f64>, ConstraintError> {
    Ok(&state.m + state_gamma(state)? * (gamma_step * sigma))
}

/// Solves `T z = b` in place for `T = tridiag(-1, 2, -1)` (the Gram matrix
/// `A A^T` of the first-difference matrix) with the Thomas algorithm.
pub fn solve_second_difference(b: &mut [f64]) {
    let p = b.len();
    if p == 0 {
        return;
    }
    let mut c = vec![0.0; p];
    // forward elimination; off-diagonals are -1
    let mut denom = 2.0;
    c[0] = -1.0 / denom;
    b[0] /= denom;
    for i in 1..p {
        denom = 2.0 + c[i - 1];
        c[i] = -1.0 / denom;
        b[i] = (b[i] + b[i - 1]) / denom;
    }
    for i in (0..p - 1).rev() {
        b[i] -= c[i] * b[i + 1];
    }
}

/// Nearest point (in Frobenius norm) with spectral norm at most 1: singular
/// values above 1 are clipped. Returns `None` when the SVD fails.
pub fn project_spectral_ball(x: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let svd = x.clone().try_svd(true, true, f64::EPSILON, 100_000)?;
    if svd.singular_values.iter().all(|&s| s <= 1.0) {
        return Some(x.clone());
    }
    let u = svd.u.as_ref()?;
    let v_t = svd.v_t.as_ref()?;
    // X - U diag(max(s - 1, 0)) V^T, touching only the clipped directions
    let mut out = x.clone();
    for (j, &s) in svd.singular_values.iter().enumerate() {
        if s > 1.0 {
            out -= u.column(j) * v_t.row(j) * (s - 1.0);
        }
    }
    Some(out)
}

pub fn nuclear_norm(x: &DMatrix<f64>) -> f64 {
    if x.iter().all(|&v| v == 0.0) {
        return 0.0;
    }
    x.singular_values().sum()
}

fn frob(x: &DMatrix<f64>) -> f64 {
    x.norm()
}

/// KKT residuals and objectives of `state` with primal iterate `m`.
pub fn kkt_residuals(
    system: &ConstraintSystem,
    state: &SolverState,
    m: &DMatrix<f64>,
) -> Result<(KktResiduals, f64, f64), ConstraintError> {
    let dims = &system.dims;
    let m_norm = frob(m);
    let nuc = nuclear_norm(m);
    let eq = apply_b1(dims, m)? - &system.r_stack;
    let ineq = (apply_b2(dims, m)? - &system.s_stack).map(|x| x.max(0.0));
    let rowsum = apply_b3_rowsum(dims, m)?;
    let neg = m.map(|x| (-x).max(0.0));
    let gam = state_gamma(state)?;
    let dual_value = state.u.dot(&system.r_stack) + state.v.dot(&system.s_stack);
    let res = KktResiduals {
        r_eq: frob(&eq) / (1.0 + frob(&system.r_stack)),
        r_ineq: frob(&ineq) / (1.0 + frob(&system.s_stack)),
        r_rowsum: rowsum.amax() / (1.0 + m_norm),
        r_nonneg: frob(&neg) / (1.0 + m_norm),
        r_dualfeas: frob(&gam) / (1.0 + m_norm),
        gap: (nuc + dual_value).abs() / (1.0 + nuc),
    };
    Ok((res, nuc, -dual_value))
}

/// One full pass `U, V, G, U, y, H, y, M`, then records the residuals.
pub fn sweep(
    system: &ConstraintSystem,
    state: &mut SolverState,
    params: &SolverParams,
) -> Result<KktResiduals, SolverError> {
    let sigma = params.sigma;
    state.u = update_u(system, state, sigma)?;
    state.v = update_v(system, state, sigma)?;
    state.g = update_g(system, state, sigma)?;
    state.u = update_u(system, state, sigma)?;
    state.y = update_y(system, state, sigma)?;
    state.h = update_h(system, state, sigma)?;
    state.y = update_y(system, state, sigma)?;
    state.m = update_m(state, sigma, params.gamma)?;
    state.iteration += 1;

    let (residuals, objective, dual_objective) = kkt_residuals(system, state, &state.m)?;
    state.history.push(IterationRecord {
        iteration: state.iteration,
        residuals,
        objective,
        dual_objective,
    });
    Ok(residuals)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    NonConverged,
}

#[derive(Debug, Clone)]
pub struct SolveOutcome {
    /// Final `M` with negative entries clamped to zero.
    pub stack: SubSketchStack,
    /// Residuals of the returned (clamped) `M` against the final duals.
    pub residuals: KktResiduals,
    pub status: SolveStatus,
    pub iterations: usize,
    pub state: SolverState,
}

impl SolveOutcome {
    pub fn history(&self) -> &[IterationRecord] {
        &self.state.history
    }
}

pub fn solve(
    system: &ConstraintSystem,
    params: &SolverParams,
) -> Result<SolveOutcome, SolverError> {
    params.validate()?;
    let mut state = SolverState::zeros(system.dims);
    let mut status = SolveStatus::NonConverged;
    while state.iteration < params.max_iter {
        let res = sweep(system, &mut state, params)?;
        if res.max() <= params.tol {
            status = SolveStatus::Converged;
            break;
        }
    }
    log::debug!(
        "solver stopped after {} sweeps ({:?})",
        state.iteration,
        status
    );
    let clamped = state.m.map(|x| x.max(0.0));
    let (residuals, _, _) = kkt_residuals(system, &state, &clamped)?;
    Ok(SolveOutcome {
        stack: SubSketchStack::from_matrix(system.dims, clamped)?,
        residuals,
        status,
        iterations: state.iteration,
        state,
    })
}

/// Residual history as CSV: iteration, the six residuals, objective, dual objective.
pub fn write_history_csv<W: Write>(history: &[IterationRecord], mut out: W) -> std::io::Result<()> {
    writeln!(
        out,
        "iteration,{},objective,dual_objective",
        KktResiduals::NAMES.join(",")
    )?;
    for rec in history {
        let r = rec.residuals.as_array();
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            rec.iteration, r[0], r[1], r[2], r[3], r[4], r[5], rec.objective, rec.dual_objective
        )?;
    }
    Ok(())
}
