//! The auxiliary min-max problem
//!
//! ```text
//! min f  s.t.  R v <= f u,  u^T v = 1,  v >= 0
//! ```
//!
//! whose optimum `(v*, f*)` gives the long-run active-time fractions and net
//! drain rate of the bottleneck base station, plus its dual and the
//! closed-form optimum that holds when `R^-1 u` and `(R^T)^-1 u` are sign
//! consistent.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::energy::{condition_number, residual_matrix, CostMatrix, ResidualMatrix};
use crate::error::{Error, Result};
use crate::lp::{LinearProgram, LpOutcome, Relation};
use crate::tol::TOL;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Attained {
    ClosedForm,
    Simplex,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpSolution {
    pub v_star: Vec<f64>,
    pub f_star: f64,
    pub attained_by: Attained,
}

impl LpSolution {
    /// Largest violation of `v >= 0`, `u^T v = 1` and `R v <= f u`.
    pub fn max_violation(&self, r: &ResidualMatrix) -> f64 {
        let m = r.bs_count();
        let mut worst = (self.v_star.iter().sum::<f64>() - 1.0).abs();
        for &x in &self.v_star {
            worst = worst.max(-x);
        }
        for i in 0..m {
            let row: f64 = (0..m).map(|j| r.get(i, j) * self.v_star[j]).sum();
            worst = worst.max(row - self.f_star);
        }
        worst
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualSolution {
    pub lambda: Vec<f64>,
    pub w: f64,
}

impl DualSolution {
    /// Largest violation of `lambda >= 0`, `u^T lambda = 1` and `R^T lambda >= w u`.
    pub fn max_violation(&self, r: &ResidualMatrix) -> f64 {
        let m = r.bs_count();
        let mut worst = (self.lambda.iter().sum::<f64>() - 1.0).abs();
        for &x in &self.lambda {
            worst = worst.max(-x);
        }
        for j in 0..m {
            let col: f64 = (0..m).map(|i| r.get(i, j) * self.lambda[i]).sum();
            worst = worst.max(self.w - col);
        }
        worst
    }
}

/// Why the closed form does not apply.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClosedFormFailure {
    #[error("matrix is singular or too badly conditioned (condition number {0:e})")]
    Singular(f64),
    #[error("R^-1 u has entries of both signs")]
    MixedSignPrimal,
    #[error("(R^T)^-1 u has entries of both signs")]
    MixedSignDual,
    #[error("(C^T)^-1 u is not positive")]
    D4Violated,
    #[error("u^T R^-1 u vanishes")]
    ZeroDenominator,
    #[error("1 - u^T C^-1 sbar vanishes")]
    ShermanMorrisonDenominator,
    #[error(transparent)]
    Input(#[from] InputError),
}

/// Carries a structural input error through [`ClosedFormFailure`].
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{0}")]
pub struct InputError(pub String);

impl From<Error> for ClosedFormFailure {
    fn from(e: Error) -> Self {
        ClosedFormFailure::Input(InputError(e.to_string()))
    }
}

impl From<ClosedFormFailure> for Error {
    fn from(e: ClosedFormFailure) -> Self {
        Error::Precondition(e.to_string())
    }
}

fn ones(m: usize) -> DVector<f64> {
    DVector::from_element(m, 1.0)
}

fn solve_checked(a: &DMatrix<f64>, b: &DVector<f64>) -> std::result::Result<DVector<f64>, ClosedFormFailure> {
    let cond = condition_number(a);
    if !(cond <= TOL.max_condition) {
        return Err(ClosedFormFailure::Singular(cond));
    }
    a.clone().lu().solve(b).ok_or(ClosedFormFailure::Singular(cond))
}

/// All entries share a sign, treating entries tiny relative to the largest as zero.
fn sign_consistent(x: &DVector<f64>) -> bool {
    let scale = x.amax();
    let eps = TOL.singularity * scale.max(f64::MIN_POSITIVE);
    x.iter().all(|&v| v >= -eps) || x.iter().all(|&v| v <= eps)
}

fn normalized(x: &DVector<f64>) -> std::result::Result<(Vec<f64>, f64), ClosedFormFailure> {
    let total = x.sum();
    if total.abs() <= TOL.singularity * x.amax().max(f64::MIN_POSITIVE) {
        return Err(ClosedFormFailure::ZeroDenominator);
    }
    let v = x.iter().map(|&xi| (xi / total).max(0.0)).collect();
    Ok((v, 1.0 / total))
}

/// `v* = R^-1 u / u^T R^-1 u`, `f* = 1 / u^T R^-1 u`.
///
/// Only `R` is available here, so instead of the cost-matrix condition this
/// checks that the matching dual point `(R^T)^-1 u` is sign consistent too,
/// which certifies optimality by weak duality.
pub fn closed_form_solution(r: &ResidualMatrix) -> std::result::Result<LpSolution, ClosedFormFailure> {
    let m = r.bs_count();
    let x = solve_checked(r.as_matrix(), &ones(m))?;
    if !sign_consistent(&x) {
        return Err(ClosedFormFailure::MixedSignPrimal);
    }
    let y = solve_checked(&r.as_matrix().transpose(), &ones(m))?;
    if !sign_consistent(&y) {
        return Err(ClosedFormFailure::MixedSignDual);
    }
    let (v_star, f_star) = normalized(&x)?;
    Ok(LpSolution { v_star, f_star, attained_by: Attained::ClosedForm })
}

/// Closed form with the conditions stated on the cost matrix: `R^-1 u` sign
/// consistent and `(C^T)^-1 u >= 0`.
pub fn closed_form_with_cost(c: &CostMatrix, sbar: &[f64]) -> std::result::Result<LpSolution, ClosedFormFailure> {
    let m = c.bs_count();
    let w = solve_checked(&c.as_matrix().transpose(), &ones(m))?;
    if w.iter().any(|&x| x < -TOL.singularity * w.amax()) {
        return Err(ClosedFormFailure::D4Violated);
    }
    let r = residual_matrix(c, sbar)?;
    let x = solve_checked(r.as_matrix(), &ones(m))?;
    if !sign_consistent(&x) {
        return Err(ClosedFormFailure::MixedSignPrimal);
    }
    let (v_star, f_star) = normalized(&x)?;
    Ok(LpSolution { v_star, f_star, attained_by: Attained::ClosedForm })
}

/// `lambda = (R^T)^-1 u / u^T (R^T)^-1 u`, `w = 1 / u^T (R^T)^-1 u`.
pub fn dual_solution(r: &ResidualMatrix) -> std::result::Result<DualSolution, ClosedFormFailure> {
    let m = r.bs_count();
    let y = solve_checked(&r.as_matrix().transpose(), &ones(m))?;
    if !sign_consistent(&y) {
        return Err(ClosedFormFailure::MixedSignDual);
    }
    let (lambda, w) = normalized(&y)?;
    Ok(DualSolution { lambda, w })
}

/// Infinity norm of `(R^T)^-1 u - (C^T)^-1 u / (1 - u^T C^-1 sbar)`.
pub fn sherman_morrison_check(c: &CostMatrix, sbar: &[f64]) -> std::result::Result<f64, ClosedFormFailure> {
    let m = c.bs_count();
    let r = residual_matrix(c, sbar)?;
    let u = ones(m);
    let direct = solve_checked(&r.as_matrix().transpose(), &u)?;
    let ct_inv_u = solve_checked(&c.as_matrix().transpose(), &u)?;
    let c_inv_s = solve_checked(c.as_matrix(), &DVector::from_column_slice(sbar))?;
    let denom = 1.0 - c_inv_s.sum();
    if denom.abs() <= TOL.singularity {
        return Err(ClosedFormFailure::ShermanMorrisonDenominator);
    }
    let via_identity = ct_inv_u / denom;
    Ok((direct - via_identity).amax())
}

/// `(C^T)^-1 u` through the split `C = L + p u u^T` with `p` the smallest
/// off-diagonal entry. Returns `None` when `L` or the rank-one update is
/// singular.
pub fn d4_weights_by_decomposition(c: &CostMatrix) -> Option<Vec<f64>> {
    let m = c.bs_count();
    let p = (0..m)
        .flat_map(|i| (0..m).filter(move |&j| j != i).map(move |j| (i, j)))
        .map(|(i, j)| c.get(i, j))
        .fold(f64::INFINITY, f64::min);
    let p = if p.is_finite() { p } else { 0.0 };
    let lambda = c.as_matrix().map(|x| x - p);
    let z = solve_checked(&lambda.transpose(), &ones(m)).ok()?;
    let denom = 1.0 + p * z.sum();
    if denom.abs() <= TOL.singularity {
        return None;
    }
    Some(z.iter().map(|x| x / denom).collect())
}

fn primal_program(r: &ResidualMatrix) -> LinearProgram {
    let m = r.bs_count();
    let mut obj = vec![0.0; m + 1];
    obj[m] = 1.0;
    let mut lp = LinearProgram::minimize(obj);
    lp.set_free(m);
    for i in 0..m {
        let mut row: Vec<f64> = (0..m).map(|j| r.get(i, j)).collect();
        row.push(-1.0);
        lp.add(row, Relation::Le, 0.0);
    }
    let mut sum = vec![1.0; m];
    sum.push(0.0);
    lp.add(sum, Relation::Eq, 1.0);
    lp
}

fn lp_failure(what: &str, outcome: &LpOutcome) -> Error {
    Error::Precondition(format!("{what} simplex ended with {outcome:?}"))
}

/// Solves the auxiliary problem by simplex. Among several optimal `v*`, the
/// lexicographically smallest is returned.
pub fn solve_auxiliary_lp(r: &ResidualMatrix) -> Result<LpSolution> {
    let m = r.bs_count();
    let outcome = primal_program(r).solve();
    let point = match outcome {
        LpOutcome::Optimal(p) => p,
        other => return Err(lp_failure("auxiliary", &other)),
    };
    let mut v: Vec<f64> = point.x[..m].to_vec();
    let f_star = point.x[m];
    if point.alternative_optima && m > 1 {
        v = lexicographic_refine(r, f_star, &v);
    }
    Ok(LpSolution { v_star: v, f_star, attained_by: Attained::Simplex })
}

/// Walks the optimal face coordinate by coordinate, minimizing each in turn.
fn lexicographic_refine(r: &ResidualMatrix, f_star: f64, start: &[f64]) -> Vec<f64> {
    let m = r.bs_count();
    let scale = r.as_matrix().amax().max(f_star.abs()).max(1.0);
    let slack = 1e-12 * scale;
    let mut fixed: Vec<f64> = Vec::with_capacity(m);
    let mut current = start.to_vec();
    for k in 0..m {
        let mut obj = vec![0.0; m];
        obj[k] = 1.0;
        let mut lp = LinearProgram::minimize(obj);
        for i in 0..m {
            lp.add((0..m).map(|j| r.get(i, j)).collect(), Relation::Le, f_star + slack);
        }
        lp.add(vec![1.0; m], Relation::Eq, 1.0);
        for (j, &val) in fixed.iter().enumerate() {
            let mut row = vec![0.0; m];
            row[j] = 1.0;
            lp.add(row, Relation::Le, val + 1e-12);
        }
        match lp.solve() {
            LpOutcome::Optimal(p) => {
                fixed.push(p.x[k]);
                current = p.x;
            }
            _ => return current,
        }
    }
    current
}

/// Solves `max w s.t. u^T lambda = 1, R^T lambda >= w u, lambda >= 0` by simplex.
pub fn solve_dual_lp(r: &ResidualMatrix) -> Result<DualSolution> {
    let m = r.bs_count();
    let mut obj = vec![0.0; m + 1];
    obj[m] = -1.0;
    let mut lp = LinearProgram::minimize(obj);
    lp.set_free(m);
    for j in 0..m {
        let mut row: Vec<f64> = (0..m).map(|i| r.get(i, j)).collect();
        row.push(-1.0);
        lp.add(row, Relation::Ge, 0.0);
    }
    let mut sum = vec![1.0; m];
    sum.push(0.0);
    lp.add(sum, Relation::Eq, 1.0);
    match lp.solve() {
        LpOutcome::Optimal(p) => Ok(DualSolution { lambda: p.x[..m].to_vec(), w: p.x[m] }),
        other => Err(lp_failure("dual", &other)),
    }
}

/// Closed form when it applies, simplex otherwise.
pub fn optimal_solution(r: &ResidualMatrix) -> Result<LpSolution> {
    match closed_form_solution(r) {
        Ok(s) => Ok(s),
        Err(_) => solve_auxiliary_lp(r),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PredictedLifetime {
    /// Lifetime of about `e0 / (tau f*)` slots.
    Slots(f64),
    /// `f* < 0`: the network outlives any multiple of `e0`.
    UnboundedRegime,
    /// `f*` too close to zero to say.
    CriticalRegime,
}

pub fn predicted_lifetime(e0: f64, tau: f64, f_star: f64) -> PredictedLifetime {
    if f_star.abs() < TOL.singularity {
        PredictedLifetime::CriticalRegime
    } else if f_star < 0.0 {
        PredictedLifetime::UnboundedRegime
    } else {
        PredictedLifetime::Slots(e0 / (tau * f_star))
    }
}
