//! Small dense two-phase simplex.
//!
//! Sized for the handful of variables the lifetime problems need (tens, not
//! thousands). Bland's rule keeps it from cycling on degenerate vertices and
//! the final basis is re-solved against the original data to recover full
//! precision.

use nalgebra::{DMatrix, DVector};

const PIVOT_EPS: f64 = 1e-11;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

/// `min c^T x` subject to linear constraints, with `x >= 0` unless a variable
/// is declared free.
#[derive(Debug, Clone)]
pub struct LinearProgram {
    objective: Vec<f64>,
    free: Vec<bool>,
    constraints: Vec<Constraint>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpPoint {
    pub x: Vec<f64>,
    pub objective: f64,
    /// Some non-basic column has a zero reduced cost, so the optimum may not
    /// be unique.
    pub alternative_optima: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal(LpPoint),
    Infeasible,
    Unbounded,
    IterationLimit,
}

impl LpOutcome {
    pub fn optimal(self) -> Option<LpPoint> {
        match self {
            LpOutcome::Optimal(p) => Some(p),
            _ => None,
        }
    }
}

impl LinearProgram {
    pub fn minimize(objective: Vec<f64>) -> Self {
        let n = objective.len();
        Self { objective, free: vec![false; n], constraints: Vec::new() }
    }

    pub fn maximize(objective: Vec<f64>) -> Self {
        Self::minimize(objective.into_iter().map(|c| -c).collect())
    }

    pub fn var_count(&self) -> usize {
        self.objective.len()
    }

    pub fn set_free(&mut self, var: usize) {
        self.free[var] = true;
    }

    pub fn add(&mut self, coeffs: Vec<f64>, relation: Relation, rhs: f64) {
        assert_eq!(coeffs.len(), self.objective.len(), "constraint width");
        self.constraints.push(Constraint { coeffs, relation, rhs });
    }

    pub fn solve(&self) -> LpOutcome {
        Tableau::build(self).run(self)
    }
}

struct Tableau {
    /// Row-major, `rows x (cols + 1)`, last column is the right-hand side.
    t: Vec<Vec<f64>>,
    /// Reduced costs plus negated objective in the last slot.
    z: Vec<f64>,
    basis: Vec<usize>,
    /// Standard-form matrix and rhs before any pivoting.
    a0: Vec<Vec<f64>>,
    b0: Vec<f64>,
    cost: Vec<f64>,
    n_struct: usize,
    n_art_start: usize,
    /// For each original variable: (positive column, negative column if free).
    var_cols: Vec<(usize, Option<usize>)>,
    removed: Vec<bool>,
}

impl Tableau {
    fn build(lp: &LinearProgram) -> Self {
        let mut var_cols = Vec::with_capacity(lp.var_count());
        let mut col = 0;
        for &free in &lp.free {
            if free {
                var_cols.push((col, Some(col + 1)));
                col += 2;
            } else {
                var_cols.push((col, None));
                col += 1;
            }
        }
        let n_vars = col;
        let n_slack = lp.constraints.iter().filter(|c| c.relation != Relation::Eq).count();
        let n_struct = n_vars + n_slack;
        let rows = lp.constraints.len();
        let n_cols = n_struct + rows;

        let mut a0 = vec![vec![0.0; n_struct]; rows];
        let mut b0 = vec![0.0; rows];
        let mut slack = n_vars;
        for (i, c) in lp.constraints.iter().enumerate() {
            for (j, &(p, n)) in var_cols.iter().enumerate() {
                a0[i][p] = c.coeffs[j];
                if let Some(n) = n {
                    a0[i][n] = -c.coeffs[j];
                }
            }
            match c.relation {
                Relation::Le => {
                    a0[i][slack] = 1.0;
                    slack += 1;
                }
                Relation::Ge => {
                    a0[i][slack] = -1.0;
                    slack += 1;
                }
                Relation::Eq => {}
            }
            b0[i] = c.rhs;
            if b0[i] < 0.0 {
                b0[i] = -b0[i];
                a0[i].iter_mut().for_each(|x| *x = -*x);
            }
        }

        let mut cost = vec![0.0; n_struct];
        for (j, &(p, n)) in var_cols.iter().enumerate() {
            cost[p] = lp.objective[j];
            if let Some(n) = n {
                cost[n] = -lp.objective[j];
            }
        }

        let mut t = vec![vec![0.0; n_cols + 1]; rows];
        for i in 0..rows {
            t[i][..n_struct].copy_from_slice(&a0[i]);
            t[i][n_struct + i] = 1.0;
            t[i][n_cols] = b0[i];
        }
        Self {
            t,
            z: vec![0.0; n_cols + 1],
            basis: (0..rows).map(|i| n_struct + i).collect(),
            a0,
            b0,
            cost,
            n_struct,
            n_art_start: n_struct,
            var_cols,
            removed: vec![false; rows],
        }
    }

    fn n_cols(&self) -> usize {
        self.z.len() - 1
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let w = self.n_cols() + 1;
        let p = self.t[r][c];
        for x in self.t[r].iter_mut() {
            *x /= p;
        }
        let pivot_row = self.t[r].clone();
        for (i, row) in self.t.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[c];
            if f != 0.0 {
                for k in 0..w {
                    row[k] -= f * pivot_row[k];
                }
                row[c] = 0.0;
            }
        }
        let f = self.z[c];
        if f != 0.0 {
            for (z, p) in self.z.iter_mut().zip(&pivot_row).take(w) {
                *z -= f * p;
            }
            self.z[c] = 0.0;
        }
        self.basis[r] = c;
    }

    fn set_costs(&mut self, cost_of: impl Fn(usize) -> f64) {
        let w = self.n_cols() + 1;
        let mut z = vec![0.0; w];
        for (j, zj) in z.iter_mut().enumerate().take(w - 1) {
            *zj = cost_of(j);
        }
        for (i, row) in self.t.iter().enumerate() {
            if self.removed[i] {
                continue;
            }
            let cb = cost_of(self.basis[i]);
            if cb != 0.0 {
                for k in 0..w {
                    z[k] -= cb * row[k];
                }
            }
        }
        self.z = z;
    }

    /// Runs simplex iterations until optimal; `allowed` restricts entering columns.
    fn iterate(&mut self, allowed: usize, limit: usize) -> Result<(), LpOutcome> {
        let rhs = self.n_cols();
        for _ in 0..limit {
            let scale = self.z[..allowed].iter().fold(1.0f64, |m, x| m.max(x.abs()));
            let Some(enter) = (0..allowed).find(|&j| self.z[j] < -PIVOT_EPS * scale) else {
                return Ok(());
            };
            let mut best: Option<(usize, f64)> = None;
            for i in 0..self.t.len() {
                if self.removed[i] {
                    continue;
                }
                let a = self.t[i][enter];
                if a > PIVOT_EPS {
                    let ratio = self.t[i][rhs] / a;
                    best = match best {
                        None => Some((i, ratio)),
                        Some((bi, br)) => {
                            if ratio < br - 1e-14 * br.abs().max(1.0)
                                || (ratio <= br + 1e-14 * br.abs().max(1.0) && self.basis[i] < self.basis[bi])
                            {
                                Some((i, ratio))
                            } else {
                                Some((bi, br))
                            }
                        }
                    };
                }
            }
            match best {
                Some((r, _)) => self.pivot(r, enter),
                None => return Err(LpOutcome::Unbounded),
            }
        }
        Err(LpOutcome::IterationLimit)
    }

    fn run(mut self, lp: &LinearProgram) -> LpOutcome {
        let rows = self.t.len();
        let limit = 10_000 + 100 * (rows + self.n_cols());
        let n_art = self.n_art_start;

        // Phase one: drive the artificials to zero.
        self.set_costs(|j| if j >= n_art { 1.0 } else { 0.0 });
        if let Err(e) = self.iterate(self.n_cols(), limit) {
            return e;
        }
        let infeasibility = -self.z[self.n_cols()];
        let b_scale = self.b0.iter().fold(1.0f64, |m, x| m.max(x.abs()));
        if infeasibility > 1e-9 * b_scale {
            return LpOutcome::Infeasible;
        }
        for i in 0..rows {
            if self.basis[i] < n_art {
                continue;
            }
            match (0..n_art).find(|&j| self.t[i][j].abs() > 1e-9) {
                Some(j) => self.pivot(i, j),
                None => self.removed[i] = true,
            }
        }

        // Phase two on the structural columns only.
        let cost = self.cost.clone();
        self.set_costs(|j| if j < n_art { cost[j] } else { 0.0 });
        if let Err(e) = self.iterate(n_art, limit) {
            return e;
        }

        let mut values = vec![0.0; self.n_struct];
        let rhs = self.n_cols();
        for (i, &b) in self.basis.iter().enumerate() {
            if !self.removed[i] && b < self.n_struct {
                values[b] = self.t[i][rhs].max(0.0);
            }
        }
        self.polish(&mut values);

        let basic: Vec<bool> = {
            let mut v = vec![false; self.n_struct];
            for (i, &b) in self.basis.iter().enumerate() {
                if !self.removed[i] && b < self.n_struct {
                    v[b] = true;
                }
            }
            v
        };
        let z_scale = self.z[..n_art].iter().fold(1.0f64, |m, x| m.max(x.abs()));
        let alternative_optima = (0..n_art).any(|j| !basic[j] && self.z[j].abs() <= 1e-9 * z_scale);

        let x: Vec<f64> = self.var_cols.iter().map(|&(p, n)| values[p] - n.map(|n| values[n]).unwrap_or(0.0)).collect();
        let objective = x.iter().zip(&lp.objective).map(|(a, b)| a * b).sum();
        LpOutcome::Optimal(LpPoint { x, objective, alternative_optima })
    }

    /// Re-solves `B x_B = b` from the untouched data for the final basis.
    fn polish(&self, values: &mut [f64]) {
        let rows: Vec<usize> = (0..self.t.len()).filter(|&i| !self.removed[i]).collect();
        let cols: Vec<usize> = rows.iter().map(|&i| self.basis[i]).collect();
        if cols.iter().any(|&c| c >= self.n_struct) || rows.is_empty() {
            return;
        }
        let k = rows.len();
        let b = DMatrix::from_fn(k, k, |r, c| self.a0[rows[r]][cols[c]]);
        let rhs = DVector::from_fn(k, |r, _| self.b0[rows[r]]);
        if let Some(sol) = b.lu().solve(&rhs) {
            let ok = sol.iter().all(|x| x.is_finite() && *x >= -1e-9);
            let close = sol.iter().zip(&cols).all(|(x, &c)| (x - values[c]).abs() <= 1e-6 * (1.0 + values[c].abs()));
            if ok && close {
                for (x, &c) in sol.iter().zip(&cols) {
                    values[c] = x.max(0.0);
                }
            }
        }
    }
}
