//! Dense bounded-variable simplex.
//!
//! Every row `i` gets a slack `s_i` with bounds `[0, inf)` for `<=` rows and
//! `[0, 0]` for equality rows, so the tableau always holds `B^-1 [A | I]`.
//! Variables fixed by their bounds never become columns.

// Column loops index several parallel arrays at once.
#![allow(clippy::needless_range_loop)]

use super::{LinearProgram, Relation, Solution, Status, FEAS_TOL};
use crate::error::{Error, Result};

const PIVOT_TOL: f64 = 1e-9;
const DUAL_TOL: f64 = 1e-9;
const BOUND_TOL: f64 = 1e-9;
const DROP_TOL: f64 = 1e-13;

/// Merged coefficients, relation and right-hand side of one row.
type SparseRow = (Vec<(usize, f64)>, Relation, f64);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ColState {
    Basic,
    Lower,
    Upper,
    /// Nonbasic free variable resting at zero.
    Zero,
}

#[derive(Debug, Clone, Copy)]
enum Leave {
    Flip,
    Row { row: usize, to_upper: bool },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Outcome {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

#[derive(Debug, Clone)]
pub(crate) struct Tableau {
    m: usize,
    n: usize,
    /// Row-major `m x n`.
    tab: Vec<f64>,
    /// `B^-1 b`, pivoted alongside the tableau.
    rhs: Vec<f64>,
    /// Current values of the basic variables.
    beta: Vec<f64>,
    basis: Vec<usize>,
    state: Vec<ColState>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    /// Values of nonbasic columns (stale for basic ones).
    value: Vec<f64>,
    cost: Vec<f64>,
    /// Reduced costs for the active phase.
    d: Vec<f64>,
    col_of_var: Vec<Option<usize>>,
    fixed_value: Vec<f64>,
    n_artificial: usize,
    artificial_start: usize,
}

pub(crate) enum Built {
    Ready(Box<Tableau>),
    Infeasible,
}

impl Tableau {
    pub(crate) fn build(lp: &LinearProgram, bounds: &[(f64, f64)]) -> Built {
        let nv = lp.num_vars();
        let mut col_of_var = vec![None; nv];
        let mut fixed_value = vec![0.0; nv];
        let mut lower = Vec::new();
        let mut upper = Vec::new();
        let mut cost = Vec::new();
        for (j, &(lo, hi)) in bounds.iter().enumerate() {
            if lo == hi {
                fixed_value[j] = lo;
            } else {
                col_of_var[j] = Some(lower.len());
                lower.push(lo);
                upper.push(hi);
                cost.push(lp.objective()[j]);
            }
        }
        let n_struct = lower.len();

        // Merge duplicate entries and substitute fixed variables.
        let mut rows: Vec<SparseRow> = Vec::new();
        let mut dense = vec![0.0; n_struct];
        let mut touched = Vec::new();
        for c in lp.constraints() {
            let mut rhs = c.rhs;
            for &(v, a) in &c.coeffs {
                match col_of_var[v.index()] {
                    Some(col) => {
                        if dense[col] == 0.0 {
                            touched.push(col);
                        }
                        dense[col] += a;
                    }
                    None => rhs -= a * fixed_value[v.index()],
                }
            }
            let mut entries: Vec<(usize, f64)> = touched
                .drain(..)
                .filter_map(|col| {
                    let a = std::mem::take(&mut dense[col]);
                    (a != 0.0).then_some((col, a))
                })
                .collect();
            entries.sort_unstable_by_key(|e| e.0);
            if entries.is_empty() {
                let ok = match c.relation {
                    Relation::Le => rhs >= -FEAS_TOL,
                    Relation::Eq => rhs.abs() <= FEAS_TOL,
                };
                if !ok {
                    return Built::Infeasible;
                }
                continue;
            }
            rows.push((entries, c.relation, rhs));
        }

        let m = rows.len();
        let mut value = vec![0.0; n_struct];
        let mut state = vec![ColState::Zero; n_struct];
        for j in 0..n_struct {
            if lower[j].is_finite() {
                value[j] = lower[j];
                state[j] = ColState::Lower;
            } else if upper[j].is_finite() {
                value[j] = upper[j];
                state[j] = ColState::Upper;
            }
        }

        // Residuals decide which rows need an artificial.
        let residual: Vec<f64> = rows
            .iter()
            .map(|(entries, _, rhs)| rhs - entries.iter().map(|&(j, a)| a * value[j]).sum::<f64>())
            .collect();
        let needs_art: Vec<bool> = rows
            .iter()
            .zip(&residual)
            .map(|((_, rel, _), &r)| match rel {
                Relation::Le => r < -BOUND_TOL,
                Relation::Eq => r.abs() > BOUND_TOL,
            })
            .collect();
        let n_artificial = needs_art.iter().filter(|&&b| b).count();
        let artificial_start = n_struct + m;
        let n = artificial_start + n_artificial;

        for (_, rel, _) in &rows {
            lower.push(0.0);
            upper.push(match rel {
                Relation::Le => f64::INFINITY,
                Relation::Eq => 0.0,
            });
            cost.push(0.0);
        }
        value.resize(n_struct + m, 0.0);
        state.resize(n_struct + m, ColState::Lower);
        lower.resize(n, 0.0);
        upper.resize(n, f64::INFINITY);
        cost.resize(n, 0.0);
        value.resize(n, 0.0);
        state.resize(n, ColState::Lower);

        let mut tab = vec![0.0; m * n];
        let mut rhs = vec![0.0; m];
        let mut beta = vec![0.0; m];
        let mut basis = vec![0; m];
        let mut next_art = artificial_start;
        for (i, (entries, _, b)) in rows.iter().enumerate() {
            let row = &mut tab[i * n..(i + 1) * n];
            let sigma = if needs_art[i] {
                residual[i].signum()
            } else {
                1.0
            };
            for &(j, a) in entries {
                row[j] = sigma * a;
            }
            row[n_struct + i] = sigma;
            rhs[i] = sigma * b;
            if needs_art[i] {
                row[next_art] = 1.0;
                basis[i] = next_art;
                state[next_art] = ColState::Basic;
                beta[i] = residual[i].abs();
                next_art += 1;
            } else {
                basis[i] = n_struct + i;
                state[n_struct + i] = ColState::Basic;
                beta[i] = residual[i];
            }
        }

        Built::Ready(Box::new(Tableau {
            m,
            n,
            tab,
            rhs,
            beta,
            basis,
            state,
            lower,
            upper,
            value,
            cost,
            d: vec![0.0; n],
            col_of_var,
            fixed_value,
            n_artificial,
            artificial_start,
        }))
    }

    /// Two-phase primal simplex from the initial basis.
    pub(crate) fn solve(&mut self, iteration_limit: usize) -> Outcome {
        if self.n_artificial > 0 {
            let phase1: Vec<f64> = (0..self.n)
                .map(|j| if j >= self.artificial_start { 1.0 } else { 0.0 })
                .collect();
            self.reset_reduced_costs(&phase1);
            match self.primal_to_optimality(&phase1, iteration_limit) {
                Outcome::Optimal => {}
                Outcome::Unbounded => unreachable!("phase one is bounded below by zero"),
                other => return other,
            }
            let infeasibility: f64 = (0..self.m)
                .filter(|&i| self.basis[i] >= self.artificial_start)
                .map(|i| self.beta[i].abs())
                .sum();
            if infeasibility > FEAS_TOL {
                return Outcome::Infeasible;
            }
            for j in self.artificial_start..self.n {
                self.lower[j] = 0.0;
                self.upper[j] = 0.0;
                if self.state[j] != ColState::Basic {
                    self.state[j] = ColState::Lower;
                    self.value[j] = 0.0;
                }
            }
        }
        let cost = self.cost.clone();
        self.reset_reduced_costs(&cost);
        self.primal_to_optimality(&cost, iteration_limit)
    }

    /// Restore feasibility with the dual simplex after bound changes, then
    /// polish with the primal. Requires a dual-feasible basis.
    pub(crate) fn reoptimize(&mut self, iteration_limit: usize) -> Outcome {
        match self.dual(iteration_limit) {
            Outcome::Optimal => {}
            other => return other,
        }
        let cost = self.cost.clone();
        self.primal_to_optimality(&cost, iteration_limit)
    }

    fn primal_to_optimality(&mut self, cost: &[f64], iteration_limit: usize) -> Outcome {
        // Refresh values and reduced costs at the end to shed drift; rerun if
        // that exposes a further improving column.
        for _ in 0..4 {
            match self.primal(iteration_limit) {
                Outcome::Optimal => {}
                other => return other,
            }
            self.refresh_beta();
            self.reset_reduced_costs(cost);
            if self.choose_entering(true).is_none() {
                return Outcome::Optimal;
            }
        }
        Outcome::Optimal
    }

    fn reset_reduced_costs(&mut self, cost: &[f64]) {
        let n = self.n;
        self.d.copy_from_slice(cost);
        for i in 0..self.m {
            let cb = cost[self.basis[i]];
            if cb != 0.0 {
                let row = &self.tab[i * n..(i + 1) * n];
                for (d, &a) in self.d.iter_mut().zip(row) {
                    *d -= cb * a;
                }
            }
        }
        for i in 0..self.m {
            self.d[self.basis[i]] = 0.0;
        }
    }

    fn refresh_beta(&mut self) {
        let n = self.n;
        for i in 0..self.m {
            let row = &self.tab[i * n..(i + 1) * n];
            let mut v = self.rhs[i];
            for j in 0..n {
                if self.state[j] != ColState::Basic && row[j] != 0.0 {
                    v -= row[j] * self.value[j];
                }
            }
            self.beta[i] = v;
        }
    }

    fn eligible(&self, j: usize) -> Option<f64> {
        if self.lower[j] == self.upper[j] {
            return None;
        }
        let d = self.d[j];
        match self.state[j] {
            ColState::Lower if d < -DUAL_TOL => Some(1.0),
            ColState::Upper if d > DUAL_TOL => Some(-1.0),
            ColState::Zero if d.abs() > DUAL_TOL => Some(-d.signum()),
            _ => None,
        }
    }

    fn choose_entering(&self, bland: bool) -> Option<(usize, f64)> {
        if bland {
            return (0..self.n).find_map(|j| self.eligible(j).map(|dir| (j, dir)));
        }
        let mut best: Option<(usize, f64)> = None;
        let mut best_score = 0.0;
        for j in 0..self.n {
            if let Some(dir) = self.eligible(j) {
                let score = self.d[j].abs();
                if score > best_score {
                    best_score = score;
                    best = Some((j, dir));
                }
            }
        }
        best
    }

    /// Step length limit of basic row `i` when the entering column moves by
    /// `dir`; returns `(ratio, alpha, to_upper)`.
    fn row_limit(&self, i: usize, q: usize, dir: f64) -> Option<(f64, f64, bool)> {
        let alpha = dir * self.tab[i * self.n + q];
        let b = self.basis[i];
        if alpha > PIVOT_TOL && self.lower[b].is_finite() {
            Some((
                ((self.beta[i] - self.lower[b]) / alpha).max(0.0),
                alpha,
                false,
            ))
        } else if alpha < -PIVOT_TOL && self.upper[b].is_finite() {
            Some((
                ((self.upper[b] - self.beta[i]) / -alpha).max(0.0),
                alpha,
                true,
            ))
        } else {
            None
        }
    }

    fn ratio_test(&self, q: usize, dir: f64, bland: bool) -> (f64, Option<Leave>) {
        let flip = self.upper[q] - self.lower[q];
        let mut best: Option<(f64, usize, bool)> = None;
        if bland {
            for i in 0..self.m {
                if let Some((ratio, _, to_upper)) = self.row_limit(i, q, dir) {
                    let better = match best {
                        None => true,
                        Some((r, bi, _)) => {
                            ratio < r - 1e-12
                                || (ratio <= r + 1e-12 && self.basis[i] < self.basis[bi])
                        }
                    };
                    if better {
                        best = Some((ratio, i, to_upper));
                    }
                }
            }
        } else {
            // Harris two-pass: relax the bounds slightly, then take the
            // largest pivot among the rows within the relaxed step.
            let mut relaxed = f64::INFINITY;
            for i in 0..self.m {
                let alpha = dir * self.tab[i * self.n + q];
                let b = self.basis[i];
                if alpha > PIVOT_TOL && self.lower[b].is_finite() {
                    relaxed = relaxed.min((self.beta[i] - self.lower[b] + BOUND_TOL) / alpha);
                } else if alpha < -PIVOT_TOL && self.upper[b].is_finite() {
                    relaxed = relaxed.min((self.upper[b] - self.beta[i] + BOUND_TOL) / -alpha);
                }
            }
            if relaxed.is_finite() {
                let mut best_alpha = 0.0;
                for i in 0..self.m {
                    if let Some((ratio, alpha, to_upper)) = self.row_limit(i, q, dir) {
                        if ratio <= relaxed && alpha.abs() > best_alpha {
                            best_alpha = alpha.abs();
                            best = Some((ratio, i, to_upper));
                        }
                    }
                }
            }
        }
        match best {
            Some((ratio, _, _)) if flip <= ratio => (flip, Some(Leave::Flip)),
            Some((ratio, row, to_upper)) => (ratio, Some(Leave::Row { row, to_upper })),
            None if flip.is_finite() => (flip, Some(Leave::Flip)),
            None => (f64::INFINITY, None),
        }
    }

    fn primal(&mut self, iteration_limit: usize) -> Outcome {
        let stall_limit = 2 * (self.m + self.n);
        let mut bland = false;
        let mut stall = 0;
        for _ in 0..iteration_limit {
            let Some((q, dir)) = self.choose_entering(bland) else {
                return Outcome::Optimal;
            };
            let (theta, leave) = self.ratio_test(q, dir, bland);
            let Some(leave) = leave else {
                return Outcome::Unbounded;
            };
            if theta * self.d[q].abs() > 1e-12 {
                stall = 0;
                bland = false;
            } else {
                stall += 1;
                if stall > stall_limit {
                    bland = true;
                }
            }
            self.apply_step(q, dir * theta, leave);
        }
        Outcome::IterationLimit
    }

    /// Move nonbasic column `q` by `delta`, then either flip it to its other
    /// bound or pivot it into `row`.
    fn apply_step(&mut self, q: usize, delta: f64, leave: Leave) {
        let n = self.n;
        if delta != 0.0 {
            for i in 0..self.m {
                let a = self.tab[i * n + q];
                if a != 0.0 {
                    self.beta[i] -= a * delta;
                }
            }
        }
        match leave {
            Leave::Flip => {
                if delta > 0.0 {
                    self.value[q] = self.upper[q];
                    self.state[q] = ColState::Upper;
                } else {
                    self.value[q] = self.lower[q];
                    self.state[q] = ColState::Lower;
                }
            }
            Leave::Row { row, to_upper } => {
                let entering_value = self.value[q] + delta;
                let leaving = self.basis[row];
                if to_upper {
                    self.value[leaving] = self.upper[leaving];
                    self.state[leaving] = ColState::Upper;
                } else {
                    self.value[leaving] = self.lower[leaving];
                    self.state[leaving] = ColState::Lower;
                }
                self.beta[row] = entering_value;
                self.basis[row] = q;
                self.state[q] = ColState::Basic;
                self.pivot(row, q);
            }
        }
    }

    fn pivot(&mut self, r: usize, q: usize) {
        let n = self.n;
        let inv = 1.0 / self.tab[r * n + q];
        let mut prow = self.tab[r * n..(r + 1) * n].to_vec();
        for v in prow.iter_mut() {
            *v *= inv;
        }
        prow[q] = 1.0;
        let prhs = self.rhs[r] * inv;
        self.tab[r * n..(r + 1) * n].copy_from_slice(&prow);
        self.rhs[r] = prhs;

        let nz: Vec<usize> = (0..n).filter(|&j| prow[j] != 0.0).collect();
        let sparse = nz.len() * 3 < n;
        for i in 0..self.m {
            if i == r {
                continue;
            }
            let row = &mut self.tab[i * n..(i + 1) * n];
            let f = row[q];
            if f == 0.0 {
                continue;
            }
            if sparse {
                for &j in &nz {
                    let v = row[j] - f * prow[j];
                    row[j] = if v.abs() < DROP_TOL { 0.0 } else { v };
                }
            } else {
                for (v, &p) in row.iter_mut().zip(&prow) {
                    *v -= f * p;
                }
            }
            row[q] = 0.0;
            self.rhs[i] -= f * prhs;
        }
        let f = self.d[q];
        if f != 0.0 {
            for &j in &nz {
                self.d[j] -= f * prow[j];
            }
        }
        self.d[q] = 0.0;
    }

    fn dual(&mut self, iteration_limit: usize) -> Outcome {
        let n = self.n;
        for _ in 0..iteration_limit {
            // Leaving row: largest bound violation.
            let mut leave: Option<(usize, f64)> = None;
            let mut worst = FEAS_TOL * 1e-2;
            for i in 0..self.m {
                let b = self.basis[i];
                let below = self.lower[b] - self.beta[i];
                let above = self.beta[i] - self.upper[b];
                if below > worst {
                    worst = below;
                    leave = Some((i, self.lower[b]));
                } else if above > worst {
                    worst = above;
                    leave = Some((i, self.upper[b]));
                }
            }
            let Some((r, target)) = leave else {
                return Outcome::Optimal;
            };
            let increase = target > self.beta[r];
            let row = &self.tab[r * n..(r + 1) * n];
            let mut best: Option<usize> = None;
            let mut best_ratio = f64::INFINITY;
            let mut best_abs = 0.0;
            for j in 0..n {
                if self.state[j] == ColState::Basic || self.lower[j] == self.upper[j] {
                    continue;
                }
                let a = row[j];
                if a.abs() <= PIVOT_TOL {
                    continue;
                }
                // beta_r moves by -a * dx_j; the allowed sign of dx_j depends on the state.
                let ok = match self.state[j] {
                    ColState::Lower => (a < 0.0) == increase,
                    ColState::Upper => (a > 0.0) == increase,
                    ColState::Zero => true,
                    ColState::Basic => false,
                };
                if !ok {
                    continue;
                }
                let ratio = self.d[j].abs() / a.abs();
                if ratio < best_ratio - 1e-12 || (ratio <= best_ratio + 1e-12 && a.abs() > best_abs)
                {
                    best_ratio = ratio;
                    best_abs = a.abs();
                    best = Some(j);
                }
            }
            let Some(q) = best else {
                return Outcome::Infeasible;
            };
            let delta = (self.beta[r] - target) / self.tab[r * n + q];
            self.apply_step(
                q,
                delta,
                Leave::Row {
                    row: r,
                    to_upper: !increase,
                },
            );
        }
        Outcome::IterationLimit
    }

    /// Tighten the bounds of a structural variable (used for branching).
    /// Returns false if the variable was eliminated at build time with an
    /// incompatible value.
    pub(crate) fn set_var_bounds(&mut self, var: usize, lo: f64, hi: f64) -> bool {
        let Some(j) = self.col_of_var[var] else {
            let v = self.fixed_value[var];
            return v >= lo - FEAS_TOL && v <= hi + FEAS_TOL;
        };
        self.lower[j] = lo;
        self.upper[j] = hi;
        if self.state[j] != ColState::Basic {
            let target = if self.value[j] < lo {
                lo
            } else if self.value[j] > hi {
                hi
            } else {
                self.value[j]
            };
            let delta = target - self.value[j];
            if delta != 0.0 {
                let n = self.n;
                for i in 0..self.m {
                    let a = self.tab[i * n + j];
                    if a != 0.0 {
                        self.beta[i] -= a * delta;
                    }
                }
            }
            self.value[j] = target;
            self.state[j] = if target == hi && lo != hi {
                ColState::Upper
            } else {
                ColState::Lower
            };
        }
        true
    }

    /// Values of the original variables.
    pub(crate) fn extract(&self, bounds: &[(f64, f64)]) -> Vec<f64> {
        let mut col_value = self.value.clone();
        for i in 0..self.m {
            col_value[self.basis[i]] = self.beta[i];
        }
        self.col_of_var
            .iter()
            .enumerate()
            .map(|(v, col)| {
                let x = match col {
                    Some(j) => col_value[*j],
                    None => self.fixed_value[v],
                };
                let (lo, hi) = bounds[v];
                x.clamp(lo, hi)
            })
            .collect()
    }
}

pub(crate) fn iteration_limit(lp: &LinearProgram) -> usize {
    100 * (lp.num_vars() + lp.constraints().len()) + 1000
}

/// Solve the continuous program with explicit per-variable bounds.
pub(crate) fn solve_with_bounds(lp: &LinearProgram, bounds: &[(f64, f64)]) -> Result<Solution> {
    let mut tableau = match Tableau::build(lp, bounds) {
        Built::Ready(t) => t,
        Built::Infeasible => return Ok(Solution::without_point(Status::Infeasible)),
    };
    match tableau.solve(iteration_limit(lp)) {
        Outcome::Optimal => {
            let values = tableau.extract(bounds);
            let objective = lp.evaluate(&values);
            Ok(Solution {
                status: Status::Optimal,
                objective,
                bound: objective,
                values,
                nodes: 1,
            })
        }
        Outcome::Infeasible => Ok(Solution::without_point(Status::Infeasible)),
        Outcome::Unbounded => Ok(Solution::without_point(Status::Unbounded)),
        Outcome::IterationLimit => Err(Error::InvalidModel(
            "simplex iteration limit reached".into(),
        )),
    }
}
