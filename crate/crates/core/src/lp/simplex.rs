//! Bounded-variable primal simplex on a dense tableau.
//!
//! Each row `a·x {≤,=,≥} b` becomes `a·x - s = 0` with the slack `s` carrying
//! the row bounds. Rows whose slack is out of range at the starting point get
//! an artificial column and phase 1 minimises the sum of artificials. Bland's
//! rule takes over after a run of degenerate pivots.

use super::{LpModel, LpSolution, LpStatus, Relation, ITERATION_CAP, PIVOT_TOL, TOL_FEAS, TOL_OPT};
use crate::error::{Error, Result};

const DEGENERATE_RUN: usize = 50;
const REFACTOR_EVERY: usize = 100;
const STEP_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum State {
    Basic,
    Lower,
    Upper,
    Free,
}

struct Tableau {
    m: usize,
    cols: usize,
    art_start: usize,
    /// Original `A` in `A x = 0` form, row-major.
    a: Vec<f64>,
    /// Current `B⁻¹ A`.
    t: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    x: Vec<f64>,
    state: Vec<State>,
    head: Vec<usize>,
    cost: Vec<f64>,
    iterations: usize,
    degenerate_run: usize,
}

/// Solves `model` to optimality or proves it infeasible.
pub fn solve(model: &LpModel) -> Result<LpSolution> {
    model.check()?;
    let n = model.num_vars();
    if (0..n).any(|j| model.lower[j] > model.upper[j] + TOL_FEAS) {
        return Ok(LpSolution::infeasible());
    }
    let mut tab = Tableau::build(model);

    let has_artificials = tab.art_start < tab.cols;
    if has_artificials {
        tab.cost = vec![0.0; tab.cols];
        for c in &mut tab.cost[tab.art_start..] {
            *c = 1.0;
        }
        tab.run()?;
        let infeasibility: f64 = tab.x[tab.art_start..].iter().sum();
        if infeasibility > TOL_FEAS {
            return Ok(LpSolution::infeasible());
        }
        tab.retire_artificials();
    }

    tab.cost = vec![0.0; tab.cols];
    tab.cost[..n].copy_from_slice(&model.objective);
    tab.run()?;

    let mut x = tab.x[..n].to_vec();
    for (j, v) in x.iter_mut().enumerate() {
        let (lo, hi) = (model.lower[j], model.upper[j].max(model.lower[j]));
        *v = v.clamp(lo, hi);
    }
    if model.max_violation(&x) > 1e3 * TOL_FEAS {
        return Err(Error::NumericalFailure { iterations: tab.iterations });
    }
    let objective = model.objective_value(&x);
    Ok(LpSolution { status: LpStatus::Optimal, objective, x })
}

impl Tableau {
    fn build(model: &LpModel) -> Self {
        let n = model.num_vars();
        let m = model.rows.len();

        let mut x0 = vec![0.0; n];
        let mut state0 = vec![State::Free; n];
        for j in 0..n {
            let (lo, hi) = (model.lower[j], model.upper[j].max(model.lower[j]));
            if lo.is_finite() {
                x0[j] = lo;
                state0[j] = State::Lower;
            } else if hi.is_finite() {
                x0[j] = hi;
                state0[j] = State::Upper;
            }
        }

        // Slack bounds and the rows that need an artificial.
        let mut slack_bounds = Vec::with_capacity(m);
        let mut activity = Vec::with_capacity(m);
        let mut needs_art = Vec::with_capacity(m);
        for row in &model.rows {
            let (lo, hi) = match row.relation {
                Relation::Le => (f64::NEG_INFINITY, row.rhs),
                Relation::Ge => (row.rhs, f64::INFINITY),
                Relation::Eq => (row.rhs, row.rhs),
            };
            let r = row.activity(&x0);
            needs_art.push(r < lo - TOL_FEAS || r > hi + TOL_FEAS);
            slack_bounds.push((lo, hi));
            activity.push(r);
        }
        let art_start = n + m;
        let cols = art_start + needs_art.iter().filter(|&&b| b).count();

        let mut a = vec![0.0; m * cols];
        let mut lower = Vec::with_capacity(cols);
        let mut upper = Vec::with_capacity(cols);
        lower.extend(model.lower.iter().copied());
        upper.extend(model.lower.iter().zip(&model.upper).map(|(l, u)| u.max(*l)));
        lower.extend(slack_bounds.iter().map(|b| b.0));
        upper.extend(slack_bounds.iter().map(|b| b.1));
        lower.resize(cols, 0.0);
        upper.resize(cols, f64::INFINITY);

        let mut x = x0;
        x.resize(cols, 0.0);
        let mut state = state0;
        state.resize(cols, State::Basic);
        let mut head = Vec::with_capacity(m);

        let mut next_art = art_start;
        for (i, row) in model.rows.iter().enumerate() {
            let base = i * cols;
            for &(j, v) in &row.coeffs {
                a[base + j] += v;
            }
            a[base + n + i] = -1.0;
            let slack = n + i;
            if needs_art[i] {
                let (lo, hi) = slack_bounds[i];
                let r = activity[i];
                let (beta, st) = if r < lo { (lo, State::Lower) } else { (hi, State::Upper) };
                let sigma = if beta >= r { 1.0 } else { -1.0 };
                a[base + next_art] = sigma;
                x[slack] = beta;
                state[slack] = st;
                x[next_art] = (beta - r).abs();
                state[next_art] = State::Basic;
                head.push(next_art);
                next_art += 1;
            } else {
                x[slack] = activity[i];
                state[slack] = State::Basic;
                head.push(slack);
            }
        }

        let mut t = a.clone();
        for (i, &h) in head.iter().enumerate() {
            let piv = t[i * cols + h];
            for v in &mut t[i * cols..(i + 1) * cols] {
                *v /= piv;
            }
        }

        Self {
            m,
            cols,
            art_start,
            a,
            t,
            lower,
            upper,
            x,
            state,
            head,
            cost: Vec::new(),
            iterations: 0,
            degenerate_run: 0,
        }
    }

    fn reduced_costs(&self) -> Vec<f64> {
        let mut d = self.cost.clone();
        for (r, &h) in self.head.iter().enumerate() {
            let cb = self.cost[h];
            if cb == 0.0 {
                continue;
            }
            let row = &self.t[r * self.cols..(r + 1) * self.cols];
            for (dj, tj) in d.iter_mut().zip(row) {
                *dj -= cb * tj;
            }
        }
        d
    }

    fn entering(&self, d: &[f64], bland: bool) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        let mut best_score = 0.0;
        for j in 0..self.cols {
            if self.lower[j] == self.upper[j] {
                continue;
            }
            let dir = match self.state[j] {
                State::Basic => continue,
                State::Lower if d[j] < -TOL_OPT => 1.0,
                State::Upper if d[j] > TOL_OPT => -1.0,
                State::Free if d[j].abs() > TOL_OPT => -d[j].signum(),
                _ => continue,
            };
            if bland {
                return Some((j, dir));
            }
            if d[j].abs() > best_score {
                best_score = d[j].abs();
                best = Some((j, dir));
            }
        }
        best
    }

    /// Optimises the current cost vector from the current basis.
    fn run(&mut self) -> Result<()> {
        let mut since_refactor = 0;
        let mut verified = false;
        loop {
            if self.iterations >= ITERATION_CAP {
                return Err(Error::NumericalFailure { iterations: self.iterations });
            }
            if since_refactor >= REFACTOR_EVERY {
                self.refactor();
                since_refactor = 0;
            }
            let d = self.reduced_costs();
            let bland = self.degenerate_run > DEGENERATE_RUN;
            let Some((j, dir)) = self.entering(&d, bland) else {
                if verified || since_refactor == 0 {
                    return Ok(());
                }
                // Confirm optimality on a freshly factored tableau.
                self.refactor();
                since_refactor = 0;
                verified = true;
                continue;
            };
            verified = false;
            self.iterations += 1;
            since_refactor += 1;
            self.step(j, dir, bland)?;
        }
    }

    fn step(&mut self, j: usize, dir: f64, bland: bool) -> Result<()> {
        let cols = self.cols;
        // (row, step limit, bound hit, |alpha|)
        let mut leave: Option<(usize, f64, State, f64)> = None;
        for r in 0..self.m {
            let alpha = -self.t[r * cols + j] * dir;
            let h = self.head[r];
            let (limit, bound_state) = if alpha > PIVOT_TOL && self.upper[h].is_finite() {
                ((self.upper[h] - self.x[h]) / alpha, State::Upper)
            } else if alpha < -PIVOT_TOL && self.lower[h].is_finite() {
                ((self.lower[h] - self.x[h]) / alpha, State::Lower)
            } else {
                continue;
            };
            let limit = limit.max(0.0);
            let replace = match leave {
                None => true,
                Some((lr, best, _, best_alpha)) => {
                    limit < best - STEP_EPS
                        || (limit <= best + STEP_EPS
                            && if bland { h < self.head[lr] } else { alpha.abs() > best_alpha })
                }
            };
            if replace {
                leave = Some((r, limit, bound_state, alpha.abs()));
            }
        }
        let t_min = leave.map_or(f64::INFINITY, |l| l.1);

        let flip = self.upper[j] - self.lower[j];
        if flip.is_finite() && flip <= t_min {
            self.shift(j, dir, flip);
            self.state[j] = if dir > 0.0 { State::Upper } else { State::Lower };
            self.x[j] = if dir > 0.0 { self.upper[j] } else { self.lower[j] };
            self.degenerate_run = 0;
            return Ok(());
        }
        let Some((r, step, bound_state, _)) = leave else {
            // Every problem here is bounded, so an unbounded ray is numerical noise.
            return Err(Error::NumericalFailure { iterations: self.iterations });
        };
        self.shift(j, dir, step);
        if step < STEP_EPS {
            self.degenerate_run += 1;
        } else {
            self.degenerate_run = 0;
        }
        let leaving = self.head[r];
        self.x[leaving] = if bound_state == State::Upper { self.upper[leaving] } else { self.lower[leaving] };
        self.state[leaving] = bound_state;
        self.pivot(r, j);
        Ok(())
    }

    /// Moves nonbasic `j` by `dir * step` and updates basic values.
    fn shift(&mut self, j: usize, dir: f64, step: f64) {
        if step == 0.0 {
            return;
        }
        for r in 0..self.m {
            let alpha = -self.t[r * self.cols + j] * dir;
            self.x[self.head[r]] += alpha * step;
        }
        self.x[j] += dir * step;
    }

    fn pivot(&mut self, r: usize, j: usize) {
        let cols = self.cols;
        let piv = self.t[r * cols + j];
        for v in &mut self.t[r * cols..(r + 1) * cols] {
            *v /= piv;
        }
        let (before, rest) = self.t.split_at_mut(r * cols);
        let (prow, after) = rest.split_at_mut(cols);
        for row in before.chunks_exact_mut(cols).chain(after.chunks_exact_mut(cols)) {
            let f = row[j];
            if f == 0.0 {
                continue;
            }
            for (v, p) in row.iter_mut().zip(prow.iter()) {
                *v -= f * p;
            }
            row[j] = 0.0;
        }
        self.head[r] = j;
        self.state[j] = State::Basic;
    }

    /// Pivots basic artificials out where possible and pins all artificials to 0.
    fn retire_artificials(&mut self) {
        for r in 0..self.m {
            let h = self.head[r];
            if h < self.art_start {
                continue;
            }
            let row = &self.t[r * self.cols..(r + 1) * self.cols];
            let best = (0..self.art_start)
                .filter(|&j| self.state[j] != State::Basic)
                .max_by(|&a, &b| row[a].abs().total_cmp(&row[b].abs()));
            if let Some(j) = best.filter(|&j| row[j].abs() > 1e-7) {
                self.state[h] = State::Lower;
                self.pivot(r, j);
            }
        }
        for j in self.art_start..self.cols {
            self.upper[j] = 0.0;
            self.lower[j] = 0.0;
            if self.state[j] != State::Basic {
                self.state[j] = State::Lower;
                self.x[j] = 0.0;
            }
        }
        self.refactor();
        self.degenerate_run = 0;
    }

    /// Rebuilds `B⁻¹ A` and the basic values from the original matrix.
    fn refactor(&mut self) {
        let (m, cols) = (self.m, self.cols);
        if m == 0 {
            return;
        }
        // [B | A] reduced with Gauss-Jordan and partial pivoting.
        let width = m + cols;
        let mut aug = vec![0.0; m * width];
        for i in 0..m {
            for (r, &h) in self.head.iter().enumerate() {
                aug[i * width + r] = self.a[i * cols + h];
            }
            aug[i * width + m..(i + 1) * width].copy_from_slice(&self.a[i * cols..(i + 1) * cols]);
        }
        for c in 0..m {
            let p = (c..m)
                .max_by(|&a, &b| aug[a * width + c].abs().total_cmp(&aug[b * width + c].abs()))
                .unwrap();
            if aug[p * width + c].abs() < 1e-12 {
                return;
            }
            if p != c {
                for k in 0..width {
                    aug.swap(p * width + k, c * width + k);
                }
            }
            let piv = aug[c * width + c];
            for k in 0..width {
                aug[c * width + k] /= piv;
            }
            for i in 0..m {
                if i == c {
                    continue;
                }
                let f = aug[i * width + c];
                if f == 0.0 {
                    continue;
                }
                for k in 0..width {
                    aug[i * width + k] -= f * aug[c * width + k];
                }
            }
        }
        for i in 0..m {
            self.t[i * cols..(i + 1) * cols].copy_from_slice(&aug[i * width + m..(i + 1) * width]);
        }
        // x_B = -Σ_{j nonbasic} T_j x_j
        for r in 0..m {
            let row = &self.t[r * cols..(r + 1) * cols];
            let mut v = 0.0;
            for j in 0..cols {
                if self.state[j] != State::Basic && self.x[j] != 0.0 {
                    v -= row[j] * self.x[j];
                }
            }
            self.x[self.head[r]] = v;
        }
    }
}
