//! Dense linear programming.
//!
//! [`solve`] is a bounded-variable primal simplex over a dense tableau. It is
//! meant for the small, box-bounded problems built by the relaxations and the
//! MIP node relaxations. [`solve_reference`] enumerates vertices and is only
//! used to check `solve` on tiny problems.

mod reference;
mod simplex;

pub use reference::{solve_reference, REFERENCE_VAR_CAP};
pub use simplex::solve;

/// Primal feasibility tolerance on constraint rows.
pub const TOL_FEAS: f64 = 1e-8;
/// Reduced-cost optimality tolerance.
pub const TOL_OPT: f64 = 1e-7;
/// Smallest tableau entry accepted as a pivot.
pub const PIVOT_TOL: f64 = 1e-9;
pub const ITERATION_CAP: usize = 50_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    /// Sparse coefficients `(variable, value)`.
    pub coeffs: Vec<(usize, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

impl Constraint {
    pub fn activity(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(j, a)| a * x[j]).sum()
    }

    /// Signed violation of the row at `x` (0 when satisfied).
    pub fn violation(&self, x: &[f64]) -> f64 {
        let act = self.activity(x);
        match self.relation {
            Relation::Le => (act - self.rhs).max(0.0),
            Relation::Ge => (self.rhs - act).max(0.0),
            Relation::Eq => (act - self.rhs).abs(),
        }
    }
}

/// Minimisation problem over bounded variables.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LpModel {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub objective: Vec<f64>,
    pub rows: Vec<Constraint>,
}

impl LpModel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num_vars(&self) -> usize {
        self.lower.len()
    }

    pub fn add_var(&mut self, lower: f64, upper: f64) -> usize {
        self.lower.push(lower);
        self.upper.push(upper);
        self.objective.push(0.0);
        self.lower.len() - 1
    }

    pub fn set_bounds(&mut self, var: usize, lower: f64, upper: f64) {
        self.lower[var] = lower;
        self.upper[var] = upper;
    }

    pub fn add_row(&mut self, coeffs: Vec<(usize, f64)>, relation: Relation, rhs: f64) {
        self.rows.push(Constraint { coeffs, relation, rhs });
    }

    /// Replaces the objective with `coeffs` (all other coefficients zero).
    pub fn set_objective(&mut self, coeffs: &[(usize, f64)]) {
        self.objective.iter_mut().for_each(|c| *c = 0.0);
        for &(j, c) in coeffs {
            self.objective[j] += c;
        }
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Largest row or bound violation at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let rows = self.rows.iter().map(|r| r.violation(x)).fold(0.0, f64::max);
        let bounds = x
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(v, (l, u))| (l - v).max(v - u).max(0.0))
            .fold(0.0, f64::max);
        rows.max(bounds)
    }

    pub(crate) fn check(&self) -> crate::Result<()> {
        let n = self.num_vars();
        if self.upper.len() != n || self.objective.len() != n {
            return Err(crate::Error::Unsupported("inconsistent LP vector lengths".into()));
        }
        for row in &self.rows {
            if let Some(&(j, _)) = row.coeffs.iter().find(|(j, _)| *j >= n) {
                return Err(crate::Error::Unsupported(format!("LP row references variable {j} of {n}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Objective value; `+∞` when infeasible.
    pub objective: f64,
    /// Primal point; empty when infeasible.
    pub x: Vec<f64>,
}

impl LpSolution {
    pub(crate) fn infeasible() -> Self {
        Self { status: LpStatus::Infeasible, objective: f64::INFINITY, x: Vec::new() }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `min 5 - a - b` over the hull of the two toy ReLUs with `s` in [-4, 4].
    pub(crate) fn toy_planet_lp() -> LpModel {
        let mut m = LpModel::new();
        let s = m.add_var(-4.0, 4.0);
        let a = m.add_var(0.0, 4.0);
        let b = m.add_var(0.0, 4.0);
        m.add_row(vec![(a, 1.0), (s, -1.0)], Relation::Ge, 0.0);
        m.add_row(vec![(a, 1.0), (s, -0.5)], Relation::Le, 2.0);
        m.add_row(vec![(b, 1.0), (s, 1.0)], Relation::Ge, 0.0);
        m.add_row(vec![(b, 1.0), (s, 0.5)], Relation::Le, 2.0);
        m.set_objective(&[(a, -1.0), (b, -1.0)]);
        m
    }

    fn examples() -> Vec<(LpModel, LpStatus, f64)> {
        let mut single = LpModel::new();
        let x = single.add_var(0.0, 4.0);
        single.set_objective(&[(x, -1.0)]);

        let mut infeasible = LpModel::new();
        let x = infeasible.add_var(0.0, 1.0);
        infeasible.add_row(vec![(x, 1.0)], Relation::Ge, 2.0);

        let mut degenerate = LpModel::new();
        let x = degenerate.add_var(0.0, 0.0);
        degenerate.set_objective(&[(x, 1.0)]);

        let mut symmetric = LpModel::new();
        let x = symmetric.add_var(-1.0, 1.0);
        let y = symmetric.add_var(-1.0, 1.0);
        symmetric.add_row(vec![(x, 1.0), (y, 1.0)], Relation::Ge, 0.0);
        symmetric.set_objective(&[(x, 1.0), (y, 1.0)]);

        vec![
            (single, LpStatus::Optimal, -4.0),
            // 5 - a - b with a + b <= 4 everywhere on the hull.
            (toy_planet_lp(), LpStatus::Optimal, -4.0),
            (infeasible, LpStatus::Infeasible, f64::INFINITY),
            (degenerate, LpStatus::Optimal, 0.0),
            (symmetric, LpStatus::Optimal, 0.0),
        ]
    }

    #[test]
    fn simplex_matches_hand_solutions() {
        for (model, status, value) in examples() {
            let sol = solve(&model).unwrap();
            assert_eq!(sol.status, status);
            if status == LpStatus::Optimal {
                assert!((sol.objective - value).abs() < 1e-9, "{} vs {value}", sol.objective);
                assert!(model.max_violation(&sol.x) < 1e-8);
            }
        }
    }

    #[test]
    fn reference_matches_hand_solutions() {
        for (model, status, value) in examples() {
            let sol = solve_reference(&model).unwrap();
            assert_eq!(sol.status, status);
            if status == LpStatus::Optimal {
                assert!((sol.objective - value).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn single_variable_optimum_sits_at_upper_bound() {
        let (model, _, _) = examples().remove(0);
        let sol = solve(&model).unwrap();
        assert_eq!(sol.x, vec![4.0]);
    }

    #[test]
    fn reference_rejects_large_models() {
        let mut m = LpModel::new();
        for _ in 0..=REFERENCE_VAR_CAP {
            m.add_var(0.0, 1.0);
        }
        assert!(matches!(solve_reference(&m), Err(crate::Error::TooLarge { .. })));
    }
}
