//! Brute-force vertex enumeration, used as a test oracle for the simplex.

use super::{LpModel, LpSolution, LpStatus};
use crate::error::{Error, Result};

pub const REFERENCE_VAR_CAP: usize = 8;
const FEAS_TOL: f64 = 1e-9;

#[derive(Clone, Copy)]
enum Pin {
    Lower,
    Upper,
    Free,
}

/// Exhaustive basic-solution enumeration for models with at most
/// [`REFERENCE_VAR_CAP`] variables. Every vertex is the solution of `n` active
/// constraints: each variable is pinned to a bound or left free, and as many
/// rows as there are free variables are made tight.
pub fn solve_reference(model: &LpModel) -> Result<LpSolution> {
    model.check()?;
    let n = model.num_vars();
    if n > REFERENCE_VAR_CAP {
        return Err(Error::TooLarge { vars: n, cap: REFERENCE_VAR_CAP });
    }
    if (0..n).any(|j| model.lower[j] > model.upper[j]) {
        return Ok(LpSolution::infeasible());
    }
    let dense: Vec<Vec<f64>> = model
        .rows
        .iter()
        .map(|r| {
            let mut v = vec![0.0; n];
            for &(j, a) in &r.coeffs {
                v[j] += a;
            }
            v
        })
        .collect();

    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut pins = vec![Pin::Free; n];
    enumerate_pins(model, &dense, 0, &mut pins, &mut best);

    Ok(match best {
        Some((objective, x)) => LpSolution { status: LpStatus::Optimal, objective, x },
        None => LpSolution::infeasible(),
    })
}

fn enumerate_pins(model: &LpModel, dense: &[Vec<f64>], j: usize, pins: &mut Vec<Pin>, best: &mut Option<(f64, Vec<f64>)>) {
    if j == pins.len() {
        let free: Vec<usize> = (0..pins.len()).filter(|&k| matches!(pins[k], Pin::Free)).collect();
        let mut chosen = Vec::with_capacity(free.len());
        choose_rows(model, dense, pins, &free, 0, &mut chosen, best);
        return;
    }
    let (lo, hi) = (model.lower[j], model.upper[j]);
    let mut options = Vec::with_capacity(3);
    if lo.is_finite() {
        options.push(Pin::Lower);
    }
    if hi.is_finite() && hi != lo {
        options.push(Pin::Upper);
    }
    if lo != hi {
        options.push(Pin::Free);
    }
    for opt in options {
        pins[j] = opt;
        enumerate_pins(model, dense, j + 1, pins, best);
    }
}

fn choose_rows(
    model: &LpModel,
    dense: &[Vec<f64>],
    pins: &[Pin],
    free: &[usize],
    start: usize,
    chosen: &mut Vec<usize>,
    best: &mut Option<(f64, Vec<f64>)>,
) {
    if chosen.len() == free.len() {
        if let Some(x) = vertex(model, dense, pins, free, chosen) {
            if model.max_violation(&x) <= FEAS_TOL * (1.0 + x.iter().fold(0.0f64, |a, v| a.max(v.abs()))) {
                let obj = model.objective_value(&x);
                if best.as_ref().is_none_or(|(b, _)| obj < *b) {
                    *best = Some((obj, x));
                }
            }
        }
        return;
    }
    let needed = free.len() - chosen.len();
    for r in start..dense.len() {
        if dense.len() - r < needed {
            break;
        }
        chosen.push(r);
        choose_rows(model, dense, pins, free, r + 1, chosen, best);
        chosen.pop();
    }
}

fn vertex(model: &LpModel, dense: &[Vec<f64>], pins: &[Pin], free: &[usize], rows: &[usize]) -> Option<Vec<f64>> {
    let n = pins.len();
    let mut x = vec![0.0; n];
    for (j, pin) in pins.iter().enumerate() {
        x[j] = match pin {
            Pin::Lower => model.lower[j],
            Pin::Upper => model.upper[j],
            Pin::Free => 0.0,
        };
    }
    let f = free.len();
    if f == 0 {
        return Some(x);
    }
    // Tight rows restricted to the free variables.
    let mut a = vec![vec![0.0; f + 1]; f];
    for (i, &r) in rows.iter().enumerate() {
        let fixed: f64 = (0..n).filter(|j| !free.contains(j)).map(|j| dense[r][j] * x[j]).sum();
        for (c, &j) in free.iter().enumerate() {
            a[i][c] = dense[r][j];
        }
        a[i][f] = model.rows[r].rhs - fixed;
    }
    let sol = gauss_solve(a)?;
    for (c, &j) in free.iter().enumerate() {
        x[j] = sol[c];
    }
    Some(x)
}

fn gauss_solve(mut a: Vec<Vec<f64>>) -> Option<Vec<f64>> {
    let f = a.len();
    for c in 0..f {
        let p = (c..f).max_by(|&i, &k| a[i][c].abs().total_cmp(&a[k][c].abs()))?;
        if a[p][c].abs() < 1e-10 {
            return None;
        }
        a.swap(p, c);
        for i in 0..f {
            if i != c {
                let factor = a[i][c] / a[c][c];
                if factor != 0.0 {
                    for k in c..=f {
                        a[i][k] -= factor * a[c][k];
                    }
                }
            }
        }
    }
    Some((0..f).map(|i| a[i][f] / a[i][i]).collect())
}
