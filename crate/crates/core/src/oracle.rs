//! Exact global minimum by enumerating activation patterns.
//!
//! With every ReLU phase fixed the network is affine on the region where the
//! phases hold, so each pattern is one LP over the inputs. Units already
//! sign-fixed by interval bounds have only one non-degenerate phase and are
//! not enumerated; patterns are extended layer by layer and a prefix whose
//! region is empty is dropped with all its extensions.

use crate::canon::{maxpool_to_relu, validate_counterexample, VerificationProblem};
use crate::error::{Error, Result};
use crate::interval::{propagate_box, LayerBounds};
use crate::lp::{self, LpModel, Relation};
use crate::model::{BoxDomain, Layer, Network};

pub const DEFAULT_RELU_CAP: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub min: f64,
    pub argmin: Vec<f64>,
    /// Number of complete patterns with a non-empty region.
    pub patterns: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum OracleVerdict {
    Sat(Vec<f64>),
    Unsat(f64),
}

/// Affine map `x0 -> A x0 + c` of the current layer values.
#[derive(Clone)]
struct Affine {
    a: Vec<Vec<f64>>,
    c: Vec<f64>,
}

struct Search<'a> {
    net: &'a Network,
    bounds: LayerBounds,
    base: LpModel,
    best: Option<(f64, Vec<f64>)>,
    patterns: usize,
}

/// Global minimum of the scalar output of `net` over `domain`.
pub fn oracle_min(net: &Network, domain: &BoxDomain, relu_cap: usize) -> Result<OracleResult> {
    if net.output_width() != 1 {
        return Err(Error::DimensionMismatch { expected: 1, got: net.output_width() });
    }
    let lowered;
    let net = if net.has_maxpool() {
        lowered = maxpool_to_relu(net, &propagate_box(net, domain))?;
        &lowered
    } else {
        net
    };
    let relus = net.relu_count();
    if relus > relu_cap {
        return Err(Error::CapExceeded { relus, cap: relu_cap });
    }

    let n = net.input_size;
    let mut base = LpModel::new();
    for j in 0..n {
        base.add_var(domain.lb[j], domain.ub[j]);
    }
    let identity = Affine {
        a: (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect(),
        c: vec![0.0; n],
    };
    let mut search = Search { net, bounds: propagate_box(net, domain), base, best: None, patterns: 0 };
    search.explore(0, identity, &mut Vec::new())?;
    let (min, argmin) = search.best.ok_or(Error::NumericalFailure { iterations: 0 })?;
    Ok(OracleResult { min, argmin, patterns: search.patterns })
}

/// Sign of the oracle minimum of a canonical problem.
pub fn oracle_verdict(problem: &VerificationProblem) -> Result<OracleVerdict> {
    let res = oracle_min(&problem.canonical_net, &problem.domain, DEFAULT_RELU_CAP)?;
    if res.min <= 0.0 {
        debug_assert!(validate_counterexample(problem, &res.argmin, 1e-6));
        Ok(OracleVerdict::Sat(res.argmin))
    } else {
        Ok(OracleVerdict::Unsat(res.min))
    }
}

type Row = (Vec<f64>, Relation, f64);

impl Search<'_> {
    fn explore(&mut self, k: usize, mut map: Affine, rows: &mut Vec<Row>) -> Result<()> {
        let mut k = k;
        while k < self.net.layers.len() {
            match &self.net.layers[k] {
                Layer::Linear(lin) => {
                    let a = (0..lin.out_width())
                        .map(|r| {
                            let w = lin.weight.row(r);
                            (0..self.net.input_size).map(|j| w.iter().zip(&map.a).map(|(wi, ai)| wi * ai[j]).sum()).collect()
                        })
                        .collect();
                    let c = lin.apply(&map.c);
                    map = Affine { a, c };
                }
                Layer::Relu => {
                    let pre = self.bounds.pre(k);
                    let mut ambiguous = Vec::new();
                    for j in 0..map.c.len() {
                        if pre.ub[j] <= 0.0 {
                            map.a[j].iter_mut().for_each(|v| *v = 0.0);
                            map.c[j] = 0.0;
                        } else if pre.lb[j] < 0.0 {
                            ambiguous.push(j);
                        }
                    }
                    if ambiguous.is_empty() {
                        k += 1;
                        continue;
                    }
                    for mask in 0u64..(1u64 << ambiguous.len()) {
                        let mut child = map.clone();
                        let depth = rows.len();
                        for (bit, &j) in ambiguous.iter().enumerate() {
                            // pre = a·x + c; passing: pre >= 0, blocked: pre <= 0.
                            let passing = mask >> bit & 1 == 1;
                            let rel = if passing { Relation::Ge } else { Relation::Le };
                            rows.push((map.a[j].clone(), rel, -map.c[j]));
                            if !passing {
                                child.a[j].iter_mut().for_each(|v| *v = 0.0);
                                child.c[j] = 0.0;
                            }
                        }
                        if self.solve(rows, None)?.is_some() {
                            self.explore(k + 1, child, rows)?;
                        }
                        rows.truncate(depth);
                    }
                    return Ok(());
                }
                Layer::MaxPool(_) => unreachable!("max-pool layers are lowered first"),
            }
            k += 1;
        }
        if let Some((value, x)) = self.solve(rows, Some(&map))? {
            self.patterns += 1;
            if self.best.as_ref().is_none_or(|(b, _)| value < *b) {
                self.best = Some((value, x));
            }
        }
        Ok(())
    }

    /// Minimises the scalar `objective` (or checks feasibility) over the region.
    fn solve(&self, rows: &[Row], objective: Option<&Affine>) -> Result<Option<(f64, Vec<f64>)>> {
        let mut lp = self.base.clone();
        for (a, rel, rhs) in rows {
            let coeffs = a.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(j, &v)| (j, v)).collect();
            lp.add_row(coeffs, *rel, *rhs);
        }
        let constant = match objective {
            Some(obj) => {
                let coeffs: Vec<(usize, f64)> = obj.a[0].iter().copied().enumerate().collect();
                lp.set_objective(&coeffs);
                obj.c[0]
            }
            None => 0.0,
        };
        let sol = lp::solve(&lp)?;
        Ok(sol.is_optimal().then_some((sol.objective + constant, sol.x)))
    }
}
