//! Big-M mixed-integer encodings and a best-bound branch and bound over the
//! binary phase variables.
//!
//! An ambiguous ReLU with pre-activation bounds `l < 0 < u` gets a binary `δ`:
//!
//! ```text
//! x >= 0,  x >= x̂,  x <= u·δ,  x <= x̂ - l·(1 - δ)       (asymmetric)
//! x >= 0,  x >= x̂,  x <= M·δ,  x <= x̂ + M·(1 - δ)       (symmetric, M = max(-l, u))
//! ```
//!
//! A max-pool group `y = max_i x_i` gets one binary per element with
//! `y >= x_i`, `y <= x_i + (U - l_i)(1 - δ_i)` and `Σ δ_i = 1`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::{Duration, Instant};

use crate::bab::{BabResult, BabStatus};
use crate::canon::{validate_counterexample, VerificationProblem};
use crate::error::Result;
use crate::interval::{propagate_box, LayerBounds};
use crate::lp::{self, LpModel, Relation};
use crate::model::{eval_scalar, BoxDomain, Layer, Network, PhaseSet};
use crate::relax::build_planet;

pub const INTEGRALITY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Encoding {
    Asym,
    Sym,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundsSource {
    Interval,
    Planet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObjectiveMode {
    Feasibility,
    Optimize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MipVariant {
    pub encoding: Encoding,
    pub bounds_source: BoundsSource,
    pub objective_mode: ObjectiveMode,
}

impl MipVariant {
    pub const PLANET_OPT: MipVariant =
        MipVariant { encoding: Encoding::Asym, bounds_source: BoundsSource::Planet, objective_mode: ObjectiveMode::Optimize };
    pub const PLANET_FEAS: MipVariant = MipVariant {
        encoding: Encoding::Asym,
        bounds_source: BoundsSource::Planet,
        objective_mode: ObjectiveMode::Feasibility,
    };
    pub const INTERVAL: MipVariant = MipVariant {
        encoding: Encoding::Asym,
        bounds_source: BoundsSource::Interval,
        objective_mode: ObjectiveMode::Feasibility,
    };
    pub const PLANET_SYM: MipVariant =
        MipVariant { encoding: Encoding::Sym, bounds_source: BoundsSource::Planet, objective_mode: ObjectiveMode::Feasibility };
}

#[derive(Debug, Clone)]
pub struct MipModel {
    /// Relaxation with every binary in `[0, 1]`; the objective is the output.
    pub lp: LpModel,
    pub binaries: Vec<usize>,
    pub inputs: Vec<usize>,
    pub layer_vars: Vec<Vec<usize>>,
    pub output: usize,
    pub bounds: LayerBounds,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MipConfig {
    pub timeout: Option<Duration>,
    pub node_cap: usize,
}

impl Default for MipConfig {
    fn default() -> Self {
        MipConfig { timeout: None, node_cap: 1_000_000 }
    }
}

/// Encodes `net` over `domain` with intermediate bounds from the variant's source.
pub fn encode_mip(net: &Network, domain: &BoxDomain, variant: MipVariant) -> Result<Option<MipModel>> {
    let bounds = match variant.bounds_source {
        BoundsSource::Interval => propagate_box(net, domain),
        BoundsSource::Planet => match build_planet(net, domain, &PhaseSet::new(), true)? {
            Some(model) => model.bounds,
            None => return Ok(None),
        },
    };
    encode_mip_with_bounds(net, &bounds, variant.encoding).map(Some)
}

pub fn encode_mip_with_bounds(net: &Network, bounds: &LayerBounds, encoding: Encoding) -> Result<MipModel> {
    let mut lp = LpModel::new();
    let inputs: Vec<usize> = (0..net.input_size).map(|j| lp.add_var(bounds.input.lb[j], bounds.input.ub[j])).collect();
    let mut layer_vars: Vec<Vec<usize>> = Vec::with_capacity(net.layers.len());
    let mut binaries = Vec::new();

    for (k, layer) in net.layers.iter().enumerate() {
        let prev: &[usize] = if k == 0 { &inputs } else { &layer_vars[k - 1] };
        let post = &bounds.layers[k];
        let vars = match layer {
            Layer::Linear(lin) => {
                let vars: Vec<usize> = (0..lin.out_width()).map(|j| lp.add_var(post.lb[j], post.ub[j])).collect();
                for (j, &v) in vars.iter().enumerate() {
                    let mut coeffs = vec![(v, 1.0)];
                    coeffs.extend(lin.weight.row(j).iter().zip(prev).filter(|(w, _)| **w != 0.0).map(|(w, &p)| (p, -w)));
                    lp.add_row(coeffs, Relation::Eq, lin.bias[j]);
                }
                vars
            }
            Layer::Relu => {
                let pre = bounds.pre(k);
                let mut vars = Vec::with_capacity(pre.len());
                for j in 0..pre.len() {
                    let (l, u) = (pre.lb[j], pre.ub[j]);
                    let xh = prev[j];
                    if u <= 0.0 {
                        vars.push(lp.add_var(0.0, 0.0));
                    } else if l >= 0.0 {
                        let x = lp.add_var(l, u);
                        lp.add_row(vec![(x, 1.0), (xh, -1.0)], Relation::Eq, 0.0);
                        vars.push(x);
                    } else {
                        let x = lp.add_var(0.0, u);
                        let d = lp.add_var(0.0, 1.0);
                        binaries.push(d);
                        lp.add_row(vec![(x, 1.0), (xh, -1.0)], Relation::Ge, 0.0);
                        match encoding {
                            Encoding::Asym => {
                                lp.add_row(vec![(x, 1.0), (d, -u)], Relation::Le, 0.0);
                                lp.add_row(vec![(x, 1.0), (xh, -1.0), (d, -l)], Relation::Le, -l);
                            }
                            Encoding::Sym => {
                                let m = (-l).max(u);
                                lp.add_row(vec![(x, 1.0), (d, -m)], Relation::Le, 0.0);
                                lp.add_row(vec![(x, 1.0), (xh, -1.0), (d, m)], Relation::Le, m);
                            }
                        }
                        vars.push(x);
                    }
                }
                vars
            }
            Layer::MaxPool(pool) => {
                let pre = bounds.pre(k);
                let mut vars = Vec::with_capacity(pool.groups.len());
                for (g, group) in pool.groups.iter().enumerate() {
                    let y = lp.add_var(post.lb[g], post.ub[g]);
                    if let [only] = group.as_slice() {
                        lp.add_row(vec![(y, 1.0), (prev[*only], -1.0)], Relation::Eq, 0.0);
                    } else {
                        let big_u = group.iter().map(|&i| pre.ub[i]).fold(f64::NEG_INFINITY, f64::max);
                        let mut sum = Vec::with_capacity(group.len());
                        for &i in group {
                            let d = lp.add_var(0.0, 1.0);
                            binaries.push(d);
                            sum.push((d, 1.0));
                            let m = big_u - pre.lb[i];
                            lp.add_row(vec![(y, 1.0), (prev[i], -1.0)], Relation::Ge, 0.0);
                            lp.add_row(vec![(y, 1.0), (prev[i], -1.0), (d, m)], Relation::Le, m);
                        }
                        lp.add_row(sum, Relation::Eq, 1.0);
                    }
                    vars.push(y);
                }
                vars
            }
        };
        layer_vars.push(vars);
    }
    let output = match layer_vars.last().map(Vec::as_slice) {
        Some([v]) => *v,
        _ => return Err(crate::Error::DimensionMismatch { expected: 1, got: net.output_width() }),
    };
    lp.set_objective(&[(output, 1.0)]);
    Ok(MipModel { lp, binaries, inputs, layer_vars, output, bounds: bounds.clone() })
}

struct Node {
    bound: f64,
    depth: usize,
    seq: u64,
    fixed: Vec<(usize, f64)>,
    /// LP solution of this node.
    x: Vec<f64>,
}

struct Ranked {
    node: Node,
    deeper_first: bool,
}

impl PartialEq for Ranked {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Ranked {}

impl PartialOrd for Ranked {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Ranked {
    // Max-heap: smallest bound first, then (optionally) deepest, then oldest.
    fn cmp(&self, other: &Self) -> Ordering {
        let by_bound = other.node.bound.total_cmp(&self.node.bound);
        let by_depth = if self.deeper_first { self.node.depth.cmp(&other.node.depth) } else { Ordering::Equal };
        by_bound.then(by_depth).then_with(|| other.node.seq.cmp(&self.node.seq))
    }
}

fn most_fractional(model: &MipModel, x: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for &d in &model.binaries {
        let frac = (x[d] - x[d].round()).abs();
        if frac > INTEGRALITY_TOL && best.is_none_or(|(_, f)| frac > f) {
            best = Some((d, frac));
        }
    }
    best.map(|(d, _)| d)
}

struct Solver<'a> {
    problem: &'a VerificationProblem,
    model: MipModel,
    feasibility: bool,
}

enum NodeLp {
    Infeasible,
    /// Feasibility mode only: the `output <= 0` system is empty; carries the
    /// relaxed minimum without that row.
    Pruned(f64),
    Solved(f64, Vec<f64>),
}

impl Solver<'_> {
    fn node_model(&self, fixed: &[(usize, f64)], with_row: bool) -> LpModel {
        let mut lp = self.model.lp.clone();
        for &(d, v) in fixed {
            lp.set_bounds(d, v, v);
        }
        if with_row {
            lp.add_row(vec![(self.model.output, 1.0)], Relation::Le, 0.0);
        }
        lp
    }

    fn solve_node(&self, fixed: &[(usize, f64)]) -> Result<NodeLp> {
        let sol = lp::solve(&self.node_model(fixed, self.feasibility))?;
        if sol.is_optimal() {
            return Ok(NodeLp::Solved(sol.objective, sol.x));
        }
        if !self.feasibility {
            return Ok(NodeLp::Infeasible);
        }
        let relaxed = lp::solve(&self.node_model(fixed, false))?;
        Ok(if relaxed.is_optimal() { NodeLp::Pruned(relaxed.objective) } else { NodeLp::Infeasible })
    }

    fn candidate(&self, x: &[f64]) -> Result<Option<Vec<f64>>> {
        let mut x0: Vec<f64> = self.model.inputs.iter().map(|&v| x[v]).collect();
        self.problem.domain.clamp(&mut x0);
        let ok = validate_counterexample(self.problem, &x0, 1e-6) && eval_scalar(&self.problem.canonical_net, &x0)? <= 0.0;
        Ok(ok.then_some(x0))
    }

    fn run(&self, config: &MipConfig) -> Result<BabResult> {
        let start = Instant::now();
        let deeper_first = self.feasibility;
        let mut nodes = 0usize;
        let mut spurious = 0usize;
        let mut margin = f64::INFINITY;
        let mut seq = 0u64;
        let mut heap: BinaryHeap<Ranked> = BinaryHeap::new();
        let finish = |status, nodes, lb, ub, spurious| BabResult {
            status,
            nodes_explored: nodes,
            wall_time: start.elapsed(),
            lower_bound: lb,
            upper_bound: ub,
            spurious_candidates: spurious,
            trace: Vec::new(),
        };
        let timed_out = |nodes: usize| config.timeout.is_some_and(|t| start.elapsed() >= t) || nodes >= config.node_cap;

        let mut pending: Vec<(Vec<(usize, f64)>, usize)> = vec![(Vec::new(), 0)];
        loop {
            if timed_out(nodes) {
                let lb = heap.peek().map_or(margin, |r| r.node.bound.min(margin));
                let lb = if nodes == 0 { f64::NEG_INFINITY } else { lb };
                return Ok(finish(BabStatus::Timeout { best_lb: lb, best_ub: f64::INFINITY }, nodes, lb, f64::INFINITY, spurious));
            }
            for (fixed, depth) in pending.drain(..) {
                nodes += 1;
                match self.solve_node(&fixed)? {
                    NodeLp::Infeasible => {}
                    NodeLp::Pruned(v) => margin = margin.min(v),
                    NodeLp::Solved(v, _) if !self.feasibility && v > 0.0 => margin = margin.min(v),
                    NodeLp::Solved(bound, x) => {
                        heap.push(Ranked { node: Node { bound, depth, seq, fixed, x }, deeper_first });
                        seq += 1;
                    }
                }
            }

            let Some(Ranked { node, .. }) = heap.pop() else {
                return Ok(finish(BabStatus::Unsat { margin }, nodes, margin, f64::INFINITY, spurious));
            };
            if let Some(d) = most_fractional(&self.model, &node.x) {
                for v in [0.0, 1.0] {
                    let mut fixed = node.fixed.clone();
                    fixed.push((d, v));
                    pending.push((fixed, node.depth + 1));
                }
                continue;
            }
            // Integral relaxation: a candidate counterexample.
            if let Some(x0) = self.candidate(&node.x)? {
                let lb = heap.peek().map_or(node.bound, |r| r.node.bound.min(node.bound)).min(margin);
                return Ok(finish(BabStatus::Sat { counterexample: x0 }, nodes, lb, node.bound, spurious));
            }
            spurious += 1;
            let free = self.model.binaries.iter().copied().find(|d| node.fixed.iter().all(|(f, _)| f != d));
            match free {
                Some(d) => {
                    let v = node.x[d].round();
                    for v in [v, 1.0 - v] {
                        let mut fixed = node.fixed.clone();
                        fixed.push((d, v));
                        pending.push((fixed, node.depth + 1));
                    }
                }
                None => {
                    // Fully fixed: the relaxation is exact, so the LP minimum decides.
                    let sol = lp::solve(&self.node_model(&node.fixed, false))?;
                    if sol.is_optimal() {
                        if sol.objective > 0.0 {
                            margin = margin.min(sol.objective);
                        } else if let Some(x0) = self.candidate(&sol.x)? {
                            return Ok(finish(BabStatus::Sat { counterexample: x0 }, nodes, sol.objective, sol.objective, spurious));
                        }
                    }
                }
            }
        }
    }
}

/// Decides the canonical problem with the given MIP variant.
pub fn solve_mip(problem: &VerificationProblem, variant: MipVariant, config: &MipConfig) -> Result<BabResult> {
    let start = Instant::now();
    if config.timeout.is_some_and(|t| t.is_zero()) {
        return Ok(BabResult {
            status: BabStatus::Timeout { best_lb: f64::NEG_INFINITY, best_ub: f64::INFINITY },
            nodes_explored: 0,
            wall_time: start.elapsed(),
            lower_bound: f64::NEG_INFINITY,
            upper_bound: f64::INFINITY,
            spurious_candidates: 0,
            trace: Vec::new(),
        });
    }
    let Some(model) = encode_mip(&problem.canonical_net, &problem.domain, variant)? else {
        return Ok(BabResult {
            status: BabStatus::Unsat { margin: f64::INFINITY },
            nodes_explored: 0,
            wall_time: start.elapsed(),
            lower_bound: f64::INFINITY,
            upper_bound: f64::INFINITY,
            spurious_candidates: 0,
            trace: Vec::new(),
        });
    };
    let remaining = config.timeout.map(|t| t.saturating_sub(start.elapsed()));
    let solver = Solver { problem, model, feasibility: variant.objective_mode == ObjectiveMode::Feasibility };
    let mut result = solver.run(&MipConfig { timeout: remaining, ..config.clone() })?;
    result.wall_time = start.elapsed();
    Ok(result)
}
