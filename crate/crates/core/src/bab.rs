//! Best-first branch and bound over input boxes or ReLU phase assignments.
//!
//! Each subdomain carries a sound lower bound of the canonical output over its
//! region. Upper bounds come from evaluating concrete inputs (random samples,
//! a coordinate-descent refinement, and the minimiser of the relaxation).
//! In optimisation mode the search stops once the gap is below `epsilon`; in
//! satisfiability mode the global upper bound starts at 0 and the search stops
//! at the first input with output `<= 0`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_xoshiro::SplitMix64;

use crate::canon::{validate_counterexample, VerificationProblem};
use crate::error::Result;
use crate::interval::{propagate_box, refine_with_fixed_phases, LayerBounds};
use crate::model::{eval_scalar, BoxDomain, Network, Phase, PhaseSet, UnitId};
use crate::relax::{
    build_relaxation, build_with_bounds, fast_dual_bound, planet_solve, ReluRelaxation,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Optimize,
    Satisfiability,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bounding {
    PlanetTightened,
    PlanetFixed,
    Interval,
    FastDual,
    ReluplexRelax,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branching {
    InputLongestEdge,
    InputSmart,
    ReluSplit,
}

/// How smart branching scores a candidate bisection from its two child bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitScore {
    Min,
    Sum,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BabConfig {
    pub epsilon: f64,
    pub mode: Mode,
    pub bounding: Bounding,
    pub branching: Branching,
    pub split_score: SplitScore,
    pub sample_count: usize,
    pub timeout: Option<Duration>,
    pub node_cap: usize,
    pub seed: u64,
    pub workers: usize,
    /// Record `(global_lb, global_ub)` after every iteration.
    pub trace: bool,
}

impl Default for BabConfig {
    fn default() -> Self {
        BabConfig {
            epsilon: 1e-4,
            mode: Mode::Satisfiability,
            bounding: Bounding::PlanetTightened,
            branching: Branching::InputSmart,
            split_score: SplitScore::Min,
            sample_count: 1024,
            timeout: None,
            node_cap: 1_000_000,
            seed: 0,
            workers: 1,
            trace: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Region {
    InputBox(BoxDomain),
    PhaseSet(PhaseSet),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Subdomain {
    pub region: Region,
    pub lower_bound: f64,
    pub depth: usize,
    /// Intermediate bounds computed while bounding this subdomain.
    pub bounds: Option<LayerBounds>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum BabStatus {
    Unsat { margin: f64 },
    Sat { counterexample: Vec<f64> },
    Timeout { best_lb: f64, best_ub: f64 },
    Converged { min_estimate: f64, minimizer: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct BabResult {
    pub status: BabStatus,
    pub nodes_explored: usize,
    pub wall_time: Duration,
    pub lower_bound: f64,
    pub upper_bound: f64,
    /// Integral solutions rejected by counterexample validation (MIP only).
    pub spurious_candidates: usize,
    pub trace: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitError {
    /// Every input dimension has zero width.
    Exhausted,
    /// No unfixed ReLU is ambiguous under the current bounds.
    NoAmbiguousUnit,
}

struct Entry {
    lb: f64,
    seq: u64,
    dom: Subdomain,
}

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Entry {
    // Reversed so the max-heap yields the smallest bound, oldest first.
    fn cmp(&self, other: &Self) -> Ordering {
        other.lb.total_cmp(&self.lb).then_with(|| other.seq.cmp(&self.seq))
    }
}

/// Priority queue of subdomains keyed by lower bound, FIFO among ties.
#[derive(Default)]
pub struct DomainQueue {
    heap: BinaryHeap<Entry>,
    seq: u64,
}

impl DomainQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, dom: Subdomain) {
        self.heap.push(Entry { lb: dom.lower_bound, seq: self.seq, dom });
        self.seq += 1;
    }

    /// Removes a subdomain with the smallest lower bound.
    pub fn pick_out(&mut self) -> Option<Subdomain> {
        self.heap.pop().map(|e| e.dom)
    }

    pub fn min_lower_bound(&self) -> Option<f64> {
        self.heap.peek().map(|e| e.lb)
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}

fn bisect(dom: &BoxDomain, dim: usize) -> [BoxDomain; 2] {
    let mid = 0.5 * (dom.lb[dim] + dom.ub[dim]);
    let mut left = dom.clone();
    let mut right = dom.clone();
    left.ub[dim] = mid;
    right.lb[dim] = mid;
    [left, right]
}

fn longest_edge(dom: &BoxDomain) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for j in 0..dom.dim() {
        let w = dom.width(j);
        if w > 0.0 && best.is_none_or(|(_, bw)| w > bw) {
            best = Some((j, w));
        }
    }
    best.map(|(j, _)| j)
}

/// Bisects the longest edge (lowest index among ties) at its midpoint.
pub fn split_input_longest(dom: &BoxDomain) -> std::result::Result<[BoxDomain; 2], SplitError> {
    longest_edge(dom).map(|j| bisect(dom, j)).ok_or(SplitError::Exhausted)
}

/// Relative tolerance under which two smart-split scores are equal.
pub const SMART_TIE_TOL: f64 = 1e-6;
/// Smart splitting only considers edges at least this fraction of the longest.
pub const SMART_ASPECT_GUARD: f64 = 0.25;

/// Bisects the dimension whose children have the best fast dual bounds,
/// among edges no shorter than [`SMART_ASPECT_GUARD`] times the longest.
/// Scores within [`SMART_TIE_TOL`] count as ties and go to the longest edge;
/// when no split improves on the parent bound the longest edge is used.
pub fn split_input_smart(
    dom: &BoxDomain,
    net: &Network,
    score: SplitScore,
) -> Result<std::result::Result<[BoxDomain; 2], SplitError>> {
    let tie = |a: f64, b: f64| (a - b).abs() <= SMART_TIE_TOL * (1.0 + a.abs().max(b.abs()));
    let parent = fast_dual_bound(net, dom, &propagate_box(net, dom))?;
    let mut best: Option<(f64, f64, usize, [BoxDomain; 2])> = None;
    let widest = (0..dom.dim()).map(|j| dom.width(j)).fold(0.0, f64::max);
    for j in 0..dom.dim() {
        let w = dom.width(j);
        if w <= 0.0 || w < SMART_ASPECT_GUARD * widest {
            continue;
        }
        let children = bisect(dom, j);
        let mut fb = [0.0; 2];
        for (f, child) in fb.iter_mut().zip(&children) {
            *f = fast_dual_bound(net, child, &propagate_box(net, child))?;
        }
        let s = match score {
            SplitScore::Min => fb[0].min(fb[1]),
            SplitScore::Sum => fb[0] + fb[1],
        };
        let better = match &best {
            None => true,
            Some((bs, bw, _, _)) => if tie(s, *bs) { w > *bw } else { s > *bs },
        };
        if better {
            best = Some((s, w, j, children));
        }
    }
    let baseline = match score {
        SplitScore::Min => parent,
        SplitScore::Sum => 2.0 * parent,
    };
    Ok(match best {
        Some((s, _, _, children)) if !(s <= baseline || tie(s, baseline)) => Ok(children),
        Some(_) => split_input_longest(dom),
        None => Err(SplitError::Exhausted),
    })
}

/// Splits the unfixed ambiguous unit maximising `min(-l, u)` (lowest unit on
/// ties) into its blocked and passing children.
pub fn split_relu(
    phases: &PhaseSet,
    net: &Network,
    bounds: &LayerBounds,
) -> std::result::Result<[PhaseSet; 2], SplitError> {
    let mut best: Option<(UnitId, f64)> = None;
    for unit in net.relu_units() {
        if phases.get(unit).is_some() {
            continue;
        }
        let (l, u) = bounds.unit(unit);
        if l < 0.0 && u > 0.0 {
            let score = (-l).min(u);
            if best.is_none_or(|(_, s)| score > s) {
                best = Some((unit, score));
            }
        }
    }
    let (unit, _) = best.ok_or(SplitError::NoAmbiguousUnit)?;
    Ok([phases.with(unit, Phase::Blocked), phases.with(unit, Phase::Passing)])
}

fn node_rng(seed: u64, node: u64) -> SplitMix64 {
    SplitMix64::seed_from_u64(seed ^ node.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Minimum output over `count` uniform samples of the region followed by a
/// coordinate-descent refinement of the best one. Phase regions are sampled
/// from `root` and only points matching the phases are kept.
pub fn sample_upper_bound<R: Rng>(
    net: &Network,
    region: &Region,
    root: &BoxDomain,
    count: usize,
    rng: &mut R,
) -> Result<(f64, Vec<f64>)> {
    sample_until(net, region, root, count, rng, f64::NEG_INFINITY)
}

/// As [`sample_upper_bound`], stopping as soon as a value `<= stop` is seen.
fn sample_until<R: Rng>(
    net: &Network,
    region: &Region,
    root: &BoxDomain,
    count: usize,
    rng: &mut R,
    stop: f64,
) -> Result<(f64, Vec<f64>)> {
    let (domain, phases) = match region {
        Region::InputBox(b) => (b, None),
        Region::PhaseSet(p) => (root, Some(p)),
    };
    let admits = |x: &[f64]| -> Result<bool> { phases.map_or(Ok(true), |p| p.admits(net, x)) };
    let mut best = (f64::INFINITY, domain.center());
    for _ in 0..count {
        let x: Vec<f64> = domain.lb.iter().zip(&domain.ub).map(|(l, u)| l + (u - l) * rng.random::<f64>()).collect();
        if !admits(&x)? {
            continue;
        }
        let v = eval_scalar(net, &x)?;
        if v < best.0 {
            best = (v, x);
            if v <= stop {
                return Ok(best);
            }
        }
    }
    if best.0.is_finite() {
        best = descend(net, domain, &admits, best, stop)?;
    }
    Ok(best)
}

fn descend(
    net: &Network,
    domain: &BoxDomain,
    admits: &dyn Fn(&[f64]) -> Result<bool>,
    start: (f64, Vec<f64>),
    stop: f64,
) -> Result<(f64, Vec<f64>)> {
    let (mut value, mut x) = start;
    let mut step: Vec<f64> = (0..domain.dim()).map(|j| 0.25 * domain.width(j)).collect();
    let floor: Vec<f64> = step.iter().map(|s| s * 1e-4).collect();
    for _ in 0..200 {
        let mut improved = false;
        for j in 0..x.len() {
            if step[j] <= floor[j] {
                continue;
            }
            for dir in [1.0, -1.0] {
                let mut y = x.clone();
                y[j] = (x[j] + dir * step[j]).clamp(domain.lb[j], domain.ub[j]);
                if y[j] == x[j] || !admits(&y)? {
                    continue;
                }
                let v = eval_scalar(net, &y)?;
                if v < value {
                    (value, x) = (v, y);
                    improved = true;
                    break;
                }
            }
        }
        if value <= stop {
            break;
        }
        if !improved {
            step.iter_mut().for_each(|s| *s *= 0.5);
            if step.iter().zip(&floor).all(|(s, f)| s <= f) {
                break;
            }
        }
    }
    Ok((value, x))
}

/// Outcome of bounding one subdomain.
struct NodeEval {
    lb: f64,
    bounds: Option<LayerBounds>,
    /// Best concrete point found for the region, with its output.
    ub: Option<(f64, Vec<f64>)>,
    /// Whether `lb` is the exact minimum over the region.
    exact: bool,
}

struct Engine<'a> {
    problem: &'a VerificationProblem,
    net: Network,
    config: &'a BabConfig,
}

impl Engine<'_> {
    fn root(&self) -> &BoxDomain {
        &self.problem.domain
    }

    fn interval_bounds(&self, region: &Region) -> Option<LayerBounds> {
        match region {
            Region::InputBox(b) => Some(propagate_box(&self.net, b)),
            Region::PhaseSet(p) => refine_with_fixed_phases(&self.net, &propagate_box(&self.net, self.root()), p).ok(),
        }
    }

    fn region_box<'r>(&'r self, region: &'r Region) -> (&'r BoxDomain, PhaseSet) {
        match region {
            Region::InputBox(b) => (b, PhaseSet::new()),
            Region::PhaseSet(p) => (self.root(), p.clone()),
        }
    }

    /// Lower bound of the region, stopping at the interval stage when that
    /// already exceeds `cutoff`.
    fn bound(&self, region: &Region, cutoff: &dyn Fn(f64) -> bool) -> Result<NodeEval> {
        let infeasible = NodeEval { lb: f64::INFINITY, bounds: None, ub: None, exact: true };
        let Some(ib) = self.interval_bounds(region) else {
            return Ok(infeasible);
        };
        let interval_lb = ib.output().lb[0];
        if self.config.bounding == Bounding::Interval || cutoff(interval_lb) {
            return Ok(NodeEval { lb: interval_lb, bounds: Some(ib), ub: None, exact: false });
        }
        let (domain, phases) = self.region_box(region);
        let relaxation = |relax, tighten| -> Result<NodeEval> {
            Ok(match build_relaxation(&self.net, domain, Some(&ib), &phases, tighten, relax)? {
                None => NodeEval { lb: f64::INFINITY, bounds: None, ub: None, exact: true },
                Some(model) => match planet_solve(&model)? {
                    None => NodeEval { lb: f64::INFINITY, bounds: None, ub: None, exact: true },
                    Some((v, x)) => NodeEval { lb: v, bounds: Some(model.bounds), ub: Some((f64::NAN, x)), exact: false },
                },
            })
        };
        let mut eval = match self.config.bounding {
            Bounding::Interval => unreachable!(),
            Bounding::FastDual => {
                let lb = fast_dual_bound(&self.net, domain, &ib)?.max(f64::NEG_INFINITY);
                NodeEval { lb, bounds: Some(ib), ub: None, exact: false }
            }
            Bounding::PlanetFixed => relaxation(ReluRelaxation::Planet, false)?,
            Bounding::PlanetTightened => relaxation(ReluRelaxation::Planet, true)?,
            Bounding::ReluplexRelax => relaxation(ReluRelaxation::Reluplex, false)?,
        };
        // Relaxation minimisers are concrete inputs: evaluate them.
        if let Some((v, x)) = eval.ub.as_mut() {
            let mut pt = x.clone();
            domain.clamp(&mut pt);
            let admitted = phases.admits(&self.net, &pt)?;
            if admitted {
                *v = eval_scalar(&self.net, &pt)?;
                *x = pt;
            } else {
                eval.ub = None;
            }
        }
        Ok(eval)
    }

    /// Exact minimum of a subdomain that cannot be split further.
    fn exact_leaf(&self, dom: &Subdomain) -> Result<NodeEval> {
        match &dom.region {
            Region::InputBox(b) => {
                let x = b.center();
                let v = eval_scalar(&self.net, &x)?;
                Ok(NodeEval { lb: v, bounds: None, ub: Some((v, x)), exact: true })
            }
            Region::PhaseSet(p) => {
                let bounds = match &dom.bounds {
                    Some(b) => b.clone(),
                    None => return Ok(NodeEval { lb: f64::INFINITY, bounds: None, ub: None, exact: true }),
                };
                let Some(model) = build_with_bounds(&self.net, &bounds, p, ReluRelaxation::Planet)? else {
                    return Ok(NodeEval { lb: f64::INFINITY, bounds: None, ub: None, exact: true });
                };
                Ok(match planet_solve(&model)? {
                    None => NodeEval { lb: f64::INFINITY, bounds: None, ub: None, exact: true },
                    Some((lb, mut x)) => {
                        self.root().clamp(&mut x);
                        let v = eval_scalar(&self.net, &x)?;
                        NodeEval { lb: lb.min(v), bounds: Some(bounds), ub: Some((v, x)), exact: true }
                    }
                })
            }
        }
    }

    fn split(&self, dom: &Subdomain) -> Result<std::result::Result<Vec<Region>, SplitError>> {
        Ok(match (&dom.region, self.config.branching) {
            (Region::InputBox(b), Branching::InputSmart) => {
                split_input_smart(b, &self.net, self.config.split_score)?.map(|c| c.map(Region::InputBox).into())
            }
            (Region::InputBox(b), _) => split_input_longest(b).map(|c| c.map(Region::InputBox).into()),
            (Region::PhaseSet(p), _) => match &dom.bounds {
                Some(bounds) => split_relu(p, &self.net, bounds).map(|c| c.map(Region::PhaseSet).into()),
                None => Err(SplitError::NoAmbiguousUnit),
            },
        })
    }

    /// Bounds a child and searches it for a good concrete point.
    fn evaluate(&self, region: &Region, node_id: u64, cutoff: &dyn Fn(f64) -> bool, stop: f64) -> Result<NodeEval> {
        let mut eval = self.bound(region, cutoff)?;
        if cutoff(eval.lb) {
            return Ok(eval);
        }
        if eval.ub.as_ref().is_some_and(|(v, _)| *v <= stop) {
            return Ok(eval);
        }
        let mut rng = node_rng(self.config.seed, node_id);
        let sampled = sample_until(&self.net, region, self.root(), self.config.sample_count, &mut rng, stop)?;
        if eval.ub.as_ref().is_none_or(|(v, _)| sampled.0 < *v) {
            eval.ub = Some(sampled);
        }
        Ok(eval)
    }

    fn evaluate_all(
        &self,
        jobs: &[(Region, u64)],
        cutoff: &(dyn Fn(f64) -> bool + Sync),
        stop: f64,
    ) -> Result<Vec<NodeEval>> {
        let workers = self.config.workers.max(1).min(jobs.len().max(1));
        if workers == 1 {
            return jobs.iter().map(|(r, id)| self.evaluate(r, *id, cutoff, stop)).collect();
        }
        let chunk = jobs.len().div_ceil(workers);
        std::thread::scope(|s| {
            let handles: Vec<_> = jobs
                .chunks(chunk)
                .map(|part| {
                    s.spawn(move || part.iter().map(|(r, id)| self.evaluate(r, *id, cutoff, stop)).collect::<Result<Vec<_>>>())
                })
                .collect();
            let mut out = Vec::with_capacity(jobs.len());
            for h in handles {
                out.extend(h.join().expect("bounding worker panicked")?);
            }
            Ok(out)
        })
    }

    fn run(&self) -> Result<BabResult> {
        let start = Instant::now();
        let cfg = self.config;
        let verify = cfg.mode == Mode::Satisfiability;
        let timed_out = |nodes: usize| cfg.timeout.is_some_and(|t| start.elapsed() >= t) || nodes >= cfg.node_cap;

        let mut nodes = 0usize;
        let mut trace = Vec::new();
        // Incumbent: best concrete output seen, and its input.
        let mut best: (f64, Vec<f64>) = (f64::INFINITY, self.root().center());
        let mut global_ub = if verify { 0.0 } else { f64::INFINITY };
        let mut margin = f64::INFINITY;
        let mut queue = DomainQueue::new();
        let mut exhausted: Vec<f64> = Vec::new();

        let finish = |status: BabStatus, nodes: usize, lb: f64, ub: f64, trace: Vec<(f64, f64)>| BabResult {
            status,
            nodes_explored: nodes,
            wall_time: start.elapsed(),
            lower_bound: lb,
            upper_bound: ub,
            spurious_candidates: 0,
            trace,
        };
        if timed_out(0) {
            return Ok(finish(
                BabStatus::Timeout { best_lb: f64::NEG_INFINITY, best_ub: f64::INFINITY },
                0,
                f64::NEG_INFINITY,
                f64::INFINITY,
                trace,
            ));
        }

        let root_region = match cfg.branching {
            Branching::ReluSplit => Region::PhaseSet(PhaseSet::new()),
            _ => Region::InputBox(self.root().clone()),
        };
        let mut pending: Vec<(Region, f64, usize)> = vec![(root_region, f64::NEG_INFINITY, 0)];

        loop {
            // Bound and sample the freshly created subdomains.
            let ub_now = global_ub;
            let cutoff = move |lb: f64| if verify { lb > 0.0 } else { lb >= ub_now };
            let stop = if verify { 0.0 } else { f64::NEG_INFINITY };
            let jobs: Vec<(Region, u64)> =
                pending.iter().enumerate().map(|(i, (r, _, _))| (r.clone(), (nodes + i) as u64)).collect();
            let evals = self.evaluate_all(&jobs, &cutoff, stop)?;
            for ((region, parent_lb, depth), eval) in pending.drain(..).zip(evals) {
                nodes += 1;
                if let Some((v, x)) = eval.ub {
                    if v < best.0 {
                        best = (v, x);
                    }
                    if verify && v <= 0.0 && validate_counterexample(self.problem, &best.1, 1e-6) {
                        let x = best.1.clone();
                        if eval_scalar(&self.problem.canonical_net, &x)? <= 0.0 {
                            let lb = queue.min_lower_bound().unwrap_or(f64::INFINITY).min(eval.lb.max(parent_lb));
                            return Ok(finish(BabStatus::Sat { counterexample: x }, nodes, lb, v, trace));
                        }
                    }
                    if !verify {
                        global_ub = global_ub.min(best.0);
                    }
                }
                let lb = eval.lb.max(parent_lb);
                let prune = if verify { lb > 0.0 } else { lb >= global_ub };
                if prune {
                    margin = margin.min(lb);
                    continue;
                }
                let dom = Subdomain { region, lower_bound: lb, depth, bounds: eval.bounds };
                if eval.exact {
                    exhausted.push(lb);
                } else {
                    queue.push(dom);
                }
            }

            let exhausted_lb = exhausted.iter().copied().fold(f64::INFINITY, f64::min);
            let global_lb = queue.min_lower_bound().unwrap_or(f64::INFINITY).min(exhausted_lb);
            if cfg.trace {
                trace.push((global_lb.min(margin), best.0));
            }
            if !verify && (queue.is_empty() || best.0 - global_lb <= cfg.epsilon) {
                let lb = global_lb.min(best.0);
                return Ok(finish(
                    BabStatus::Converged { min_estimate: best.0, minimizer: best.1.clone() },
                    nodes,
                    lb,
                    best.0,
                    trace,
                ));
            }
            if queue.is_empty() {
                if exhausted.is_empty() {
                    return Ok(finish(BabStatus::Unsat { margin }, nodes, margin, best.0, trace));
                }
                // Exact leaves at the boundary that no point confirmed.
                return Ok(finish(
                    BabStatus::Timeout { best_lb: global_lb, best_ub: best.0 },
                    nodes,
                    global_lb,
                    best.0,
                    trace,
                ));
            }
            if timed_out(nodes) {
                let lb = global_lb.min(margin);
                return Ok(finish(BabStatus::Timeout { best_lb: lb, best_ub: best.0 }, nodes, lb, best.0, trace));
            }

            // Pick out up to one subdomain per worker and split them.
            for _ in 0..cfg.workers.max(1) {
                let Some(dom) = queue.pick_out() else { break };
                let stale = if verify { dom.lower_bound > 0.0 } else { dom.lower_bound >= global_ub };
                if stale {
                    margin = margin.min(dom.lower_bound);
                    continue;
                }
                match self.split(&dom)? {
                    Ok(children) => {
                        pending.extend(children.into_iter().map(|r| (r, dom.lower_bound, dom.depth + 1)));
                    }
                    Err(_) => {
                        let eval = self.exact_leaf(&dom)?;
                        if let Some((v, x)) = eval.ub {
                            if verify && v <= 0.0 && eval_scalar(&self.problem.canonical_net, &x)? <= 0.0 {
                                let lb = eval.lb.min(global_lb);
                                return Ok(finish(BabStatus::Sat { counterexample: x }, nodes, lb, v, trace));
                            }
                            if v < best.0 {
                                best = (v, x);
                                if !verify {
                                    global_ub = global_ub.min(v);
                                }
                            }
                        }
                        if verify && eval.lb > 0.0 {
                            margin = margin.min(eval.lb);
                        } else {
                            exhausted.push(eval.lb);
                        }
                    }
                }
            }
        }
    }
}

/// Global minimisation of the canonical output.
pub fn bab_optimize(problem: &VerificationProblem, config: &BabConfig) -> Result<BabResult> {
    let cfg = BabConfig { mode: Mode::Optimize, ..config.clone() };
    Engine { problem, net: problem.relu_network()?, config: &cfg }.run()
}

/// Decides whether a counterexample (output `<= 0`) exists.
pub fn bab_verify(problem: &VerificationProblem, config: &BabConfig) -> Result<BabResult> {
    let cfg = BabConfig { mode: Mode::Satisfiability, ..config.clone() };
    Engine { problem, net: problem.relu_network()?, config: &cfg }.run()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::canon::{canonicalize, PropertyClause};
    use crate::model::{toy_network, Layer, Linear};

    fn toy(b: f64) -> VerificationProblem {
        canonicalize(&toy_network(), &PropertyClause::geq(vec![1.0], b), &BoxDomain::uniform(2, -2.0, 2.0)).unwrap()
    }

    fn sub(lb: f64, tag: f64) -> Subdomain {
        Subdomain { region: Region::InputBox(BoxDomain::point(&[tag])), lower_bound: lb, depth: 0, bounds: None }
    }

    fn is_tag(d: &Subdomain, tag: f64) -> bool {
        d.region == Region::InputBox(BoxDomain::point(&[tag]))
    }

    #[test]
    fn pick_out_order() {
        let mut q = DomainQueue::new();
        q.push(sub(-1.0, 1.0));
        q.push(sub(-3.0, 0.0));
        assert!(is_tag(&q.pick_out().unwrap(), 0.0));
        let mut q = DomainQueue::new();
        q.push(sub(-1.0, 0.0));
        q.push(sub(-1.0, 1.0));
        assert!(is_tag(&q.pick_out().unwrap(), 0.0));
        assert!(is_tag(&q.pick_out().unwrap(), 1.0));
        assert!(q.pick_out().is_none());
    }

    #[test]
    fn longest_edge_splits() {
        let [a, b] = split_input_longest(&BoxDomain::uniform(2, -2.0, 2.0)).unwrap();
        assert_eq!((a.lb, a.ub), (vec![-2.0, -2.0], vec![0.0, 2.0]));
        assert_eq!((b.lb, b.ub), (vec![0.0, -2.0], vec![2.0, 2.0]));
        let [a, _] = split_input_longest(&BoxDomain::new(vec![0.0, -3.0], vec![1.0, 3.0]).unwrap()).unwrap();
        assert_eq!(a.ub, vec![1.0, 0.0]);
        let [a, _] = split_input_longest(&BoxDomain::new(vec![5.0, 0.0], vec![5.0, 2.0]).unwrap()).unwrap();
        assert_eq!(a.ub, vec![5.0, 1.0]);
        assert_eq!(split_input_longest(&BoxDomain::point(&[1.0, 2.0])), Err(SplitError::Exhausted));
    }

    #[test]
    fn smart_split_tie_and_dead_dimension() {
        let net = toy(-5.0).canonical_net;
        let [a, _] = split_input_smart(&BoxDomain::uniform(2, -2.0, 2.0), &net, SplitScore::Min).unwrap().unwrap();
        assert_eq!(a.ub, vec![0.0, 2.0]);

        // Input 1 has a zero column.
        let dead = Network::new(
            2,
            vec![
                Layer::Linear(Linear::new(vec![vec![1.0, 0.0]], vec![0.0]).unwrap()),
                Layer::Relu,
                Layer::Linear(Linear::identity(1)),
            ],
        )
        .unwrap();
        let dom = BoxDomain::new(vec![-2.0, -4.0], vec![2.0, 4.0]).unwrap();
        let [a, _] = split_input_smart(&dom, &dead, SplitScore::Min).unwrap().unwrap();
        assert_eq!(a.ub, vec![0.0, 4.0]);
        let [a, _] = split_input_smart(&BoxDomain::uniform(1, 0.0, 1.0), &Network::new(1, vec![Layer::Linear(Linear::identity(1))]).unwrap(), SplitScore::Min)
            .unwrap()
            .unwrap();
        assert_eq!(a.ub, vec![0.5]);
    }

    #[test]
    fn relu_split_choice() {
        let net = toy(-5.0).canonical_net;
        let bounds = propagate_box(&net, &BoxDomain::uniform(2, -2.0, 2.0));
        let [blocked, passing] = split_relu(&PhaseSet::new(), &net, &bounds).unwrap();
        let u0 = UnitId { layer: 1, index: 0 };
        assert_eq!(blocked.get(u0), Some(Phase::Blocked));
        assert_eq!(passing.get(u0), Some(Phase::Passing));

        let fixed = PhaseSet::new().with(u0, Phase::Blocked);
        let [next, _] = split_relu(&fixed, &net, &bounds).unwrap();
        assert_eq!(next.get(UnitId { layer: 1, index: 1 }), Some(Phase::Blocked));

        let all = fixed.with(UnitId { layer: 1, index: 1 }, Phase::Passing);
        assert_eq!(split_relu(&all, &net, &bounds), Err(SplitError::NoAmbiguousUnit));
    }

    #[test]
    fn sampling_bounds() {
        let p = toy(-5.0);
        let mut rng = SplitMix64::seed_from_u64(0);
        let region = Region::InputBox(p.domain.clone());
        let (v, x) = sample_upper_bound(&p.canonical_net, &region, &p.domain, 1024, &mut rng).unwrap();
        assert!((1.0..=5.0).contains(&v));
        assert_eq!(eval_scalar(&p.canonical_net, &x).unwrap(), v);

        let point = BoxDomain::point(&[0.5, 1.0]);
        let (v, _) = sample_upper_bound(&p.canonical_net, &Region::InputBox(point.clone()), &point, 1, &mut rng).unwrap();
        assert_eq!(v, 3.5);

        let p3 = toy(-3.0);
        let (v, _) = sample_upper_bound(&p3.canonical_net, &region, &p3.domain, 1024, &mut rng).unwrap();
        assert!(v <= 0.0);
    }

    #[test]
    fn optimize_toy() {
        let cfg = BabConfig { branching: Branching::InputLongestEdge, ..BabConfig::default() };
        let r = bab_optimize(&toy(-5.0), &cfg).unwrap();
        let BabStatus::Converged { min_estimate, .. } = r.status else { panic!("{r:?}") };
        assert!((min_estimate - 1.0).abs() <= 1e-3);
        assert_eq!(r.nodes_explored, 1);

        let r = bab_optimize(&toy(-3.0), &cfg).unwrap();
        let BabStatus::Converged { min_estimate, minimizer } = r.status else { panic!() };
        assert!((min_estimate + 1.0).abs() <= 1e-3);
        assert!(((minimizer[0] + minimizer[1]).abs() - 4.0).abs() < 1e-3);
    }

    #[test]
    fn optimize_point_box() {
        let p = canonicalize(&toy_network(), &PropertyClause::geq(vec![1.0], -5.0), &BoxDomain::point(&[0.5, 0.5])).unwrap();
        let r = bab_optimize(&p, &BabConfig::default()).unwrap();
        assert_eq!(r.status, BabStatus::Converged { min_estimate: 4.0, minimizer: vec![0.5, 0.5] });
        assert_eq!(r.nodes_explored, 1);
    }

    #[test]
    fn verify_toy_all_strategies() {
        for branching in [Branching::InputLongestEdge, Branching::InputSmart, Branching::ReluSplit] {
            for bounding in [
                Bounding::PlanetTightened,
                Bounding::PlanetFixed,
                Bounding::Interval,
                Bounding::FastDual,
                Bounding::ReluplexRelax,
            ] {
                let cfg = BabConfig { branching, bounding, ..BabConfig::default() };
                let r = bab_verify(&toy(-5.0), &cfg).unwrap();
                let BabStatus::Unsat { margin } = r.status else { panic!("{branching:?} {bounding:?} {r:?}") };
                assert!(margin > 0.0 && margin <= 1.0 + 1e-6, "{margin}");
                if bounding == Bounding::PlanetTightened {
                    assert!((margin - 1.0).abs() < 1e-3);
                }
                let r = bab_verify(&toy(-3.0), &cfg).unwrap();
                let BabStatus::Sat { counterexample } = r.status else { panic!("{r:?}") };
                assert!(validate_counterexample(&toy(-3.0), &counterexample, 1e-6));
            }
        }
    }

    #[test]
    fn zero_timeout() {
        let cfg = BabConfig { timeout: Some(Duration::ZERO), ..BabConfig::default() };
        let r = bab_verify(&toy(-5.0), &cfg).unwrap();
        assert!(matches!(r.status, BabStatus::Timeout { .. }));
        assert_eq!(r.nodes_explored, 0);
    }

    #[test]
    fn parallel_and_serial_agree() {
        let serial = BabConfig { branching: Branching::ReluSplit, ..BabConfig::default() };
        let parallel = BabConfig { workers: 4, ..serial.clone() };
        let a = bab_verify(&toy(-5.0), &serial).unwrap();
        let b = bab_verify(&toy(-5.0), &parallel).unwrap();
        assert_eq!(a.status, b.status);
    }
}
