//! Convex relaxations of ReLU networks and the lower bounds computed from them.
//!
//! * The Planet relaxation replaces an ambiguous unit (`l < 0 < u`) by its
//!   convex hull `x >= 0, x >= x̂, x <= u (x̂ - l) / (u - l)`.
//! * The Reluplex relaxation keeps the two lower rows and only `x <= u`.
//! * [`fast_dual_bound`] is an LP-free backward pass producing a feasible dual
//!   point of the Planet LP.
//!
//! Models are built layer by layer. With `tighten`, the pre-activation bounds
//! of every ambiguous unit are replaced by the LP minimum and maximum over the
//! relaxation of all preceding layers before that unit is encoded.

use crate::error::{Error, Result};
use crate::interval::{linear_bounds, propagate_box, refine_with_fixed_phases, Bounds, LayerBounds};
use crate::lp::{self, LpModel, Relation};
use crate::model::{BoxDomain, Layer, Network, PhaseSet, UnitId};

/// Relative slack applied to LP-derived bounds so rounding never cuts off
/// feasible points.
const TIGHTEN_PAD: f64 = 1e-9;

/// How an ambiguous ReLU is relaxed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReluRelaxation {
    Planet,
    Reluplex,
}

/// An LP relaxation of a network over a box together with the intermediate
/// bounds used to build it.
#[derive(Debug, Clone)]
pub struct PlanetModel {
    pub lp: LpModel,
    pub bounds: LayerBounds,
    /// LP variables of the network inputs.
    pub inputs: Vec<usize>,
    /// LP variables of every layer output.
    pub layer_vars: Vec<Vec<usize>>,
    /// LP variable of the (scalar) network output.
    pub output: usize,
}

/// Result of the Reluplex-relaxation feasibility check.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Feasibility {
    MaybeSat,
    Unsat,
}

/// Builds the Planet relaxation. Returns `None` when the phase assignment is
/// infeasible on `domain`.
pub fn build_planet(net: &Network, domain: &BoxDomain, phases: &PhaseSet, tighten: bool) -> Result<Option<PlanetModel>> {
    build_relaxation(net, domain, None, phases, tighten, ReluRelaxation::Planet)
}

/// Builds a relaxation from caller-supplied intermediate bounds, without tightening.
pub fn build_with_bounds(
    net: &Network,
    bounds: &LayerBounds,
    phases: &PhaseSet,
    relaxation: ReluRelaxation,
) -> Result<Option<PlanetModel>> {
    let domain = BoxDomain { lb: bounds.input.lb.clone(), ub: bounds.input.ub.clone() };
    build_relaxation(net, &domain, Some(bounds), phases, false, relaxation)
}

pub fn build_relaxation(
    net: &Network,
    domain: &BoxDomain,
    base: Option<&LayerBounds>,
    phases: &PhaseSet,
    tighten: bool,
    relaxation: ReluRelaxation,
) -> Result<Option<PlanetModel>> {
    let initial = match base {
        Some(b) => b.clone(),
        None => propagate_box(net, domain),
    };
    let Ok(mut bounds) = refine_with_fixed_phases(net, &initial, phases) else {
        return Ok(None);
    };

    let mut lp = LpModel::new();
    let inputs: Vec<usize> =
        (0..net.input_size).map(|j| lp.add_var(bounds.input.lb[j], bounds.input.ub[j])).collect();
    let mut layer_vars: Vec<Vec<usize>> = Vec::with_capacity(net.layers.len());

    for (k, layer) in net.layers.iter().enumerate() {
        let prev: &[usize] = if k == 0 { &inputs } else { &layer_vars[k - 1] };
        let vars = match layer {
            Layer::Linear(lin) => {
                if tighten {
                    let fresh = linear_bounds(lin, bounds.pre(k));
                    intersect(&mut bounds.layers[k], &fresh);
                }
                let b = &bounds.layers[k];
                let vars: Vec<usize> = (0..lin.out_width()).map(|j| lp.add_var(b.lb[j], b.ub[j])).collect();
                for (j, &v) in vars.iter().enumerate() {
                    let mut coeffs = vec![(v, 1.0)];
                    coeffs.extend(lin.weight.row(j).iter().zip(prev).filter(|(w, _)| **w != 0.0).map(|(w, &p)| (p, -w)));
                    lp.add_row(coeffs, Relation::Eq, lin.bias[j]);
                }
                if tighten && matches!(net.layers.get(k + 1), Some(Layer::Relu)) {
                    for j in 0..vars.len() {
                        let (lo, hi) = (bounds.layers[k].lb[j], bounds.layers[k].ub[j]);
                        let fixed = phases.get(UnitId { layer: k + 1, index: j }).is_some();
                        if fixed || lo >= 0.0 || hi <= 0.0 {
                            continue;
                        }
                        let Some((min, max)) = optimize_range(&mut lp, vars[j])? else {
                            return Ok(None);
                        };
                        let new_lo = lo.max(min - TIGHTEN_PAD * (1.0 + min.abs()));
                        let new_hi = hi.min(max + TIGHTEN_PAD * (1.0 + max.abs()));
                        let (new_lo, new_hi) = if new_lo > new_hi {
                            let mid = 0.5 * (new_lo + new_hi);
                            (mid, mid)
                        } else {
                            (new_lo, new_hi)
                        };
                        bounds.layers[k].lb[j] = new_lo;
                        bounds.layers[k].ub[j] = new_hi;
                        lp.set_bounds(vars[j], new_lo, new_hi);
                    }
                }
                vars
            }
            Layer::Relu => {
                let pre = bounds.layers[k - 1].clone();
                let post = &mut bounds.layers[k];
                let mut vars = Vec::with_capacity(pre.len());
                for j in 0..pre.len() {
                    let (l, u) = (pre.lb[j], pre.ub[j]);
                    post.lb[j] = post.lb[j].max(l.max(0.0)).min(u.max(0.0));
                    post.ub[j] = post.ub[j].min(u.max(0.0)).max(post.lb[j]);
                    if u <= 0.0 {
                        vars.push(lp.add_var(0.0, 0.0));
                    } else if l >= 0.0 {
                        let v = lp.add_var(post.lb[j], post.ub[j]);
                        lp.add_row(vec![(v, 1.0), (prev[j], -1.0)], Relation::Eq, 0.0);
                        vars.push(v);
                    } else {
                        let v = lp.add_var(0.0, post.ub[j]);
                        lp.add_row(vec![(v, 1.0), (prev[j], -1.0)], Relation::Ge, 0.0);
                        if relaxation == ReluRelaxation::Planet {
                            let slope = u / (u - l);
                            lp.add_row(vec![(v, 1.0), (prev[j], -slope)], Relation::Le, -slope * l);
                        }
                        vars.push(v);
                    }
                }
                vars
            }
            Layer::MaxPool(pool) => {
                let pre = bounds.layers[k - 1].clone();
                let mut vars = Vec::with_capacity(pool.groups.len());
                for (g, group) in pool.groups.iter().enumerate() {
                    let lo = group.iter().map(|&i| pre.lb[i]).fold(f64::NEG_INFINITY, f64::max);
                    let hi = group.iter().map(|&i| pre.ub[i]).fold(f64::NEG_INFINITY, f64::max);
                    let post = &mut bounds.layers[k];
                    post.lb[g] = post.lb[g].max(lo);
                    post.ub[g] = post.ub[g].min(hi).max(post.lb[g]);
                    let y = lp.add_var(post.lb[g], post.ub[g]);
                    if let [only] = group.as_slice() {
                        lp.add_row(vec![(y, 1.0), (prev[*only], -1.0)], Relation::Eq, 0.0);
                    } else {
                        for &i in group {
                            lp.add_row(vec![(y, 1.0), (prev[i], -1.0)], Relation::Ge, 0.0);
                        }
                        // y <= Σ (x_i - l_i) + max_i l_i
                        let mut coeffs = vec![(y, 1.0)];
                        coeffs.extend(group.iter().map(|&i| (prev[i], -1.0)));
                        let rhs = lo - group.iter().map(|&i| pre.lb[i]).sum::<f64>();
                        lp.add_row(coeffs, Relation::Le, rhs);
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
        _ => return Err(Error::DimensionMismatch { expected: 1, got: net.output_width() }),
    };
    lp.set_objective(&[(output, 1.0)]);
    Ok(Some(PlanetModel { lp, bounds, inputs, layer_vars, output }))
}

fn intersect(b: &mut Bounds, other: &Bounds) {
    for j in 0..b.len() {
        b.lb[j] = b.lb[j].max(other.lb[j]);
        b.ub[j] = b.ub[j].min(other.ub[j]).max(b.lb[j]);
    }
}

/// LP min and max of one variable; `None` if the model is infeasible.
fn optimize_range(lp: &mut LpModel, var: usize) -> Result<Option<(f64, f64)>> {
    lp.set_objective(&[(var, 1.0)]);
    let min = lp::solve(lp)?;
    if !min.is_optimal() {
        return Ok(None);
    }
    lp.set_objective(&[(var, -1.0)]);
    let max = lp::solve(lp)?;
    if !max.is_optimal() {
        return Ok(None);
    }
    Ok(Some((min.objective, -max.objective)))
}

/// Minimum of the relaxed output and the input point attaining it, or `None`
/// when the relaxation is infeasible.
pub fn planet_solve(model: &PlanetModel) -> Result<Option<(f64, Vec<f64>)>> {
    let sol = lp::solve(&model.lp)?;
    if !sol.is_optimal() {
        return Ok(None);
    }
    let x0 = model.inputs.iter().map(|&v| sol.x[v]).collect();
    Ok(Some((sol.objective, x0)))
}

/// LP lower bound on the output; `+∞` for an infeasible relaxation.
pub fn planet_lower_bound(model: &PlanetModel) -> Result<f64> {
    Ok(planet_solve(model)?.map_or(f64::INFINITY, |(v, _)| v))
}

/// Optimum of the Reluplex relaxation (`+∞` if infeasible).
pub fn reluplex_lower_bound(net: &Network, domain: &BoxDomain, phases: &PhaseSet) -> Result<f64> {
    match build_relaxation(net, domain, None, phases, false, ReluRelaxation::Reluplex)? {
        Some(model) => planet_lower_bound(&model),
        None => Ok(f64::INFINITY),
    }
}

/// Feasibility of the Reluplex relaxation with the extra row `output <= 0`.
pub fn reluplex_feasible(net: &Network, domain: &BoxDomain, phases: &PhaseSet) -> Result<Feasibility> {
    let Some(mut model) = build_relaxation(net, domain, None, phases, false, ReluRelaxation::Reluplex)? else {
        return Ok(Feasibility::Unsat);
    };
    model.lp.add_row(vec![(model.output, 1.0)], Relation::Le, 0.0);
    model.lp.set_objective(&[]);
    Ok(if lp::solve(&model.lp)?.is_optimal() { Feasibility::MaybeSat } else { Feasibility::Unsat })
}

/// Lower bound on the scalar output from one backward pass.
///
/// A linear under-estimator `gᵀ z + κ` of the output is pulled back through
/// the network. Ambiguous units get slope `d = u / (u - l)`; a negative
/// coefficient uses the hull's upper line and contributes `-l · d · g` to `κ`.
pub fn fast_dual_bound(net: &Network, domain: &BoxDomain, bounds: &LayerBounds) -> Result<f64> {
    if net.output_width() != 1 {
        return Err(Error::DimensionMismatch { expected: 1, got: net.output_width() });
    }
    let mut g = vec![1.0];
    let mut kappa = 0.0;
    for (k, layer) in net.layers.iter().enumerate().rev() {
        match layer {
            Layer::Linear(lin) => {
                kappa += crate::model::dot(&g, &lin.bias);
                g = lin.weight.transpose_mul_vec(&g);
            }
            Layer::Relu => {
                let pre = bounds.pre(k);
                for (j, gj) in g.iter_mut().enumerate() {
                    let (l, u) = (pre.lb[j], pre.ub[j]);
                    if u <= 0.0 {
                        *gj = 0.0;
                    } else if l < 0.0 {
                        let d = u / (u - l);
                        kappa += -l * d * gj.min(0.0);
                        *gj *= d;
                    }
                }
            }
            Layer::MaxPool(_) => {
                return Err(Error::Unsupported("fast dual bound needs a ReLU-only network".into()));
            }
        }
    }
    let input: f64 = g
        .iter()
        .zip(domain.lb.iter().zip(&domain.ub))
        .map(|(&gj, (l, u))| if gj >= 0.0 { gj * l } else { gj * u })
        .sum();
    Ok(input + kappa)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::canon::{canonicalize, PropertyClause};
    use crate::model::{eval_scalar, toy_network, Linear, Phase};

    fn toy(b: f64) -> Network {
        canonicalize(&toy_network(), &PropertyClause::geq(vec![1.0], b), &BoxDomain::uniform(2, -2.0, 2.0))
            .unwrap()
            .canonical_net
    }

    fn square() -> BoxDomain {
        BoxDomain::uniform(2, -2.0, 2.0)
    }

    #[test]
    fn toy_planet_bounds() {
        let none = PhaseSet::new();
        for tighten in [false, true] {
            let m5 = build_planet(&toy(-5.0), &square(), &none, tighten).unwrap().unwrap();
            assert!((planet_lower_bound(&m5).unwrap() - 1.0).abs() < 1e-9);
            let m3 = build_planet(&toy(-3.0), &square(), &none, tighten).unwrap().unwrap();
            assert!((planet_lower_bound(&m3).unwrap() + 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn blocked_unit_is_encoded_exactly() {
        let net = toy(-5.0);
        let phases = PhaseSet::new().with(UnitId { layer: 1, index: 0 }, Phase::Blocked);
        let m = build_planet(&net, &square(), &phases, true).unwrap().unwrap();
        let a = m.layer_vars[1][0];
        assert_eq!((m.lp.lower[a], m.lp.upper[a]), (0.0, 0.0));
        let ahat = m.layer_vars[0][0];
        assert!(m.lp.upper[ahat] <= 0.0);
        // True minimum on {x1 + x2 <= 0} is 1 at (-2, -2).
        let lb = planet_lower_bound(&m).unwrap();
        assert!((1.0 - 1e-6..=1.0 + 1e-9).contains(&lb), "{lb}");
    }

    #[test]
    fn sign_fixed_unit_uses_equality() {
        let net = Network::new(
            1,
            vec![
                Layer::Linear(Linear::new(vec![vec![1.0]], vec![2.0]).unwrap()),
                Layer::Relu,
                Layer::Linear(Linear::identity(1)),
            ],
        )
        .unwrap();
        let m = build_planet(&net, &BoxDomain::uniform(1, -1.0, 1.0), &PhaseSet::new(), false).unwrap().unwrap();
        // x̂ = x0 + 2, x = x̂, output = x: three equalities, no hull rows.
        assert_eq!(m.lp.rows.len(), 3);
        assert!(m.lp.rows.iter().all(|r| r.relation == Relation::Eq));
    }

    #[test]
    fn point_box_is_exact() {
        let net = toy(-3.0);
        let x = [0.7, -1.9];
        let m = build_planet(&net, &BoxDomain::point(&x), &PhaseSet::new(), true).unwrap().unwrap();
        let expected = eval_scalar(&net, &x).unwrap();
        assert!((planet_lower_bound(&m).unwrap() - expected).abs() < 1e-6);
    }

    #[test]
    fn contradictory_phases_are_infeasible() {
        let net = toy(-5.0);
        let phases = PhaseSet::new()
            .with(UnitId { layer: 1, index: 0 }, Phase::Passing)
            .with(UnitId { layer: 1, index: 1 }, Phase::Passing);
        // â >= 0 and b̂ = -â >= 0 leaves only â = 0: still feasible.
        assert!(build_planet(&net, &square(), &phases, true).unwrap().is_some());
        let shifted = BoxDomain::new(vec![0.5, 0.5], vec![2.0, 2.0]).unwrap();
        let blocked = PhaseSet::new().with(UnitId { layer: 1, index: 0 }, Phase::Blocked);
        assert!(build_planet(&net, &shifted, &blocked, false).unwrap().is_none());
        assert_eq!(reluplex_feasible(&net, &shifted, &blocked).unwrap(), Feasibility::Unsat);
    }

    #[test]
    fn reluplex_relaxation_on_toy() {
        let none = PhaseSet::new();
        // Soundness: true minimum -1 <= 0.
        assert_eq!(reluplex_feasible(&toy(-3.0), &square(), &none).unwrap(), Feasibility::MaybeSat);
        // With x <= u only, a = b = 4 is feasible: the bound is 5 - 8 = -3.
        assert!((reluplex_lower_bound(&toy(-5.0), &square(), &none).unwrap() + 3.0).abs() < 1e-9);
        assert_eq!(reluplex_feasible(&toy(-5.0), &square(), &none).unwrap(), Feasibility::MaybeSat);
    }

    #[test]
    fn fast_bound_on_toy() {
        let net = toy(-5.0);
        let bounds = propagate_box(&net, &square());
        assert!((fast_dual_bound(&net, &square(), &bounds).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fast_bound_single_ambiguous_unit() {
        let net = Network::new(
            1,
            vec![Layer::Linear(Linear::new(vec![vec![4.0]], vec![0.0]).unwrap()), Layer::Relu, Layer::Linear(Linear::identity(1))],
        )
        .unwrap();
        let domain = BoxDomain::uniform(1, -1.0, 1.0);
        let bounds = propagate_box(&net, &domain);
        assert_eq!(fast_dual_bound(&net, &domain, &bounds).unwrap(), -2.0);
        assert_eq!(bounds.output().lb[0], 0.0);
    }

    #[test]
    fn fast_bound_is_exact_when_all_units_pass() {
        let net = Network::new(
            2,
            vec![
                Layer::Linear(Linear::new(vec![vec![1.0, 2.0], vec![-1.0, 0.5]], vec![5.0, 5.0]).unwrap()),
                Layer::Relu,
                Layer::Linear(Linear::new(vec![vec![1.0, -3.0]], vec![0.0]).unwrap()),
            ],
        )
        .unwrap();
        let domain = BoxDomain::uniform(2, -1.0, 1.0);
        let bounds = propagate_box(&net, &domain);
        // Affine: (x1 + 2 x2 + 5) - 3(-x1 + 0.5 x2 + 5) = 4 x1 + 0.5 x2 - 10.
        assert!((fast_dual_bound(&net, &domain, &bounds).unwrap() - (-14.5)).abs() < 1e-12);
    }

    #[test]
    fn hull_upper_line_endpoints() {
        let (l, u) = (-4.0f64, 4.0f64);
        let upper = |xhat: f64| u * (xhat - l) / (u - l);
        assert_eq!(upper(l), 0.0);
        assert_eq!(upper(u), u);
    }
}
