//! Reduction of (network, property) to a scalar-output network whose
//! counterexamples are exactly the in-box inputs with output `<= 0`, plus the
//! lowering of MaxPool layers to ReLUs.

use crate::error::{Error, Result};
use crate::interval::{propagate_box, LayerBounds};
use crate::model::{eval_scalar, BoxDomain, Layer, Linear, Matrix, MaxPool, Network};

/// Boolean property over the network outputs.
#[derive(Debug, Clone, PartialEq)]
pub enum PropertyClause {
    /// `cᵀ x̂ >= b`.
    Geq { c: Vec<f64>, b: f64 },
    /// Disjunction.
    Any(Vec<PropertyClause>),
    /// Conjunction.
    All(Vec<PropertyClause>),
}

impl PropertyClause {
    pub fn geq(c: Vec<f64>, b: f64) -> Self {
        PropertyClause::Geq { c, b }
    }

    pub fn validate(&self, width: usize) -> Result<()> {
        match self {
            PropertyClause::Geq { c, b } => {
                if c.len() != width {
                    return Err(Error::InvalidProperty(format!(
                        "clause has {} coefficients, network has {width} outputs",
                        c.len()
                    )));
                }
                if !b.is_finite() || c.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidProperty("non-finite clause coefficient".into()));
                }
                Ok(())
            }
            PropertyClause::Any(children) | PropertyClause::All(children) => {
                if children.is_empty() {
                    return Err(Error::InvalidProperty("empty clause".into()));
                }
                children.iter().try_for_each(|c| c.validate(width))
            }
        }
    }

    /// The scalar whose positivity means the clause holds: `cᵀx̂ - b` for a leaf,
    /// max over children for `Any`, min for `All`.
    pub fn slack(&self, out: &[f64]) -> f64 {
        match self {
            PropertyClause::Geq { c, b } => crate::model::dot(c, out) - b,
            PropertyClause::Any(ch) => ch.iter().map(|c| c.slack(out)).fold(f64::NEG_INFINITY, f64::max),
            PropertyClause::All(ch) => ch.iter().map(|c| c.slack(out)).fold(f64::INFINITY, f64::min),
        }
    }

    /// Clause-tree evaluation with strict leaves (`cᵀx̂ - b > 0`).
    pub fn holds_strictly(&self, out: &[f64]) -> bool {
        match self {
            PropertyClause::Geq { c, b } => crate::model::dot(c, out) - b > 0.0,
            PropertyClause::Any(ch) => ch.iter().any(|c| c.holds_strictly(out)),
            PropertyClause::All(ch) => ch.iter().all(|c| c.holds_strictly(out)),
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            PropertyClause::Geq { .. } => 0,
            PropertyClause::Any(ch) | PropertyClause::All(ch) => 1 + ch.iter().map(Self::depth).max().unwrap_or(0),
        }
    }
}

/// A canonical verification problem: the property holds on `domain` iff the
/// minimum of `canonical_net` over it is positive.
#[derive(Debug, Clone, PartialEq)]
pub struct VerificationProblem {
    pub canonical_net: Network,
    pub domain: BoxDomain,
    pub original_net: Network,
    pub original_property: PropertyClause,
}

impl VerificationProblem {
    /// The canonical network with every MaxPool lowered to ReLUs using
    /// interval bounds over the problem domain.
    pub fn relu_network(&self) -> Result<Network> {
        if !self.canonical_net.has_maxpool() {
            return Ok(self.canonical_net.clone());
        }
        let bounds = propagate_box(&self.canonical_net, &self.domain);
        maxpool_to_relu(&self.canonical_net, &bounds)
    }

    /// Same as [`Self::relu_network`] but lowering with LP-tightened bounds.
    pub fn relu_network_tightened(&self) -> Result<Network> {
        if !self.canonical_net.has_maxpool() {
            return Ok(self.canonical_net.clone());
        }
        let planet = crate::relax::build_planet(
            &self.canonical_net,
            &self.domain,
            &crate::model::PhaseSet::new(),
            true,
        )?
        .ok_or_else(|| Error::InvalidDomain("empty domain".into()))?;
        maxpool_to_relu(&self.canonical_net, &planet.bounds)
    }
}

/// Appends the property encoding to `net` so that its single output is `> 0`
/// exactly where `prop` holds.
pub fn canonicalize(net: &Network, prop: &PropertyClause, domain: &BoxDomain) -> Result<VerificationProblem> {
    if domain.dim() != net.input_size {
        return Err(Error::DimensionMismatch { expected: net.input_size, got: domain.dim() });
    }
    let width = net.output_width();
    prop.validate(width)?;
    let block = encode(prop, width);
    let canonical_net = net.extended(block.into_layers())?;
    Ok(VerificationProblem {
        canonical_net,
        domain: domain.clone(),
        original_net: net.clone(),
        original_property: prop.clone(),
    })
}

/// Alternating `Linear, MaxPool, Linear, ..., Linear` stack with width-1 output.
struct Block {
    linears: Vec<Linear>,
    pools: Vec<Vec<Vec<usize>>>,
}

impl Block {
    fn levels(&self) -> usize {
        self.pools.len()
    }

    fn pad_to(&mut self, levels: usize) {
        while self.levels() < levels {
            self.pools.push(vec![vec![0]]);
            self.linears.push(Linear::identity(1));
        }
    }

    fn into_layers(self) -> Vec<Layer> {
        let mut layers = Vec::with_capacity(2 * self.linears.len());
        let mut pools = self.pools.into_iter();
        for lin in self.linears {
            layers.push(Layer::Linear(lin));
            if let Some(groups) = pools.next() {
                layers.push(Layer::MaxPool(MaxPool { groups }));
            }
        }
        layers
    }
}

fn encode(prop: &PropertyClause, width: usize) -> Block {
    match prop {
        PropertyClause::Geq { c, b } => Block {
            linears: vec![Linear { weight: Matrix::from_rows(vec![c.clone()]).unwrap(), bias: vec![-b] }],
            pools: Vec::new(),
        },
        PropertyClause::Any(children) => {
            let mut block = stack(children.iter().map(|c| encode(c, width)).collect(), width);
            block.pools.push(vec![(0..children.len()).collect()]);
            block.linears.push(Linear::identity(1));
            block
        }
        PropertyClause::All(children) => {
            // min_i s_i = -max_i(-s_i)
            let mut block = stack(children.iter().map(|c| encode(c, width)).collect(), width);
            let last = block.linears.last_mut().unwrap();
            negate(last);
            block.pools.push(vec![(0..children.len()).collect()]);
            block.linears.push(Linear { weight: Matrix::from_rows(vec![vec![-1.0]]).unwrap(), bias: vec![0.0] });
            block
        }
    }
}

fn negate(lin: &mut Linear) {
    let rows: Vec<Vec<f64>> = lin.weight.to_rows().into_iter().map(|r| r.into_iter().map(|v| -v).collect()).collect();
    lin.weight = Matrix::from_rows(rows).unwrap();
    lin.bias.iter_mut().for_each(|b| *b = -*b);
}

/// Runs the child blocks side by side; the result has one output per child.
fn stack(mut children: Vec<Block>, width: usize) -> Block {
    let levels = children.iter().map(Block::levels).max().unwrap_or(0);
    children.iter_mut().for_each(|c| c.pad_to(levels));

    let mut linears = Vec::with_capacity(levels + 1);
    let mut pools = Vec::with_capacity(levels);
    for t in 0..=levels {
        let outs: Vec<usize> = children.iter().map(|c| c.linears[t].out_width()).collect();
        let total_out: usize = outs.iter().sum();
        let total_in = if t == 0 { width } else { children.iter().map(|c| c.pools[t - 1].len()).sum() };
        let mut weight = Matrix::zeros(total_out, total_in);
        let mut bias = Vec::with_capacity(total_out);
        let (mut row_off, mut col_off) = (0, 0);
        for child in &children {
            let lin = &child.linears[t];
            for r in 0..lin.out_width() {
                for k in 0..lin.in_width() {
                    let col = if t == 0 { k } else { col_off + k };
                    weight.set(row_off + r, col, lin.weight.get(r, k));
                }
            }
            bias.extend_from_slice(&lin.bias);
            row_off += lin.out_width();
            if t > 0 {
                col_off += lin.in_width();
            }
        }
        linears.push(Linear { weight, bias });

        if t < levels {
            let mut groups = Vec::new();
            let mut off = 0;
            for (child, &w) in children.iter().zip(&outs) {
                groups.extend(child.pools[t].iter().map(|g| g.iter().map(|i| i + off).collect::<Vec<_>>()));
                off += w;
            }
            pools.push(groups);
        }
    }
    Block { linears, pools }
}

/// An affine expression over the current layer's values.
#[derive(Clone)]
struct Affine {
    coeffs: Vec<(usize, f64)>,
    constant: f64,
    lower: f64,
}

impl Affine {
    fn var(i: usize, lower: f64) -> Self {
        Affine { coeffs: vec![(i, 1.0)], constant: 0.0, lower }
    }

    fn row(&self, width: usize) -> (Vec<f64>, f64) {
        let mut r = vec![0.0; width];
        for &(i, c) in &self.coeffs {
            r[i] += c;
        }
        (r, self.constant)
    }
}

/// Replaces every MaxPool layer by linear layers and ReLUs using
/// `max(p, q) = relu(p - q) + relu(q - l_q) + l_q`, reducing each group as a
/// balanced binary tree. `pre_bounds` must be sound for the intended domain.
pub fn maxpool_to_relu(net: &Network, pre_bounds: &LayerBounds) -> Result<Network> {
    let widths = net.widths();
    let mut layers: Vec<Layer> = Vec::with_capacity(net.layers.len());
    for (k, layer) in net.layers.iter().enumerate() {
        let Layer::MaxPool(pool) = layer else {
            layers.push(layer.clone());
            continue;
        };
        let in_width = widths[k - 1];
        let lbs = &pre_bounds.pre(k).lb;
        let mut groups: Vec<Vec<Affine>> = Vec::with_capacity(pool.groups.len());
        for g in &pool.groups {
            let mut items = Vec::with_capacity(g.len());
            for &i in g {
                let l = lbs.get(i).copied().unwrap_or(f64::NEG_INFINITY);
                if !l.is_finite() {
                    return Err(Error::MissingBound { layer: k, index: i });
                }
                items.push(Affine::var(i, l));
            }
            groups.push(items);
        }
        let mut width = in_width;
        while groups.iter().any(|g| g.len() > 1) {
            // One ReLU layer halves every group.
            let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
            let mut next: Vec<Vec<Affine>> = Vec::with_capacity(groups.len());
            for g in &groups {
                let mut reduced = Vec::with_capacity(g.len().div_ceil(2));
                for chunk in g.chunks(2) {
                    match chunk {
                        [p, q] => {
                            let (mut diff, dc) = p.row(width);
                            let (qr, qc) = q.row(width);
                            diff.iter_mut().zip(&qr).for_each(|(d, v)| *d -= v);
                            let a = rows.len();
                            rows.push((diff, dc - qc));
                            rows.push((qr, qc - q.lower));
                            reduced.push(Affine {
                                coeffs: vec![(a, 1.0), (a + 1, 1.0)],
                                constant: q.lower,
                                lower: p.lower.max(q.lower),
                            });
                        }
                        [e] => {
                            let (er, ec) = e.row(width);
                            let a = rows.len();
                            rows.push((er, ec - e.lower));
                            reduced.push(Affine { coeffs: vec![(a, 1.0)], constant: e.lower, lower: e.lower });
                        }
                        _ => unreachable!(),
                    }
                }
                next.push(reduced);
            }
            let (w, b): (Vec<Vec<f64>>, Vec<f64>) = rows.into_iter().unzip();
            width = w.len();
            layers.push(Layer::Linear(Linear::new(w, b)?));
            layers.push(Layer::Relu);
            groups = next;
        }
        let (w, b): (Vec<Vec<f64>>, Vec<f64>) = groups.iter().map(|g| g[0].row(width)).unzip();
        layers.push(Layer::Linear(Linear::new(w, b)?));
    }
    Network::new(net.input_size, merge_linears(layers))
}

/// Composes runs of consecutive linear layers into one.
pub fn merge_linears(layers: Vec<Layer>) -> Vec<Layer> {
    let mut out: Vec<Layer> = Vec::with_capacity(layers.len());
    for layer in layers {
        match (out.last_mut(), layer) {
            (Some(Layer::Linear(prev)), Layer::Linear(next)) => *prev = prev.then(&next),
            (_, layer) => out.push(layer),
        }
    }
    out
}

/// Whether `x0` lies in the domain (with slack `tol`) and drives the
/// canonical output to `<= tol`.
pub fn validate_counterexample(problem: &VerificationProblem, x0: &[f64], tol: f64) -> bool {
    if !problem.domain.contains(x0, tol) {
        return false;
    }
    eval_scalar(&problem.canonical_net, x0).is_ok_and(|v| v <= tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{forward_eval, toy_network};

    fn toy_box() -> BoxDomain {
        BoxDomain::uniform(2, -2.0, 2.0)
    }

    #[test]
    fn single_clause_appends_one_linear() {
        let p = canonicalize(&toy_network(), &PropertyClause::geq(vec![1.0], -5.0), &toy_box()).unwrap();
        assert_eq!(p.canonical_net.layers.len(), 4);
        let Layer::Linear(last) = &p.canonical_net.layers[3] else { panic!() };
        assert_eq!(last.weight.to_rows(), vec![vec![1.0]]);
        assert_eq!(last.bias, vec![5.0]);
        assert_eq!(eval_scalar(&p.canonical_net, &[2.0, 2.0]).unwrap(), 1.0);
    }

    #[test]
    fn tautology_is_absolute_value() {
        let net = Network::new(1, vec![Layer::Linear(Linear::identity(1))]).unwrap();
        let prop = PropertyClause::Any(vec![PropertyClause::geq(vec![1.0], 0.0), PropertyClause::geq(vec![-1.0], 0.0)]);
        let p = canonicalize(&net, &prop, &BoxDomain::uniform(1, -3.0, 3.0)).unwrap();
        for x in [-2.5, -1.0, 0.0, 0.5, 3.0] {
            assert_eq!(eval_scalar(&p.canonical_net, &[x]).unwrap(), f64::abs(x));
        }
    }

    #[test]
    fn conjunction_uses_double_negation() {
        let net = Network::new(2, vec![Layer::Linear(Linear::identity(2))]).unwrap();
        let prop = PropertyClause::All(vec![PropertyClause::geq(vec![1.0, 0.0], 1.0), PropertyClause::geq(vec![0.0, 1.0], 0.0)]);
        let p = canonicalize(&net, &prop, &BoxDomain::uniform(2, -3.0, 3.0)).unwrap();
        assert_eq!(eval_scalar(&p.canonical_net, &[3.0, 0.5]).unwrap(), 0.5);
        assert_eq!(eval_scalar(&p.canonical_net, &[0.0, 2.0]).unwrap(), -1.0);
    }

    #[test]
    fn nested_clauses_of_uneven_depth() {
        let net = Network::new(2, vec![Layer::Linear(Linear::identity(2))]).unwrap();
        let prop = PropertyClause::Any(vec![
            PropertyClause::All(vec![PropertyClause::geq(vec![1.0, 0.0], 0.0), PropertyClause::geq(vec![0.0, 1.0], 0.0)]),
            PropertyClause::geq(vec![1.0, 1.0], 3.0),
        ]);
        assert_eq!(prop.depth(), 2);
        let p = canonicalize(&net, &prop, &BoxDomain::uniform(2, -3.0, 3.0)).unwrap();
        for x in [[1.0, 2.0], [-1.0, 2.0], [2.5, 2.5], [-2.0, -1.0]] {
            let v = eval_scalar(&p.canonical_net, &x).unwrap();
            assert!((v - prop.slack(&x)).abs() < 1e-12);
        }
    }

    #[test]
    fn bad_clauses_are_rejected() {
        let net = toy_network();
        assert!(canonicalize(&net, &PropertyClause::geq(vec![1.0, 2.0], 0.0), &toy_box()).is_err());
        assert!(canonicalize(&net, &PropertyClause::Any(vec![]), &toy_box()).is_err());
        assert!(canonicalize(&net, &PropertyClause::geq(vec![1.0], 0.0), &BoxDomain::uniform(3, 0.0, 1.0)).is_err());
    }

    #[test]
    fn pairwise_decomposition_identity() {
        let l2 = -2.0f64;
        let pair = |x1: f64, x2: f64| (x1 - x2).max(0.0) + (x2 - l2).max(0.0) + l2;
        assert_eq!(pair(3.0, 1.0), 3.0);
        assert_eq!(pair(1.0, 3.0), 3.0);
    }

    #[test]
    fn lowering_two_way_max() {
        let net = Network::new(
            2,
            vec![Layer::Linear(Linear::identity(2)), Layer::MaxPool(MaxPool { groups: vec![vec![0, 1]] })],
        )
        .unwrap();
        let domain = BoxDomain::uniform(2, -2.0, 4.0);
        let lowered = maxpool_to_relu(&net, &propagate_box(&net, &domain)).unwrap();
        assert!(!lowered.has_maxpool());
        assert_eq!(lowered.relu_count(), 2);
        assert_eq!(forward_eval(&lowered, &[3.0, 1.0]).unwrap(), vec![3.0]);
        assert_eq!(forward_eval(&lowered, &[1.0, 3.0]).unwrap(), vec![3.0]);
    }

    #[test]
    fn four_way_group_uses_two_levels() {
        let net = Network::new(
            4,
            vec![Layer::Linear(Linear::identity(4)), Layer::MaxPool(MaxPool { groups: vec![vec![0, 1, 2, 3]] })],
        )
        .unwrap();
        let lowered = maxpool_to_relu(&net, &propagate_box(&net, &BoxDomain::uniform(4, -1.0, 1.0))).unwrap();
        // Three pairwise maxima, two ReLUs each.
        assert_eq!(lowered.relu_count(), 6);
        assert_eq!(lowered.layers.iter().filter(|l| matches!(l, Layer::Relu)).count(), 2);
    }

    #[test]
    fn lowering_needs_finite_bounds() {
        let net = Network::new(
            2,
            vec![Layer::Linear(Linear::identity(2)), Layer::MaxPool(MaxPool { groups: vec![vec![0, 1]] })],
        )
        .unwrap();
        let mut bounds = propagate_box(&net, &BoxDomain::uniform(2, -1.0, 1.0));
        bounds.layers[0].lb[1] = f64::NEG_INFINITY;
        assert!(matches!(maxpool_to_relu(&net, &bounds), Err(Error::MissingBound { layer: 1, index: 1 })));
    }

    #[test]
    fn counterexample_validation() {
        let p3 = canonicalize(&toy_network(), &PropertyClause::geq(vec![1.0], -3.0), &toy_box()).unwrap();
        assert!(validate_counterexample(&p3, &[2.0, 2.0], 0.0));
        let p5 = canonicalize(&toy_network(), &PropertyClause::geq(vec![1.0], -5.0), &toy_box()).unwrap();
        assert!(!validate_counterexample(&p5, &[2.0, 2.0], 1e-6));
        assert!(!validate_counterexample(&p3, &[3.0, 0.0], 1e-6));
    }
}
