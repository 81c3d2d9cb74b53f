//! Interval propagation of per-layer bounds.
//!
//! Bounds are stored per layer *output*: for a ReLU layer at index `k` the
//! pre-activation interval is the output of the linear layer `k - 1`.

use crate::model::{BoxDomain, Layer, Linear, Network, Phase, PhaseSet, UnitId};

/// Lower/upper bound vectors of one layer output.
#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    pub lb: Vec<f64>,
    pub ub: Vec<f64>,
}

impl Bounds {
    pub fn len(&self) -> usize {
        self.lb.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lb.is_empty()
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        x.iter().zip(self.lb.iter().zip(&self.ub)).all(|(v, (l, u))| *v >= l - tol && *v <= u + tol)
    }

    fn intersect(&mut self, other: &Bounds) {
        for j in 0..self.len() {
            self.lb[j] = self.lb[j].max(other.lb[j]);
            self.ub[j] = self.ub[j].min(other.ub[j]);
        }
    }
}

impl From<&BoxDomain> for Bounds {
    fn from(b: &BoxDomain) -> Self {
        Bounds { lb: b.lb.clone(), ub: b.ub.clone() }
    }
}

/// Bounds for every layer of a network over an input box.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerBounds {
    pub input: Bounds,
    pub layers: Vec<Bounds>,
}

impl LayerBounds {
    /// Bounds on the input of layer `k`.
    pub fn pre(&self, k: usize) -> &Bounds {
        if k == 0 {
            &self.input
        } else {
            &self.layers[k - 1]
        }
    }

    /// Bounds on the output of layer `k`.
    pub fn post(&self, k: usize) -> &Bounds {
        &self.layers[k]
    }

    /// Bounds on the final output.
    pub fn output(&self) -> &Bounds {
        self.layers.last().unwrap_or(&self.input)
    }

    /// Pre-activation interval of a ReLU unit.
    pub fn unit(&self, unit: UnitId) -> (f64, f64) {
        let b = self.pre(unit.layer);
        (b.lb[unit.index], b.ub[unit.index])
    }
}

/// A fixed phase contradicted by the bounds of its unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InfeasiblePhase {
    pub unit: UnitId,
}

/// Interval image of a linear layer. Positive weights pick the matching bound,
/// negative weights the opposite one.
pub fn linear_bounds(lin: &Linear, input: &Bounds) -> Bounds {
    let n = lin.out_width();
    let mut lb = Vec::with_capacity(n);
    let mut ub = Vec::with_capacity(n);
    for j in 0..n {
        let mut lo = lin.bias[j];
        let mut hi = lin.bias[j];
        for (k, &w) in lin.weight.row(j).iter().enumerate() {
            let (pos, neg) = (w.max(0.0), w.min(0.0));
            lo += pos * input.lb[k] + neg * input.ub[k];
            hi += pos * input.ub[k] + neg * input.lb[k];
        }
        lb.push(lo);
        ub.push(hi);
    }
    Bounds { lb, ub }
}

fn layer_bounds(layer: &Layer, input: &Bounds) -> Bounds {
    match layer {
        Layer::Linear(lin) => linear_bounds(lin, input),
        Layer::Relu => Bounds {
            lb: input.lb.iter().map(|v| v.max(0.0)).collect(),
            ub: input.ub.iter().map(|v| v.max(0.0)).collect(),
        },
        Layer::MaxPool(pool) => {
            let fold = |src: &[f64], g: &[usize]| g.iter().map(|&i| src[i]).fold(f64::NEG_INFINITY, f64::max);
            Bounds {
                lb: pool.groups.iter().map(|g| fold(&input.lb, g)).collect(),
                ub: pool.groups.iter().map(|g| fold(&input.ub, g)).collect(),
            }
        }
    }
}

/// Sound interval bounds of every layer for inputs in `domain`.
pub fn propagate_box(net: &Network, domain: &BoxDomain) -> LayerBounds {
    propagate(net, Bounds::from(domain), None, &PhaseSet::new()).expect("no phases, no contradiction")
}

/// Applies fixed ReLU phases to `bounds` and re-propagates downstream layers,
/// keeping whichever of the old and new interval is tighter.
pub fn refine_with_fixed_phases(
    net: &Network,
    bounds: &LayerBounds,
    phases: &PhaseSet,
) -> Result<LayerBounds, InfeasiblePhase> {
    if phases.is_empty() {
        return Ok(bounds.clone());
    }
    propagate(net, bounds.input.clone(), Some(bounds), phases)
}

/// Interval propagation from `input`, intersected with `existing` where given.
pub fn propagate(
    net: &Network,
    input: Bounds,
    existing: Option<&LayerBounds>,
    phases: &PhaseSet,
) -> Result<LayerBounds, InfeasiblePhase> {
    let mut out = LayerBounds { input, layers: Vec::with_capacity(net.layers.len()) };
    for (k, layer) in net.layers.iter().enumerate() {
        let mut b = layer_bounds(layer, out.pre(k));
        if let Some(prev) = existing.and_then(|e| e.layers.get(k)) {
            b.intersect(prev);
        }
        if matches!(net.layers.get(k + 1), Some(Layer::Relu)) {
            apply_phases(&mut b, k + 1, phases)?;
        }
        for j in 0..b.len() {
            if b.lb[j] > b.ub[j] {
                // Intersections of sound bounds only cross by rounding.
                let mid = 0.5 * (b.lb[j] + b.ub[j]);
                b.lb[j] = mid;
                b.ub[j] = mid;
            }
        }
        out.layers.push(b);
    }
    Ok(out)
}

fn apply_phases(pre: &mut Bounds, relu_layer: usize, phases: &PhaseSet) -> Result<(), InfeasiblePhase> {
    for (unit, phase) in phases.iter().filter(|(u, _)| u.layer == relu_layer) {
        let j = unit.index;
        match phase {
            Phase::Blocked => {
                if pre.lb[j] > 0.0 {
                    return Err(InfeasiblePhase { unit });
                }
                pre.ub[j] = pre.ub[j].min(0.0);
            }
            Phase::Passing => {
                if pre.ub[j] < 0.0 {
                    return Err(InfeasiblePhase { unit });
                }
                pre.lb[j] = pre.lb[j].max(0.0);
            }
        }
    }
    Ok(())
}
