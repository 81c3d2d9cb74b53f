//! Network representation, structural validation and exact forward evaluation.
//!
//! A [`Network`] is an ordered chain of [`Layer`]s. Every ReLU and MaxPool
//! layer must directly follow a linear layer, so the chain always reads as
//! `Linear (Relu | MaxPool)? Linear (Relu | MaxPool)? ...`.

use std::collections::BTreeMap;

use crate::error::{Error, Result, StructuralError};

/// Dense row-major matrix; `get(j, k)` is output `j`, input `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    /// Builds a matrix from rows; all rows must have the same length.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != cols) {
            return Err(Error::DimensionMismatch { expected: cols, got: bad.len() });
        }
        let n = rows.len();
        Ok(Self { rows: n, cols, data: rows.into_iter().flatten().collect() })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.cols + col] = value;
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|r| self.row(r).to_vec()).collect()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        (0..self.rows).map(|r| dot(self.row(r), x)).collect()
    }

    /// `selfᵀ · g`.
    pub fn transpose_mul_vec(&self, g: &[f64]) -> Vec<f64> {
        debug_assert_eq!(g.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for (r, &gr) in g.iter().enumerate() {
            if gr == 0.0 {
                continue;
            }
            for (o, w) in out.iter_mut().zip(self.row(r)) {
                *o += gr * w;
            }
        }
        out
    }

    /// `self · other`.
    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows);
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * other.cols + j] += a * other.get(k, j);
                }
            }
        }
        out
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Affine layer `W x + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl Linear {
    pub fn new(weight: Vec<Vec<f64>>, bias: Vec<f64>) -> Result<Self> {
        let weight = Matrix::from_rows(weight)?;
        if weight.rows() != bias.len() {
            return Err(Error::DimensionMismatch { expected: weight.rows(), got: bias.len() });
        }
        Ok(Self { weight, bias })
    }

    pub fn identity(n: usize) -> Self {
        Self { weight: Matrix::identity(n), bias: vec![0.0; n] }
    }

    pub fn in_width(&self) -> usize {
        self.weight.cols()
    }

    pub fn out_width(&self) -> usize {
        self.weight.rows()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.weight.mul_vec(x);
        for (v, b) in y.iter_mut().zip(&self.bias) {
            *v += b;
        }
        y
    }

    /// The affine map `other ∘ self`.
    pub fn then(&self, other: &Linear) -> Linear {
        let weight = other.weight.matmul(&self.weight);
        let bias = other.apply(&self.bias);
        Linear { weight, bias }
    }
}

/// Element-wise maximum over disjoint groups of the preceding layer's outputs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaxPool {
    pub groups: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Linear(Linear),
    Relu,
    MaxPool(MaxPool),
}

impl Layer {
    pub fn is_linear(&self) -> bool {
        matches!(self, Layer::Linear(_))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub input_size: usize,
    pub layers: Vec<Layer>,
}

impl Network {
    /// Builds and validates a network.
    pub fn new(input_size: usize, layers: Vec<Layer>) -> Result<Self> {
        let net = Self { input_size, layers };
        validate_network(&net).map_err(Error::InvalidNetwork)?;
        Ok(net)
    }

    /// Output widths of every layer. Assumes a validated network.
    pub fn widths(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.layers.len());
        let mut width = self.input_size;
        for layer in &self.layers {
            width = match layer {
                Layer::Linear(l) => l.out_width(),
                Layer::Relu => width,
                Layer::MaxPool(m) => m.groups.len(),
            };
            out.push(width);
        }
        out
    }

    pub fn output_width(&self) -> usize {
        self.widths().last().copied().unwrap_or(self.input_size)
    }

    pub fn relu_count(&self) -> usize {
        let widths = self.widths();
        self.layers
            .iter()
            .enumerate()
            .filter(|(_, l)| matches!(l, Layer::Relu))
            .map(|(k, _)| widths[k])
            .sum()
    }

    pub fn has_maxpool(&self) -> bool {
        self.layers.iter().any(|l| matches!(l, Layer::MaxPool(_)))
    }

    /// All ReLU units in layer order.
    pub fn relu_units(&self) -> Vec<UnitId> {
        let widths = self.widths();
        self.layers
            .iter()
            .enumerate()
            .filter(|(_, l)| matches!(l, Layer::Relu))
            .flat_map(|(k, _)| (0..widths[k]).map(move |index| UnitId { layer: k, index }))
            .collect()
    }

    /// Appends layers and re-validates.
    pub fn extended(&self, extra: impl IntoIterator<Item = Layer>) -> Result<Network> {
        let mut layers = self.layers.clone();
        layers.extend(extra);
        Network::new(self.input_size, layers)
    }
}

/// Checks every structural invariant of `net`, reporting each violation.
pub fn validate_network(net: &Network) -> std::result::Result<(), Vec<StructuralError>> {
    let mut errors = Vec::new();
    if net.input_size == 0 {
        errors.push(StructuralError::new(0, "input size must be positive"));
    }
    if net.layers.is_empty() {
        errors.push(StructuralError::new(0, "network has no layers"));
    }
    let mut width = net.input_size;
    for (k, layer) in net.layers.iter().enumerate() {
        let prev_linear = k > 0 && net.layers[k - 1].is_linear();
        match layer {
            Layer::Linear(lin) => {
                if lin.weight.rows() != lin.bias.len() {
                    errors.push(StructuralError::new(k, "weight rows differ from bias length"));
                }
                if lin.weight.rows() == 0 {
                    errors.push(StructuralError::new(k, "linear layer has no outputs"));
                }
                if lin.in_width() != width {
                    errors.push(StructuralError::new(k, "width mismatch"));
                }
                let finite = lin.weight.data.iter().chain(&lin.bias).all(|v| v.is_finite());
                if !finite {
                    errors.push(StructuralError::new(k, "non-finite parameter"));
                }
                width = lin.out_width();
            }
            Layer::Relu => {
                if k == 0 {
                    errors.push(StructuralError::new(k, "first layer must be linear"));
                } else if !prev_linear {
                    errors.push(StructuralError::new(k, "relu must follow a linear layer"));
                }
            }
            Layer::MaxPool(pool) => {
                if k == 0 {
                    errors.push(StructuralError::new(k, "first layer must be linear"));
                } else if !prev_linear {
                    errors.push(StructuralError::new(k, "maxpool must follow a linear layer"));
                }
                let mut seen = vec![false; width];
                let mut ok = true;
                for group in &pool.groups {
                    if group.is_empty() {
                        errors.push(StructuralError::new(k, "empty maxpool group"));
                        ok = false;
                    }
                    for &i in group {
                        if i >= width {
                            errors.push(StructuralError::new(k, "maxpool index out of range"));
                            ok = false;
                        } else if seen[i] {
                            errors.push(StructuralError::new(k, "overlapping maxpool groups"));
                            ok = false;
                        } else {
                            seen[i] = true;
                        }
                    }
                }
                if ok && seen.iter().any(|s| !s) {
                    errors.push(StructuralError::new(k, "maxpool groups do not cover the layer"));
                }
                width = pool.groups.len();
            }
        }
    }
    if errors.is_empty() {
        Ok(())
    } else {
        Err(errors)
    }
}

/// Evaluates the network exactly, returning the final layer output.
pub fn forward_eval(net: &Network, x0: &[f64]) -> Result<Vec<f64>> {
    Ok(forward_trace(net, x0)?.pop().unwrap_or_else(|| x0.to_vec()))
}

/// Evaluates the network and returns the output of every layer.
pub fn forward_trace(net: &Network, x0: &[f64]) -> Result<Vec<Vec<f64>>> {
    if x0.len() != net.input_size {
        return Err(Error::DimensionMismatch { expected: net.input_size, got: x0.len() });
    }
    let mut trace: Vec<Vec<f64>> = Vec::with_capacity(net.layers.len());
    for layer in &net.layers {
        let input = trace.last().map_or(x0, Vec::as_slice);
        let out = match layer {
            Layer::Linear(lin) => lin.apply(input),
            Layer::Relu => input.iter().map(|v| v.max(0.0)).collect(),
            Layer::MaxPool(pool) => pool
                .groups
                .iter()
                .map(|g| g.iter().map(|&i| input[i]).fold(f64::NEG_INFINITY, f64::max))
                .collect(),
        };
        trace.push(out);
    }
    Ok(trace)
}

/// Scalar output of a canonical (width-1) network.
pub fn eval_scalar(net: &Network, x0: &[f64]) -> Result<f64> {
    let out = forward_eval(net, x0)?;
    match out.as_slice() {
        [v] => Ok(*v),
        _ => Err(Error::DimensionMismatch { expected: 1, got: out.len() }),
    }
}

/// Axis-aligned input region.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxDomain {
    pub lb: Vec<f64>,
    pub ub: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lb: Vec<f64>, ub: Vec<f64>) -> Result<Self> {
        if lb.len() != ub.len() {
            return Err(Error::DimensionMismatch { expected: lb.len(), got: ub.len() });
        }
        for (j, (l, u)) in lb.iter().zip(&ub).enumerate() {
            if !l.is_finite() || !u.is_finite() {
                return Err(Error::InvalidDomain(format!("bound {j} is not finite")));
            }
            if l > u {
                return Err(Error::InvalidDomain(format!("lb > ub in dimension {j}")));
            }
        }
        Ok(Self { lb, ub })
    }

    pub fn uniform(dim: usize, lo: f64, hi: f64) -> Self {
        Self { lb: vec![lo; dim], ub: vec![hi; dim] }
    }

    pub fn point(x: &[f64]) -> Self {
        Self { lb: x.to_vec(), ub: x.to_vec() }
    }

    pub fn dim(&self) -> usize {
        self.lb.len()
    }

    pub fn width(&self, j: usize) -> f64 {
        self.ub[j] - self.lb[j]
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        x.len() == self.dim()
            && x.iter().zip(self.lb.iter().zip(&self.ub)).all(|(v, (l, u))| *v >= l - tol && *v <= u + tol)
    }

    pub fn clamp(&self, x: &mut [f64]) {
        for ((v, l), u) in x.iter_mut().zip(&self.lb).zip(&self.ub) {
            *v = v.clamp(*l, *u);
        }
    }

    pub fn center(&self) -> Vec<f64> {
        self.lb.iter().zip(&self.ub).map(|(l, u)| 0.5 * (l + u)).collect()
    }
}

/// A ReLU unit: `layer` is the index of the ReLU layer, `index` the unit in it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct UnitId {
    pub layer: usize,
    pub index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Phase {
    /// Output pinned to 0 with non-positive input.
    Blocked,
    /// Output equal to a non-negative input.
    Passing,
}

/// Partial assignment of ReLU phases.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PhaseSet(BTreeMap<UnitId, Phase>);

impl PhaseSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, unit: UnitId) -> Option<Phase> {
        self.0.get(&unit).copied()
    }

    pub fn with(&self, unit: UnitId, phase: Phase) -> Self {
        let mut next = self.clone();
        next.0.insert(unit, phase);
        next
    }

    pub fn insert(&mut self, unit: UnitId, phase: Phase) {
        self.0.insert(unit, phase);
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (UnitId, Phase)> + '_ {
        self.0.iter().map(|(u, p)| (*u, *p))
    }

    /// Whether the activation pattern of `net` at `x0` agrees with every fixed phase.
    /// Zero pre-activations are compatible with both phases.
    pub fn admits(&self, net: &Network, x0: &[f64]) -> Result<bool> {
        if self.is_empty() {
            return Ok(true);
        }
        let trace = forward_trace(net, x0)?;
        Ok(self.iter().all(|(unit, phase)| {
            let pre = trace[unit.layer - 1][unit.index];
            match phase {
                Phase::Blocked => pre <= 0.0,
                Phase::Passing => pre >= 0.0,
            }
        }))
    }
}

/// The two-input, one-hidden-layer example network used throughout the tests:
/// `y = -relu(x1 + x2) - relu(-x1 - x2)`.
pub fn toy_network() -> Network {
    Network::new(
        2,
        vec![
            Layer::Linear(Linear::new(vec![vec![1.0, 1.0], vec![-1.0, -1.0]], vec![0.0, 0.0]).unwrap()),
            Layer::Relu,
            Layer::Linear(Linear::new(vec![vec![-1.0, -1.0]], vec![0.0]).unwrap()),
        ],
    )
    .expect("toy network is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lin(w: Vec<Vec<f64>>, b: Vec<f64>) -> Layer {
        Layer::Linear(Linear::new(w, b).unwrap())
    }

    #[test]
    fn toy_network_validates() {
        assert!(validate_network(&toy_network()).is_ok());
        assert_eq!(toy_network().widths(), vec![2, 2, 1]);
    }

    #[test]
    fn width_mismatch_is_reported_with_layer() {
        let net = Network {
            input_size: 2,
            layers: vec![
                lin(vec![vec![1.0, 1.0], vec![-1.0, -1.0]], vec![0.0, 0.0]),
                Layer::Relu,
                lin(vec![vec![1.0, 1.0, 1.0]], vec![0.0]),
            ],
        };
        let errs = validate_network(&net).unwrap_err();
        assert_eq!(errs.len(), 1);
        assert_eq!(errs[0].to_string(), "width mismatch at layer 2");
    }

    #[test]
    fn leading_relu_is_rejected() {
        let net = Network { input_size: 2, layers: vec![Layer::Relu, lin(vec![vec![1.0, 1.0]], vec![0.0])] };
        let errs = validate_network(&net).unwrap_err();
        assert_eq!(errs[0].to_string(), "first layer must be linear at layer 0");
    }

    #[test]
    fn bad_maxpool_groups_are_rejected() {
        let base = lin(vec![vec![1.0], vec![2.0], vec![3.0]], vec![0.0; 3]);
        let overlapping = Network {
            input_size: 1,
            layers: vec![base.clone(), Layer::MaxPool(MaxPool { groups: vec![vec![0, 1], vec![1, 2]] })],
        };
        assert!(validate_network(&overlapping).is_err());
        let empty = Network {
            input_size: 1,
            layers: vec![base.clone(), Layer::MaxPool(MaxPool { groups: vec![vec![0, 1, 2], vec![]] })],
        };
        assert!(validate_network(&empty).is_err());
        let uncovered =
            Network { input_size: 1, layers: vec![base.clone(), Layer::MaxPool(MaxPool { groups: vec![vec![0, 1]] })] };
        assert!(validate_network(&uncovered).is_err());
        let relu_then_pool = Network {
            input_size: 1,
            layers: vec![base, Layer::Relu, Layer::MaxPool(MaxPool { groups: vec![vec![0, 1, 2]] })],
        };
        assert!(validate_network(&relu_then_pool).is_err());
    }

    #[test]
    fn toy_forward_values() {
        let net = toy_network();
        let trace = forward_trace(&net, &[1.0, 1.0]).unwrap();
        assert_eq!(trace[0], vec![2.0, -2.0]);
        assert_eq!(trace[1], vec![2.0, 0.0]);
        assert_eq!(trace[2], vec![-2.0]);
        assert_eq!(eval_scalar(&net, &[0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(eval_scalar(&net, &[2.0, 2.0]).unwrap(), -4.0);
    }

    #[test]
    fn forward_rejects_wrong_input_length() {
        assert!(matches!(
            forward_eval(&toy_network(), &[1.0]),
            Err(Error::DimensionMismatch { expected: 2, got: 1 })
        ));
    }

    #[test]
    fn singleton_maxpool_is_identity() {
        let net = Network::new(
            3,
            vec![Layer::Linear(Linear::identity(3)), Layer::MaxPool(MaxPool { groups: vec![vec![0], vec![1], vec![2]] })],
        )
        .unwrap();
        let x = [0.5, -1.5, 3.0];
        assert_eq!(forward_eval(&net, &x).unwrap(), x.to_vec());
    }

    #[test]
    fn box_rejects_inverted_bounds() {
        assert!(BoxDomain::new(vec![0.0], vec![-1.0]).is_err());
        assert!(BoxDomain::new(vec![f64::NEG_INFINITY], vec![1.0]).is_err());
    }
}
