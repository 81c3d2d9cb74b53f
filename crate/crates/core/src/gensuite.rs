//! Deterministic random verification instances with a prescribed margin.
//!
//! A random network's exact output minimum `m` over the box is found by the
//! oracle, and the property `y >= m - margin` is attached, so the canonical
//! minimum is exactly `margin`.

use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use rand_xoshiro::SplitMix64;
use serde::{Deserialize, Serialize};

use crate::canon::{canonicalize, PropertyClause, VerificationProblem};
use crate::error::{Error, Result};
use crate::model::{BoxDomain, Layer, Linear, MaxPool, Network};
use crate::oracle::{oracle_min, DEFAULT_RELU_CAP};

/// Smallest accepted `|margin|`.
pub const BOUNDARY_GUARD: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InstanceSpec {
    pub inputs: usize,
    /// Number of hidden ReLU layers.
    pub depth: usize,
    pub width: usize,
    /// Append a max-pool over pairs before the output layer.
    #[serde(default)]
    pub maxpool: bool,
    pub margin: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Expected {
    Sat,
    Unsat,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub seed: u64,
    pub spec: InstanceSpec,
    pub network: Network,
    pub property: PropertyClause,
    pub domain: BoxDomain,
    /// Exact minimum of the raw network output over the box.
    pub output_min: f64,
    pub expected: Expected,
}

impl Instance {
    pub fn problem(&self) -> Result<VerificationProblem> {
        canonicalize(&self.network, &self.property, &self.domain)
    }
}

fn random_linear(rng: &mut SplitMix64, inputs: usize, outputs: usize) -> Linear {
    let scale = 1.0 / (inputs as f64).sqrt();
    let weight = (0..outputs)
        .map(|_| (0..inputs).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect())
        .collect();
    let bias = (0..outputs).map(|_| rng.random_range(-0.5..=0.5)).collect();
    Linear::new(weight, bias).expect("rectangular by construction")
}

pub fn random_network(seed: u64, spec: &InstanceSpec) -> Network {
    let mut rng = SplitMix64::seed_from_u64(seed);
    let mut layers = Vec::with_capacity(2 * spec.depth + 3);
    let mut width = spec.inputs;
    for _ in 0..spec.depth {
        layers.push(Layer::Linear(random_linear(&mut rng, width, spec.width)));
        layers.push(Layer::Relu);
        width = spec.width;
    }
    if spec.maxpool {
        let pooled = spec.width.max(2);
        layers.push(Layer::Linear(random_linear(&mut rng, width, pooled)));
        let groups = (0..pooled).collect::<Vec<_>>().chunks(2).map(<[usize]>::to_vec).collect::<Vec<_>>();
        width = groups.len();
        layers.push(Layer::MaxPool(MaxPool { groups }));
    }
    layers.push(Layer::Linear(random_linear(&mut rng, width, 1)));
    Network::new(spec.inputs, layers).expect("valid by construction")
}

/// Builds the instance for `seed` and `spec`.
pub fn generate(seed: u64, spec: &InstanceSpec) -> Result<Instance> {
    if spec.margin.is_nan() || spec.margin.abs() < BOUNDARY_GUARD {
        return Err(Error::InvalidProperty(format!(
            "margin {} is within {BOUNDARY_GUARD} of the decision boundary",
            spec.margin
        )));
    }
    if spec.inputs == 0 || spec.width == 0 {
        return Err(Error::InvalidDomain("instances need at least one input and one unit".into()));
    }
    let network = random_network(seed, spec);
    let domain = BoxDomain::uniform(spec.inputs, -1.0, 1.0);
    let output_min = oracle_min(&network, &domain, DEFAULT_RELU_CAP)?.min;
    let property = PropertyClause::geq(vec![1.0], output_min - spec.margin);
    let expected = if spec.margin > 0.0 { Expected::Unsat } else { Expected::Sat };
    Ok(Instance { seed, spec: *spec, network, property, domain, output_min, expected })
}

/// One manifest entry: an instance name, its seed and shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteEntry {
    pub name: String,
    pub seed: u64,
    #[serde(flatten)]
    pub spec: InstanceSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteManifest {
    pub entries: Vec<SuiteEntry>,
}

/// The desk-scale suite: 2-4 inputs, 2-3 hidden layers, at most 12 ReLUs,
/// margins in `{±0.1, ±1, ±10}`, `count` entries cycling through the shapes.
pub fn desk_suite(count: usize) -> SuiteManifest {
    let shapes = [(2, 2, 3), (3, 2, 4), (4, 2, 5), (2, 3, 3), (3, 3, 4), (4, 2, 6), (2, 2, 6), (3, 3, 3)];
    let margins = [0.1, -0.1, 1.0, -1.0, 10.0, -10.0];
    let entries = (0..count)
        .map(|i| {
            let (inputs, depth, width) = shapes[(i / margins.len()) % shapes.len()];
            let margin = margins[i % margins.len()];
            SuiteEntry {
                name: format!("desk-{i:03}"),
                seed: 1000 + i as u64,
                spec: InstanceSpec { inputs, depth, width, maxpool: false, margin },
            }
        })
        .collect();
    SuiteManifest { entries }
}
