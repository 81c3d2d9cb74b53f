#![allow(dead_code)]

use plnn::gensuite::{random_network, InstanceSpec};
use plnn::lp::{LpModel, Relation};
use plnn::model::{BoxDomain, Network};
use rand::Rng;
use rand_xoshiro::SplitMix64;

/// Small LP with integer-valued box bounds and mixed row relations.
pub fn random_lp(rng: &mut SplitMix64) -> LpModel {
    let n = rng.random_range(1..=6);
    let rows = rng.random_range(0..=8);
    let integer = rng.random_bool(0.5);
    let coef = |rng: &mut SplitMix64| {
        if integer {
            rng.random_range(-3i32..=3) as f64
        } else {
            rng.random_range(-2.0..2.0)
        }
    };
    let mut m = LpModel::new();
    for _ in 0..n {
        let lo = rng.random_range(-3i32..=1) as f64;
        let hi = lo + rng.random_range(0i32..=4) as f64;
        m.add_var(lo, hi);
    }
    for _ in 0..rows {
        let mut coeffs = Vec::new();
        for j in 0..n {
            if rng.random_bool(0.7) {
                coeffs.push((j, coef(rng)));
            }
        }
        let relation = match rng.random_range(0..5) {
            0 => Relation::Eq,
            1 | 2 => Relation::Le,
            _ => Relation::Ge,
        };
        let rhs = coef(rng);
        m.add_row(coeffs, relation, rhs);
    }
    let obj: Vec<(usize, f64)> = (0..n).map(|j| (j, coef(rng))).collect();
    m.set_objective(&obj);
    m
}

/// Scalar-output ReLU network with `depth` hidden layers of `width` units.
pub fn random_net(seed: u64, inputs: usize, depth: usize, width: usize) -> Network {
    random_network(seed, &InstanceSpec { inputs, depth, width, maxpool: false, margin: 1.0 })
}

/// Random non-degenerate sub-box of `[-1, 1]^n`.
pub fn random_box(rng: &mut SplitMix64, n: usize) -> BoxDomain {
    let mut lb = Vec::with_capacity(n);
    let mut ub = Vec::with_capacity(n);
    for _ in 0..n {
        let a: f64 = rng.random_range(-1.0..1.0);
        let b: f64 = rng.random_range(-1.0..1.0);
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        lb.push(lo);
        ub.push(hi.max(lo + 1e-3));
    }
    BoxDomain::new(lb, ub).unwrap()
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}
