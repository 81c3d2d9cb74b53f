mod common;

use common::{random_box, random_net};
use plnn::bab::{bab_optimize, bab_verify, BabConfig, Bounding, Branching, Mode};
use plnn::canon::{canonicalize, PropertyClause};
use plnn::interval::propagate_box;
use plnn::lp::solve;
use plnn::mip::{encode_mip_with_bounds, Encoding};
use plnn::model::{eval_scalar, forward_eval, forward_trace, BoxDomain, Layer, Linear, Network};
use plnn::oracle::{oracle_min, DEFAULT_RELU_CAP};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_xoshiro::SplitMix64;

fn points(rng: &mut SplitMix64, domain: &BoxDomain, count: usize) -> Vec<Vec<f64>> {
    (0..count)
        .map(|_| (0..domain.dim()).map(|j| rng.random_range(domain.lb[j]..=domain.ub[j])).collect())
        .collect()
}

fn random_clause(rng: &mut SplitMix64, width: usize, depth: usize) -> PropertyClause {
    if depth == 0 || rng.random_bool(0.4) {
        let c = (0..width).map(|_| rng.random_range(-1.0..1.0)).collect();
        return PropertyClause::geq(c, rng.random_range(-1.0..1.0));
    }
    let children = (0..rng.random_range(1..=3)).map(|_| random_clause(rng, width, depth - 1)).collect();
    if rng.random_bool(0.5) {
        PropertyClause::Any(children)
    } else {
        PropertyClause::All(children)
    }
}

fn multi_output(seed: u64, inputs: usize, outputs: usize) -> Network {
    let mut rng = SplitMix64::seed_from_u64(seed ^ 0xabcd);
    let head = Linear::new(
        (0..outputs).map(|_| vec![rng.random_range(-2.0..2.0)]).collect(),
        (0..outputs).map(|_| rng.random_range(-0.5..0.5)).collect(),
    )
    .unwrap();
    random_net(seed, inputs, 2, 3).extended([Layer::Relu, Layer::Linear(head)]).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn canonical_output_is_the_property_slack(seed in any::<u64>(), outputs in 1usize..4, depth in 0usize..3) {
        let mut rng = SplitMix64::seed_from_u64(seed);
        let net = multi_output(seed, 2, outputs);
        let prop = random_clause(&mut rng, outputs, depth);
        let domain = BoxDomain::uniform(2, -1.0, 1.0);
        let problem = canonicalize(&net, &prop, &domain).unwrap();
        let lowered = problem.relu_network().unwrap();
        for x in points(&mut rng, &domain, 50) {
            let slack = prop.slack(&forward_eval(&net, &x).unwrap());
            let v = eval_scalar(&problem.canonical_net, &x).unwrap();
            prop_assert!((v - slack).abs() <= 1e-9, "{v} vs {slack}");
            prop_assert!((eval_scalar(&lowered, &x).unwrap() - slack).abs() <= 1e-9);
            if slack.abs() > 1e-9 {
                prop_assert_eq!(v > 0.0, prop.holds_strictly(&forward_eval(&net, &x).unwrap()));
            }
        }
    }

    #[test]
    fn interval_bounds_contain_every_trace(seed in any::<u64>(), inputs in 1usize..5, depth in 1usize..4, width in 1usize..6) {
        let mut rng = SplitMix64::seed_from_u64(seed);
        let net = random_net(seed, inputs, depth, width);
        let domain = random_box(&mut rng, inputs);
        let bounds = propagate_box(&net, &domain);
        for x in points(&mut rng, &domain, 30) {
            for (k, z) in forward_trace(&net, &x).unwrap().iter().enumerate() {
                prop_assert!(bounds.layers[k].contains(z, 1e-9));
            }
        }
    }

    #[test]
    fn oracle_min_is_attained_and_below_samples(seed in any::<u64>(), inputs in 1usize..4, depth in 1usize..3, width in 1usize..5) {
        let mut rng = SplitMix64::seed_from_u64(seed);
        let net = random_net(seed, inputs, depth, width);
        let domain = random_box(&mut rng, inputs);
        let r = oracle_min(&net, &domain, DEFAULT_RELU_CAP).unwrap();
        prop_assert!(domain.contains(&r.argmin, 1e-9));
        prop_assert!((eval_scalar(&net, &r.argmin).unwrap() - r.min).abs() <= 1e-6);
        for x in points(&mut rng, &domain, 200) {
            prop_assert!(eval_scalar(&net, &x).unwrap() >= r.min - 1e-9);
        }
    }

    #[test]
    fn mip_with_true_phases_reproduces_the_network(seed in any::<u64>(), inputs in 1usize..4, depth in 1usize..4, width in 1usize..5) {
        let mut rng = SplitMix64::seed_from_u64(seed);
        let net = random_net(seed, inputs, depth, width);
        let domain = random_box(&mut rng, inputs);
        let bounds = propagate_box(&net, &domain);
        for encoding in [Encoding::Asym, Encoding::Sym] {
            let mip = encode_mip_with_bounds(&net, &bounds, encoding).unwrap();
            for x in points(&mut rng, &domain, 5) {
                let trace = forward_trace(&net, &x).unwrap();
                let mut lp = mip.lp.clone();
                for (j, &v) in mip.inputs.iter().enumerate() {
                    lp.set_bounds(v, x[j], x[j]);
                }
                // Binaries appear in unit order over ambiguous ReLUs.
                let mut next = 0;
                for (k, layer) in net.layers.iter().enumerate() {
                    if !matches!(layer, Layer::Relu) {
                        continue;
                    }
                    let pre = &bounds.layers[k - 1];
                    for (j, &xh) in trace[k - 1].iter().enumerate() {
                        if pre.lb[j] < 0.0 && pre.ub[j] > 0.0 {
                            let d = if xh > 0.0 { 1.0 } else { 0.0 };
                            lp.set_bounds(mip.binaries[next], d, d);
                            next += 1;
                        }
                    }
                }
                prop_assert_eq!(next, mip.binaries.len());
                let sol = solve(&lp).unwrap();
                prop_assert!(sol.is_optimal());
                let y = eval_scalar(&net, &x).unwrap();
                prop_assert!((sol.x[mip.output] - y).abs() <= 1e-6, "{} vs {y}", sol.x[mip.output]);
            }
        }
    }

    #[test]
    fn symmetric_root_is_no_tighter(seed in any::<u64>(), inputs in 1usize..4, depth in 1usize..4, width in 1usize..5) {
        let mut rng = SplitMix64::seed_from_u64(seed);
        let net = random_net(seed, inputs, depth, width);
        let bounds = propagate_box(&net, &random_box(&mut rng, inputs));
        let root = |e| solve(&encode_mip_with_bounds(&net, &bounds, e).unwrap().lp).unwrap().objective;
        prop_assert!(root(Encoding::Sym) <= root(Encoding::Asym) + 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn optimisation_trace_brackets_the_minimum(seed in any::<u64>(), inputs in 1usize..4, width in 2usize..5, branching in 0usize..3) {
        let mut rng = SplitMix64::seed_from_u64(seed);
        let net = random_net(seed, inputs, 2, width);
        let domain = random_box(&mut rng, inputs);
        let problem = canonicalize(&net, &PropertyClause::geq(vec![1.0], 0.0), &domain).unwrap();
        let exact = oracle_min(&net, &domain, DEFAULT_RELU_CAP).unwrap().min;
        let branching = [Branching::InputSmart, Branching::InputLongestEdge, Branching::ReluSplit][branching];
        let config = BabConfig { mode: Mode::Optimize, branching, trace: true, ..BabConfig::default() };
        let result = bab_optimize(&problem, &config).unwrap();
        prop_assert!(!result.trace.is_empty());
        for &(lb, ub) in &result.trace {
            prop_assert!(lb <= exact + 1e-6, "lb {lb} above {exact}");
            prop_assert!(ub >= exact - 1e-9, "ub {ub} below {exact}");
        }
    }

    #[test]
    fn verification_is_deterministic(seed in any::<u64>(), inputs in 1usize..4, width in 2usize..5, b in -1.0f64..1.0) {
        let mut rng = SplitMix64::seed_from_u64(seed);
        let net = random_net(seed, inputs, 2, width);
        let domain = random_box(&mut rng, inputs);
        let problem = canonicalize(&net, &PropertyClause::geq(vec![1.0], b), &domain).unwrap();
        for bounding in [Bounding::PlanetTightened, Bounding::Interval] {
            let config = BabConfig { bounding, seed, ..BabConfig::default() };
            let a = bab_verify(&problem, &config).unwrap();
            let again = bab_verify(&problem, &config).unwrap();
            prop_assert_eq!(&a.status, &again.status);
            prop_assert_eq!(a.nodes_explored, again.nodes_explored);
            let parallel = bab_verify(&problem, &BabConfig { workers: 3, ..config }).unwrap();
            prop_assert_eq!(std::mem::discriminant(&a.status), std::mem::discriminant(&parallel.status));
        }
    }
}
