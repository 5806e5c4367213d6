//! Property tests of the norm inequalities, the network identity and the
//! gradient, on small random instances.

use gtnn::graphon::{network_identity_gap, PiecewiseSignal};
use gtnn::linop::{block_norm, box_distance, box_norm, eval_filter, MultiSignal, OperatorTuple, SymOperator};
use gtnn::ncpoly::{enumerate_basis, NCPoly, Word};
use gtnn::network::{
    backward, forward, init_network, mse_loss, Activation, Architecture, Network,
};
use gtnn::stability::{layer_terms, network_bound, perturbed_tuple};
use ndarray::Array2;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn sym(n: usize, vals: &[f64]) -> SymOperator {
    SymOperator::from_fn(n, |i, j| {
        let (a, b) = if i <= j { (i, j) } else { (j, i) };
        vals[(a * n + b) % vals.len()]
    })
    .unwrap()
}

fn poly(k: usize, d: usize, coeffs: &[f64]) -> NCPoly {
    let terms = enumerate_basis(k, d).into_iter().zip(coeffs.iter().copied().cycle());
    NCPoly::from_terms(k, terms).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn expansion_constants_are_submultiplicative(
        k in 1usize..=3,
        d1 in 0usize..=2,
        d2 in 0usize..=2,
        c1 in prop::collection::vec(-2.0f64..2.0, 1..8),
        c2 in prop::collection::vec(-2.0f64..2.0, 1..8),
    ) {
        let (p, q) = (poly(k, d1, &c1), poly(k, d2, &c2));
        let (cp, cq, cpq) = (p.expansion_constants(), q.expansion_constants(), p.multiply(&q).unwrap().expansion_constants());
        prop_assert!(cpq.c_total <= cp.c_total * cq.c_total * (1.0 + 1e-12) + 1e-12);
        for j in 0..k {
            let rhs = cp.c_per_var[j] * cq.c_total + cp.c_total * cq.c_per_var[j];
            prop_assert!(cpq.c_per_var[j] <= rhs * (1.0 + 1e-12) + 1e-12);
        }
    }

    #[test]
    fn relu_is_a_box_contraction(
        x in prop::collection::vec(-3.0f64..3.0, 12),
        y in prop::collection::vec(-3.0f64..3.0, 12),
    ) {
        let a = MultiSignal::new(Array2::from_shape_vec((6, 2), x).unwrap(), 0.5).unwrap();
        let b = MultiSignal::new(Array2::from_shape_vec((6, 2), y).unwrap(), 0.5).unwrap();
        prop_assert!(box_distance(&a.relu(), &b.relu()).unwrap() <= box_distance(&a, &b).unwrap() + 1e-15);
        prop_assert!(box_norm(&a.relu()) <= box_norm(&a) + 1e-15);
    }

    #[test]
    fn block_norm_bounds_filter_gain(
        vals in prop::collection::vec(-1.0f64..1.0, 6..20),
        coeffs in prop::collection::vec(-1.0f64..1.0, 4..10),
        x in prop::collection::vec(-1.0f64..1.0, 10),
    ) {
        let n = 5;
        let t = OperatorTuple::normalized(vec![sym(n, &vals), sym(n, &vals[1..])]).unwrap();
        let h = vec![
            vec![poly(2, 2, &coeffs), poly(2, 1, &coeffs[1..])],
            vec![poly(2, 1, &coeffs[2..]), poly(2, 2, &coeffs[3..])],
        ];
        let blocks: Vec<Vec<Array2<f64>>> = h.iter().map(|r| r.iter().map(|p| gtnn::linop::poly_matrix(p, &t).unwrap()).collect()).collect();
        let norm = block_norm(&blocks).unwrap();
        let xs = MultiSignal::new(Array2::from_shape_vec((n, 2), x).unwrap(), 1.0).unwrap();
        let y = eval_filter(&h, &t, &xs).unwrap();
        prop_assert!(box_norm(&y) <= norm * box_norm(&xs) * (1.0 + 1e-9) + 1e-12);
        // The expansion constants dominate the block norm on nonexpansive tuples.
        let c_bound = h.iter().map(|r| r.iter().map(|p| p.expansion_constants().c_total).sum::<f64>()).fold(0.0, f64::max);
        prop_assert!(norm <= c_bound * (1.0 + 1e-9) + 1e-12);
    }

    #[test]
    fn induced_graphon_identity_holds(
        seed in 0u64..1000,
        n in 1usize..=12,
        r in 1usize..=12,
        vals in prop::collection::vec(0.0f64..1.0, 5..30),
        f in prop::collection::vec(-1.0f64..1.0, 12),
    ) {
        let words = enumerate_basis(2, 2).into_iter().filter(|w| !w.is_empty()).collect();
        let net = init_network(&Architecture::new(2, 2, vec![1, 2, 1]).with_basis(words), 2.0, seed).unwrap();
        let gs = vec![sym(n, &vals), sym(n, &vals[2..])];
        let signal = PiecewiseSignal::new(Array2::from_shape_vec((r, 1), f[..r].to_vec()).unwrap()).unwrap();
        prop_assert!(network_identity_gap(&net, &gs, &signal).unwrap() <= 1e-10);
    }
}

fn small_tuple(seed: u64, n: usize) -> OperatorTuple {
    let ops = (0..2)
        .map(|k| SymOperator::from_fn(n, |i, j| (((i + j + k) as u64 * 2654435761 + seed) % 97) as f64 / 97.0 - 0.5).unwrap())
        .collect();
    OperatorTuple::normalized(ops).unwrap()
}

#[test]
fn bound_is_monotone_in_operator_distance() {
    let net = init_network(&Architecture::new(2, 3, vec![1, 2, 1]), 3.0, 5).unwrap();
    for layer in net.layers() {
        let mut last = (0.0, 0.0);
        for s in [0.0, 0.01, 0.1, 0.3, 1.0] {
            let terms = layer_terms(layer, 2, 0.2, 1.0, &[s, s / 2.0]).unwrap();
            assert!(terms.0 >= last.0 && terms.1 >= last.1);
            last = terms;
        }
    }
    let t = small_tuple(1, 10);
    let f = MultiSignal::new(Array2::from_elem((10, 1), 0.3), 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for size in [0.05, 0.2, 0.5] {
        let u = perturbed_tuple(&t, size, &mut rng).unwrap();
        let r = network_bound(&net, &t, &u, &f, &f).unwrap();
        assert!(r.empirical <= r.bound * (1.0 + 1e-9));
    }
}

#[test]
fn one_letter_network_equals_single_operator_network() {
    // A two-operator network whose words use only X1 computes the
    // single-operator network on T1.
    let t = small_tuple(3, 8);
    let single_t = OperatorTuple::certified(vec![t.ops()[0].clone()]).unwrap();
    let words: Vec<Word> = (0..=3).map(|d| Word::from_letters(vec![1u16; d])).collect();
    let single = init_network(&Architecture::new(1, 3, vec![1, 2, 1]), 1.0, 9).unwrap();
    let pair = {
        let mut net = Network::zeros(&Architecture::new(2, 3, vec![1, 2, 1]).with_basis(words)).unwrap();
        net.set_params(&single.params()).unwrap();
        net
    };
    let x = MultiSignal::new(Array2::from_shape_fn((8, 1), |(i, _)| (i as f64).cos()), 1.0).unwrap();
    let (a, _) = forward(&single, &single_t, &x).unwrap();
    let (b, _) = forward(&pair, &t, &x).unwrap();
    assert_eq!(a.values, b.values);
}

#[test]
fn gradient_matches_central_differences() {
    let t = small_tuple(7, 6);
    for seed in 0..5 {
        let mut arch = Architecture::new(2, 2, vec![1, 2, 1]);
        if seed % 2 == 1 {
            arch = arch.with_final_activation(Activation::Relu);
        }
        let net = init_network(&arch, 1.5, seed).unwrap();
        let x = MultiSignal::new(Array2::from_shape_fn((6, 1), |(i, _)| 0.3 + 0.1 * i as f64), 1.0).unwrap();
        let y = MultiSignal::new(Array2::from_shape_fn((6, 1), |(i, _)| (i as f64).sin()), 1.0).unwrap();
        let (out, cache) = forward(&net, &t, &x).unwrap();
        let (_, dy) = mse_loss(&out, &y, None).unwrap();
        let g = backward(&net, &t, &cache, &dy).unwrap();
        let loss = |p: &[f64]| {
            let mut m = net.clone();
            m.set_params(p).unwrap();
            mse_loss(&forward(&m, &t, &x).unwrap().0, &y, None).unwrap().0
        };
        let p = net.params();
        for i in 0..p.len() {
            let (mut a, mut b) = (p.clone(), p.clone());
            a[i] += 1e-6;
            b[i] -= 1e-6;
            let fd = (loss(&a) - loss(&b)) / 2e-6;
            assert!((fd - g[i]).abs() <= 1e-5 * fd.abs().max(g[i].abs()).max(1e-3), "seed {seed} param {i}: {fd} vs {}", g[i]);
        }
    }
}
