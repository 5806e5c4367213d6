//! Perturbation bounds: a random two-layer network on a normalized graph
//! pair versus a perturbed pair, with the measured output change.

use gtnn::linop::{MultiSignal, OperatorTuple, SymOperator};
use gtnn::network::{init_network, Architecture};
use gtnn::stability::{network_bound, perturbed_tuple};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> gtnn::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let n = 30;
    let ops = (0..2)
        .map(|_| SymOperator::from_fn(n, |i, j| (((i * 31 + j * 17) ^ (i * 17 + j * 31)) % 7) as f64 / 7.0))
        .collect::<gtnn::Result<Vec<_>>>()?;
    let t = OperatorTuple::normalized(ops)?;
    let net = init_network(&Architecture::new(2, 2, vec![1, 3, 1]), 1.0, 1)?;
    let f = MultiSignal::new(Array2::from_shape_fn((n, 1), |_| rng.random::<f64>()), 1.0)?;

    println!("{:>6} {:>12} {:>12} {:>12}", "size", "empirical", "bound", "simplified");
    for size in [0.0, 0.05, 0.1, 0.2, 0.4] {
        let u = perturbed_tuple(&t, size, &mut rng)?;
        let r = network_bound(&net, &t, &u, &f, &f)?;
        let simplified = r.simplified_bound.map_or("-".to_string(), |s| format!("{s:.5}"));
        println!("{size:>6.2} {:>12.5} {:>12.5} {simplified:>12}", r.empirical, r.bound);
    }
    Ok(())
}
