//! Regression of a non-commutative filter on two circulant graphs, with an
//! unconstrained and a stability-penalized one-layer network. Reduced size
//! and epochs; the `synth-stability` command runs the full setup.

use gtnn::data::{synth_circulant_dataset, CirculantParams};
use gtnn::network::{expansion_vectors, init_network, train, Architecture, Metric, TrainConfig};

fn main() -> gtnn::Result<()> {
    let params = CirculantParams { n: 101, l2: 10, n_train: 300, n_test: 100, ..CirculantParams::default() };
    let (data, t) = synth_circulant_dataset(&params)?;
    let arch = Architecture::new(2, 3, vec![1, 1]);
    let mut tc = TrainConfig { epochs: 1500, init_scale: 15.0, metric: Metric::RSquared, ..TrainConfig::default() };

    let (free, h) = train(init_network(&arch, 15.0, 0)?, &t, &data.train, Some((&t, &data.test)), &tc)?;
    let (c, cj) = expansion_vectors(&free);
    println!("unconstrained: test R2 {:.4}, C {:.3}, C_j {:?}", h.records.last().unwrap().test_metric.unwrap(), c[0], cj);

    tc.lambda = 10.0;
    tc.c_total_targets = Some(c.iter().map(|v| v / 2.0).collect());
    tc.c_per_var_targets = Some(cj.iter().map(|r| r.iter().map(|v| v / 2.0).collect()).collect());
    let (stable, h) = train(init_network(&arch, 15.0, 0)?, &t, &data.train, Some((&t, &data.test)), &tc)?;
    let (c, cj) = expansion_vectors(&stable);
    println!("stable:        test R2 {:.4}, C {:.3}, C_j {:?}", h.records.last().unwrap().test_metric.unwrap(), c[0], cj);
    Ok(())
}
