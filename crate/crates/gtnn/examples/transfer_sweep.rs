//! Training on small template graphs and testing on the full graphs, at a
//! reduced scale. Writes CSV results to a temporary directory.

use gtnn::experiments::{run_transfer_sweep, ExperimentConfig, TransferSweepConfig};

fn main() -> gtnn::Result<()> {
    let config = ExperimentConfig {
        transfer_sweep: TransferSweepConfig {
            n: 120,
            l2: 12,
            n_train: 200,
            n_test: 100,
            sizes: vec![30, 60, 120],
            epochs: 400,
            ..TransferSweepConfig::default()
        },
        ..ExperimentConfig::default()
    };
    let out = std::env::temp_dir().join("gtnn_transfer_example");
    let o = run_transfer_sweep(&config, Some(&out))?;
    for (m, d) in o.opdist_by_size() {
        let r = o.run("gtnn", m).expect("run per size");
        println!("m={m:>4}: op distance {d:.5}, best test MSE {:.5} at epoch {}", r.best.0, r.best.1);
    }
    println!("results in {}", out.display());
    Ok(())
}
