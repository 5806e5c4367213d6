//! Rating interpolation with two user-correlation graphs. Uses the file
//! named by GTNN_MOVIELENS when set, otherwise a small synthetic table.

use gtnn::experiments::{run_movielens, ExperimentConfig, MovielensConfig};

fn main() -> gtnn::Result<()> {
    let mut ml = MovielensConfig { iterations: 150, ridge: vec![0.0, 1e-3], ..MovielensConfig::default() };
    if std::env::var_os("GTNN_MOVIELENS").is_none() {
        ml.synthetic.users = 200;
        ml.synthetic.items = 300;
        ml.synthetic.ratings = 12_000;
    }
    let config = ExperimentConfig { movielens: ml, ..ExperimentConfig::default() };
    let o = run_movielens(&config, None)?;
    println!("{} ratings from {} ({} users, {} items)", o.ratings, o.data_source, o.users, o.items);
    for r in &o.runs {
        println!("{:>8} ridge {:<7} {} params: best test MSE {:.5}", r.model, r.ridge, r.params, r.best.0);
    }
    println!("graph pair {:.5} vs best single graph {:.5}; embedding exact: {}", o.best_tuple, o.best_single, o.embedding_exact);
    Ok(())
}
