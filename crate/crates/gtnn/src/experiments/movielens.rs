//! Rating interpolation on user-correlation graphs: a two-operator network
//! against single-operator networks with the same number of coefficients.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{finish_run, sub_seed, AdamConfig, ExperimentConfig, ExperimentKind};
use crate::data::{center_ratings, correlation_graph, load_movielens, movie_samples, synthetic_ratings, RatingsTable, SyntheticRatingsParams};
use crate::error::{Error, Result};
use crate::io::{CsvTable, RunDir, MOVIELENS_SCHEMA, MOVIELENS_SUMMARY_SCHEMA};
use crate::linop::OperatorTuple;
use crate::ncpoly::Word;
use crate::network::{init_network, train, Architecture, Metric, Network, Samples, TrainHistory};
use crate::row;

/// Environment variable naming a `u.data` file; used when the config has
/// no `data_path`.
pub const MOVIELENS_ENV: &str = "GTNN_MOVIELENS";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MovielensConfig {
    pub data_path: Option<PathBuf>,
    /// Without a data file, generate ratings of the same shape instead of
    /// failing.
    pub allow_synthetic: bool,
    pub synthetic: SyntheticRatingsParams,
    /// Neighbourhood sizes of the two correlation graphs.
    pub knn: [usize; 2],
    pub min_overlap: usize,
    pub observed_fraction: f64,
    pub train_fraction: f64,
    pub iterations: usize,
    pub ridge: Vec<f64>,
    pub init_scale: f64,
    pub adam: AdamConfig,
}

impl Default for MovielensConfig {
    fn default() -> Self {
        MovielensConfig {
            data_path: None,
            allow_synthetic: true,
            synthetic: SyntheticRatingsParams::default(),
            knn: [10, 15],
            min_overlap: 5,
            observed_fraction: 0.5,
            train_fraction: 0.8,
            iterations: 500,
            ridge: vec![0.0, 1e-4, 1e-3, 1e-2],
            init_scale: 1.0,
            adam: AdamConfig::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct MovielensRun {
    pub model: String,
    pub ridge: f64,
    pub params: usize,
    pub net: Network,
    pub history: TrainHistory,
    /// `(best test MSE, iteration)`.
    pub best: (f64, usize),
}

#[derive(Clone, Debug)]
pub struct MovielensOutcome {
    /// `"file:<path>"` or `"synthetic"`.
    pub data_source: String,
    pub users: usize,
    pub items: usize,
    pub ratings: usize,
    pub runs: Vec<MovielensRun>,
    /// Best two-operator test MSE over all ridge values.
    pub best_tuple: f64,
    /// Best single-operator test MSE over both graphs and all ridge values.
    pub best_single: f64,
    pub comparison_holds: bool,
    /// The two-operator network restricted to one variable reproduced each
    /// single-operator trajectory bit for bit.
    pub embedding_exact: bool,
}

fn resolve_data(cfg: &MovielensConfig, seed: u64) -> Result<(RatingsTable, String)> {
    let path = cfg.data_path.clone().or_else(|| std::env::var_os(MOVIELENS_ENV).map(PathBuf::from));
    match path {
        Some(p) => {
            if !p.is_file() {
                return Err(Error::Data(format!("ratings file {} not found", p.display())));
            }
            Ok((load_movielens(&p)?, format!("file:{}", p.display())))
        }
        None if cfg.allow_synthetic => {
            let params = SyntheticRatingsParams {
                seed: sub_seed(seed, 7),
                ..cfg.synthetic.clone()
            };
            Ok((synthetic_ratings(&params)?, "synthetic".into()))
        }
        None => Err(Error::Data(format!("no ratings file: set data_path or {MOVIELENS_ENV}"))),
    }
}

fn best(h: &TrainHistory) -> (f64, usize) {
    h.records
        .iter()
        .filter_map(|r| r.test_metric.map(|v| (v, r.epoch)))
        .fold((f64::INFINITY, 0), |acc, x| if x.0 < acc.0 { x } else { acc })
}

struct Fit<'a> {
    cfg: &'a MovielensConfig,
    seed: u64,
    train: &'a Samples,
    test: &'a Samples,
}

impl Fit<'_> {
    fn run(&self, arch: &Architecture, t: &OperatorTuple, ridge: f64) -> Result<(Network, TrainHistory)> {
        let net = init_network(arch, self.cfg.init_scale, self.seed)?;
        let mut tc = self.cfg.adam.train_config(self.cfg.iterations, self.seed, self.cfg.init_scale);
        tc.metric = Metric::Mse;
        tc.ridge = ridge;
        train(net, t, self.train, Some((t, self.test)), &tc)
    }
}

/// Builds the two correlation graphs, trains the two-operator network and
/// the single-operator networks for every ridge value, and checks that the
/// two-operator network restricted to one variable retraces the
/// single-operator run exactly.
pub fn run_movielens(config: &ExperimentConfig, out: Option<&Path>) -> Result<MovielensOutcome> {
    config.check_kind(ExperimentKind::Movielens)?;
    let cfg = &config.movielens;
    if cfg.iterations == 0 || cfg.ridge.is_empty() || cfg.ridge.iter().any(|r| !(*r >= 0.0)) {
        return Err(Error::Config("need iterations > 0 and nonnegative ridge values".into()));
    }
    if cfg.knn.contains(&0) {
        return Err(Error::Config("knn must be positive".into()));
    }
    let seed = config.seed;
    let (table, data_source) = resolve_data(cfg, seed)?;
    let dev = center_ratings(&table);
    let g1 = correlation_graph(&table, cfg.knn[0], cfg.min_overlap)?;
    let g2 = correlation_graph(&table, cfg.knn[1], cfg.min_overlap)?;
    let (data, split) = movie_samples(&dev, cfg.observed_fraction, cfg.train_fraction, sub_seed(seed, 3))?;
    let pair = OperatorTuple::certified(vec![g1.shift.clone(), g2.shift.clone()])?;
    let single = [
        OperatorTuple::certified(vec![g1.shift])?,
        OperatorTuple::certified(vec![g2.shift])?,
    ];
    let fit = Fit {
        cfg,
        seed,
        train: &data.train,
        test: &data.test,
    };
    let tuple_arch = Architecture::new(2, 2, vec![1, 1]);
    let single_arch = Architecture::new(1, 6, vec![1, 1]);
    let mut runs = Vec::new();
    for &ridge in &cfg.ridge {
        let (net, history) = fit.run(&tuple_arch, &pair, ridge)?;
        runs.push(MovielensRun { model: "2onn".into(), ridge, params: net.param_count(), best: best(&history), net, history });
        for (j, t) in single.iter().enumerate() {
            let (net, history) = fit.run(&single_arch, t, ridge)?;
            runs.push(MovielensRun {
                model: format!("gnn_k{}", cfg.knn[j]),
                ridge,
                params: net.param_count(),
                best: best(&history),
                net,
                history,
            });
        }
    }

    // A two-variable network supported on the powers of one letter is the
    // single-operator network in disguise.
    let mut embedding_exact = true;
    for letter in 1..=2u16 {
        let basis: Vec<Word> = (0..=6).map(|d| Word::from_letters(vec![letter; d])).collect();
        let arch = Architecture::new(2, 6, vec![1, 1]).with_basis(basis);
        let (_, h) = fit.run(&arch, &pair, 0.0)?;
        let (_, reference) = fit.run(&single_arch, &single[letter as usize - 1], 0.0)?;
        let same = h.records.len() == reference.records.len()
            && h.records.iter().zip(&reference.records).all(|(a, b)| {
                a.train_loss.to_bits() == b.train_loss.to_bits()
                    && a.test_metric.map(f64::to_bits) == b.test_metric.map(f64::to_bits)
            });
        embedding_exact &= same;
    }

    let best_of = |pred: &dyn Fn(&MovielensRun) -> bool| runs.iter().filter(|r| pred(r)).map(|r| r.best.0).fold(f64::INFINITY, f64::min);
    let best_tuple = best_of(&|r| r.model == "2onn");
    let best_single = best_of(&|r| r.model != "2onn");
    let outcome = MovielensOutcome {
        data_source,
        users: table.users().len(),
        items: table.items().len(),
        ratings: table.len(),
        comparison_holds: best_tuple <= best_single,
        embedding_exact,
        best_tuple,
        best_single,
        runs,
    };
    if let Some(out) = out {
        let mut run = RunDir::begin(out)?;
        let mut mse = CsvTable::new(MOVIELENS_SCHEMA);
        let mut summary = CsvTable::new(MOVIELENS_SUMMARY_SCHEMA);
        for r in &outcome.runs {
            for rec in &r.history.records {
                mse.push(row![r.model, r.ridge, rec.epoch, rec.train_loss, super::fmt_opt(rec.test_metric)])?;
            }
            summary.push(row![r.model, r.ridge, r.params, r.best.0, r.best.1])?;
            run.model(&format!("model_{}_ridge{}.json", r.model, r.ridge), &r.net)?;
        }
        run.csv("movielens_mse.csv", &mse)?;
        run.csv("movielens_summary.csv", &summary)?;
        run.json("graphs.json", &crate::io::graphs_to_json(pair.ops()))?;
        let results = json!({
            "data_source": outcome.data_source,
            "users": outcome.users,
            "items": outcome.items,
            "ratings": outcome.ratings,
            "isolated_users": [g1.isolated.len(), g2.isolated.len()],
            "train_movies": split.train_items.len(),
            "test_movies": split.test_items.len(),
            "dropped_movies": split.dropped_items.len(),
            "best_2onn_test_mse": outcome.best_tuple,
            "best_single_test_mse": outcome.best_single,
            "comparison_holds": outcome.comparison_holds,
            "embedding_exact": outcome.embedding_exact,
        });
        run.json("summary.json", &results)?;
        finish_run(run, ExperimentKind::Movielens, config, results)?;
    }
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        ExperimentConfig {
            movielens: MovielensConfig {
                synthetic: SyntheticRatingsParams {
                    users: 60,
                    items: 80,
                    ratings: 1800,
                    min_per_user: 10,
                    ..SyntheticRatingsParams::default()
                },
                knn: [4, 6],
                min_overlap: 3,
                iterations: 15,
                ridge: vec![0.0, 1e-3],
                ..MovielensConfig::default()
            },
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn synthetic_pipeline_runs_and_embeds() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("ml");
        let o = run_movielens(&small(), Some(&out)).unwrap();
        assert_eq!(o.data_source, "synthetic");
        assert_eq!(o.runs.len(), 6);
        assert!(o.runs.iter().all(|r| r.params == 7 && r.history.len() == 15));
        assert!(o.embedding_exact);
        let t = CsvTable::read(&out.join("movielens_mse.csv"), MOVIELENS_SCHEMA).unwrap();
        assert_eq!(t.rows.len(), 6 * 15);
    }

    #[test]
    fn missing_file_is_a_data_error() {
        let mut c = small();
        c.movielens.data_path = Some(PathBuf::from("/nonexistent/u.data"));
        assert!(matches!(run_movielens(&c, None), Err(Error::Data(_))));
    }
}
