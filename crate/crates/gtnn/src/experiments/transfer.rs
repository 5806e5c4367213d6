//! Train on template graphs of a smaller size, test on the full graphs.

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{finish_run, AdamConfig, ExperimentConfig, ExperimentKind};
use crate::data::{downsample_experiment, synth_circulant_dataset, CirculantParams};
use crate::error::{Error, Result};
use crate::io::{CsvTable, RunDir, OPDIST_SCHEMA, TRANSFER_BEST_SCHEMA, TRANSFER_SCHEMA};
use crate::network::{expansion_vectors, init_network, train, Architecture, Metric, Network, TrainHistory};
use crate::row;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransferSweepConfig {
    pub n: usize,
    pub p: f64,
    pub l1: usize,
    pub l2: usize,
    pub sigma: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub sizes: Vec<usize>,
    pub degree: usize,
    pub epochs: usize,
    pub init_scale: f64,
    pub adam: AdamConfig,
    /// When set, also trains a stable model per size with this penalty and
    /// targets `target_fraction` times the unconstrained constants.
    pub stable_lambda: Option<f64>,
    pub target_fraction: f64,
}

impl Default for TransferSweepConfig {
    fn default() -> Self {
        let d = CirculantParams::default();
        TransferSweepConfig {
            n: 300,
            p: d.p,
            l1: d.l1,
            l2: d.l2,
            sigma: d.sigma,
            n_train: d.n_train,
            n_test: d.n_test,
            sizes: vec![100, 150, 200, 250, 300],
            degree: 3,
            epochs: 3000,
            init_scale: 15.0,
            adam: AdamConfig::default(),
            stable_lambda: None,
            target_fraction: 0.5,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TransferRun {
    pub model: String,
    pub m: usize,
    pub opdist: Vec<f64>,
    pub net: Network,
    pub history: TrainHistory,
    /// `(best test MSE, epoch)`.
    pub best: (f64, usize),
}

#[derive(Clone, Debug)]
pub struct TransferSweepOutcome {
    pub runs: Vec<TransferRun>,
}

impl TransferSweepOutcome {
    pub fn run(&self, model: &str, m: usize) -> Option<&TransferRun> {
        self.runs.iter().find(|r| r.model == model && r.m == m)
    }

    /// `(m, max_j opdist_j)` in increasing `m`.
    pub fn opdist_by_size(&self) -> Vec<(usize, f64)> {
        let mut v: Vec<(usize, f64)> = self
            .runs
            .iter()
            .filter(|r| r.model == "gtnn")
            .map(|r| (r.m, r.opdist.iter().copied().fold(0.0, f64::max)))
            .collect();
        v.sort_by_key(|x| x.0);
        v
    }
}

fn best(h: &TrainHistory) -> (f64, usize) {
    h.records
        .iter()
        .filter_map(|r| r.test_metric.map(|v| (v, r.epoch)))
        .fold((f64::INFINITY, 0), |acc, x| if x.0 < acc.0 { x } else { acc })
}

/// For each size `m`, trains a one-layer network on the `m`-vertex
/// templates of the graphons induced by the `n`-vertex circulant graphs
/// (with downsampled training signals) and records its test MSE on the
/// original graphs after every epoch.
pub fn run_transfer_sweep(config: &ExperimentConfig, out: Option<&std::path::Path>) -> Result<TransferSweepOutcome> {
    config.check_kind(ExperimentKind::TransferSweep)?;
    let cfg = &config.transfer_sweep;
    if cfg.sizes.is_empty() || cfg.sizes.iter().any(|&m| m == 0 || m > cfg.n) {
        return Err(Error::Config(format!("sizes must lie in 1..={}", cfg.n)));
    }
    let params = CirculantParams {
        n: cfg.n,
        p: cfg.p,
        l1: cfg.l1,
        l2: cfg.l2,
        sigma: cfg.sigma,
        n_train: cfg.n_train,
        n_test: cfg.n_test,
        seed: config.seed,
    };
    let (data, full) = synth_circulant_dataset(&params).map_err(|e| match e {
        Error::InvalidArgument(m) => Error::Config(m),
        e => e,
    })?;
    let arch = Architecture::new(2, cfg.degree, vec![1, 1]);
    let mut tc = cfg.adam.train_config(cfg.epochs, config.seed, cfg.init_scale);
    tc.metric = Metric::Mse;
    let mut runs = Vec::new();
    for &m in &cfg.sizes {
        let down = downsample_experiment(full.ops(), &data.train, m)?;
        let net = init_network(&arch, cfg.init_scale, config.seed)?;
        let (net, history) = train(net, &down.tuple, &down.train, Some((&full, &data.test)), &tc)?;
        let b = best(&history);
        let (c, cj) = expansion_vectors(&net);
        runs.push(TransferRun {
            model: "gtnn".into(),
            m,
            opdist: down.opdist.clone(),
            net,
            history,
            best: b,
        });
        if let Some(lambda) = cfg.stable_lambda {
            let f = cfg.target_fraction;
            let mut st = tc.clone();
            st.lambda = lambda;
            st.c_total_targets = Some(c.iter().map(|v| v * f).collect());
            st.c_per_var_targets = Some(cj.iter().map(|r| r.iter().map(|v| v * f).collect()).collect());
            let net = init_network(&arch, cfg.init_scale, config.seed)?;
            let (net, history) = train(net, &down.tuple, &down.train, Some((&full, &data.test)), &st)?;
            let b = best(&history);
            runs.push(TransferRun {
                model: "stable".into(),
                m,
                opdist: down.opdist,
                net,
                history,
                best: b,
            });
        }
    }
    let outcome = TransferSweepOutcome { runs };
    if let Some(out) = out {
        let mut run = RunDir::begin(out)?;
        let mut mse = CsvTable::new(TRANSFER_SCHEMA);
        let mut od = CsvTable::new(OPDIST_SCHEMA);
        let mut bt = CsvTable::new(TRANSFER_BEST_SCHEMA);
        for r in &outcome.runs {
            for rec in &r.history.records {
                mse.push(row![r.model, r.m, rec.epoch, rec.train_loss, super::fmt_opt(rec.test_metric)])?;
            }
            if r.model == "gtnn" {
                od.push(row![r.m, r.opdist[0], r.opdist[1], r.opdist.iter().copied().fold(0.0, f64::max)])?;
            }
            bt.push(row![r.model, r.m, r.best.0, r.best.1])?;
            run.model(&format!("model_{}_m{}.json", r.model, r.m), &r.net)?;
        }
        run.csv("transfer_mse.csv", &mse)?;
        run.csv("opdist.csv", &od)?;
        run.csv("best.csv", &bt)?;
        let results = json!({
            "best": outcome.runs.iter().map(|r| json!({"model": r.model, "m": r.m, "best_test_mse": r.best.0, "best_epoch": r.best.1})).collect::<Vec<_>>(),
        });
        finish_run(run, ExperimentKind::TransferSweep, config, results)?;
    }
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        ExperimentConfig {
            transfer_sweep: TransferSweepConfig {
                n: 24,
                l2: 5,
                n_train: 20,
                n_test: 10,
                sizes: vec![6, 12, 24],
                epochs: 30,
                stable_lambda: Some(10.0),
                ..TransferSweepConfig::default()
            },
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn full_size_run_matches_direct_training() {
        let o = run_transfer_sweep(&small(), None).unwrap();
        assert_eq!(o.runs.len(), 6);
        let full = o.run("gtnn", 24).unwrap();
        assert!(full.opdist.iter().all(|&d| d < 1e-12));
        let cfg = &small().transfer_sweep;
        let (data, t) = synth_circulant_dataset(&CirculantParams { n: 24, l2: 5, n_train: 20, n_test: 10, ..CirculantParams::default() }).unwrap();
        let arch = Architecture::new(2, 3, vec![1, 1]);
        let net = init_network(&arch, cfg.init_scale, 0).unwrap();
        let tc = cfg.adam.train_config(cfg.epochs, 0, cfg.init_scale);
        let (net, h) = train(net, &t, &data.train, Some((&t, &data.test)), &tc).unwrap();
        assert_eq!(net, full.net);
        assert_eq!(h, full.history);
        let od = o.opdist_by_size();
        assert_eq!(od.last().unwrap(), &(24, 0.0));
        assert!(od[..2].iter().all(|&(_, d)| d > 0.0));
    }

    #[test]
    fn bad_sizes_are_config_errors() {
        let mut c = small();
        c.transfer_sweep.sizes = vec![30];
        assert!(matches!(run_transfer_sweep(&c, None), Err(Error::Config(_))));
    }
}
