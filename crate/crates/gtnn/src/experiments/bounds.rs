//! Perturbation bounds of a saved model on saved graphs.

use std::path::PathBuf;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{finish_run, sub_seed, ExperimentConfig, ExperimentKind};
use crate::error::{Error, Result};
use crate::io::{load_graphs, load_model, CsvTable, RunDir, REPORT_SCHEMA};
use crate::linop::{MultiSignal, OperatorTuple, SymOperator};
use crate::row;
use crate::stability::{network_bound, perturbed_tuple, PerturbationReport};

/// Relative slack allowed when asserting `empirical <= bound`.
pub const BOUND_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundsReportConfig {
    pub model: Option<PathBuf>,
    pub graphs: Option<PathBuf>,
    /// Second graph tuple; when absent the graphs are perturbed by random
    /// symmetric matrices of spectral norm `perturbation_size`.
    pub perturbed_graphs: Option<PathBuf>,
    pub perturbation_size: f64,
    /// Number of random input signals with `U[0, 1]` entries.
    pub samples: usize,
    /// Standard deviation of Gaussian noise added to the perturbed input.
    pub input_noise: f64,
    /// Rescale graphs to spectral norm at most one instead of requiring it.
    pub normalize: bool,
}

impl Default for BoundsReportConfig {
    fn default() -> Self {
        BoundsReportConfig {
            model: None,
            graphs: None,
            perturbed_graphs: None,
            perturbation_size: 0.1,
            samples: 10,
            input_noise: 0.0,
            normalize: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundsRow {
    pub sample: usize,
    pub report: PerturbationReport,
}

#[derive(Clone, Debug)]
pub struct BoundsReportOutcome {
    pub rows: Vec<BoundsRow>,
    pub opdist: Vec<f64>,
}

fn tuple(ops: Vec<SymOperator>, normalize: bool, what: &str) -> Result<OperatorTuple> {
    if normalize {
        OperatorTuple::normalized(ops)
    } else {
        OperatorTuple::certified(ops).map_err(|e| match e {
            Error::NotCertified => Error::Data(format!("{what} are not nonexpansive; set normalize to rescale them")),
            e => e,
        })
    }
}

/// Evaluates the perturbation bound of a saved model for random input
/// pairs on two graph tuples, failing if any measured perturbation exceeds
/// its bound.
pub fn run_bounds_report(config: &ExperimentConfig, out: Option<&std::path::Path>) -> Result<BoundsReportOutcome> {
    config.check_kind(ExperimentKind::BoundsReport)?;
    let cfg = &config.bounds_report;
    let model = cfg.model.as_ref().ok_or_else(|| Error::Config("bounds_report.model is required".into()))?;
    let graphs = cfg.graphs.as_ref().ok_or_else(|| Error::Config("bounds_report.graphs is required".into()))?;
    if cfg.samples == 0 || !(cfg.input_noise >= 0.0) || !(cfg.perturbation_size >= 0.0) {
        return Err(Error::Config("need samples > 0 and nonnegative noise and perturbation size".into()));
    }
    let net = load_model(model)?;
    let t = tuple(load_graphs(graphs)?, cfg.normalize, "graphs")?;
    if t.arity() != net.arity() {
        return Err(Error::Data(format!("model has arity {} but {} graphs were given", net.arity(), t.arity())));
    }
    let u = match &cfg.perturbed_graphs {
        Some(p) => {
            let u = tuple(load_graphs(p)?, cfg.normalize, "perturbed graphs")?;
            if u.arity() != t.arity() || u.dim() != t.dim() {
                return Err(Error::Data("perturbed graphs differ in number or size from the graphs".into()));
            }
            u
        }
        None => perturbed_tuple(&t, cfg.perturbation_size, &mut ChaCha8Rng::seed_from_u64(sub_seed(config.seed, 1)))?,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(config.seed, 2));
    let noise = Normal::new(0.0, cfg.input_noise).map_err(|e| Error::Config(e.to_string()))?;
    let (n, a) = (t.dim(), net.layers()[0].in_features());
    let mut rows = Vec::with_capacity(cfg.samples);
    for sample in 0..cfg.samples {
        let f = Array2::from_shape_simple_fn((n, a), || rng.random::<f64>());
        let g = if cfg.input_noise > 0.0 { f.mapv(|v| v + noise.sample(&mut rng)) } else { f.clone() };
        let report = network_bound(&net, &t, &u, &MultiSignal::new(f, 1.0)?, &MultiSignal::new(g, 1.0)?)?;
        if report.empirical > report.bound + BOUND_TOLERANCE * report.bound.max(1.0) {
            return Err(Error::BoundViolation {
                sample,
                empirical: report.empirical,
                bound: report.bound,
            });
        }
        rows.push(BoundsRow { sample, report });
    }
    let opdist = rows[0].report.opdist.clone();
    let outcome = BoundsReportOutcome { rows, opdist };
    if let Some(out) = out {
        let mut run = RunDir::begin(out)?;
        let mut csv = CsvTable::new(REPORT_SCHEMA);
        for r in &outcome.rows {
            let p = &r.report;
            csv.push(row![
                r.sample,
                p.empirical,
                p.bound,
                p.layerwise_bound,
                super::fmt_opt(p.simplified_bound),
                p.input_distance,
                p.m,
                p.opdist.iter().copied().fold(0.0, f64::max)
            ])?;
        }
        run.csv("report.csv", &csv)?;
        let results = json!({
            "opdist": outcome.opdist,
            "max_empirical": outcome.rows.iter().map(|r| r.report.empirical).fold(0.0, f64::max),
            "max_bound": outcome.rows.iter().map(|r| r.report.bound).fold(0.0, f64::max),
        });
        run.json("report.json", &json!({ "summary": results, "samples": outcome.rows }))?;
        finish_run(run, ExperimentKind::BoundsReport, config, results)?;
    }
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::{save_graphs, save_model};
    use crate::network::{init_network, Architecture};

    fn setup(dir: &std::path::Path) -> ExperimentConfig {
        let net = init_network(&Architecture::new(2, 2, vec![1, 2, 1]), 1.0, 3).unwrap();
        save_model(&net, &dir.join("m.json")).unwrap();
        let ops: Vec<SymOperator> = (0..2)
            .map(|k| SymOperator::from_fn(12, |i, j| ((i * 7 + j * 7 + k) % 5) as f64 / 5.0).unwrap())
            .collect();
        save_graphs(&ops, &dir.join("g.json")).unwrap();
        ExperimentConfig {
            bounds_report: BoundsReportConfig {
                model: Some(dir.join("m.json")),
                graphs: Some(dir.join("g.json")),
                samples: 4,
                ..BoundsReportConfig::default()
            },
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn identity_perturbation_gives_zero_report() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = setup(dir.path());
        c.bounds_report.perturbation_size = 0.0;
        let o = run_bounds_report(&c, None).unwrap();
        for r in &o.rows {
            assert_eq!(r.report.empirical, 0.0);
            assert_eq!(r.report.bound, 0.0);
        }
    }

    #[test]
    fn perturbed_report_is_written() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = setup(dir.path());
        c.bounds_report.input_noise = 0.05;
        let out = dir.path().join("run");
        let o = run_bounds_report(&c, Some(&out)).unwrap();
        assert!(o.rows.iter().all(|r| r.report.empirical > 0.0 && r.report.empirical <= r.report.bound));
        let t = CsvTable::read(&out.join("report.csv"), REPORT_SCHEMA).unwrap();
        assert_eq!(t.rows.len(), 4);
    }

    #[test]
    fn malformed_model_names_field() {
        let dir = tempfile::tempdir().unwrap();
        let c = setup(dir.path());
        std::fs::write(dir.path().join("m.json"), r#"{"format": "gtnn-model", "version": 1, "arity": "two"}"#).unwrap();
        match run_bounds_report(&c, None) {
            Err(Error::Format { field, .. }) => assert_eq!(field, "arity"),
            other => panic!("unexpected {other:?}"),
        }
        let mut c = setup(dir.path());
        c.bounds_report.normalize = false;
        assert!(matches!(run_bounds_report(&c, None), Err(Error::Data(_))));
    }
}
