//! Reproducible experiment runs. Every run resolves its configuration,
//! computes in memory, and optionally writes CSV/JSON artifacts plus a
//! manifest through [`RunDir`](crate::io::RunDir).

mod bounds;
mod graphon_sample;
mod movielens;
mod plot;
mod synth;
mod transfer;

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::io::RunDir;
use crate::network::{Metric, TrainConfig};

pub use bounds::{run_bounds_report, BoundsReportConfig, BoundsReportOutcome, BoundsRow};
pub use graphon_sample::{run_graphon_sample, ConvergenceRow, GraphonSampleConfig, GraphonSampleOutcome, GraphonSpec, SampleRow};
pub use movielens::{run_movielens, MovielensConfig, MovielensOutcome, MovielensRun};
pub use plot::{plot_csv, PlotConfig};
pub use synth::{run_synth_stability, MetricsRow, SynthStabilityConfig, SynthStabilityOutcome, TrainedModel};
pub use transfer::{run_transfer_sweep, TransferRun, TransferSweepConfig, TransferSweepOutcome};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    SynthStability,
    TransferSweep,
    Movielens,
    GraphonSample,
    BoundsReport,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::SynthStability => "synth-stability",
            ExperimentKind::TransferSweep => "transfer-sweep",
            ExperimentKind::Movielens => "movielens",
            ExperimentKind::GraphonSample => "graphon-sample",
            ExperimentKind::BoundsReport => "bounds-report",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub(crate) fn train_config(&self, epochs: usize, seed: u64, init_scale: f64) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            adam_epsilon: self.epsilon,
            epochs,
            seed,
            init_scale,
            metric: Metric::Mse,
            ..TrainConfig::default()
        }
    }
}

/// All experiment parameters. Each subcommand reads its own section; the
/// top-level `seed` drives every random choice of a run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// When present, must match the subcommand.
    pub kind: Option<ExperimentKind>,
    pub seed: u64,
    pub synth_stability: SynthStabilityConfig,
    pub transfer_sweep: TransferSweepConfig,
    pub movielens: MovielensConfig,
    pub graphon_sample: GraphonSampleConfig,
    pub bounds_report: BoundsReportConfig,
}

impl ExperimentConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn check_kind(&self, kind: ExperimentKind) -> Result<()> {
        match self.kind {
            Some(k) if k != kind => Err(Error::Config(format!(
                "config is for {} but the {} command was run",
                k.name(),
                kind.name()
            ))),
            _ => Ok(()),
        }
    }
}

/// Writes the resolved configuration and a manifest, then moves the run
/// into place.
pub(crate) fn finish_run(mut run: RunDir, kind: ExperimentKind, config: &ExperimentConfig, extra: serde_json::Value) -> Result<()> {
    let mut resolved = config.clone();
    resolved.kind = Some(kind);
    run.json("config.json", &resolved)?;
    run.commit(json!({
        "experiment": kind.name(),
        "seed": config.seed,
        "threads": rayon::current_num_threads(),
        "config": resolved,
        "results": extra,
    }))?;
    Ok(())
}

/// Seeds derived from the run seed, one stream per purpose.
pub(crate) fn sub_seed(seed: u64, stream: u64) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(stream.wrapping_mul(0xbf58_476d_1ce4_e5b9)) ^ stream
}

pub(crate) fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_defaults_and_errors() {
        let c = ExperimentConfig::from_json_str("{}").unwrap();
        assert_eq!(c, ExperimentConfig::default());
        let c = ExperimentConfig::from_json_str(r#"{"seed": 3, "kind": "movielens"}"#).unwrap();
        assert!(c.check_kind(ExperimentKind::Movielens).is_ok());
        assert!(matches!(c.check_kind(ExperimentKind::GraphonSample), Err(Error::Config(_))));
        assert!(matches!(ExperimentConfig::from_json_str(r#"{"sede": 3}"#), Err(Error::Config(_))));
        let round = serde_json::to_string(&c).unwrap();
        assert_eq!(ExperimentConfig::from_json_str(&round).unwrap(), c);
    }

    #[test]
    fn sub_seeds_differ() {
        assert_ne!(sub_seed(0, 1), sub_seed(0, 2));
        assert_ne!(sub_seed(1, 1), sub_seed(2, 1));
    }
}
