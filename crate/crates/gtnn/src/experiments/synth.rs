//! Circulant regression: unconstrained and stable networks of depth one
//! and two, their stability metrics during training, and their response
//! to graph perturbations.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{finish_run, sub_seed, AdamConfig, ExperimentConfig, ExperimentKind};
use crate::data::{synth_circulant_dataset, CirculantParams, Dataset};
use crate::error::{Error, Result};
use crate::io::{CsvTable, RunDir, HISTORY_SCHEMA, STABILITY_METRICS_SCHEMA, SUMMARY_SCHEMA, SWEEP_MEAN_SCHEMA, SWEEP_SCHEMA};
use crate::linop::{op_distance, OperatorTuple};
use crate::network::{
    expansion_vectors, forward_batch, init_network, r_squared_batch, train_with_observer, Architecture, Metric, Network,
    TrainHistory,
};
use crate::row;
use crate::stability::{layer_metrics, perturb_sweep_many, perturbed_tuple, SweepRow};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthStabilityConfig {
    pub n: usize,
    pub p: f64,
    pub l1: usize,
    pub l2: usize,
    pub sigma: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub degree: usize,
    pub hidden: usize,
    /// Also train the two-layer pair.
    pub two_layer: bool,
    pub epochs_one_layer: usize,
    pub epochs_two_layer: usize,
    pub init_scale: f64,
    pub lambda: f64,
    /// Stable targets are this fraction of the unconstrained constants.
    pub target_fraction: f64,
    pub adam: AdamConfig,
    /// Stability metrics are recorded every this many epochs (0 = never).
    pub metrics_every: usize,
    /// Spectral size of the fixed perturbation used for the metrics.
    pub metrics_perturbation: f64,
    pub sweep_sizes: Vec<f64>,
    pub sweep_seeds: usize,
    /// Size whose mean output perturbation goes into the summary.
    pub reference_size: f64,
}

impl Default for SynthStabilityConfig {
    fn default() -> Self {
        let d = CirculantParams::default();
        SynthStabilityConfig {
            n: d.n,
            p: d.p,
            l1: d.l1,
            l2: d.l2,
            sigma: d.sigma,
            n_train: d.n_train,
            n_test: d.n_test,
            degree: 3,
            hidden: 2,
            two_layer: true,
            epochs_one_layer: 12_000,
            epochs_two_layer: 1_000,
            init_scale: 15.0,
            lambda: 10.0,
            target_fraction: 0.5,
            adam: AdamConfig::default(),
            metrics_every: 100,
            metrics_perturbation: 0.33,
            sweep_sizes: (0..=10).map(|i| i as f64 * 0.05).collect(),
            sweep_seeds: 20,
            reference_size: 0.3,
        }
    }
}

impl SynthStabilityConfig {
    fn validate(&self) -> Result<()> {
        if self.degree == 0 || self.hidden == 0 {
            return Err(Error::Config("degree and hidden width must be positive".into()));
        }
        if !(self.target_fraction > 0.0) || !(self.lambda >= 0.0) || !(self.init_scale > 0.0) {
            return Err(Error::Config("target_fraction and init_scale must be positive, lambda nonnegative".into()));
        }
        if self.sweep_sizes.iter().any(|s| !(*s >= 0.0)) {
            return Err(Error::Config("sweep sizes must be nonnegative".into()));
        }
        Ok(())
    }

    fn circulant(&self, seed: u64) -> CirculantParams {
        CirculantParams {
            n: self.n,
            p: self.p,
            l1: self.l1,
            l2: self.l2,
            sigma: self.sigma,
            n_train: self.n_train,
            n_test: self.n_test,
            seed,
        }
    }
}

/// Stability metrics of one layer at one epoch.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricsRow {
    pub model: String,
    pub epoch: usize,
    pub layer: usize,
    pub op_norm: f64,
    pub c_total: f64,
    pub graph_diff: f64,
    pub graph_diff_bound: f64,
}

#[derive(Clone, Debug)]
pub struct TrainedModel {
    pub name: String,
    pub net: Network,
    pub history: TrainHistory,
    pub lambda: f64,
    pub test_r2: f64,
    pub c_total: Vec<f64>,
    pub c_per_var: Vec<Vec<f64>>,
    /// `(C targets, C_j targets)` for penalized models.
    pub targets: Option<(Vec<f64>, Vec<Vec<f64>>)>,
    pub seconds: f64,
}

impl TrainedModel {
    /// Largest `constant - target` over all layers and constants.
    pub fn max_target_excess(&self) -> Option<f64> {
        let (tc, tj) = self.targets.as_ref()?;
        let mut worst = f64::NEG_INFINITY;
        for (c, t) in self.c_total.iter().zip(tc) {
            worst = worst.max(c - t);
        }
        for (cs, ts) in self.c_per_var.iter().zip(tj) {
            for (c, t) in cs.iter().zip(ts) {
                worst = worst.max(c - t);
            }
        }
        Some(worst)
    }
}

#[derive(Clone, Debug)]
pub struct SynthStabilityOutcome {
    pub models: Vec<TrainedModel>,
    pub metrics: Vec<MetricsRow>,
    /// `(model, sweep seed, row)`.
    pub sweep: Vec<(String, u64, SweepRow)>,
    pub tuple: OperatorTuple,
}

impl SynthStabilityOutcome {
    pub fn model(&self, name: &str) -> Option<&TrainedModel> {
        self.models.iter().find(|m| m.name == name)
    }

    /// Mean and standard deviation over seeds of the output perturbation
    /// of `model` at the sweep size closest to `size`.
    pub fn mean_empirical(&self, model: &str, size: f64) -> Option<(f64, f64)> {
        let target = self
            .sweep
            .iter()
            .map(|(_, _, r)| r.size)
            .min_by(|a, b| (a - size).abs().total_cmp(&(b - size).abs()))?;
        let v: Vec<f64> = self
            .sweep
            .iter()
            .filter(|(m, _, r)| m == model && r.size == target)
            .map(|(_, _, r)| r.empirical)
            .collect();
        mean_sd(&v)
    }
}

pub(crate) fn mean_sd(v: &[f64]) -> Option<(f64, f64)> {
    if v.is_empty() {
        return None;
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 {
        v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Some((mean, var.sqrt()))
}

struct ModelPlan {
    name: &'static str,
    sizes: Vec<usize>,
    epochs: usize,
    /// Index of the unconstrained model whose constants set the targets.
    base: Option<usize>,
}

fn train_model(
    plan: &ModelPlan,
    base: Option<&TrainedModel>,
    cfg: &SynthStabilityConfig,
    seed: u64,
    data: &Dataset,
    t: &OperatorTuple,
    z: &OperatorTuple,
    metrics: &mut Vec<MetricsRow>,
) -> Result<TrainedModel> {
    let arch = Architecture::new(2, cfg.degree, plan.sizes.clone());
    let net = init_network(&arch, cfg.init_scale, seed)?;
    let mut tc = cfg.adam.train_config(plan.epochs, seed, cfg.init_scale);
    tc.metric = Metric::RSquared;
    let targets = base.map(|b| {
        let f = cfg.target_fraction;
        (
            b.c_total.iter().map(|c| c * f).collect::<Vec<_>>(),
            b.c_per_var.iter().map(|r| r.iter().map(|c| c * f).collect()).collect::<Vec<Vec<f64>>>(),
        )
    });
    if let Some((c, cj)) = &targets {
        tc.lambda = cfg.lambda;
        tc.c_total_targets = Some(c.clone());
        tc.c_per_var_targets = Some(cj.clone());
    }
    let start = std::time::Instant::now();
    let mut failure = None;
    let every = cfg.metrics_every;
    let observe = |rec: &crate::network::EpochRecord, net: &Network| {
        if every == 0 || rec.epoch % every != 0 || failure.is_some() {
            return;
        }
        for (l, layer) in net.layers().iter().enumerate() {
            match layer_metrics(layer, net.arity(), t, z) {
                Ok(m) => metrics.push(MetricsRow {
                    model: plan.name.to_string(),
                    epoch: rec.epoch,
                    layer: l + 1,
                    op_norm: m.op_norm,
                    c_total: m.c_total,
                    graph_diff: m.graph_diff,
                    graph_diff_bound: m.graph_diff_bound,
                }),
                Err(e) => failure = Some(e),
            }
        }
    };
    let (net, history) = train_with_observer(net, t, &data.train, Some((t, &data.test)), &tc, observe)?;
    if let Some(e) = failure {
        return Err(e);
    }
    if every > 0 && plan.epochs % every == 0 {
        for (l, layer) in net.layers().iter().enumerate() {
            let m = layer_metrics(layer, net.arity(), t, z)?;
            metrics.push(MetricsRow {
                model: plan.name.to_string(),
                epoch: plan.epochs,
                layer: l + 1,
                op_norm: m.op_norm,
                c_total: m.c_total,
                graph_diff: m.graph_diff,
                graph_diff_bound: m.graph_diff_bound,
            });
        }
    }
    let (y, _) = forward_batch(&net, t, &data.test.inputs, None)?;
    let test_r2 = r_squared_batch(&y, &data.test.targets)?;
    let (c_total, c_per_var) = expansion_vectors(&net);
    Ok(TrainedModel {
        name: plan.name.to_string(),
        net,
        history,
        lambda: if targets.is_some() { cfg.lambda } else { 0.0 },
        test_r2,
        c_total,
        c_per_var,
        targets,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Trains the four models (one and two layers, each unconstrained and
/// stable), records stability metrics along training, sweeps graph
/// perturbations, and writes everything to `out` when given.
pub fn run_synth_stability(config: &ExperimentConfig, out: Option<&std::path::Path>) -> Result<SynthStabilityOutcome> {
    config.check_kind(ExperimentKind::SynthStability)?;
    let cfg = &config.synth_stability;
    cfg.validate()?;
    let seed = config.seed;
    let (data, t) = synth_circulant_dataset(&cfg.circulant(seed)).map_err(|e| match e {
        Error::InvalidArgument(m) => Error::Config(m),
        e => e,
    })?;
    let mut zrng = ChaCha8Rng::seed_from_u64(sub_seed(seed, 1));
    let z = perturbed_tuple(&t, cfg.metrics_perturbation, &mut zrng)?;

    let mut plans = vec![
        ModelPlan { name: "gtnn1", sizes: vec![1, 1], epochs: cfg.epochs_one_layer, base: None },
        ModelPlan { name: "stable1", sizes: vec![1, 1], epochs: cfg.epochs_one_layer, base: Some(0) },
    ];
    if cfg.two_layer {
        plans.push(ModelPlan { name: "gtnn2", sizes: vec![1, cfg.hidden, 1], epochs: cfg.epochs_two_layer, base: None });
        plans.push(ModelPlan { name: "stable2", sizes: vec![1, cfg.hidden, 1], epochs: cfg.epochs_two_layer, base: Some(2) });
    }
    let mut models: Vec<TrainedModel> = Vec::new();
    let mut metrics = Vec::new();
    for plan in &plans {
        let base = plan.base.map(|i| &models[i]);
        let m = train_model(plan, base, cfg, seed, &data, &t, &z, &mut metrics)?;
        models.push(m);
    }

    let nets: Vec<&Network> = models.iter().map(|m| &m.net).collect();
    let mut sweep = Vec::new();
    for s in 0..cfg.sweep_seeds as u64 {
        let rows = perturb_sweep_many(&nets, &t, &data.test.inputs, &cfg.sweep_sizes, sub_seed(seed, 100 + s))?;
        for (m, rs) in models.iter().zip(rows) {
            sweep.extend(rs.into_iter().map(|r| (m.name.clone(), s, r)));
        }
    }
    let outcome = SynthStabilityOutcome { models, metrics, sweep, tuple: t };
    if let Some(out) = out {
        write_outputs(&outcome, config, out, &z)?;
    }
    Ok(outcome)
}

fn write_outputs(o: &SynthStabilityOutcome, config: &ExperimentConfig, out: &std::path::Path, z: &OperatorTuple) -> Result<()> {
    let cfg = &config.synth_stability;
    let mut run = RunDir::begin(out)?;
    for m in &o.models {
        let mut h = CsvTable::new(HISTORY_SCHEMA);
        for r in &m.history.records {
            for l in 0..r.c_total.len() {
                h.push(row![
                    m.name,
                    r.epoch,
                    l + 1,
                    r.train_loss,
                    r.penalty,
                    super::fmt_opt(r.test_metric),
                    r.c_total[l],
                    r.c_per_var[0][l],
                    r.c_per_var[1][l]
                ])?;
            }
        }
        run.csv(&format!("history_{}.csv", m.name), &h)?;
        run.model(&format!("model_{}.json", m.name), &m.net)?;
    }
    let mut mt = CsvTable::new(STABILITY_METRICS_SCHEMA);
    for r in &o.metrics {
        mt.push(row![r.model, r.epoch, r.layer, r.op_norm, r.c_total, r.graph_diff, r.graph_diff_bound])?;
    }
    run.csv("stability_metrics.csv", &mt)?;

    let mut sw = CsvTable::new(SWEEP_SCHEMA);
    for (m, s, r) in &o.sweep {
        sw.push(row![m, s, r.size, r.mean_opdist, r.empirical, r.bound])?;
    }
    run.csv("sweep.csv", &sw)?;
    let mut mean = CsvTable::new(SWEEP_MEAN_SCHEMA);
    for m in &o.models {
        for &size in &cfg.sweep_sizes {
            let rows: Vec<&SweepRow> = o.sweep.iter().filter(|(n, _, r)| *n == m.name && r.size == size).map(|(_, _, r)| r).collect();
            let emp: Vec<f64> = rows.iter().map(|r| r.empirical).collect();
            if let Some((mu, sd)) = mean_sd(&emp) {
                let k = rows.len() as f64;
                mean.push(row![
                    m.name,
                    size,
                    rows.len(),
                    rows.iter().map(|r| r.mean_opdist).sum::<f64>() / k,
                    mu,
                    sd,
                    rows.iter().map(|r| r.bound).sum::<f64>() / k
                ])?;
            }
        }
    }
    run.csv("sweep_mean.csv", &mean)?;

    let mut summary = CsvTable::new(SUMMARY_SCHEMA);
    let mut models_json = Vec::new();
    for m in &o.models {
        let at_ref = o.mean_empirical(&m.name, cfg.reference_size).map(|v| v.0);
        let train_loss = m.history.records.last().map(|r| r.train_loss);
        summary.push(row![
            m.name,
            m.net.depth(),
            m.lambda,
            m.test_r2,
            super::fmt_opt(train_loss),
            m.c_total.iter().copied().fold(0.0, f64::max),
            super::fmt_opt(m.max_target_excess()),
            super::fmt_opt(at_ref)
        ])?;
        models_json.push(json!({
            "model": m.name,
            "feature_sizes": m.net.feature_sizes(),
            "lambda": m.lambda,
            "epochs": m.history.len(),
            "test_r2": m.test_r2,
            "c_total": m.c_total,
            "c_per_var": m.c_per_var,
            "targets": m.targets.as_ref().map(|(c, cj)| json!({"c_total": c, "c_per_var": cj})),
            "max_target_excess": m.max_target_excess(),
            "mean_perturbation_at_reference": at_ref,
        }));
    }
    run.csv("summary.csv", &summary)?;
    let results = json!({
        "models": models_json,
        "metrics_perturbation_opdist": op_distance(&o.tuple, z)?,
        "reference_size": cfg.reference_size,
    });
    run.json("summary.json", &results)?;
    run.json("graphs.json", &crate::io::graphs_to_json(o.tuple.ops()))?;
    finish_run(run, ExperimentKind::SynthStability, config, results)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        ExperimentConfig {
            synth_stability: SynthStabilityConfig {
                n: 40,
                l2: 7,
                n_train: 30,
                n_test: 10,
                epochs_one_layer: 40,
                epochs_two_layer: 20,
                metrics_every: 10,
                sweep_sizes: vec![0.0, 0.3],
                sweep_seeds: 3,
                ..SynthStabilityConfig::default()
            },
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn small_run_writes_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("synth");
        let o = run_synth_stability(&small(), Some(&out)).unwrap();
        assert_eq!(o.models.len(), 4);
        assert_eq!(o.model("gtnn1").unwrap().net.param_count(), 15);
        assert_eq!(o.model("gtnn2").unwrap().net.param_count(), 60);
        assert!(o.model("stable1").unwrap().targets.is_some());
        // one row per layer at epochs 0, 10, 20, 30, 40 (and 0, 10, 20 for depth two)
        assert_eq!(o.metrics.iter().filter(|r| r.model == "gtnn1").count(), 5);
        assert_eq!(o.metrics.iter().filter(|r| r.model == "gtnn2").count(), 6);
        // zero perturbation leaves outputs unchanged
        for (_, _, r) in o.sweep.iter().filter(|(_, _, r)| r.size == 0.0) {
            assert_eq!(r.empirical, 0.0);
        }
        for (_, _, r) in &o.sweep {
            assert!(r.empirical <= r.bound * (1.0 + 1e-9) + 1e-12);
        }
        for f in ["history_gtnn1.csv", "stability_metrics.csv", "sweep.csv", "sweep_mean.csv", "summary.csv", "manifest.json", "config.json", "model_stable2.json"] {
            assert!(out.join(f).exists(), "{f}");
        }
        CsvTable::read(&out.join("sweep_mean.csv"), SWEEP_MEAN_SCHEMA).unwrap();
        let again = run_synth_stability(&small(), None).unwrap();
        assert_eq!(again.models[3].net, o.models[3].net);
    }
}
