//! Graphons as generative models: distance of template and
//! graphon-Erdős–Rényi graphs to their graphon as the size grows.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::synth::mean_sd;
use super::{finish_run, sub_seed, ExperimentConfig, ExperimentKind};
use crate::error::{Error, Result};
use crate::graphon::{graphon_er, hs_dist, hs_dist_analytic, op_dist, AnalyticGraphon, Graphon, PiecewiseGraphon, QUADRATURE_POINTS};
use crate::io::{graphs_to_json, load_graphon, CsvTable, RunDir, CONVERGENCE_SCHEMA, GRAPHON_SEEDS_SCHEMA};
use crate::linop::SymOperator;
use crate::row;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum GraphonSpec {
    Constant { p: f64 },
    /// `W(x, y) = x y`.
    Product,
    /// `W(x, y) = exp(-beta |x - y|)`.
    Exponential { beta: f64 },
    /// A piecewise-constant graphon file (`{"grid": m, "values": [...]}`).
    Piecewise { path: PathBuf },
}

impl Default for GraphonSpec {
    fn default() -> Self {
        GraphonSpec::Constant { p: 0.5 }
    }
}

enum Source {
    Analytic(AnalyticGraphon),
    Piecewise(PiecewiseGraphon),
}

impl Source {
    fn graphon(&self) -> &dyn Graphon {
        match self {
            Source::Analytic(w) => w,
            Source::Piecewise(w) => w,
        }
    }

    fn hs_to(&self, g: &PiecewiseGraphon) -> Result<f64> {
        match self {
            Source::Analytic(w) => Ok(hs_dist_analytic(w, g, QUADRATURE_POINTS)),
            Source::Piecewise(w) => hs_dist(w, g),
        }
    }

    /// Operator distance; analytic graphons are replaced by their cell
    /// averages on a grid that is a multiple of `g`'s.
    fn op_to(&self, g: &PiecewiseGraphon, reference: usize) -> Result<f64> {
        match self {
            Source::Analytic(w) => {
                let n = g.grid();
                let r = n * reference.div_ceil(n).max(1);
                op_dist(&w.discretize(r)?, g)
            }
            Source::Piecewise(w) => op_dist(w, g),
        }
    }
}

impl GraphonSpec {
    fn build(&self) -> Result<Source> {
        let cfg = |e: Error| match e {
            Error::InvalidArgument(m) => Error::Config(m),
            e => e,
        };
        Ok(match self {
            GraphonSpec::Constant { p } => Source::Analytic(AnalyticGraphon::constant(*p).map_err(cfg)?),
            GraphonSpec::Product => Source::Analytic(AnalyticGraphon::product()),
            GraphonSpec::Exponential { beta } => Source::Analytic(AnalyticGraphon::exponential(*beta).map_err(cfg)?),
            GraphonSpec::Piecewise { path } => Source::Piecewise(load_graphon(path)?),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphonSampleConfig {
    pub graphon: GraphonSpec,
    pub sizes: Vec<usize>,
    pub seeds: usize,
    /// Analytic graphons are averaged on the smallest multiple of `n` at
    /// least this large when measuring operator distances.
    pub reference_grid: usize,
    /// Write the sampled graphs of this many seeds per size.
    pub save_graphs: usize,
}

impl Default for GraphonSampleConfig {
    fn default() -> Self {
        GraphonSampleConfig {
            graphon: GraphonSpec::default(),
            sizes: vec![8, 16, 32, 64, 128],
            seeds: 10,
            reference_grid: 128,
            save_graphs: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SampleRow {
    pub n: usize,
    pub seed: u64,
    pub edges: usize,
    pub er_op: f64,
    pub er_hs: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub n: usize,
    pub template_hs: f64,
    pub er_op_mean: f64,
    pub er_op_sd: f64,
    pub er_hs_mean: f64,
    pub er_hs_sd: f64,
    pub er_hs_min: f64,
}

#[derive(Clone, Debug)]
pub struct GraphonSampleOutcome {
    pub convergence: Vec<ConvergenceRow>,
    pub samples: Vec<SampleRow>,
    /// Saved graphs per size.
    pub graphs: Vec<(usize, Vec<SymOperator>)>,
}

impl GraphonSampleOutcome {
    pub fn row(&self, n: usize) -> Option<&ConvergenceRow> {
        self.convergence.iter().find(|r| r.n == n)
    }
}

/// For every size `n`: the HS distance from the graphon to its template
/// graph, and over seeds the operator and HS distances to sampled
/// graphon-Erdős–Rényi graphs (all as induced graphons).
pub fn run_graphon_sample(config: &ExperimentConfig, out: Option<&std::path::Path>) -> Result<GraphonSampleOutcome> {
    config.check_kind(ExperimentKind::GraphonSample)?;
    let cfg = &config.graphon_sample;
    if cfg.sizes.is_empty() || cfg.sizes.contains(&0) || cfg.seeds == 0 || cfg.reference_grid == 0 {
        return Err(Error::Config("sizes, seeds and reference_grid must be positive".into()));
    }
    let source = cfg.graphon.build()?;
    let mut convergence = Vec::new();
    let mut samples = Vec::new();
    let mut graphs = Vec::new();
    for &n in &cfg.sizes {
        let template = PiecewiseGraphon::induced(&source.graphon().template(n)?)?;
        let template_hs = source.hs_to(&template)?;
        let mut kept = Vec::new();
        let mut ops = Vec::new();
        let mut hss = Vec::new();
        for s in 0..cfg.seeds as u64 {
            let g = graphon_er(source.graphon(), n, sub_seed(config.seed, (n as u64) << 20 | s))?;
            let induced = PiecewiseGraphon::induced(&g)?;
            let er_op = source.op_to(&induced, cfg.reference_grid)?;
            let er_hs = source.hs_to(&induced)?;
            let edges = g.matrix().iter().filter(|&&v| v != 0.0).count() / 2;
            samples.push(SampleRow { n, seed: s, edges, er_op, er_hs });
            ops.push(er_op);
            hss.push(er_hs);
            if (s as usize) < cfg.save_graphs {
                kept.push(g);
            }
        }
        let (er_op_mean, er_op_sd) = mean_sd(&ops).expect("seeds > 0");
        let (er_hs_mean, er_hs_sd) = mean_sd(&hss).expect("seeds > 0");
        convergence.push(ConvergenceRow {
            n,
            template_hs,
            er_op_mean,
            er_op_sd,
            er_hs_mean,
            er_hs_sd,
            er_hs_min: hss.iter().copied().fold(f64::INFINITY, f64::min),
        });
        graphs.push((n, kept));
    }
    let outcome = GraphonSampleOutcome { convergence, samples, graphs };
    if let Some(out) = out {
        let mut run = RunDir::begin(out)?;
        let mut conv = CsvTable::new(CONVERGENCE_SCHEMA);
        for r in &outcome.convergence {
            conv.push(row![r.n, r.template_hs, r.er_op_mean, r.er_op_sd, r.er_hs_mean, r.er_hs_sd, r.er_hs_min])?;
        }
        run.csv("convergence.csv", &conv)?;
        let mut seeds = CsvTable::new(GRAPHON_SEEDS_SCHEMA);
        for r in &outcome.samples {
            seeds.push(row![r.n, r.seed, r.edges, r.er_op, r.er_hs])?;
        }
        run.csv("samples.csv", &seeds)?;
        for (n, gs) in &outcome.graphs {
            if !gs.is_empty() {
                run.json(&format!("graphs_n{n}.json"), &graphs_to_json(gs))?;
            }
        }
        let results = json!({ "convergence": outcome.convergence });
        finish_run(run, ExperimentKind::GraphonSample, config, results)?;
    }
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(graphon: GraphonSpec, sizes: Vec<usize>, seeds: usize) -> ExperimentConfig {
        ExperimentConfig {
            graphon_sample: GraphonSampleConfig {
                graphon,
                sizes,
                seeds,
                ..GraphonSampleConfig::default()
            },
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn single_vertex_is_handled() {
        let o = run_graphon_sample(&config(GraphonSpec::Constant { p: 0.3 }, vec![1], 3), None).unwrap();
        let r = o.row(1).unwrap();
        assert!(r.template_hs < 1e-12);
        assert!(o.samples.iter().all(|s| s.edges == 0 && (s.er_hs - 0.3).abs() < 1e-12));
    }

    #[test]
    fn constant_half_has_exact_hs_distance() {
        let o = run_graphon_sample(&config(GraphonSpec::Constant { p: 0.5 }, vec![4, 16], 4), None).unwrap();
        assert!(o.samples.iter().all(|s| s.er_hs == 0.5));
    }

    #[test]
    fn piecewise_file_and_config_parsing() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("w.json");
        std::fs::write(&p, r#"{"grid": 2, "values": [0.9, 0.1, 0.1, 0.9]}"#).unwrap();
        let text = format!(r#"{{"graphon_sample": {{"graphon": {{"family": "piecewise", "path": {:?}}}, "sizes": [2, 6], "seeds": 2}}}}"#, p);
        let c = ExperimentConfig::from_json_str(&text).unwrap();
        let out = dir.path().join("run");
        let o = run_graphon_sample(&c, Some(&out)).unwrap();
        assert!(o.row(2).unwrap().template_hs < 1e-12);
        assert!(out.join("convergence.csv").exists() && out.join("graphs_n6.json").exists());
        let bad = ExperimentConfig::from_json_str(r#"{"graphon_sample": {"graphon": {"family": "cubic"}}}"#);
        assert!(matches!(bad, Err(Error::Config(_))));
    }
}
