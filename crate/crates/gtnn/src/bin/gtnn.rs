use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gtnn::experiments::{
    plot_csv, run_bounds_report, run_graphon_sample, run_movielens, run_synth_stability, run_transfer_sweep, ExperimentConfig,
    ExperimentKind, PlotConfig,
};
use gtnn::{Error, Result};

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

/// Graph-tuple neural network experiments.
///
/// GTNN_THREADS caps internal parallelism. Exit codes: 0 success,
/// 2 configuration error, 3 data error, 4 numeric failure.
#[derive(Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON experiment config; missing fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (default: runs/<command>).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Train unconstrained and stable networks on circulant graphs and
    /// measure their stability.
    SynthStability(Common),
    /// Train on downsampled template graphs, test on the full graphs.
    TransferSweep(Common),
    /// Rating interpolation on user-correlation graphs.
    Movielens(Common),
    /// Distances of template and random graphs to a graphon.
    GraphonSample(Common),
    /// Perturbation bounds of a saved model.
    BoundsReport {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        graphs: Option<PathBuf>,
        #[arg(long)]
        perturbed_graphs: Option<PathBuf>,
        #[arg(long)]
        perturbation_size: Option<f64>,
    },
    /// Line plot (SVG) of CSV columns.
    Plot {
        input: PathBuf,
        #[arg(long)]
        x: String,
        /// Column(s) to draw; repeat for several.
        #[arg(long, required = true)]
        y: Vec<String>,
        /// One line per distinct value of this column.
        #[arg(long)]
        group: Option<String>,
        /// Keep rows with column=value; repeatable.
        #[arg(long = "filter")]
        filters: Vec<String>,
        #[arg(long)]
        title: Option<String>,
        #[arg(long)]
        log_y: bool,
        /// Output SVG (default: input with .svg extension).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var("GTNN_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Config(format!("GTNN_THREADS must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(e.to_string()))
}

fn load(common: &Common, kind: ExperimentKind) -> Result<(ExperimentConfig, PathBuf)> {
    let mut config = match &common.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    config.check_kind(kind)?;
    config.kind = Some(kind);
    if let Some(s) = common.seed {
        config.seed = s;
    }
    let out = common.out.clone().unwrap_or_else(|| PathBuf::from("runs").join(kind.name()));
    Ok((config, out))
}

fn run(cli: Cli) -> Result<PathBuf> {
    configure_threads()?;
    match cli.command {
        Command::SynthStability(c) => {
            let (config, out) = load(&c, ExperimentKind::SynthStability)?;
            let o = run_synth_stability(&config, Some(&out))?;
            for m in &o.models {
                eprintln!("{}: test R2 {:.4}, C {:?}", m.name, m.test_r2, m.c_total);
            }
            Ok(out)
        }
        Command::TransferSweep(c) => {
            let (config, out) = load(&c, ExperimentKind::TransferSweep)?;
            let o = run_transfer_sweep(&config, Some(&out))?;
            for r in &o.runs {
                eprintln!("{} m={}: best test MSE {:.6} at epoch {}", r.model, r.m, r.best.0, r.best.1);
            }
            Ok(out)
        }
        Command::Movielens(c) => {
            let (config, out) = load(&c, ExperimentKind::Movielens)?;
            let o = run_movielens(&config, Some(&out))?;
            eprintln!(
                "data {}; best 2ONN MSE {:.5}, best single GNN MSE {:.5}; embedding exact: {}",
                o.data_source, o.best_tuple, o.best_single, o.embedding_exact
            );
            Ok(out)
        }
        Command::GraphonSample(c) => {
            let (config, out) = load(&c, ExperimentKind::GraphonSample)?;
            let o = run_graphon_sample(&config, Some(&out))?;
            for r in &o.convergence {
                eprintln!("n={}: template HS {:.4}, ER op {:.4}, ER HS {:.4}", r.n, r.template_hs, r.er_op_mean, r.er_hs_mean);
            }
            Ok(out)
        }
        Command::BoundsReport { common, model, graphs, perturbed_graphs, perturbation_size } => {
            let (mut config, out) = load(&common, ExperimentKind::BoundsReport)?;
            let b = &mut config.bounds_report;
            b.model = model.or(b.model.take());
            b.graphs = graphs.or(b.graphs.take());
            b.perturbed_graphs = perturbed_graphs.or(b.perturbed_graphs.take());
            if let Some(s) = perturbation_size {
                b.perturbation_size = s;
            }
            let o = run_bounds_report(&config, Some(&out))?;
            let worst = o.rows.iter().map(|r| r.report.empirical / r.report.bound.max(f64::MIN_POSITIVE)).fold(0.0, f64::max);
            eprintln!("{} samples, op distances {:?}, max empirical/bound {:.4}", o.rows.len(), o.opdist, worst);
            Ok(out)
        }
        Command::Plot { input, x, y, group, filters, title, log_y, out } => {
            let output = out.unwrap_or_else(|| input.with_extension("svg"));
            plot_csv(&PlotConfig { input, output: output.clone(), x, y, group, filters, title, log_y })?;
            Ok(output)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(out) => {
            println!("{}", out.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
