//! Graph networks as graphon networks: the exact identity for induced
//! graphons, and the transfer error to a smooth graphon with its bound.

use gtnn::graphon::{network_identity_gap, template_graph, transfer_error, AnalyticGraphon, PiecewiseSignal};
use gtnn::ncpoly::enumerate_basis;
use gtnn::network::{init_network, Architecture};
use ndarray::Array2;

fn main() -> gtnn::Result<()> {
    let words = enumerate_basis(2, 2).into_iter().filter(|w| !w.is_empty()).collect();
    let net = init_network(&Architecture::new(2, 2, vec![1, 2, 1]).with_basis(words), 1.0, 3)?;
    let f = PiecewiseSignal::new(Array2::from_shape_fn((60, 1), |(i, _)| (i as f64 / 60.0 * 6.0).sin()))?;

    let ws = [AnalyticGraphon::product(), AnalyticGraphon::exponential(2.0)?];
    let reference: Vec<_> = ws.iter().map(|w| w.discretize(120)).collect::<gtnn::Result<_>>()?;
    for n in [10, 20, 30, 60] {
        let gs: Vec<_> = ws.iter().map(|w| template_graph(w, n)).collect::<gtnn::Result<_>>()?;
        let gap = network_identity_gap(&net, &gs, &f)?;
        let r = transfer_error(&net, &reference, &gs, &f)?;
        println!(
            "n={n:>3}: identity gap {gap:.1e}; transfer error {:.5} <= bound {:.5} (op distances {:.4}, {:.4})",
            r.empirical, r.bound, r.opdist[0], r.opdist[1]
        );
    }
    Ok(())
}
