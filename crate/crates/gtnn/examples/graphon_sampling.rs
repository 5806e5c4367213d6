//! Graphons as random graph models: template and Erdős–Rényi samples of
//! `W(x, y) = x y` and their distances to the graphon.

use gtnn::graphon::{graphon_er, hs_dist_analytic, op_dist, template_graph, AnalyticGraphon, PiecewiseGraphon, QUADRATURE_POINTS};

fn main() -> gtnn::Result<()> {
    let w = AnalyticGraphon::product();
    println!("{:>5} {:>12} {:>12} {:>12}", "n", "template HS", "ER HS", "ER op");
    for n in [8, 16, 32, 64] {
        let template = PiecewiseGraphon::induced(&template_graph(&w, n)?)?;
        let er = PiecewiseGraphon::induced(&graphon_er(&w, n, 1)?)?;
        let reference = w.discretize(n * 4)?;
        println!(
            "{n:>5} {:>12.5} {:>12.5} {:>12.5}",
            hs_dist_analytic(&w, &template, QUADRATURE_POINTS),
            hs_dist_analytic(&w, &er, QUADRATURE_POINTS),
            op_dist(&reference, &er)?
        );
    }
    Ok(())
}
