//! Operator filters on a pair of circulant graphs: evaluation on signals,
//! dense filter matrices and the norm bound `||h(T)|| <= C(h)`.

use gtnn::data::{circulant_shift, generator_polynomial};
use gtnn::linop::{eval_filter, poly_matrix, spectral_norm_default, MultiSignal, OperatorTuple, SymOperator};
use gtnn::ncpoly::NCPoly;
use ndarray::Array2;

fn main() -> gtnn::Result<()> {
    let n = 40;
    let t = OperatorTuple::certified(vec![circulant_shift(n, 0.05, 1)?, circulant_shift(n, 0.05, 7)?])?;
    let h = generator_polynomial();

    let x = MultiSignal::new(Array2::from_shape_fn((n, 1), |(i, _)| if i == 0 { 1.0 } else { 0.0 }), 1.0)?;
    let y = eval_filter(&[vec![h.clone()]], &t, &x)?;
    let support = y.values.iter().filter(|v| v.abs() > 1e-12).count();
    println!("impulse response of h = {h}: {support} nonzero vertices");

    let hm = poly_matrix(&h, &t)?;
    // h(T) is symmetric here because the circulant shifts commute.
    let norm = spectral_norm_default(&SymOperator::new(hm)?)?;
    println!("||h(T)||_op = {norm:.4} <= C(h) = {:.4}", h.expansion_constants().c_total);

    let g = NCPoly::var(2, 1)?.multiply(&NCPoly::var(2, 2)?)?;
    let y2 = eval_filter(&[vec![h], vec![g]], &t, &x)?;
    println!("two-output filter: {} features on {} vertices", y2.features(), y2.dim());
    Ok(())
}
