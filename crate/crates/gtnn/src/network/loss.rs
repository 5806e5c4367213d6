use ndarray::{Array2, Zip};

use super::Batch;
use crate::error::{Error, Result};
use crate::linop::MultiSignal;

fn check_same(a: &[Array2<f64>], b: &[Array2<f64>], ctx: &'static str) -> Result<()> {
    if a.len() != b.len() || a.iter().zip(b).any(|(x, y)| x.dim() != y.dim()) {
        return Err(Error::shape(ctx, format!("{} features", b.len()), format!("{} features or mismatched dims", a.len())));
    }
    Ok(())
}

/// Mean squared error over the entries where `mask` is nonzero (all
/// entries when absent), together with its gradient in `y_hat`.
pub fn mse_loss_batch(
    y_hat: &Batch,
    y: &Batch,
    mask: Option<&[Array2<f64>]>,
) -> Result<(f64, Vec<Array2<f64>>)> {
    check_same(&y_hat.features, &y.features, "prediction vs target")?;
    if let Some(m) = mask {
        check_same(m, &y.features, "mask vs target")?;
    }
    let count: f64 = match mask {
        Some(m) => m.iter().map(|a| a.iter().filter(|&&v| v != 0.0).count() as f64).sum(),
        None => y.features.iter().map(|a| a.len() as f64).sum(),
    };
    if count == 0.0 {
        return Err(Error::InvalidArgument("loss mask selects no entries".into()));
    }
    let mut loss = 0.0;
    let mut grads = Vec::with_capacity(y.features.len());
    for (a, (p, t)) in y_hat.features.iter().zip(&y.features).enumerate() {
        let mut g = Array2::zeros(p.dim());
        match mask {
            Some(m) => Zip::from(&mut g).and(p).and(t).and(&m[a]).for_each(|g, &p, &t, &k| {
                if k != 0.0 {
                    let d = p - t;
                    loss += d * d;
                    *g = 2.0 * d / count;
                }
            }),
            None => Zip::from(&mut g).and(p).and(t).for_each(|g, &p, &t| {
                let d = p - t;
                loss += d * d;
                *g = 2.0 * d / count;
            }),
        }
        grads.push(g);
    }
    Ok((loss / count, grads))
}

pub fn mse_loss(y_hat: &MultiSignal, y: &MultiSignal, mask: Option<&Array2<f64>>) -> Result<(f64, MultiSignal)> {
    let yb = Batch::from_signals(std::slice::from_ref(y))?;
    let pb = Batch::from_signals(std::slice::from_ref(y_hat))?;
    let mb = mask.map(|m| {
        (0..m.ncols())
            .map(|a| m.column(a).to_owned().insert_axis(ndarray::Axis(1)))
            .collect::<Vec<_>>()
    });
    let (l, g) = mse_loss_batch(&pb, &yb, mb.as_deref())?;
    let grad = Batch {
        features: g,
        measure_weight: y.measure_weight,
    };
    Ok((l, grad.to_signals().pop().expect("one sample")))
}

/// `1 - SS_res / SS_tot` over all entries.
pub fn r_squared_batch(y_hat: &Batch, y: &Batch) -> Result<f64> {
    check_same(&y_hat.features, &y.features, "prediction vs target")?;
    let n: f64 = y.features.iter().map(|a| a.len() as f64).sum();
    let mean = y.features.iter().map(|a| a.sum()).sum::<f64>() / n;
    let mut ss_tot = 0.0;
    let mut ss_res = 0.0;
    for (p, t) in y_hat.features.iter().zip(&y.features) {
        Zip::from(p).and(t).for_each(|&p, &t| {
            ss_res += (p - t) * (p - t);
            ss_tot += (t - mean) * (t - mean);
        });
    }
    if ss_tot == 0.0 {
        return Err(Error::InvalidArgument("R squared is undefined for constant targets".into()));
    }
    Ok(1.0 - ss_res / ss_tot)
}

pub fn r_squared(y_hat: &MultiSignal, y: &MultiSignal) -> Result<f64> {
    r_squared_batch(
        &Batch::from_signals(std::slice::from_ref(y_hat))?,
        &Batch::from_signals(std::slice::from_ref(y))?,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn mse_basics() {
        let y = MultiSignal::from_vec(vec![1.0]);
        let p = MultiSignal::from_vec(vec![3.0]);
        assert_eq!(mse_loss(&y, &y, None).unwrap().0, 0.0);
        let (l, g) = mse_loss(&p, &y, None).unwrap();
        assert_eq!(l, 4.0);
        assert_eq!(g.values[[0, 0]], 4.0);
    }

    #[test]
    fn mask_ignores_entries() {
        let y = MultiSignal::from_vec(vec![1.0, 2.0]);
        let p = MultiSignal::from_vec(vec![1.5, 1e12]);
        let m = array![[1.0], [0.0]];
        let (l, g) = mse_loss(&p, &y, Some(&m)).unwrap();
        assert_eq!(l, 0.25);
        assert_eq!(g.values[[1, 0]], 0.0);
        assert!(mse_loss(&p, &y, Some(&array![[0.0], [0.0]])).is_err());
    }

    #[test]
    fn r_squared_reference_points() {
        let y = MultiSignal::from_vec(vec![1.0, 2.0, 3.0]);
        assert_eq!(r_squared(&y, &y).unwrap(), 1.0);
        let mean = MultiSignal::from_vec(vec![2.0; 3]);
        assert_eq!(r_squared(&mean, &y).unwrap(), 0.0);
        assert!(r_squared(&y, &mean).is_err());
    }
}
