use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::graphon::{common_grid, op_dist, overlap_matrix, template_graph, PiecewiseGraphon};
use crate::linop::{poly_matrix, OperatorTuple, SymOperator};
use crate::ncpoly::{NCPoly, Word};
use crate::network::{Batch, Samples};

/// Weighted circulant shift: `p` on the diagonal and `(1 - p) / 2` on the
/// two diagonals at cyclic offset `l`. Rows sum to one.
pub fn circulant_shift(n: usize, p: f64, l: usize) -> Result<SymOperator> {
    if l == 0 || l >= n {
        return Err(Error::InvalidArgument(format!("circulant offset must satisfy 1 <= l < n, got l = {l}, n = {n}")));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidArgument(format!("self weight must lie in [0, 1], got {p}")));
    }
    let w = (1.0 - p) / 2.0;
    let mut m = Array2::zeros((n, n));
    for i in 0..n {
        m[[i, i]] = p;
        // `+=` keeps row sums at one when the two offsets coincide (2l = n).
        m[[i, (i + l) % n]] += w;
        m[[i, (i + n - l) % n]] += w;
    }
    SymOperator::new(m)
}

/// `0.76 X2 X1 + 0.33 X1 X2 + 0.3 X1^3`.
pub fn generator_polynomial() -> NCPoly {
    NCPoly::from_terms(
        2,
        [
            (Word::from_letters(vec![2, 1]), 0.76),
            (Word::from_letters(vec![1, 2]), 0.33),
            (Word::from_letters(vec![1, 1, 1]), 0.3),
        ],
    )
    .expect("valid polynomial")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CirculantParams {
    pub n: usize,
    pub p: f64,
    pub l1: usize,
    pub l2: usize,
    pub sigma: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub seed: u64,
}

impl Default for CirculantParams {
    fn default() -> Self {
        CirculantParams {
            n: 293,
            p: 0.05,
            l1: 1,
            l2: 30,
            sigma: 0.1,
            n_train: 800,
            n_test: 200,
            seed: 0,
        }
    }
}

fn samples(x: Array2<f64>, y: Array2<f64>) -> Samples {
    Samples {
        inputs: Batch {
            features: vec![x],
            measure_weight: 1.0,
        },
        targets: Batch {
            features: vec![y],
            measure_weight: 1.0,
        },
        mask: None,
    }
}

/// Inputs with i.i.d. `U[0,1]` entries and targets
/// `h(S1, S2) x + noise` for the [`generator_polynomial`] `h`, where
/// `S1`, `S2` are the circulant shifts at offsets `l1`, `l2`.
pub fn synth_circulant_dataset(params: &CirculantParams) -> Result<(Dataset, OperatorTuple)> {
    if !(params.sigma >= 0.0) {
        return Err(Error::InvalidArgument("sigma must be nonnegative".into()));
    }
    if params.n_train == 0 || params.n_test == 0 {
        return Err(Error::InvalidArgument("train and test sets must be non-empty".into()));
    }
    let s1 = circulant_shift(params.n, params.p, params.l1)?;
    let s2 = circulant_shift(params.n, params.p, params.l2)?;
    let t = OperatorTuple::certified(vec![s1, s2])?;
    let h = poly_matrix(&generator_polynomial(), &t)?;

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let total = params.n_train + params.n_test;
    let unit = Uniform::new(0.0, 1.0).expect("valid range");
    let mut x = Array2::zeros((params.n, total));
    for s in 0..total {
        for i in 0..params.n {
            x[[i, s]] = unit.sample(&mut rng);
        }
    }
    let mut y = h.dot(&x);
    if params.sigma > 0.0 {
        let noise = Normal::new(0.0, params.sigma).expect("valid sigma");
        for s in 0..total {
            for i in 0..params.n {
                y[[i, s]] += noise.sample(&mut rng);
            }
        }
    }
    let split = |m: &Array2<f64>, lo: usize, hi: usize| m.slice(ndarray::s![.., lo..hi]).to_owned();
    let train = samples(split(&x, 0, params.n_train), split(&y, 0, params.n_train));
    let test = samples(split(&x, params.n_train, total), split(&y, params.n_train, total));
    Ok((Dataset { train, test }, t))
}

/// Training inputs for a graph of `m` vertices derived from graphs and
/// samples on `n` vertices.
#[derive(Clone, Debug)]
pub struct Downsampled {
    pub m: usize,
    /// `(n / m)` times the template graphs of the induced graphons, i.e.
    /// the templates normalized by `m` and expressed at the scale of `n`.
    pub tuple: OperatorTuple,
    pub train: Samples,
    /// `||T_{W_j} - T_{template_j induced}||_op`.
    pub opdist: Vec<f64>,
}

/// Downsamples a graph tuple on `n` vertices and its training samples to
/// `m <= n` vertices through the induced graphons: graphs become template
/// graphs and signals become cell averages of their interpolations.
pub fn downsample_experiment(graphs: &[SymOperator], train: &Samples, m: usize) -> Result<Downsampled> {
    let n = graphs.first().ok_or_else(|| Error::InvalidArgument("empty graph tuple".into()))?.dim();
    if m == 0 || m > n {
        return Err(Error::InvalidArgument(format!("target size must satisfy 1 <= m <= {n}, got {m}")));
    }
    common_grid(&[m, n])?;
    let mut ops = Vec::with_capacity(graphs.len());
    let mut opdist = Vec::with_capacity(graphs.len());
    for g in graphs {
        let w = PiecewiseGraphon::induced(g)?;
        let tmpl = template_graph(&w, m)?;
        opdist.push(op_dist(&w, &PiecewiseGraphon::induced(&tmpl)?)?);
        ops.push(tmpl.scaled(n as f64 / m as f64));
    }
    let p = overlap_matrix(m, n);
    let down = |b: &Batch| Batch {
        features: b.features.iter().map(|f| if m == n { f.clone() } else { p.dot(f) }).collect(),
        measure_weight: b.measure_weight,
    };
    let mask = train
        .mask
        .as_ref()
        .map(|_| Err(Error::InvalidArgument("masked samples cannot be downsampled".into())))
        .transpose()?;
    Ok(Downsampled {
        m,
        tuple: OperatorTuple::certified(ops)?,
        train: Samples {
            inputs: down(&train.inputs),
            targets: down(&train.targets),
            mask,
        },
        opdist,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linop::{eval_poly, spectral_norm_default};

    #[test]
    fn circulant_rows_and_norm() {
        for (n, l) in [(293, 1), (293, 30), (8, 4)] {
            let s = circulant_shift(n, 0.05, l).unwrap();
            for r in s.matrix().rows() {
                assert!((r.sum() - 1.0).abs() < 1e-14);
            }
            assert!(spectral_norm_default(&s).unwrap() <= 1.0 + 1e-10);
        }
        assert!(circulant_shift(5, 0.1, 5).is_err());
        assert!(circulant_shift(5, 0.1, 0).is_err());
    }

    #[test]
    fn generator_constants() {
        let k = generator_polynomial().expansion_constants();
        assert!((k.c_total - 1.39).abs() < 1e-12);
        assert!((k.c_per_var[0] - 1.99).abs() < 1e-12);
        assert!((k.c_per_var[1] - 1.09).abs() < 1e-12);
    }

    #[test]
    fn noiseless_targets_are_filter_outputs() {
        let params = CirculantParams {
            n: 20,
            l2: 3,
            sigma: 0.0,
            n_train: 5,
            n_test: 2,
            ..CirculantParams::default()
        };
        let (d, t) = synth_circulant_dataset(&params).unwrap();
        assert_eq!((d.train.len(), d.test.len()), (5, 2));
        let h = generator_polynomial();
        for s in 0..5 {
            let x = d.train.inputs.features[0].column(s);
            let y = eval_poly(&h, &t, x).unwrap();
            for (a, b) in y.iter().zip(d.train.targets.features[0].column(s)) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn full_size_downsample_is_identity() {
        let params = CirculantParams {
            n: 12,
            l2: 5,
            n_train: 3,
            n_test: 1,
            ..CirculantParams::default()
        };
        let (d, t) = synth_circulant_dataset(&params).unwrap();
        let ds = downsample_experiment(t.ops(), &d.train, 12).unwrap();
        assert_eq!(ds.tuple.ops(), t.ops());
        assert_eq!(ds.train.inputs, d.train.inputs);
        assert_eq!(ds.opdist, vec![0.0, 0.0]);
        let half = downsample_experiment(t.ops(), &d.train, 6).unwrap();
        assert_eq!(half.train.inputs.dim(), 6);
        assert!(half.tuple.is_certified());
    }
}
