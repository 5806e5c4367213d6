//! Batched forward evaluation and exact reverse-mode gradients.
//!
//! A batch stores each feature as an `n x S` matrix whose columns are the
//! samples, so every word application is a single matrix product.

use std::sync::Arc;

use ndarray::{Array2, Zip};
use rayon::prelude::*;

use super::{Layer, Network};
use crate::error::{Error, Result};
use crate::linop::{column_sq_norms, stack_feature, MultiSignal, OperatorTuple};
use crate::ncpoly::Word;

/// Samples stacked feature-wise: `features[a]` is `n x S`.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub features: Vec<Array2<f64>>,
    pub measure_weight: f64,
}

impl Batch {
    pub fn from_signals(signals: &[MultiSignal]) -> Result<Self> {
        let first = signals
            .first()
            .ok_or_else(|| Error::InvalidArgument("empty batch".into()))?;
        if let Some(bad) = signals
            .iter()
            .find(|s| s.values.dim() != first.values.dim() || s.measure_weight != first.measure_weight)
        {
            return Err(Error::shape(
                "batch signals",
                format!("{:?}", first.values.dim()),
                format!("{:?}", bad.values.dim()),
            ));
        }
        Ok(Batch {
            features: (0..first.features()).map(|a| stack_feature(signals, a)).collect(),
            measure_weight: first.measure_weight,
        })
    }

    pub fn to_signals(&self) -> Vec<MultiSignal> {
        (0..self.samples())
            .map(|s| {
                let mut v = Array2::zeros((self.dim(), self.features.len()));
                for (a, f) in self.features.iter().enumerate() {
                    v.column_mut(a).assign(&f.column(s));
                }
                MultiSignal {
                    values: v,
                    measure_weight: self.measure_weight,
                }
            })
            .collect()
    }

    pub fn dim(&self) -> usize {
        self.features[0].nrows()
    }

    pub fn samples(&self) -> usize {
        self.features[0].ncols()
    }

    pub fn n_features(&self) -> usize {
        self.features.len()
    }

    /// Box norm of every sample.
    pub fn sample_box_norms(&self) -> Vec<f64> {
        let mut out = vec![0.0f64; self.samples()];
        for f in &self.features {
            for (o, sq) in out.iter_mut().zip(column_sq_norms(f)) {
                *o = o.max((self.measure_weight * sq).sqrt());
            }
        }
        out
    }

    /// Box distance between corresponding samples of two batches.
    pub fn sample_box_distances(&self, other: &Batch) -> Result<Vec<f64>> {
        if self.features.len() != other.features.len()
            || self.measure_weight != other.measure_weight
            || self.features.iter().zip(&other.features).any(|(a, b)| a.dim() != b.dim())
        {
            return Err(Error::shape("batch shape", "matching batches", "mismatch"));
        }
        Ok(Batch {
            features: self.features.iter().zip(&other.features).map(|(a, b)| a - b).collect(),
            measure_weight: self.measure_weight,
        }
        .sample_box_norms())
    }
}

/// Evaluation order for the word images of one input: every suffix of
/// every basis word, shortest first, each obtained from its tail by one
/// operator application.
struct SuffixPlan {
    nodes: Vec<Word>,
    parent: Vec<usize>,
    first_letter: Vec<u16>,
    levels: Vec<Vec<usize>>,
    basis_node: Vec<usize>,
}

impl SuffixPlan {
    fn new(basis: &[Word]) -> Self {
        let mut nodes: Vec<Word> = basis
            .iter()
            .flat_map(|w| (0..=w.len()).map(move |i| Word::from_letters(w.letters()[i..].to_vec())))
            .collect();
        nodes.sort();
        nodes.dedup();
        let index = |w: &Word| nodes.binary_search(w).expect("suffix closed");
        let mut parent = vec![0; nodes.len()];
        let mut first_letter = vec![0; nodes.len()];
        let max_len = nodes.last().map_or(0, Word::len);
        let mut levels = vec![Vec::new(); max_len + 1];
        for (i, w) in nodes.iter().enumerate() {
            levels[w.len()].push(i);
            if let Some(t) = w.tail() {
                parent[i] = index(&t);
                first_letter[i] = w.letters()[0];
            }
        }
        let basis_node = basis.iter().map(index).collect();
        SuffixPlan {
            nodes,
            parent,
            first_letter,
            levels,
            basis_node,
        }
    }
}

/// Images `X^w(T)(x_a)` of each input feature under every basis word.
#[derive(Clone, Debug)]
pub struct WordFeatures {
    basis: Vec<Word>,
    /// `per_feature[a][i]` is the image of feature `a` under `basis[i]`.
    per_feature: Vec<Vec<Arc<Array2<f64>>>>,
}

impl WordFeatures {
    pub fn compute(basis: &[Word], t: &OperatorTuple, input: &Batch) -> Result<Self> {
        if input.dim() != t.dim() {
            return Err(Error::shape("signal length", t.dim(), input.dim()));
        }
        for w in basis {
            t.check_word(w)?;
        }
        let plan = SuffixPlan::new(basis);
        let per_feature = input
            .features
            .iter()
            .map(|x| {
                let mut vals: Vec<Option<Arc<Array2<f64>>>> = vec![None; plan.nodes.len()];
                for level in &plan.levels {
                    let computed: Vec<(usize, Arc<Array2<f64>>)> = level
                        .par_iter()
                        .map(|&i| {
                            let v = if plan.nodes[i].is_empty() {
                                x.clone()
                            } else {
                                let src = vals[plan.parent[i]].as_ref().expect("tail computed first");
                                t.apply_batch(plan.first_letter[i], src.view())
                            };
                            (i, Arc::new(v))
                        })
                        .collect();
                    for (i, v) in computed {
                        vals[i] = Some(v);
                    }
                }
                plan.basis_node
                    .iter()
                    .map(|&i| vals[i].clone().expect("basis node computed"))
                    .collect()
            })
            .collect();
        Ok(WordFeatures {
            basis: basis.to_vec(),
            per_feature,
        })
    }

    pub fn basis(&self) -> &[Word] {
        &self.basis
    }

    pub fn image(&self, a: usize, word_index: usize) -> &Array2<f64> {
        &self.per_feature[a][word_index]
    }

    fn n_features(&self) -> usize {
        self.per_feature.len()
    }

    fn shape(&self) -> (usize, usize) {
        self.per_feature[0][0].dim()
    }
}

#[derive(Clone, Debug)]
struct LayerCache {
    feats: Arc<WordFeatures>,
    pre: Vec<Array2<f64>>,
}

/// Intermediate values of a forward pass, consumed by [`backward_batch`].
#[derive(Clone, Debug)]
pub struct ForwardCache {
    params: Vec<f64>,
    dim: usize,
    samples: usize,
    layers: Vec<LayerCache>,
}

impl ForwardCache {
    /// Word images of the network input, reusable while the input and the
    /// operator tuple stay fixed.
    pub fn input_features(&self) -> Arc<WordFeatures> {
        Arc::clone(&self.layers[0].feats)
    }
}

fn combine(layer: &Layer, feats: &WordFeatures) -> Vec<Array2<f64>> {
    let shape = feats.shape();
    (0..layer.out_features())
        .into_par_iter()
        .map(|b| {
            let mut z = Array2::zeros(shape);
            for a in 0..layer.in_features() {
                for (i, &c) in layer.entry(b, a).iter().enumerate() {
                    if c != 0.0 {
                        z.scaled_add(c, feats.image(a, i));
                    }
                }
            }
            z
        })
        .collect()
}

/// Runs the network on a batch. `input_features`, when given, must be the
/// word images of `x` under the first layer's basis (see
/// [`ForwardCache::input_features`]).
pub fn forward_batch(
    net: &Network,
    t: &OperatorTuple,
    x: &Batch,
    input_features: Option<Arc<WordFeatures>>,
) -> Result<(Batch, ForwardCache)> {
    if t.arity() != net.arity() {
        return Err(Error::ArityMismatch {
            expected: net.arity(),
            found: t.arity(),
        });
    }
    if x.n_features() != net.layers()[0].in_features() {
        return Err(Error::shape("input features", net.layers()[0].in_features(), x.n_features()));
    }
    if x.dim() != t.dim() {
        return Err(Error::shape("signal length", t.dim(), x.dim()));
    }
    let mut layers = Vec::with_capacity(net.depth());
    let mut current = x.clone();
    for (l, layer) in net.layers().iter().enumerate() {
        let feats = match (&input_features, l) {
            (Some(f), 0) => {
                if f.basis() != layer.basis()
                    || f.n_features() != x.n_features()
                    || f.shape() != (x.dim(), x.samples())
                {
                    return Err(Error::StaleCache("precomputed input features do not match".into()));
                }
                Arc::clone(f)
            }
            _ => Arc::new(WordFeatures::compute(layer.basis(), t, &current)?),
        };
        let pre = combine(layer, &feats);
        let act = layer.activation;
        let out: Vec<Array2<f64>> = pre.iter().map(|z| z.mapv(|v| act.apply(v))).collect();
        layers.push(LayerCache { feats, pre });
        current = Batch {
            features: out,
            measure_weight: x.measure_weight,
        };
    }
    let cache = ForwardCache {
        params: net.params(),
        dim: x.dim(),
        samples: x.samples(),
        layers,
    };
    Ok((current, cache))
}

/// Outputs of every layer (after activation), first layer first.
pub fn forward_layers(net: &Network, t: &OperatorTuple, x: &Batch) -> Result<Vec<Batch>> {
    let (_, cache) = forward_batch(net, t, x, None)?;
    Ok(net
        .layers()
        .iter()
        .zip(&cache.layers)
        .map(|(layer, lc)| {
            let act = layer.activation;
            Batch {
                features: lc.pre.iter().map(|z| z.mapv(|v| act.apply(v))).collect(),
                measure_weight: x.measure_weight,
            }
        })
        .collect())
}

/// Horner plan for `sum_w c_w (X^w)^T g = sum_w c_w X^{rev w} g`: nodes
/// are the prefixes of the reversed basis words.
struct PrefixPlan {
    parent: Vec<usize>,
    last_letter: Vec<u16>,
    levels: Vec<Vec<usize>>,
    /// Node holding the reversal of each basis word.
    basis_node: Vec<usize>,
    n_nodes: usize,
}

impl PrefixPlan {
    fn new(basis: &[Word]) -> Self {
        let reversed: Vec<Word> = basis.iter().map(Word::reversed).collect();
        let mut nodes: Vec<Word> = reversed
            .iter()
            .flat_map(|w| (0..=w.len()).map(move |i| Word::from_letters(w.letters()[..i].to_vec())))
            .collect();
        nodes.sort();
        nodes.dedup();
        let index = |w: &Word| nodes.binary_search(w).expect("prefix closed");
        let max_len = nodes.last().map_or(0, Word::len);
        let mut levels = vec![Vec::new(); max_len + 1];
        let mut parent = vec![0; nodes.len()];
        let mut last_letter = vec![0; nodes.len()];
        for (i, w) in nodes.iter().enumerate() {
            levels[w.len()].push(i);
            if !w.is_empty() {
                let l = w.letters();
                parent[i] = index(&Word::from_letters(l[..l.len() - 1].to_vec()));
                last_letter[i] = l[l.len() - 1];
            }
        }
        PrefixPlan {
            parent,
            last_letter,
            levels,
            basis_node: reversed.iter().map(index).collect(),
            n_nodes: nodes.len(),
        }
    }
}

fn input_gradient(layer: &Layer, t: &OperatorTuple, g: &[Array2<f64>], plan: &PrefixPlan) -> Vec<Array2<f64>> {
    let shape = g[0].dim();
    (0..layer.in_features())
        .map(|a| {
            let mut acc: Vec<Array2<f64>> = vec![Array2::zeros(shape); plan.n_nodes];
            for (b, gb) in g.iter().enumerate() {
                for (i, &c) in layer.entry(b, a).iter().enumerate() {
                    if c != 0.0 {
                        acc[plan.basis_node[i]].scaled_add(c, gb);
                    }
                }
            }
            for level in plan.levels.iter().skip(1).rev() {
                let pushed: Vec<(usize, Array2<f64>)> = level
                    .par_iter()
                    .map(|&i| (plan.parent[i], t.apply_batch(plan.last_letter[i], acc[i].view())))
                    .collect();
                for (p, v) in pushed {
                    acc[p] += &v;
                }
            }
            acc.swap_remove(0)
        })
        .collect()
}

fn frobenius_inner(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    let mut s = 0.0;
    Zip::from(a).and(b).for_each(|&x, &y| s += x * y);
    s
}

/// Exact gradient of a scalar loss with respect to every coefficient, in
/// the order of [`Network::params`], given `dLoss/dy` for the batch output.
pub fn backward_batch(net: &Network, t: &OperatorTuple, cache: &ForwardCache, dy: &[Array2<f64>]) -> Result<Vec<f64>> {
    if cache.params != net.params() || cache.layers.len() != net.depth() {
        return Err(Error::StaleCache("network parameters changed since the forward pass".into()));
    }
    if cache.dim != t.dim() {
        return Err(Error::StaleCache("operator dimension differs from the forward pass".into()));
    }
    let last = net.layers().last().expect("non-empty");
    if dy.len() != last.out_features() || dy.iter().any(|d| d.dim() != (cache.dim, cache.samples)) {
        return Err(Error::shape("output gradient", format!("{} x ({}, {})", last.out_features(), cache.dim, cache.samples), "mismatch"));
    }
    let mut grads: Vec<Vec<f64>> = vec![Vec::new(); net.depth()];
    let mut upstream: Vec<Array2<f64>> = dy.to_vec();
    for (l, layer) in net.layers().iter().enumerate().rev() {
        let lc = &cache.layers[l];
        let act = layer.activation;
        let g: Vec<Array2<f64>> = upstream
            .iter()
            .zip(&lc.pre)
            .map(|(u, pre)| {
                let mut out = u.clone();
                if act != super::Activation::Identity {
                    Zip::from(&mut out).and(pre).for_each(|o, &p| *o *= act.derivative(p));
                }
                out
            })
            .collect();
        let nw = layer.basis().len();
        let index: Vec<(usize, usize, usize)> = (0..layer.out_features())
            .flat_map(|b| (0..layer.in_features()).flat_map(move |a| (0..nw).map(move |i| (b, a, i))))
            .collect();
        grads[l] = index
            .par_iter()
            .map(|&(b, a, i)| frobenius_inner(lc.feats.image(a, i), &g[b]))
            .collect();
        if l > 0 {
            let plan = PrefixPlan::new(layer.basis());
            upstream = input_gradient(layer, t, &g, &plan);
        }
    }
    Ok(grads.into_iter().flatten().collect())
}

/// Forward pass on a single multi-feature signal.
pub fn forward(net: &Network, t: &OperatorTuple, x: &MultiSignal) -> Result<(MultiSignal, ForwardCache)> {
    let (y, cache) = forward_batch(net, t, &Batch::from_signals(std::slice::from_ref(x))?, None)?;
    Ok((y.to_signals().pop().expect("one sample"), cache))
}

/// Gradient for a single-signal forward pass.
pub fn backward(net: &Network, t: &OperatorTuple, cache: &ForwardCache, dy: &MultiSignal) -> Result<Vec<f64>> {
    let b = Batch::from_signals(std::slice::from_ref(dy))?;
    backward_batch(net, t, cache, &b.features)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linop::{eval_filter, SymOperator};
    use crate::network::{init_network, Activation, Architecture};
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tuple(n: usize, k: usize, seed: u64) -> OperatorTuple {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ops = (0..k)
            .map(|_| SymOperator::new(Array2::from_shape_fn((n, n), |_| rng.random_range(-1.0..1.0))).unwrap())
            .collect();
        OperatorTuple::normalized(ops).unwrap()
    }

    fn signal(n: usize, a: usize, seed: u64) -> MultiSignal {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        MultiSignal::new(Array2::from_shape_fn((n, a), |_| rng.random_range(-1.0..1.0)), 1.0).unwrap()
    }

    #[test]
    fn identity_layer_applies_activation() {
        let t = tuple(4, 2, 0);
        let net = Network::from_polys(2, 0, vec![(vec![vec![crate::ncpoly::NCPoly::one(2)]], Activation::Relu)]).unwrap();
        let x = signal(4, 1, 1);
        let (y, _) = forward(&net, &t, &x).unwrap();
        assert_eq!(y, x.relu());
    }

    #[test]
    fn zero_input_gives_zero_output() {
        let t = tuple(5, 2, 2);
        let net = init_network(&Architecture::new(2, 2, vec![2, 3, 1]), 1.0, 7).unwrap();
        let (y, _) = forward(&net, &t, &MultiSignal::zeros(5, 2, 1.0)).unwrap();
        assert!(y.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn forward_matches_layerwise_filters() {
        let t = tuple(6, 2, 3);
        let net = init_network(&Architecture::new(2, 2, vec![2, 3, 2]), 3.0, 11).unwrap();
        let x = signal(6, 2, 4);
        let (y, _) = forward(&net, &t, &x).unwrap();
        let h0 = net.layers()[0].polys(2);
        let h1 = net.layers()[1].polys(2);
        let mid = eval_filter(&h0, &t, &x).unwrap().relu();
        let expected = eval_filter(&h1, &t, &mid).unwrap();
        for (a, b) in y.values.iter().zip(expected.values.iter()) {
            assert!((a - b).abs() < 1e-12 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn zero_upstream_gives_zero_gradient() {
        let t = tuple(4, 2, 5);
        let net = init_network(&Architecture::new(2, 2, vec![1, 2, 1]), 1.0, 1).unwrap();
        let x = signal(4, 1, 6);
        let (_, cache) = forward(&net, &t, &x).unwrap();
        let g = backward(&net, &t, &cache, &MultiSignal::zeros(4, 1, 1.0)).unwrap();
        assert_eq!(g.len(), net.param_count());
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn stale_cache_is_detected() {
        let t = tuple(4, 2, 5);
        let mut net = init_network(&Architecture::new(2, 1, vec![1, 1]), 1.0, 1).unwrap();
        let x = signal(4, 1, 6);
        let (y, cache) = forward(&net, &t, &x).unwrap();
        let mut p = net.params();
        p[0] += 1.0;
        net.set_params(&p).unwrap();
        assert!(matches!(backward(&net, &t, &cache, &y), Err(Error::StaleCache(_))));
    }

    #[test]
    fn transference_to_other_dimension() {
        let net = init_network(&Architecture::new(2, 2, vec![1, 2, 1]), 1.0, 9).unwrap();
        for n in [3, 7, 12] {
            let (y, _) = forward(&net, &tuple(n, 2, n as u64), &signal(n, 1, 2)).unwrap();
            assert_eq!(y.values.dim(), (n, 1));
        }
        assert!(forward(&net, &tuple(4, 3, 0), &signal(4, 1, 0)).is_err());
    }

    #[test]
    fn batch_round_trip() {
        let sigs: Vec<_> = (0..3).map(|s| signal(5, 2, s)).collect();
        let b = Batch::from_signals(&sigs).unwrap();
        assert_eq!(b.samples(), 3);
        assert_eq!(b.to_signals(), sigs);
    }
}
