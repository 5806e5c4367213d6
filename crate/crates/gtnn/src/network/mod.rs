//! Graph-tuple neural networks: layers of non-commutative polynomial
//! filters followed by a componentwise activation.

mod adam;
mod eval;
mod loss;
mod train;

pub use adam::Adam;
pub use eval::{backward, backward_batch, forward, forward_batch, forward_layers, Batch, ForwardCache, WordFeatures};
pub use loss::{mse_loss, mse_loss_batch, r_squared, r_squared_batch};
pub use train::{
    expansion_vectors, penalty, train, train_with_observer, EpochRecord, Metric, Samples, TrainConfig,
    TrainHistory,
};

use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ncpoly::{enumerate_basis, ExpansionConstants, NCPoly, Word};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    pub fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Relu => v.max(0.0),
            Activation::Identity => v,
        }
    }

    /// Derivative used in backpropagation; ReLU has derivative 0 at 0.
    pub fn derivative(self, pre: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

/// One operator layer: an `out x in` matrix of polynomials supported on a
/// shared list of words, followed by an activation.
///
/// Coefficients are stored densely in `[b][a][word]` order, `word`
/// following the canonical order of `basis`.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    in_features: usize,
    out_features: usize,
    basis: Vec<Word>,
    coeffs: Vec<f64>,
    pub activation: Activation,
}

impl Layer {
    /// A zero layer supported on the given words.
    pub fn zeros(in_features: usize, out_features: usize, basis: Vec<Word>, activation: Activation) -> Result<Self> {
        if in_features == 0 || out_features == 0 {
            return Err(Error::InvalidArgument("layer feature sizes must be >= 1".into()));
        }
        let mut basis = basis;
        basis.sort();
        basis.dedup();
        if basis.is_empty() {
            return Err(Error::InvalidArgument("layer basis must contain at least one word".into()));
        }
        let len = in_features * out_features * basis.len();
        Ok(Layer {
            in_features,
            out_features,
            basis,
            coeffs: vec![0.0; len],
            activation,
        })
    }

    /// Builds a layer from a polynomial matrix; the basis is the union of
    /// all words that appear, or every word up to `degree` if given.
    pub fn from_polys(polys: &[Vec<NCPoly>], activation: Activation, degree: Option<usize>) -> Result<Self> {
        let out_features = polys.len();
        let in_features = polys.first().map_or(0, Vec::len);
        if out_features == 0 || in_features == 0 || polys.iter().any(|r| r.len() != in_features) {
            return Err(Error::shape("polynomial matrix", "non-empty rectangular", "ragged or empty"));
        }
        let arity = polys[0][0].arity();
        if let Some(p) = polys.iter().flatten().find(|p| p.arity() != arity) {
            return Err(Error::ArityMismatch {
                expected: arity,
                found: p.arity(),
            });
        }
        let basis = match degree {
            Some(d) => {
                if let Some(p) = polys.iter().flatten().find(|p| p.degree().is_some_and(|pd| pd > d)) {
                    return Err(Error::InvalidArgument(format!("polynomial {p} exceeds degree cap {d}")));
                }
                enumerate_basis(arity, d)
            }
            None => {
                let mut words: Vec<Word> = polys.iter().flatten().flat_map(|p| p.terms().map(|(w, _)| w.clone())).collect();
                if words.is_empty() {
                    words.push(Word::empty());
                }
                words
            }
        };
        let mut layer = Layer::zeros(in_features, out_features, basis, activation)?;
        for (b, row) in polys.iter().enumerate() {
            for (a, p) in row.iter().enumerate() {
                for (w, c) in p.terms() {
                    let idx = layer.word_index(w).ok_or_else(|| {
                        Error::InvalidArgument(format!("word {w} is not in the layer basis"))
                    })?;
                    let off = layer.offset(b, a) + idx;
                    layer.coeffs[off] = c;
                }
            }
        }
        Ok(layer)
    }

    pub fn in_features(&self) -> usize {
        self.in_features
    }

    pub fn out_features(&self) -> usize {
        self.out_features
    }

    pub fn basis(&self) -> &[Word] {
        &self.basis
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn param_count(&self) -> usize {
        self.coeffs.len()
    }

    pub fn word_index(&self, w: &Word) -> Option<usize> {
        self.basis.binary_search(w).ok()
    }

    pub(crate) fn offset(&self, b: usize, a: usize) -> usize {
        (b * self.in_features + a) * self.basis.len()
    }

    /// Coefficients of entry `(b, a)` in basis order.
    pub fn entry(&self, b: usize, a: usize) -> &[f64] {
        let off = self.offset(b, a);
        &self.coeffs[off..off + self.basis.len()]
    }

    pub fn max_letter(&self) -> u16 {
        self.basis.iter().map(Word::max_letter).max().unwrap_or(0)
    }

    pub fn max_degree(&self) -> usize {
        self.basis.iter().map(Word::len).max().unwrap_or(0)
    }

    pub fn poly(&self, arity: usize, b: usize, a: usize) -> NCPoly {
        NCPoly::from_terms(arity, self.basis.iter().cloned().zip(self.entry(b, a).iter().copied()))
            .expect("layer words respect the network arity")
    }

    pub fn polys(&self, arity: usize) -> Vec<Vec<NCPoly>> {
        (0..self.out_features)
            .map(|b| (0..self.in_features).map(|a| self.poly(arity, b, a)).collect())
            .collect()
    }

    pub fn has_constant_term(&self) -> bool {
        match self.word_index(&Word::empty()) {
            Some(i) => (0..self.out_features)
                .any(|b| (0..self.in_features).any(|a| self.entry(b, a)[i] != 0.0)),
            None => false,
        }
    }

    /// Per-entry expansion constants, indexed `[b][a]`.
    pub fn entry_constants(&self, arity: usize) -> Vec<Vec<ExpansionConstants>> {
        let q: Vec<Vec<f64>> = self
            .basis
            .iter()
            .map(|w| (1..=arity as u16).map(|j| w.occurrences(j) as f64).collect())
            .collect();
        (0..self.out_features)
            .map(|b| {
                (0..self.in_features)
                    .map(|a| {
                        let mut k = ExpansionConstants::zero(arity);
                        for (i, &c) in self.entry(b, a).iter().enumerate() {
                            let m = c.abs();
                            k.c_total += m;
                            for j in 0..arity {
                                k.c_per_var[j] += q[i][j] * m;
                            }
                        }
                        k
                    })
                    .collect()
            })
            .collect()
    }
}

/// Shape of a network before coefficients are chosen.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub arity: usize,
    pub degree: usize,
    pub feature_sizes: Vec<usize>,
    /// Activation after every layer but the last.
    pub hidden_activation: Activation,
    pub final_activation: Activation,
    /// Restricts every layer to these words; all words up to `degree` if absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub basis: Option<Vec<Word>>,
}

impl Architecture {
    pub fn new(arity: usize, degree: usize, feature_sizes: Vec<usize>) -> Self {
        Architecture {
            arity,
            degree,
            feature_sizes,
            hidden_activation: Activation::Relu,
            final_activation: Activation::Identity,
            basis: None,
        }
    }

    pub fn with_final_activation(mut self, act: Activation) -> Self {
        self.final_activation = act;
        self
    }

    pub fn with_basis(mut self, basis: Vec<Word>) -> Self {
        self.basis = Some(basis);
        self
    }

    pub fn layer_basis(&self) -> Vec<Word> {
        match &self.basis {
            Some(b) => {
                let mut b = b.clone();
                b.sort();
                b.dedup();
                b
            }
            None => enumerate_basis(self.arity, self.degree),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.arity == 0 {
            return Err(Error::InvalidArgument("arity must be >= 1".into()));
        }
        if self.feature_sizes.len() < 2 || self.feature_sizes.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "feature sizes must list at least two positive entries, got {:?}",
                self.feature_sizes
            )));
        }
        for w in self.layer_basis() {
            w.check_arity(self.arity)?;
            if w.len() > self.degree {
                return Err(Error::InvalidArgument(format!("basis word {w} exceeds degree {}", self.degree)));
            }
        }
        Ok(())
    }

    /// `(#words) * sum_j alpha_j alpha_{j+1}`.
    pub fn param_count(&self) -> usize {
        let words = self.layer_basis().len();
        words * self.feature_sizes.windows(2).map(|w| w[0] * w[1]).sum::<usize>()
    }
}

/// A network of polynomial-filter layers over a fixed alphabet.
#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    arity: usize,
    degree: usize,
    layers: Vec<Layer>,
}

impl Network {
    pub fn new(arity: usize, degree: usize, layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument("network needs at least one layer".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].out_features != pair[1].in_features {
                return Err(Error::shape("layer chaining", pair[0].out_features, pair[1].in_features));
            }
        }
        for l in &layers {
            if l.max_letter() as usize > arity {
                return Err(Error::LetterOutOfRange {
                    letter: l.max_letter(),
                    arity,
                });
            }
            if l.max_degree() > degree {
                return Err(Error::InvalidArgument(format!(
                    "layer uses words of length {} above the degree cap {degree}",
                    l.max_degree()
                )));
            }
        }
        Ok(Network { arity, degree, layers })
    }

    /// Builds a network from polynomial matrices, one per layer.
    pub fn from_polys(arity: usize, degree: usize, layers: Vec<(Vec<Vec<NCPoly>>, Activation)>) -> Result<Self> {
        let layers = layers
            .into_iter()
            .map(|(p, act)| Layer::from_polys(&p, act, Some(degree)))
            .collect::<Result<Vec<_>>>()?;
        Network::new(arity, degree, layers)
    }

    /// All-zero network with the given architecture.
    pub fn zeros(arch: &Architecture) -> Result<Self> {
        arch.validate()?;
        let basis = arch.layer_basis();
        let n_layers = arch.feature_sizes.len() - 1;
        let layers = (0..n_layers)
            .map(|j| {
                let act = if j + 1 == n_layers {
                    arch.final_activation
                } else {
                    arch.hidden_activation
                };
                Layer::zeros(arch.feature_sizes[j], arch.feature_sizes[j + 1], basis.clone(), act)
            })
            .collect::<Result<Vec<_>>>()?;
        Network::new(arch.arity, arch.degree, layers)
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn feature_sizes(&self) -> Vec<usize> {
        let mut v = vec![self.layers[0].in_features];
        v.extend(self.layers.iter().map(|l| l.out_features));
        v
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    /// Flattened coefficients, layer by layer in canonical order.
    pub fn params(&self) -> Vec<f64> {
        self.layers.iter().flat_map(|l| l.coeffs.iter().copied()).collect()
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::shape("parameter vector", self.param_count(), params.len()));
        }
        let mut off = 0;
        for l in &mut self.layers {
            let n = l.coeffs.len();
            l.coeffs.copy_from_slice(&params[off..off + n]);
            off += n;
        }
        Ok(())
    }

    pub fn has_constant_term(&self) -> bool {
        self.layers.iter().any(Layer::has_constant_term)
    }

    /// The first `depth` layers; `None` unless `1 <= depth <= self.depth()`.
    pub fn truncated(&self, depth: usize) -> Option<Network> {
        (depth >= 1 && depth <= self.layers.len()).then(|| Network {
            arity: self.arity,
            degree: self.degree,
            layers: self.layers[..depth].to_vec(),
        })
    }
}

/// Draws every coefficient uniformly from `[-s, s]`,
/// `s = init_scale / (#words * in_features)`, in canonical order.
pub fn init_network(arch: &Architecture, init_scale: f64, seed: u64) -> Result<Network> {
    let mut net = Network::zeros(arch)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for layer in &mut net.layers {
        let s = init_scale / (layer.basis.len() * layer.in_features) as f64;
        if s == 0.0 {
            continue;
        }
        let dist = Uniform::new_inclusive(-s.abs(), s.abs())
            .map_err(|e| Error::InvalidArgument(format!("init scale {init_scale}: {e}")))?;
        for c in layer.coeffs.iter_mut() {
            *c = dist.sample(&mut rng);
        }
    }
    Ok(net)
}
