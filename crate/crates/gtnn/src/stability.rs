//! Computable perturbation bounds for operator-tuple networks and a
//! harness measuring actual output perturbations against them.
//!
//! Per layer, with `C(H) = max_b sum_a C(h_ba)`:
//!
//! `||Psi(H,W) f - Psi(H,Z) g|| <= ||f - g|| C(H)
//!      + min(||f||, ||g||) max_b sum_a sum_j C_j(h_ba) ||W_j - Z_j||`.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linop::{
    box_distance, box_norm, normalize_nonexpansive, op_distance, spectral_norm_default, MultiSignal, OperatorTuple, SymOperator,
};
use crate::network::{forward_layers, Batch, Layer, Network, WordFeatures};

/// Row sums of a layer's expansion constants: `c[b]` and `cj[b][j]`.
#[derive(Clone, Debug)]
struct RowConstants {
    c: Vec<f64>,
    cj: Vec<Vec<f64>>,
}

impl RowConstants {
    fn of(layer: &Layer, arity: usize) -> Self {
        let consts = layer.entry_constants(arity);
        let c = consts.iter().map(|r| r.iter().map(|e| e.c_total).sum()).collect();
        let cj = consts
            .iter()
            .map(|r| (0..arity).map(|j| r.iter().map(|e| e.c_per_var[j]).sum()).collect())
            .collect();
        RowConstants { c, cj }
    }

    fn signal_coeff(&self) -> f64 {
        self.c.iter().copied().fold(0.0, f64::max)
    }

    fn operator_coeff(&self, opdist: &[f64]) -> f64 {
        self.cj
            .iter()
            .map(|row| row.iter().zip(opdist).map(|(c, d)| c * d).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

fn check_opdist(opdist: &[f64], arity: usize) -> Result<()> {
    if opdist.len() != arity {
        return Err(Error::shape("operator distances", arity, opdist.len()));
    }
    if opdist.iter().any(|&d| !(d >= 0.0)) {
        return Err(Error::InvalidArgument("operator distances must be nonnegative".into()));
    }
    Ok(())
}

/// `(signal term, operator term)` of the one-layer bound for given input
/// distance, input norm minimum and operator distances.
pub fn layer_terms(layer: &Layer, arity: usize, input_distance: f64, m: f64, opdist: &[f64]) -> Result<(f64, f64)> {
    check_opdist(opdist, arity)?;
    let rc = RowConstants::of(layer, arity);
    Ok((input_distance * rc.signal_coeff(), m * rc.operator_coeff(opdist)))
}

/// One-layer perturbation bound for inputs `f`, `g` and operator
/// distances `opdist`.
pub fn layer_bound(layer: &Layer, arity: usize, f: &MultiSignal, g: &MultiSignal, opdist: &[f64]) -> Result<f64> {
    if f.features() != layer.in_features() {
        return Err(Error::shape("layer input features", layer.in_features(), f.features()));
    }
    let diff = box_distance(f, g)?;
    let m = box_norm(f).min(box_norm(g));
    let (s, o) = layer_terms(layer, arity, diff, m, opdist)?;
    Ok(s + o)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbationReport {
    /// Measured `||Phi(T) f - Phi(U) g||`.
    pub empirical: f64,
    /// The tighter of `layerwise_bound` and `simplified_bound`.
    pub bound: f64,
    pub layerwise_bound: f64,
    /// Present when every layer has `C <= 1`.
    pub simplified_bound: Option<f64>,
    /// `(signal term, operator term)` for each layer.
    pub layer_terms: Vec<(f64, f64)>,
    pub input_distance: f64,
    pub m: f64,
    pub opdist: Vec<f64>,
}

const SIMPLIFIED_SLACK: f64 = 1e-12;

fn check_tuples(net: &Network, t: &OperatorTuple, u: &OperatorTuple) -> Result<Vec<f64>> {
    if !t.is_certified() || !u.is_certified() {
        return Err(Error::NotCertified);
    }
    if t.arity() != net.arity() {
        return Err(Error::ArityMismatch {
            expected: net.arity(),
            found: t.arity(),
        });
    }
    op_distance(t, u)
}

/// Bounds for a batch of input pairs given per-layer outputs under both
/// tuples. Returns `(layerwise, simplified, terms)` per sample.
#[allow(clippy::type_complexity)]
fn batch_bounds(
    net: &Network,
    opdist: &[f64],
    f: &Batch,
    g: &Batch,
    out_t: &[Batch],
    out_u: &[Batch],
) -> Result<Vec<(f64, Option<f64>, Vec<(f64, f64)>)>> {
    let rows: Vec<RowConstants> = net.layers().iter().map(|l| RowConstants::of(l, net.arity())).collect();
    let d0 = f.sample_box_distances(g)?;
    let nf = f.sample_box_norms();
    let ng = g.sample_box_norms();
    let mut norms_t = vec![nf.clone()];
    let mut norms_u = vec![ng.clone()];
    for l in 0..net.depth().saturating_sub(1) {
        norms_t.push(out_t[l].sample_box_norms());
        norms_u.push(out_u[l].sample_box_norms());
    }
    let simplified_ok = rows.iter().all(|r| r.signal_coeff() <= 1.0 + SIMPLIFIED_SLACK);
    let op_coeffs: Vec<f64> = rows.iter().map(|r| r.operator_coeff(opdist)).collect();
    Ok((0..f.samples())
        .map(|s| {
            let mut delta = d0[s];
            let mut terms = Vec::with_capacity(rows.len());
            for (l, rc) in rows.iter().enumerate() {
                let m = norms_t[l][s].min(norms_u[l][s]);
                let term = (delta * rc.signal_coeff(), m * op_coeffs[l]);
                delta = term.0 + term.1;
                terms.push(term);
            }
            let simplified = simplified_ok.then(|| d0[s] + nf[s].min(ng[s]) * op_coeffs.iter().sum::<f64>());
            (delta, simplified, terms)
        })
        .collect())
}

/// End-to-end bound obtained by applying the one-layer bound recursively;
/// `m` at each layer uses the actual outputs of the preceding layers.
pub fn network_bound(
    net: &Network,
    t: &OperatorTuple,
    u: &OperatorTuple,
    f: &MultiSignal,
    g: &MultiSignal,
) -> Result<PerturbationReport> {
    let opdist = check_tuples(net, t, u)?;
    let fb = Batch::from_signals(std::slice::from_ref(f))?;
    let gb = Batch::from_signals(std::slice::from_ref(g))?;
    let out_t = forward_layers(net, t, &fb)?;
    let out_u = forward_layers(net, u, &gb)?;
    let empirical = out_t.last().expect("depth >= 1").sample_box_distances(out_u.last().expect("depth >= 1"))?[0];
    let (layerwise, simplified, terms) = batch_bounds(net, &opdist, &fb, &gb, &out_t, &out_u)?.swap_remove(0);
    Ok(PerturbationReport {
        empirical,
        bound: simplified.map_or(layerwise, |s| s.min(layerwise)),
        layerwise_bound: layerwise,
        simplified_bound: simplified,
        layer_terms: terms,
        input_distance: box_distance(f, g)?,
        m: box_norm(f).min(box_norm(g)),
        opdist,
    })
}

/// Depth-linear bound `||f - g|| + m sum_d max_b sum_a sum_j C_j ||T_j - U_j||`,
/// valid when every layer has `C <= 1`.
pub fn simplified_bound(
    net: &Network,
    t: &OperatorTuple,
    u: &OperatorTuple,
    f: &MultiSignal,
    g: &MultiSignal,
) -> Result<f64> {
    let opdist = check_tuples(net, t, u)?;
    let mut op_sum = 0.0;
    for (layer_index, layer) in net.layers().iter().enumerate() {
        let rc = RowConstants::of(layer, net.arity());
        let c = rc.signal_coeff();
        if c > 1.0 + SIMPLIFIED_SLACK {
            return Err(Error::ExpansionPrecondition { layer: layer_index, value: c });
        }
        op_sum += rc.operator_coeff(&opdist);
    }
    Ok(box_distance(f, g)? + box_norm(f).min(box_norm(g)) * op_sum)
}

/// Measured and bounded operator quantities of one layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerMetrics {
    /// `max_b sum_a ||h_ba(T)||_op`; equals `||Psi(H, T)||` for one feature.
    pub op_norm: f64,
    /// `C(H)`, the bound on `op_norm`.
    pub c_total: f64,
    /// `max_b sum_a ||h_ba(W) - h_ba(Z)||_op`.
    pub graph_diff: f64,
    /// `max_b sum_a sum_j C_j(h_ba) ||W_j - Z_j||_op`.
    pub graph_diff_bound: f64,
}

/// Dense matrices `h_ba(T)` for every entry of a layer, via word images of
/// the identity.
pub fn filter_matrices(layer: &Layer, t: &OperatorTuple) -> Result<Vec<Vec<Array2<f64>>>> {
    let eye = Batch {
        features: vec![Array2::eye(t.dim())],
        measure_weight: 1.0,
    };
    let feats = WordFeatures::compute(layer.basis(), t, &eye)?;
    Ok((0..layer.out_features())
        .map(|b| {
            (0..layer.in_features())
                .map(|a| {
                    let mut m = Array2::zeros((t.dim(), t.dim()));
                    for (i, &c) in layer.entry(b, a).iter().enumerate() {
                        if c != 0.0 {
                            m.scaled_add(c, feats.image(0, i));
                        }
                    }
                    m
                })
                .collect()
        })
        .collect())
}

/// Filter norm, its bound `C`, and the graph-perturbation difference with
/// its bound, for tuples `w` and `z`.
pub fn layer_metrics(layer: &Layer, arity: usize, w: &OperatorTuple, z: &OperatorTuple) -> Result<LayerMetrics> {
    let opdist = op_distance(w, z)?;
    let rc = RowConstants::of(layer, arity);
    let hw = filter_matrices(layer, w)?;
    let hz = filter_matrices(layer, z)?;
    let mut op_norm = 0.0f64;
    let mut graph_diff = 0.0f64;
    for (rw, rz) in hw.iter().zip(&hz) {
        let mut s = 0.0;
        let mut d = 0.0;
        for (a, b) in rw.iter().zip(rz) {
            s += spectral_norm_default(&SymOperator::new(a.clone())?)?;
            d += spectral_norm_default(&SymOperator::new(a - b)?)?;
        }
        op_norm = op_norm.max(s);
        graph_diff = graph_diff.max(d);
    }
    Ok(LayerMetrics {
        op_norm,
        c_total: rc.signal_coeff(),
        graph_diff,
        graph_diff_bound: rc.operator_coeff(&opdist),
    })
}

/// `t` with every operator perturbed by a symmetric Gaussian matrix of
/// spectral norm `s` and rescaled to be nonexpansive.
pub fn perturbed_tuple(t: &OperatorTuple, s: f64, rng: &mut ChaCha8Rng) -> Result<OperatorTuple> {
    let ops = t
        .ops()
        .iter()
        .map(|op| {
            let e = gaussian_perturbation(t.dim(), s, rng)?;
            if s == 0.0 {
                Ok(op.clone())
            } else {
                normalize_nonexpansive(&op.add(&e)?)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    OperatorTuple::certified(ops)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub size: f64,
    pub mean_opdist: f64,
    pub empirical: f64,
    pub bound: f64,
}

/// Symmetric Gaussian matrix `(E + E^T) / 2` scaled to spectral norm `s`.
pub fn gaussian_perturbation(n: usize, s: f64, rng: &mut ChaCha8Rng) -> Result<SymOperator> {
    let e = Array2::from_shape_simple_fn((n, n), || StandardNormal.sample(&mut *rng));
    let sym = SymOperator::new((&e + &e.t()) * 0.5)?;
    let norm = spectral_norm_default(&sym)?;
    Ok(if norm == 0.0 { sym } else { sym.scaled(s / norm) })
}

/// For each size `s`, perturbs every operator of `t` by a symmetric
/// Gaussian matrix of spectral norm `s`, rescales the result to be
/// nonexpansive, and reports the mean output perturbation over `inputs`
/// together with the mean bound.
pub fn perturb_sweep(net: &Network, t: &OperatorTuple, inputs: &Batch, sizes: &[f64], seed: u64) -> Result<Vec<SweepRow>> {
    Ok(perturb_sweep_many(&[net], t, inputs, sizes, seed)?.swap_remove(0))
}

/// [`perturb_sweep`] for several networks sharing the same perturbed
/// tuples, so their rows are paired draw by draw. Returns one row list per
/// network.
pub fn perturb_sweep_many(nets: &[&Network], t: &OperatorTuple, inputs: &Batch, sizes: &[f64], seed: u64) -> Result<Vec<Vec<SweepRow>>> {
    if !t.is_certified() {
        return Err(Error::NotCertified);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bases = nets.iter().map(|net| forward_layers(net, t, inputs)).collect::<Result<Vec<_>>>()?;
    let count = inputs.samples() as f64;
    let mut rows = vec![Vec::with_capacity(sizes.len()); nets.len()];
    for &s in sizes {
        let u = perturbed_tuple(t, s, &mut rng)?;
        let opdist = op_distance(t, &u)?;
        let mean_opdist = opdist.iter().sum::<f64>() / opdist.len() as f64;
        for ((net, base), out) in nets.iter().zip(&bases).zip(rows.iter_mut()) {
            let pert = forward_layers(net, &u, inputs)?;
            let emp = base.last().expect("depth >= 1").sample_box_distances(pert.last().expect("depth >= 1"))?;
            let bounds = batch_bounds(net, &opdist, inputs, inputs, base, &pert)?;
            out.push(SweepRow {
                size: s,
                mean_opdist,
                empirical: emp.iter().sum::<f64>() / count,
                bound: bounds.iter().map(|(l, s, _)| s.map_or(*l, |s| s.min(*l))).sum::<f64>() / count,
            });
        }
    }
    Ok(rows)
}
