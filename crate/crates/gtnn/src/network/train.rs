//! Full-batch ADAM training with the hinge penalty on per-layer expansion
//! constants.

use std::sync::Arc;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{forward_batch, backward_batch, mse_loss_batch, r_squared_batch, Adam, Batch, Network, WordFeatures};
use crate::error::{Error, Result};
use crate::linop::OperatorTuple;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Mse,
    RSquared,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_epsilon: f64,
    pub epochs: usize,
    pub seed: u64,
    pub lambda: f64,
    /// One target per layer for `C`.
    pub c_total_targets: Option<Vec<f64>>,
    /// `[j][layer]` targets for `C_j`.
    pub c_per_var_targets: Option<Vec<Vec<f64>>>,
    pub init_scale: f64,
    /// L2 penalty on the coefficient vector.
    pub ridge: f64,
    pub metric: Metric,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            adam_epsilon: 1e-8,
            epochs: 1000,
            seed: 0,
            lambda: 0.0,
            c_total_targets: None,
            c_per_var_targets: None,
            init_scale: 1.0,
            ridge: 0.0,
            metric: Metric::Mse,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, depth: usize, arity: usize) -> Result<()> {
        if !(self.lambda >= 0.0) || !(self.ridge >= 0.0) {
            return Err(Error::Config("lambda and ridge must be nonnegative".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        let ok = |v: &Vec<f64>| v.len() == depth && v.iter().all(|&x| x >= 0.0);
        if let Some(t) = &self.c_total_targets {
            if !ok(t) {
                return Err(Error::Config(format!("c_total_targets needs {depth} nonnegative entries")));
            }
        }
        if let Some(t) = &self.c_per_var_targets {
            if t.len() != arity || !t.iter().all(ok) {
                return Err(Error::Config(format!(
                    "c_per_var_targets needs {arity} rows of {depth} nonnegative entries"
                )));
            }
        }
        if self.lambda > 0.0 && self.c_total_targets.is_none() && self.c_per_var_targets.is_none() {
            return Err(Error::Config("lambda > 0 requires expansion-constant targets".into()));
        }
        Ok(())
    }
}

/// Inputs, targets and an optional 0/1 loss mask for a set of samples.
#[derive(Clone, Debug)]
pub struct Samples {
    pub inputs: Batch,
    pub targets: Batch,
    pub mask: Option<Vec<Array2<f64>>>,
}

impl Samples {
    pub fn len(&self) -> usize {
        self.inputs.samples()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub penalty: f64,
    /// Per layer.
    pub c_total: Vec<f64>,
    /// `[j][layer]`.
    pub c_per_var: Vec<Vec<f64>>,
    pub test_metric: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
}

impl TrainHistory {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn best_test_metric(&self, metric: Metric) -> Option<f64> {
        let vals = self.records.iter().filter_map(|r| r.test_metric);
        match metric {
            Metric::Mse => vals.reduce(f64::min),
            Metric::RSquared => vals.reduce(f64::max),
        }
    }
}

/// `(C, C_j)` per layer: `C[d] = max_b sum_a C(h_ba)`, and likewise for
/// each `C_j`, returned as `[j][d]`.
pub fn expansion_vectors(net: &Network) -> (Vec<f64>, Vec<Vec<f64>>) {
    let k = net.arity();
    let mut c = Vec::with_capacity(net.depth());
    let mut cj = vec![Vec::with_capacity(net.depth()); k];
    for layer in net.layers() {
        let consts = layer.entry_constants(k);
        let row = |f: &dyn Fn(&crate::ncpoly::ExpansionConstants) -> f64| {
            consts
                .iter()
                .map(|r| r.iter().map(f).sum::<f64>())
                .fold(0.0, f64::max)
        };
        c.push(row(&|e| e.c_total));
        for (j, v) in cj.iter_mut().enumerate() {
            v.push(row(&|e| e.c_per_var[j]));
        }
    }
    (c, cj)
}

fn argmax_first(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Hinge penalty `lambda * sum (C - target)_+` over layers and constants,
/// with a subgradient in [`Network::params`] order.
pub fn penalty(net: &Network, config: &TrainConfig) -> Result<(f64, Vec<f64>)> {
    let mut grad = vec![0.0; net.param_count()];
    if config.lambda == 0.0 {
        return Ok((0.0, grad));
    }
    config.validate(net.depth(), net.arity())?;
    let k = net.arity();
    let lambda = config.lambda;
    let mut value = 0.0;
    let mut offset = 0;
    for (d, layer) in net.layers().iter().enumerate() {
        let consts = layer.entry_constants(k);
        let q: Vec<Vec<f64>> = layer
            .basis()
            .iter()
            .map(|w| (1..=k as u16).map(|j| w.occurrences(j) as f64).collect())
            .collect();
        // weight(i) multiplies |c| for word i in the constant being penalized.
        let mut push = |rows: Vec<f64>, target: f64, weight: &dyn Fn(usize) -> f64| {
            let b = argmax_first(&rows);
            let excess = rows[b] - target;
            if excess > 0.0 {
                value += lambda * excess;
                for a in 0..layer.in_features() {
                    let base = offset + layer.offset(b, a);
                    for (i, &c) in layer.entry(b, a).iter().enumerate() {
                        grad[base + i] += lambda * weight(i) * sign(c);
                    }
                }
            }
        };
        if let Some(t) = &config.c_total_targets {
            let rows = consts.iter().map(|r| r.iter().map(|e| e.c_total).sum()).collect();
            push(rows, t[d], &|_| 1.0);
        }
        if let Some(t) = &config.c_per_var_targets {
            for j in 0..k {
                let rows = consts.iter().map(|r| r.iter().map(|e| e.c_per_var[j]).sum()).collect();
                push(rows, t[j][d], &|i| q[i][j]);
            }
        }
        offset += layer.param_count();
    }
    Ok((value, grad))
}

/// Trains with no per-epoch callback.
pub fn train(
    net: Network,
    t: &OperatorTuple,
    train_set: &Samples,
    test: Option<(&OperatorTuple, &Samples)>,
    config: &TrainConfig,
) -> Result<(Network, TrainHistory)> {
    train_with_observer(net, t, train_set, test, config, |_, _| {})
}

fn evaluate(net: &Network, t: &OperatorTuple, s: &Samples, feats: Option<Arc<WordFeatures>>, metric: Metric) -> Result<(f64, Arc<WordFeatures>)> {
    let (y, cache) = forward_batch(net, t, &s.inputs, feats)?;
    let v = match metric {
        Metric::Mse => mse_loss_batch(&y, &s.targets, s.mask.as_deref())?.0,
        Metric::RSquared => r_squared_batch(&y, &s.targets)?,
    };
    Ok((v, cache.input_features()))
}

/// Full-batch ADAM on `loss + ridge * |c|^2 + penalty`. Each record holds
/// the state before that epoch's update; `observer` sees the record and
/// the network it describes.
pub fn train_with_observer(
    mut net: Network,
    t: &OperatorTuple,
    train_set: &Samples,
    test: Option<(&OperatorTuple, &Samples)>,
    config: &TrainConfig,
    mut observer: impl FnMut(&EpochRecord, &Network),
) -> Result<(Network, TrainHistory)> {
    config.validate(net.depth(), net.arity())?;
    let mut opt = Adam::new(net.param_count(), config.learning_rate, config.beta1, config.beta2, config.adam_epsilon);
    let mut history = TrainHistory::default();
    let mut train_feats: Option<Arc<WordFeatures>> = None;
    let mut test_feats: Option<Arc<WordFeatures>> = None;
    for epoch in 0..config.epochs {
        let (y, cache) = forward_batch(&net, t, &train_set.inputs, train_feats.take())?;
        train_feats = Some(cache.input_features());
        let (loss, dy) = mse_loss_batch(&y, &train_set.targets, train_set.mask.as_deref())?;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
        let mut grad = backward_batch(&net, t, &cache, &dy)?;
        drop(cache);
        let mut params = net.params();
        if config.ridge > 0.0 {
            for (g, &c) in grad.iter_mut().zip(&params) {
                *g += 2.0 * config.ridge * c;
            }
        }
        let (pen, pen_grad) = penalty(&net, config)?;
        if config.lambda > 0.0 {
            for (g, p) in grad.iter_mut().zip(&pen_grad) {
                *g += p;
            }
        }
        let test_metric = match test {
            Some((tt, ts)) => {
                let (v, f) = evaluate(&net, tt, ts, test_feats.take(), config.metric)?;
                test_feats = Some(f);
                Some(v)
            }
            None => None,
        };
        let (c_total, c_per_var) = expansion_vectors(&net);
        let record = EpochRecord {
            epoch,
            train_loss: loss,
            penalty: pen,
            c_total,
            c_per_var,
            test_metric,
        };
        observer(&record, &net);
        history.records.push(record);
        opt.step(&mut params, &grad);
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFiniteLoss { epoch });
        }
        net.set_params(&params)?;
    }
    Ok((net, history))
}
