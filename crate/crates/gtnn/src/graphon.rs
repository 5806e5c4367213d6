//! Graphons on uniform grids, interpolation and sampling of signals,
//! template and graphon-Erdős–Rényi samplers, operator and
//! Hilbert–Schmidt distances, and graphon-vs-graph network comparisons.
//!
//! Cells are `I_j = [j/m, (j+1)/m)` (0-based) and the vertices of an
//! `n`-vertex sample sit at the midpoints `(2j+1)/2n`. Every comparison
//! between piecewise-constant objects is done exactly on the least common
//! refinement of their grids.

use std::fmt;
use std::sync::Arc;

use ndarray::{Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linop::{box_distance, frobenius, spectral_norm_default, MultiSignal, OperatorTuple, SymOperator};
use crate::network::{forward, Network};
use crate::stability::{network_bound, PerturbationReport};

/// Largest common grid any comparison may refine to.
pub const GRID_CAP: usize = 10_000;

/// Midpoint subsamples per cell axis for analytic inputs.
pub const QUADRATURE_POINTS: usize = 64;

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Least common multiple of the grids, or `GridCap` when it exceeds
/// [`GRID_CAP`].
pub fn common_grid(grids: &[usize]) -> Result<usize> {
    let mut l: usize = 1;
    for &g in grids {
        if g == 0 {
            return Err(Error::InvalidArgument("grid size must be positive".into()));
        }
        l = (l / gcd(l, g))
            .checked_mul(g)
            .ok_or(Error::GridCap { required: usize::MAX, cap: GRID_CAP })?;
        if l > GRID_CAP {
            return Err(Error::GridCap { required: l, cap: GRID_CAP });
        }
    }
    Ok(l)
}

/// `P[i][k] = n |I_i^(n) ∩ I_k^(m)|`: averaging from grid `m` onto grid
/// `n`. Rows sum to one.
pub fn overlap_matrix(n: usize, m: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, m), |(i, k)| {
        let lo = (i * m).max(k * n);
        let hi = ((i + 1) * m).min((k + 1) * n);
        if hi > lo {
            (hi - lo) as f64 / m as f64
        } else {
            0.0
        }
    })
}

/// Repeats rows (and columns when `both`) so grid `m` becomes grid `to`.
fn refine_rows(values: &Array2<f64>, to: usize) -> Array2<f64> {
    let m = values.nrows();
    debug_assert_eq!(to % m, 0);
    let r = to / m;
    if r == 1 {
        return values.clone();
    }
    values.select(Axis(0), &(0..to).map(|i| i / r).collect::<Vec<_>>())
}

fn refine_square(values: &Array2<f64>, to: usize) -> Array2<f64> {
    let m = values.nrows();
    let r = to / m;
    if r == 1 {
        return values.clone();
    }
    let idx: Vec<usize> = (0..to).map(|i| i / r).collect();
    values.select(Axis(0), &idx).select(Axis(1), &idx)
}

/// A symmetric `[0,1]`-valued function evaluable pointwise.
pub trait Graphon: Sync {
    fn value(&self, x: f64, y: f64) -> f64;
    /// Weighted template graph on `n` vertices: cell averages of `W`.
    fn template(&self, n: usize) -> Result<SymOperator>;
}

/// Piecewise-constant graphon on the uniform grid of size `values.nrows()`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseGraphon {
    values: Array2<f64>,
}

impl PiecewiseGraphon {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        let (r, c) = values.dim();
        if r != c || r == 0 {
            return Err(Error::shape("graphon values", "square non-empty matrix", format!("{r}x{c}")));
        }
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidArgument("graphon values must lie in [0, 1]".into()));
        }
        if values != values.t() {
            return Err(Error::InvalidArgument("graphon values must be symmetric".into()));
        }
        Ok(PiecewiseGraphon { values })
    }

    pub fn constant(p: f64) -> Result<Self> {
        Self::new(Array2::from_elem((1, 1), p))
    }

    /// The graphon induced by a shift matrix with entries in `[0, 1]`.
    pub fn induced(s: &SymOperator) -> Result<Self> {
        if s.matrix().iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidArgument("induced graphon needs shift entries in [0, 1]".into()));
        }
        Ok(PiecewiseGraphon {
            values: s.matrix().clone(),
        })
    }

    pub fn grid(&self) -> usize {
        self.values.nrows()
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    /// The same graphon on a grid that is a multiple of the current one.
    pub fn refined(&self, to: usize) -> Result<Self> {
        if to % self.grid() != 0 {
            return Err(Error::InvalidArgument(format!("grid {to} does not refine grid {}", self.grid())));
        }
        Ok(PiecewiseGraphon {
            values: refine_square(&self.values, to),
        })
    }

    /// Shift operator `T_W` restricted to piecewise-constant functions on
    /// grid `to`: the matrix `values / to` after refinement.
    pub fn operator_on(&self, to: usize) -> Result<SymOperator> {
        SymOperator::new(self.refined(to)?.values / to as f64)
    }
}

fn cell(x: f64, m: usize) -> usize {
    ((x * m as f64) as usize).min(m - 1)
}

impl Graphon for PiecewiseGraphon {
    fn value(&self, x: f64, y: f64) -> f64 {
        let m = self.grid();
        self.values[[cell(x, m), cell(y, m)]]
    }

    fn template(&self, n: usize) -> Result<SymOperator> {
        if n == 0 {
            return Err(Error::InvalidArgument("template needs n >= 1".into()));
        }
        if n == self.grid() {
            return SymOperator::new(self.values.clone());
        }
        let p = overlap_matrix(n, self.grid());
        SymOperator::new(p.dot(&self.values).dot(&p.t()))
    }
}

/// A graphon given by a formula. Used as a sampling and averaging input.
#[derive(Clone)]
pub struct AnalyticGraphon {
    name: String,
    f: Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>,
    lipschitz: Option<f64>,
}

impl fmt::Debug for AnalyticGraphon {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AnalyticGraphon")
            .field("name", &self.name)
            .field("lipschitz", &self.lipschitz)
            .finish()
    }
}

impl AnalyticGraphon {
    /// Wraps `f`, spot-checking symmetry and range on a fixed set of points.
    pub fn new(
        name: impl Into<String>,
        f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        lipschitz: Option<f64>,
    ) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        for _ in 0..64 {
            let (x, y): (f64, f64) = (rng.random(), rng.random());
            let (a, b) = (f(x, y), f(y, x));
            if (a - b).abs() > 1e-12 || !(0.0..=1.0).contains(&a) {
                return Err(Error::InvalidArgument(format!(
                    "graphon must be symmetric with values in [0, 1]; W({x}, {y}) = {a}, W({y}, {x}) = {b}"
                )));
            }
        }
        Ok(AnalyticGraphon {
            name: name.into(),
            f: Arc::new(f),
            lipschitz,
        })
    }

    pub fn constant(p: f64) -> Result<Self> {
        Self::new(format!("constant({p})"), move |_, _| p, Some(0.0))
    }

    /// `W(x, y) = x y`.
    pub fn product() -> Self {
        Self::new("product", |x, y| x * y, Some(1.0)).expect("valid graphon")
    }

    /// `W(x, y) = exp(-beta |x - y|)`.
    pub fn exponential(beta: f64) -> Result<Self> {
        if !(beta >= 0.0) {
            return Err(Error::InvalidArgument("beta must be nonnegative".into()));
        }
        Self::new(format!("exponential({beta})"), move |x, y| (-beta * (x - y).abs()).exp(), Some(beta))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn lipschitz(&self) -> Option<f64> {
        self.lipschitz
    }

    /// Cell averages on grid `m` as a piecewise graphon (a quadrature
    /// approximation of `W`).
    pub fn discretize(&self, m: usize) -> Result<PiecewiseGraphon> {
        let t = self.template(m)?;
        PiecewiseGraphon::new(t.into_matrix().mapv(|v| v.clamp(0.0, 1.0)))
    }
}

impl Graphon for AnalyticGraphon {
    fn value(&self, x: f64, y: f64) -> f64 {
        (self.f)(x, y)
    }

    fn template(&self, n: usize) -> Result<SymOperator> {
        if n == 0 {
            return Err(Error::InvalidArgument("template needs n >= 1".into()));
        }
        let q = QUADRATURE_POINTS;
        let pts: Vec<f64> = (0..n * q).map(|i| (2 * i + 1) as f64 / (2 * n * q) as f64).collect();
        let rows: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| {
                (0..n)
                    .map(|j| {
                        if j < i {
                            return 0.0;
                        }
                        let mut s = 0.0;
                        for x in &pts[i * q..(i + 1) * q] {
                            for y in &pts[j * q..(j + 1) * q] {
                                s += (self.f)(*x, *y);
                            }
                        }
                        s / (q * q) as f64
                    })
                    .collect()
            })
            .collect();
        let mut m = Array2::zeros((n, n));
        for i in 0..n {
            for j in i..n {
                m[[i, j]] = rows[i][j];
                m[[j, i]] = rows[i][j];
            }
        }
        SymOperator::new(m)
    }
}

/// Weighted template graph on `n` vertices.
pub fn template_graph(w: &dyn Graphon, n: usize) -> Result<SymOperator> {
    w.template(n)
}

/// Graphon-Erdős–Rényi graph: independent `Bernoulli(W(v_i, v_j))` edges
/// for `i < j` at midpoint vertices, no self-loops.
pub fn graphon_er(w: &dyn Graphon, n: usize, seed: u64) -> Result<SymOperator> {
    if n == 0 {
        return Err(Error::InvalidArgument("graph needs n >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v: Vec<f64> = (0..n).map(|i| (2 * i + 1) as f64 / (2 * n) as f64).collect();
    let mut m = Array2::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            let p = w.value(v[i], v[j]);
            if rng.random::<f64>() < p {
                m[[i, j]] = 1.0;
                m[[j, i]] = 1.0;
            }
        }
    }
    SymOperator::new(m)
}

/// `||T_W||_op`, exact for piecewise-constant graphons.
pub fn graphon_op_norm(w: &PiecewiseGraphon) -> Result<f64> {
    Ok(spectral_norm_default(&SymOperator::new(w.values.clone())?)? / w.grid() as f64)
}

pub fn graphon_hs_norm(w: &PiecewiseGraphon) -> f64 {
    frobenius(w.values.view()) / w.grid() as f64
}

fn common_difference(w1: &PiecewiseGraphon, w2: &PiecewiseGraphon) -> Result<(Array2<f64>, usize)> {
    let m = common_grid(&[w1.grid(), w2.grid()])?;
    Ok((refine_square(&w1.values, m) - refine_square(&w2.values, m), m))
}

/// `||T_W1 - T_W2||_op` on the common grid.
pub fn op_dist(w1: &PiecewiseGraphon, w2: &PiecewiseGraphon) -> Result<f64> {
    let (d, m) = common_difference(w1, w2)?;
    Ok(spectral_norm_default(&SymOperator::new(d)?)? / m as f64)
}

/// `||T_W1 - T_W2||_HS = ||W1 - W2||_{L2}` on the common grid.
pub fn hs_dist(w1: &PiecewiseGraphon, w2: &PiecewiseGraphon) -> Result<f64> {
    let (d, m) = common_difference(w1, w2)?;
    Ok(frobenius(d.view()) / m as f64)
}

/// `||W - G||_{L2}` for an analytic `W`, by `q x q` midpoint quadrature on
/// each cell of `g`'s grid.
pub fn hs_dist_analytic(w: &AnalyticGraphon, g: &PiecewiseGraphon, q: usize) -> f64 {
    let m = g.grid();
    let pts: Vec<f64> = (0..m * q).map(|i| (2 * i + 1) as f64 / (2 * m * q) as f64).collect();
    let total: f64 = (0..m)
        .into_par_iter()
        .map(|i| {
            let mut s = 0.0;
            for j in 0..m {
                let h = g.values[[i, j]];
                for x in &pts[i * q..(i + 1) * q] {
                    for y in &pts[j * q..(j + 1) * q] {
                        let d = w.value(*x, *y) - h;
                        s += d * d;
                    }
                }
            }
            s
        })
        .sum();
    (total / (m * m * q * q) as f64).sqrt()
}

/// A graphon signal with `A` features, constant on the cells of its grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseSignal {
    values: Array2<f64>,
}

impl PiecewiseSignal {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::InvalidArgument("signal needs a grid and at least one feature".into()));
        }
        Ok(PiecewiseSignal { values })
    }

    pub fn grid(&self) -> usize {
        self.values.nrows()
    }

    pub fn features(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn refined(&self, to: usize) -> Result<Self> {
        if to % self.grid() != 0 {
            return Err(Error::InvalidArgument(format!("grid {to} does not refine grid {}", self.grid())));
        }
        Ok(PiecewiseSignal {
            values: refine_rows(&self.values, to),
        })
    }

    /// The equivalent vertex signal with measure weight `1 / grid`.
    pub fn to_multisignal(&self) -> MultiSignal {
        MultiSignal {
            values: self.values.clone(),
            measure_weight: 1.0 / self.grid() as f64,
        }
    }

    /// `L2` norm of each feature, maximized over features.
    pub fn box_norm(&self) -> f64 {
        crate::linop::box_norm(&self.to_multisignal())
    }
}

/// `i_n`: the piecewise-constant extension of vertex values.
pub fn interpolate(g: &Array2<f64>) -> Result<PiecewiseSignal> {
    PiecewiseSignal::new(g.clone())
}

/// `p_n`: cell averages of a piecewise-constant signal over the `n`-grid.
pub fn sample_signal(f: &PiecewiseSignal, n: usize) -> Result<Array2<f64>> {
    if n == 0 {
        return Err(Error::InvalidArgument("sampling needs n >= 1".into()));
    }
    if n == f.grid() {
        return Ok(f.values.clone());
    }
    Ok(overlap_matrix(n, f.grid()).dot(&f.values))
}

/// `p_n` of a one-feature function by per-cell midpoint quadrature.
pub fn sample_function(f: impl Fn(f64) -> f64, n: usize) -> Result<Array2<f64>> {
    if n == 0 {
        return Err(Error::InvalidArgument("sampling needs n >= 1".into()));
    }
    let q = QUADRATURE_POINTS;
    Ok(Array2::from_shape_fn((n, 1), |(i, _)| {
        (0..q).map(|s| f((i * q + s) as f64 / (n * q) as f64 + 0.5 / (n * q) as f64)).sum::<f64>() / q as f64
    }))
}

/// `T_W f` on the common grid of `W` and `f`.
pub fn graphon_apply(w: &PiecewiseGraphon, f: &PiecewiseSignal) -> Result<PiecewiseSignal> {
    let m = common_grid(&[w.grid(), f.grid()])?;
    let op = w.operator_on(m)?;
    PiecewiseSignal::new(op.matrix().dot(&f.refined(m)?.values))
}

/// Certified operator tuple of graphon shift operators on grid `m`.
pub fn graphon_tuple(ws: &[PiecewiseGraphon], m: usize) -> Result<OperatorTuple> {
    OperatorTuple::certified(ws.iter().map(|w| w.operator_on(m)).collect::<Result<Vec<_>>>()?)
}

/// The graphon-tuple network `Phi(H, T_W)(f)` on the common grid.
pub fn wtnn_forward(net: &Network, ws: &[PiecewiseGraphon], f: &PiecewiseSignal) -> Result<PiecewiseSignal> {
    let mut grids: Vec<usize> = ws.iter().map(PiecewiseGraphon::grid).collect();
    grids.push(f.grid());
    let m = common_grid(&grids)?;
    let t = graphon_tuple(ws, m)?;
    let (y, _) = forward(net, &t, &f.refined(m)?.to_multisignal())?;
    PiecewiseSignal::new(y.values)
}

/// `i_n(Phi(H, G/n)(p_n f))` for graphs on `n` vertices.
pub fn sampled_gtnn_forward(net: &Network, gs: &[SymOperator], f: &PiecewiseSignal) -> Result<PiecewiseSignal> {
    let n = gs.first().ok_or_else(|| Error::InvalidArgument("empty graph tuple".into()))?.dim();
    let t = OperatorTuple::new(gs.iter().map(|g| g.scaled(1.0 / n as f64)).collect())?;
    let x = MultiSignal::new(sample_signal(f, n)?, 1.0 / n as f64)?;
    let (y, _) = forward(net, &t, &x)?;
    interpolate(&y.values)
}

fn distance_on_common_grid(a: &PiecewiseSignal, b: &PiecewiseSignal) -> Result<f64> {
    let m = common_grid(&[a.grid(), b.grid()])?;
    box_distance(&a.refined(m)?.to_multisignal(), &b.refined(m)?.to_multisignal())
}

/// Relative gap `||WtNN(f) - i_n GtNN(G/n)(p_n f)|| / ||WtNN(f)||` for
/// the graphons induced by `gs`. Zero up to rounding for networks without
/// constant terms; such terms are rejected.
pub fn network_identity_gap(net: &Network, gs: &[SymOperator], f: &PiecewiseSignal) -> Result<f64> {
    if net.has_constant_term() {
        return Err(Error::InvalidArgument(
            "the graphon/graph network identity needs polynomials without constant terms".into(),
        ));
    }
    let ws = gs.iter().map(PiecewiseGraphon::induced).collect::<Result<Vec<_>>>()?;
    let lhs = wtnn_forward(net, &ws, f)?;
    let rhs = sampled_gtnn_forward(net, gs, f)?;
    let d = distance_on_common_grid(&lhs, &rhs)?;
    let scale = lhs.box_norm();
    Ok(if scale == 0.0 { d } else { d / scale })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferReport {
    pub empirical: f64,
    pub bound: f64,
    /// `||f - i_n p_n f||`.
    pub discretization: f64,
    /// `||T_{W_j} - T_{G_j hat}||_op`.
    pub opdist: Vec<f64>,
}

/// Transferability error between the graphon network on `ws` and the
/// normalized graph network on `gs` (n equispaced vertices), with the
/// layerwise bound driven by `||f - i_n p_n f||` and the operator
/// distances between `W_j` and the graphons induced by `G_j`.
pub fn transfer_error(
    net: &Network,
    ws: &[PiecewiseGraphon],
    gs: &[SymOperator],
    f: &PiecewiseSignal,
) -> Result<TransferReport> {
    if ws.len() != gs.len() {
        return Err(Error::ArityMismatch {
            expected: ws.len(),
            found: gs.len(),
        });
    }
    let n = gs.first().ok_or_else(|| Error::InvalidArgument("empty graph tuple".into()))?.dim();
    let induced = gs.iter().map(PiecewiseGraphon::induced).collect::<Result<Vec<_>>>()?;
    let mut grids: Vec<usize> = ws.iter().map(PiecewiseGraphon::grid).collect();
    grids.extend([n, f.grid()]);
    let m = common_grid(&grids)?;

    let lhs = wtnn_forward(net, ws, f)?;
    let rhs = sampled_gtnn_forward(net, gs, f)?;
    let empirical = distance_on_common_grid(&lhs, &rhs)?;

    let t = graphon_tuple(ws, m)?;
    let u = graphon_tuple(&induced, m)?;
    let fm = f.refined(m)?.to_multisignal();
    let ipf = interpolate(&sample_signal(f, n)?)?.refined(m)?.to_multisignal();
    let report: PerturbationReport = network_bound(net, &t, &u, &fm, &ipf)?;
    Ok(TransferReport {
        empirical,
        bound: report.bound,
        discretization: report.input_distance,
        opdist: report.opdist,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn overlap_rows_sum_to_one() {
        for (n, m) in [(3, 5), (4, 2), (7, 7), (1, 9)] {
            let p = overlap_matrix(n, m);
            for r in p.rows() {
                assert!((r.sum() - 1.0).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn sampling_basics() {
        let g = array![[1.0], [2.0], [3.0]];
        assert_eq!(sample_signal(&interpolate(&g).unwrap(), 3).unwrap(), g);
        let s = sample_function(|x| x, 2).unwrap();
        assert!((s[[0, 0]] - 0.25).abs() < 1e-14 && (s[[1, 0]] - 0.75).abs() < 1e-14);
        let c = interpolate(&array![[2.0], [2.0]]).unwrap();
        assert_eq!(sample_signal(&c, 1).unwrap(), array![[2.0]]);
    }

    #[test]
    fn constant_graphon_applies_as_constant() {
        let w = PiecewiseGraphon::constant(1.0).unwrap();
        let f = PiecewiseSignal::new(array![[0.5], [0.5], [0.5]]).unwrap();
        let out = graphon_apply(&w, &f).unwrap();
        assert!(out.values().iter().all(|&v| (v - 0.5).abs() < 1e-15));
    }

    #[test]
    fn norms_of_constant_graphon() {
        let w = PiecewiseGraphon::constant(0.3).unwrap().refined(5).unwrap();
        assert!((graphon_op_norm(&w).unwrap() - 0.3).abs() < 1e-9);
        assert_eq!(op_dist(&w, &w).unwrap(), 0.0);
        assert!((graphon_hs_norm(&w) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn templates() {
        let s = SymOperator::new(array![[0.0, 0.5], [0.5, 1.0]]).unwrap();
        let w = PiecewiseGraphon::induced(&s).unwrap();
        assert_eq!(template_graph(&w, 2).unwrap(), s);
        let t = template_graph(&AnalyticGraphon::product(), 1).unwrap();
        assert!((t.matrix()[[0, 0]] - 0.25).abs() < 1e-12);
        assert!(PiecewiseGraphon::induced(&SymOperator::new(array![[2.0]]).unwrap()).is_err());
    }

    #[test]
    fn er_extremes() {
        let zero = PiecewiseGraphon::constant(0.0).unwrap();
        assert!(graphon_er(&zero, 6, 1).unwrap().is_zero());
        let one = PiecewiseGraphon::constant(1.0).unwrap();
        let g = graphon_er(&one, 6, 1).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                assert_eq!(g.matrix()[[i, j]], if i == j { 0.0 } else { 1.0 });
            }
        }
        assert_eq!(graphon_er(&one, 1, 3).unwrap().matrix()[[0, 0]], 0.0);
    }

    #[test]
    fn grid_cap_enforced() {
        assert!(matches!(common_grid(&[9_999, 9_998]), Err(Error::GridCap { .. })));
        assert_eq!(common_grid(&[250, 300]).unwrap(), 1500);
    }
}
