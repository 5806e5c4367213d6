//! Dense symmetric shift operators, operator tuples and vertex signals.
//!
//! The evaluation homomorphism sends `X_j` to the `j`-th operator of a
//! tuple, so a word `(j1, ..., jd)` acts on a signal as
//! `T_{j1}(T_{j2}(... T_{jd}(x)))`.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sprs::{CsMat, TriMat};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::ncpoly::{NCPoly, Word};

/// Default relative tolerance for power iteration.
pub const DEFAULT_TOL: f64 = 1e-9;
/// Default iteration budget for power iteration.
pub const DEFAULT_MAX_ITER: usize = 10_000;
/// Slack allowed when certifying `||T_j||_op <= 1`.
pub const NONEXPANSIVE_SLACK: f64 = 1e-10;

const POWER_SEED: u64 = 0x6774_6e6e_5f70_6f77;

/// A real symmetric `n x n` matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SymOperator {
    mat: Array2<f64>,
}

impl SymOperator {
    /// Symmetrizes `(M + M^T) / 2`; already-symmetric input is kept exactly.
    pub fn new(mat: Array2<f64>) -> Result<Self> {
        let (r, c) = mat.dim();
        if r != c || r == 0 {
            return Err(Error::shape("SymOperator", "square non-empty matrix", format!("{r}x{c}")));
        }
        let mut mat = mat;
        for i in 0..r {
            for j in (i + 1)..r {
                let a = mat[[i, j]];
                let b = mat[[j, i]];
                if a != b {
                    let v = 0.5 * (a + b);
                    mat[[i, j]] = v;
                    mat[[j, i]] = v;
                }
            }
        }
        Ok(SymOperator { mat })
    }

    pub fn identity(n: usize) -> Self {
        SymOperator { mat: Array2::eye(n) }
    }

    pub fn zeros(n: usize) -> Self {
        SymOperator {
            mat: Array2::zeros((n, n)),
        }
    }

    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        Self::new(Array2::from_shape_fn((n, n), |(i, j)| f(i, j)))
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.mat
    }

    pub fn into_matrix(self) -> Array2<f64> {
        self.mat
    }

    pub fn scaled(&self, r: f64) -> SymOperator {
        SymOperator { mat: &self.mat * r }
    }

    pub fn add(&self, other: &SymOperator) -> Result<SymOperator> {
        self.check_dim(other)?;
        Ok(SymOperator {
            mat: &self.mat + &other.mat,
        })
    }

    pub fn sub(&self, other: &SymOperator) -> Result<SymOperator> {
        self.check_dim(other)?;
        Ok(SymOperator {
            mat: &self.mat - &other.mat,
        })
    }

    fn check_dim(&self, other: &SymOperator) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(Error::shape("operator dimension", self.dim(), other.dim()));
        }
        Ok(())
    }

    pub fn frobenius(&self) -> f64 {
        self.mat.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn apply(&self, x: ArrayView1<'_, f64>) -> Array1<f64> {
        self.mat.dot(&x)
    }

    pub fn is_zero(&self) -> bool {
        self.mat.iter().all(|&v| v == 0.0)
    }
}

fn seeded_unit_vector(n: usize) -> Array1<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(POWER_SEED ^ n as u64);
    let mut v: Array1<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let norm = v.dot(&v).sqrt();
    v /= norm;
    v
}

/// Power iteration where each step is `x -> step(x)` and the estimate is
/// `measure(x)` for the current unit vector.
fn power_iterate(
    n: usize,
    tol: f64,
    max_iter: usize,
    mut apply: impl FnMut(&Array1<f64>) -> Array1<f64>,
    root: bool,
) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {tol}")));
    }
    let mut x = seeded_unit_vector(n);
    let mut prev = f64::NAN;
    let mut estimate = 0.0;
    for _ in 0..max_iter {
        let y = apply(&x);
        let norm = y.dot(&y).sqrt();
        estimate = if root { norm.sqrt() } else { norm };
        if norm == 0.0 {
            return Ok(0.0);
        }
        if (estimate - prev).abs() <= tol * estimate {
            return Ok(estimate);
        }
        prev = estimate;
        x = y / norm;
    }
    Err(Error::NoConvergence {
        iterations: max_iter,
        estimate,
        last_iterate: x.to_vec(),
    })
}

/// Spectral norm of a symmetric operator via power iteration on `M`.
///
/// The estimate `||M x||` for unit `x` is nondecreasing along the iteration
/// and is insensitive to the sign of the dominant eigenvalue.
pub fn spectral_norm(m: &SymOperator, tol: f64, max_iter: usize) -> Result<f64> {
    if m.is_zero() {
        return Ok(0.0);
    }
    power_iterate(m.dim(), tol, max_iter, |x| m.mat.dot(x), false)
}

/// Largest size handled by a dense symmetric eigensolver in
/// [`spectral_norm_default`]; power iteration stalls on the clustered
/// spectra of circulant and near-regular graphs.
pub const DENSE_EIGEN_MAX_DIM: usize = 1500;

/// Spectral norm with the default tolerance and iteration budget. Exact
/// (dense eigenvalues) up to [`DENSE_EIGEN_MAX_DIM`], power iteration above.
pub fn spectral_norm_default(m: &SymOperator) -> Result<f64> {
    if m.is_zero() {
        return Ok(0.0);
    }
    let n = m.dim();
    if n > DENSE_EIGEN_MAX_DIM {
        return spectral_norm(m, DEFAULT_TOL, DEFAULT_MAX_ITER);
    }
    let dm = nalgebra::DMatrix::from_fn(n, n, |i, j| m.mat[[i, j]]);
    let eig = dm.symmetric_eigenvalues();
    let norm = eig.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    if !norm.is_finite() {
        return Err(Error::NoConvergence {
            iterations: 0,
            estimate: norm,
            last_iterate: Vec::new(),
        });
    }
    Ok(norm)
}

/// Largest singular value of a general square or rectangular matrix, by
/// power iteration on `A^T A`.
pub fn matrix_op_norm(a: ArrayView2<'_, f64>, tol: f64, max_iter: usize) -> Result<f64> {
    if a.iter().all(|&v| v == 0.0) {
        return Ok(0.0);
    }
    let at = a.t();
    power_iterate(a.ncols(), tol, max_iter, |x| at.dot(&a.dot(x)), true)
}

/// Scales `M` down to spectral norm 1 when it exceeds 1; the zero matrix
/// passes through unchanged.
pub fn normalize_nonexpansive(m: &SymOperator) -> Result<SymOperator> {
    let norm = spectral_norm_default(m)?;
    if norm <= 1.0 {
        Ok(m.clone())
    } else {
        Ok(m.scaled(1.0 / norm))
    }
}

/// Operators with at most this fraction of nonzeros are also kept in
/// compressed sparse form for batched application.
const SPARSE_DENSITY: f64 = 0.1;

/// `k` symmetric operators on a common vertex set.
#[derive(Clone, Debug)]
pub struct OperatorTuple {
    ops: Vec<SymOperator>,
    certified: bool,
    sparse: Vec<Option<Arc<CsMat<f64>>>>,
}

/// Row-major kernel: each stored entry adds a scaled row of `x`.
fn csr_times_dense(m: &CsMat<f64>, x: ArrayView2<'_, f64>) -> Array2<f64> {
    let x = x.as_standard_layout();
    let cols = x.ncols();
    let src = x.as_slice().expect("standard layout");
    let mut out = Array2::zeros((m.rows(), cols));
    let dst = out.as_slice_mut().expect("fresh array");
    for (i, row) in m.outer_iterator().enumerate() {
        let o = &mut dst[i * cols..(i + 1) * cols];
        for (j, &v) in row.iter() {
            for (a, &b) in o.iter_mut().zip(&src[j * cols..(j + 1) * cols]) {
                *a += v * b;
            }
        }
    }
    out
}

fn sparse_form(op: &SymOperator) -> Option<Arc<CsMat<f64>>> {
    let n = op.dim();
    let nnz = op.mat.iter().filter(|&&v| v != 0.0).count();
    if n < 32 || nnz as f64 > SPARSE_DENSITY * (n * n) as f64 {
        return None;
    }
    let mut tri = TriMat::with_capacity((n, n), nnz);
    for ((i, j), &v) in op.mat.indexed_iter() {
        if v != 0.0 {
            tri.add_triplet(i, j, v);
        }
    }
    Some(Arc::new(tri.to_csr()))
}

impl OperatorTuple {
    pub fn new(ops: Vec<SymOperator>) -> Result<Self> {
        if ops.is_empty() {
            return Err(Error::InvalidArgument("operator tuple needs at least one operator".into()));
        }
        let n = ops[0].dim();
        if let Some(bad) = ops.iter().find(|o| o.dim() != n) {
            return Err(Error::shape("operator tuple", n, bad.dim()));
        }
        let sparse = ops.iter().map(sparse_form).collect();
        Ok(OperatorTuple {
            ops,
            certified: false,
            sparse,
        })
    }

    /// Builds a tuple and certifies it, failing if any operator has
    /// spectral norm above `1 + 1e-10`.
    pub fn certified(ops: Vec<SymOperator>) -> Result<Self> {
        let mut t = Self::new(ops)?;
        for op in &t.ops {
            if spectral_norm_default(op)? > 1.0 + NONEXPANSIVE_SLACK {
                return Err(Error::NotCertified);
            }
        }
        t.certified = true;
        Ok(t)
    }

    /// Normalizes every operator to be nonexpansive and certifies the result.
    pub fn normalized(ops: Vec<SymOperator>) -> Result<Self> {
        let ops = ops.iter().map(normalize_nonexpansive).collect::<Result<Vec<_>>>()?;
        let mut t = Self::new(ops)?;
        t.certified = true;
        Ok(t)
    }

    pub fn arity(&self) -> usize {
        self.ops.len()
    }

    pub fn dim(&self) -> usize {
        self.ops[0].dim()
    }

    pub fn is_certified(&self) -> bool {
        self.certified
    }

    pub fn ops(&self) -> &[SymOperator] {
        &self.ops
    }

    /// Operator for the 1-based variable index `j`.
    pub fn op(&self, j: u16) -> &SymOperator {
        &self.ops[j as usize - 1]
    }

    /// `T_j X` for a block of column signals; sparse operators skip zeros.
    pub fn apply_batch(&self, j: u16, x: ArrayView2<'_, f64>) -> Array2<f64> {
        match &self.sparse[j as usize - 1] {
            Some(m) => csr_times_dense(m, x),
            None => self.op(j).mat.dot(&x),
        }
    }

    /// Multiplies every operator by `r`; certification is kept only when
    /// `|r| <= 1`.
    pub fn scaled(&self, r: f64) -> OperatorTuple {
        OperatorTuple {
            ops: self.ops.iter().map(|o| o.scaled(r)).collect(),
            certified: self.certified && r.abs() <= 1.0,
            sparse: self.sparse.iter().map(|m| m.as_ref().map(|m| Arc::new(m.map(|v| v * r)))).collect(),
        }
    }

    pub(crate) fn check_word(&self, w: &Word) -> Result<()> {
        w.check_arity(self.arity())
    }

    pub(crate) fn check_poly(&self, h: &NCPoly) -> Result<()> {
        if h.arity() != self.arity() {
            return Err(Error::ArityMismatch {
                expected: self.arity(),
                found: h.arity(),
            });
        }
        Ok(())
    }
}

/// An `n x A` array of vertex signals with a per-vertex measure weight.
///
/// The norm of feature `a` is `sqrt(weight * sum_i values[i][a]^2)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiSignal {
    pub values: Array2<f64>,
    pub measure_weight: f64,
}

impl MultiSignal {
    pub fn new(values: Array2<f64>, measure_weight: f64) -> Result<Self> {
        if !(measure_weight > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "measure weight must be positive, got {measure_weight}"
            )));
        }
        if values.ncols() == 0 {
            return Err(Error::InvalidArgument("signal needs at least one feature".into()));
        }
        Ok(MultiSignal {
            values,
            measure_weight,
        })
    }

    /// A single-feature signal under counting measure.
    pub fn from_vec(values: Vec<f64>) -> Self {
        let n = values.len();
        MultiSignal {
            values: Array2::from_shape_vec((n, 1), values).expect("column shape"),
            measure_weight: 1.0,
        }
    }

    pub fn zeros(n: usize, features: usize, measure_weight: f64) -> Self {
        MultiSignal {
            values: Array2::zeros((n, features)),
            measure_weight,
        }
    }

    pub fn dim(&self) -> usize {
        self.values.nrows()
    }

    pub fn features(&self) -> usize {
        self.values.ncols()
    }

    pub fn column(&self, a: usize) -> ArrayView1<'_, f64> {
        self.values.column(a)
    }

    pub fn feature_norm(&self, a: usize) -> f64 {
        let c = self.values.column(a);
        (self.measure_weight * c.dot(&c)).sqrt()
    }

    pub fn relu(&self) -> MultiSignal {
        MultiSignal {
            values: self.values.mapv(|v| v.max(0.0)),
            measure_weight: self.measure_weight,
        }
    }

    fn check_compatible(&self, other: &MultiSignal) -> Result<()> {
        if self.values.dim() != other.values.dim() {
            return Err(Error::shape(
                "signal shape",
                format!("{:?}", self.values.dim()),
                format!("{:?}", other.values.dim()),
            ));
        }
        if self.measure_weight != other.measure_weight {
            return Err(Error::shape("signal measure weight", self.measure_weight, other.measure_weight));
        }
        Ok(())
    }

    pub fn sub(&self, other: &MultiSignal) -> Result<MultiSignal> {
        self.check_compatible(other)?;
        Ok(MultiSignal {
            values: &self.values - &other.values,
            measure_weight: self.measure_weight,
        })
    }
}

/// Max over features of the measure-weighted L2 norm.
pub fn box_norm(x: &MultiSignal) -> f64 {
    (0..x.features()).map(|a| x.feature_norm(a)).fold(0.0, f64::max)
}

pub fn box_distance(x: &MultiSignal, y: &MultiSignal) -> Result<f64> {
    Ok(box_norm(&x.sub(y)?))
}

/// Applies the word to a single vertex signal, rightmost letter first.
pub fn eval_word(w: &Word, t: &OperatorTuple, x: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
    t.check_word(w)?;
    if x.len() != t.dim() {
        return Err(Error::shape("signal length", t.dim(), x.len()));
    }
    let mut y = x.to_owned();
    for &l in w.letters().iter().rev() {
        y = t.op(l).matrix().dot(&y);
    }
    Ok(y)
}

/// `h(T)(x) = sum_alpha c_alpha X^alpha(T)(x)`.
pub fn eval_poly(h: &NCPoly, t: &OperatorTuple, x: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
    t.check_poly(h)?;
    if x.len() != t.dim() {
        return Err(Error::shape("signal length", t.dim(), x.len()));
    }
    let mut out = Array1::zeros(x.len());
    for (w, c) in h.terms() {
        out.scaled_add(c, &eval_word(w, t, x)?);
    }
    Ok(out)
}

/// Dense matrix of `h(T)`.
pub fn poly_matrix(h: &NCPoly, t: &OperatorTuple) -> Result<Array2<f64>> {
    t.check_poly(h)?;
    let n = t.dim();
    let mut out = Array2::zeros((n, n));
    for (w, c) in h.terms() {
        let mut m: Array2<f64> = Array2::eye(n);
        for &l in w.letters() {
            m = m.dot(t.op(l).matrix());
        }
        out.scaled_add(c, &m);
    }
    Ok(out)
}

/// Operator filter: output feature `b` is `sum_a h[b][a](T)(x_a)`.
pub fn eval_filter(h: &[Vec<NCPoly>], t: &OperatorTuple, x: &MultiSignal) -> Result<MultiSignal> {
    let b_count = h.len();
    if b_count == 0 {
        return Err(Error::shape("filter rows", ">= 1", 0));
    }
    let a_count = x.features();
    if let Some(row) = h.iter().find(|r| r.len() != a_count) {
        return Err(Error::shape("filter columns", a_count, row.len()));
    }
    if x.dim() != t.dim() {
        return Err(Error::shape("signal length", t.dim(), x.dim()));
    }
    let mut out = Array2::zeros((x.dim(), b_count));
    for (b, row) in h.iter().enumerate() {
        let mut col = out.column_mut(b);
        for (a, p) in row.iter().enumerate() {
            col += &eval_poly(p, t, x.column(a))?;
        }
    }
    Ok(MultiSignal {
        values: out,
        measure_weight: x.measure_weight,
    })
}

/// `||T_j - U_j||_op` for each `j`.
pub fn op_distance(t: &OperatorTuple, u: &OperatorTuple) -> Result<Vec<f64>> {
    if t.arity() != u.arity() {
        return Err(Error::ArityMismatch {
            expected: t.arity(),
            found: u.arity(),
        });
    }
    if t.dim() != u.dim() {
        return Err(Error::shape("operator dimension", t.dim(), u.dim()));
    }
    t.ops()
        .iter()
        .zip(u.ops())
        .map(|(a, b)| spectral_norm_default(&a.sub(b)?))
        .collect()
}

/// Block operator norm `max_b sum_a ||M_{b,a}||_op` for the box norms.
pub fn block_norm(blocks: &[Vec<Array2<f64>>]) -> Result<f64> {
    let mut best: f64 = 0.0;
    for row in blocks {
        let mut sum = 0.0;
        for m in row {
            sum += matrix_op_norm(m.view(), DEFAULT_TOL, DEFAULT_MAX_ITER)?;
        }
        best = best.max(sum);
    }
    Ok(best)
}

/// Frobenius norm of a matrix view.
pub(crate) fn frobenius(m: ArrayView2<'_, f64>) -> f64 {
    m.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Copies column `a` of each signal into one `n x S` matrix.
pub(crate) fn stack_feature(signals: &[MultiSignal], a: usize) -> Array2<f64> {
    let n = signals.first().map_or(0, MultiSignal::dim);
    let mut out = Array2::zeros((n, signals.len()));
    for (s, sig) in signals.iter().enumerate() {
        out.slice_mut(s![.., s]).assign(&sig.values.column(a));
    }
    out
}

pub(crate) fn column_sq_norms(m: &Array2<f64>) -> Array1<f64> {
    m.map_axis(Axis(0), |c| c.dot(&c))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn w(l: &[u16]) -> Word {
        Word::from_letters(l.to_vec())
    }

    fn random_tuple(n: usize, k: usize, seed: u64) -> OperatorTuple {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ops = (0..k)
            .map(|_| {
                let m = Array2::from_shape_fn((n, n), |_| StandardNormal.sample(&mut rng));
                SymOperator::new(m).unwrap()
            })
            .collect();
        OperatorTuple::new(ops).unwrap()
    }

    #[test]
    fn symmetrizes_on_construction() {
        let s = SymOperator::new(array![[1.0, 2.0], [4.0, 5.0]]).unwrap();
        assert_eq!(s.matrix(), &array![[1.0, 3.0], [3.0, 5.0]]);
        assert!(SymOperator::new(Array2::zeros((2, 3))).is_err());
    }

    #[test]
    fn spectral_norm_simple_cases() {
        assert!((spectral_norm_default(&SymOperator::identity(3)).unwrap() - 1.0).abs() < 1e-12);
        let d = SymOperator::new(array![[0.5, 0.0], [0.0, -0.9]]).unwrap();
        assert!((spectral_norm_default(&d).unwrap() - 0.9).abs() < 1e-8);
        assert_eq!(spectral_norm_default(&SymOperator::zeros(4)).unwrap(), 0.0);
        // equal-magnitude eigenvalues of opposite sign
        let pm = SymOperator::new(array![[1.0, 0.0], [0.0, -1.0]]).unwrap();
        assert!((spectral_norm_default(&pm).unwrap() - 1.0).abs() < 1e-12);
        assert!(spectral_norm(&pm, 0.0, 10).is_err());
    }

    #[test]
    fn non_convergence_carries_iterate() {
        let m = SymOperator::new(array![[1.0, 0.0, 0.0], [0.0, 0.999, 0.0], [0.0, 0.0, 0.2]]).unwrap();
        match spectral_norm(&m, 1e-15, 2) {
            Err(Error::NoConvergence { iterations, last_iterate, .. }) => {
                assert_eq!(iterations, 2);
                assert_eq!(last_iterate.len(), 3);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn normalization() {
        let m = SymOperator::new(array![[0.8, 0.0], [0.0, 0.1]]).unwrap();
        assert_eq!(normalize_nonexpansive(&m).unwrap(), m);
        let big = SymOperator::new(array![[4.0, 0.0], [0.0, 1.0]]).unwrap();
        let n = normalize_nonexpansive(&big).unwrap();
        assert!((n.matrix()[[0, 0]] - 1.0).abs() < 1e-8);
        assert!((n.matrix()[[1, 1]] - 0.25).abs() < 1e-8);
        let z = SymOperator::zeros(3);
        assert_eq!(normalize_nonexpansive(&z).unwrap(), z);
    }

    #[test]
    fn certification() {
        let t = random_tuple(6, 2, 3);
        assert!(!t.is_certified());
        assert!(matches!(OperatorTuple::certified(t.ops().to_vec()), Err(Error::NotCertified)));
        let n = OperatorTuple::normalized(t.ops().to_vec()).unwrap();
        assert!(n.is_certified());
        assert!(OperatorTuple::certified(n.ops().to_vec()).is_ok());
        assert!(OperatorTuple::new(vec![SymOperator::identity(2), SymOperator::identity(3)]).is_err());
    }

    #[test]
    fn word_evaluation_order() {
        let t = random_tuple(5, 2, 11);
        let x = Array1::from_vec(vec![1.0, -2.0, 0.5, 3.0, 0.0]);
        assert_eq!(eval_word(&Word::empty(), &t, x.view()).unwrap(), x);
        let got = eval_word(&w(&[1, 2, 1]), &t, x.view()).unwrap();
        let t1 = t.op(1).matrix();
        let t2 = t.op(2).matrix();
        let manual = t1.dot(&t2.dot(&t1.dot(&x)));
        assert_eq!(got, manual);
        let product = t1.dot(t2).dot(t1).dot(&x);
        for (a, b) in got.iter().zip(product.iter()) {
            assert!((a - b).abs() < 1e-12 * (1.0 + b.abs()));
        }
        assert!(eval_word(&w(&[3]), &t, x.view()).is_err());
        assert!(eval_word(&w(&[1]), &t, Array1::zeros(4).view()).is_err());
    }

    #[test]
    fn example_filter() {
        let t = random_tuple(4, 2, 5);
        let x = Array1::from_vec(vec![0.3, 1.0, -1.0, 2.0]);
        let h = NCPoly::from_terms(2, [(w(&[1, 2, 1]), -5.0), (w(&[1, 1, 2]), 3.0)]).unwrap();
        let got = eval_poly(&h, &t, x.view()).unwrap();
        let (t1, t2) = (t.op(1).matrix(), t.op(2).matrix());
        let expected = t1.dot(&t2.dot(&t1.dot(&x))) * -5.0 + t1.dot(&t1.dot(&t2.dot(&x))) * 3.0;
        for (a, b) in got.iter().zip(expected.iter()) {
            assert!((a - b).abs() < 1e-12 * (1.0 + b.abs()));
        }
        assert_eq!(eval_poly(&NCPoly::one(2), &t, x.view()).unwrap(), x);
    }

    #[test]
    fn filter_shapes() {
        let t = random_tuple(3, 2, 1);
        let x = MultiSignal::from_vec(vec![1.0, 2.0, 3.0]);
        assert_eq!(eval_filter(&[vec![NCPoly::one(2)]], &t, &x).unwrap(), x);
        let h = vec![vec![NCPoly::var(2, 1).unwrap()], vec![NCPoly::var(2, 2).unwrap()]];
        let y = eval_filter(&h, &t, &x).unwrap();
        assert_eq!(y.features(), 2);
        assert_eq!(y.values.column(0), t.op(1).apply(x.column(0)));
        assert_eq!(y.values.column(1), t.op(2).apply(x.column(0)));
        assert!(eval_filter(&[vec![NCPoly::one(2), NCPoly::one(2)]], &t, &x).is_err());
    }

    #[test]
    fn box_norms() {
        let x = MultiSignal::from_vec(vec![3.0, 4.0]);
        assert_eq!(box_norm(&x), 5.0);
        assert_eq!(box_distance(&x, &x).unwrap(), 0.0);
        let two = MultiSignal::new(array![[2.0, 7.0], [0.0, 0.0]], 1.0).unwrap();
        assert_eq!(box_norm(&two), 7.0);
        let weighted = MultiSignal::new(array![[3.0], [4.0]], 0.25).unwrap();
        assert_eq!(box_norm(&weighted), 2.5);
        assert!(box_distance(&x, &weighted).is_err());
    }

    #[test]
    fn op_distance_of_shift() {
        let t = OperatorTuple::normalized(random_tuple(5, 2, 9).ops().to_vec()).unwrap();
        assert_eq!(op_distance(&t, &t).unwrap(), vec![0.0, 0.0]);
        let shifted = OperatorTuple::new(
            t.ops()
                .iter()
                .map(|o| o.add(&SymOperator::identity(5).scaled(0.1)).unwrap())
                .collect(),
        )
        .unwrap();
        for d in op_distance(&t, &shifted).unwrap() {
            assert!((d - 0.1).abs() < 1e-9);
        }
    }
}
