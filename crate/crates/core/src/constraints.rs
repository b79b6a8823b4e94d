//! The stacked sub-sketch matrix and the linear maps of the decomposition model.
//!
//! The unknown is a `lambda x w` matrix `M` (`lambda = n*m*d`) formed by
//! stacking the `d x w` blocks `M_{k,i}` in the order
//! `[M_11; ...; M_1m; ...; M_n1; ...; M_nm]`, where `M_{k,i}` is the sub-sketch
//! of packets sent in upstream window `k` and received in downstream window
//! `k + i - 1`. The constraints are
//!
//! ```text
//! B1 M = R        sum_i M_{k-i+1,i} = R_k      k = m..n
//! B2 M <= S       sum_i M_{k,i}     <= S_k     k = 1..n
//! B3 M 1 = 0      A M_{k,i} 1       = 0        every block
//! M >= 0
//! ```
//!
//! `B1`, `B2` and `B3` are applied matrix-free. The [`dense`] module builds
//! explicit matrices for small instances and is only meant as a test oracle.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::sketch::{CmSketch, HashFamily, SketchError};
use crate::windowing::SketchSeries;

#[derive(Debug, Error, PartialEq)]
pub enum ConstraintError {
    #[error("invalid dimensions: {0}")]
    BadDims(String),
    #[error("{what}: expected {expected_rows}x{expected_cols}, got {rows}x{cols}")]
    Shape {
        what: &'static str,
        expected_rows: usize,
        expected_cols: usize,
        rows: usize,
        cols: usize,
    },
    #[error(transparent)]
    Sketch(#[from] SketchError),
}

/// Problem dimensions: `n` windows, `m` branches, sketch depth `d`, width `w`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub n: usize,
    pub m: usize,
    pub d: usize,
    pub w: usize,
}

impl Dims {
    pub fn new(n: usize, m: usize, d: usize, w: usize) -> Result<Self, ConstraintError> {
        if m < 1 || n < m {
            return Err(ConstraintError::BadDims(format!(
                "need 1 <= m <= n, got n={n} m={m}"
            )));
        }
        if d < 2 || w < 1 {
            return Err(ConstraintError::BadDims(format!(
                "need d >= 2 and w >= 1, got d={d} w={w}"
            )));
        }
        Ok(Dims { n, m, d, w })
    }

    /// Rows of the stacked matrix, `n*m*d`.
    pub fn lambda(&self) -> usize {
        self.n * self.m * self.d
    }

    /// Number of downstream equality blocks, `n - m + 1`.
    pub fn eq_blocks(&self) -> usize {
        self.n - self.m + 1
    }

    pub fn eq_rows(&self) -> usize {
        self.eq_blocks() * self.d
    }

    pub fn ineq_rows(&self) -> usize {
        self.n * self.d
    }

    /// Length of `B3 M 1`, `n*m*(d-1)`.
    pub fn rowsum_len(&self) -> usize {
        self.n * self.m * (self.d - 1)
    }

    /// First row of block `M_{k,i}` (1-based `k`, `i`).
    pub fn block_row(&self, k: usize, i: usize) -> usize {
        debug_assert!((1..=self.n).contains(&k) && (1..=self.m).contains(&i));
        ((k - 1) * self.m + (i - 1)) * self.d
    }

    /// Upstream windows whose every branch lands in a constrained downstream
    /// window: `1..=n-m+1`.
    pub fn reportable_windows(&self) -> usize {
        self.n - self.m + 1
    }

    fn check(
        &self,
        what: &'static str,
        x: &DMatrix<f64>,
        rows: usize,
        cols: usize,
    ) -> Result<(), ConstraintError> {
        if x.nrows() != rows || x.ncols() != cols {
            return Err(ConstraintError::Shape {
                what,
                expected_rows: rows,
                expected_cols: cols,
                rows: x.nrows(),
                cols: x.ncols(),
            });
        }
        Ok(())
    }

    pub fn check_stack(&self, x: &DMatrix<f64>) -> Result<(), ConstraintError> {
        self.check("stacked matrix", x, self.lambda(), self.w)
    }
}

/// `sum_i M_{k-i+1,i}` for `k = m..n`.
pub fn apply_b1(dims: &Dims, m: &DMatrix<f64>) -> Result<DMatrix<f64>, ConstraintError> {
    dims.check_stack(m)?;
    let d = dims.d;
    let mut out = DMatrix::zeros(dims.eq_rows(), dims.w);
    for j in 0..dims.eq_blocks() {
        let k = dims.m + j;
        let mut dst = out.rows_mut(j * d, d);
        for i in 1..=dims.m {
            dst += m.rows(dims.block_row(k - i + 1, i), d);
        }
    }
    Ok(out)
}

pub fn apply_b1_adjoint(dims: &Dims, y: &DMatrix<f64>) -> Result<DMatrix<f64>, ConstraintError> {
    dims.check("B1 adjoint input", y, dims.eq_rows(), dims.w)?;
    let d = dims.d;
    let mut out = DMatrix::zeros(dims.lambda(), dims.w);
    for j in 0..dims.eq_blocks() {
        let k = dims.m + j;
        let src = y.rows(j * d, d);
        for i in 1..=dims.m {
            out.rows_mut(dims.block_row(k - i + 1, i), d)
                .copy_from(&src);
        }
    }
    Ok(out)
}

/// `sum_i M_{k,i}` for `k = 1..n`.
pub fn apply_b2(dims: &Dims, m: &DMatrix<f64>) -> Result<DMatrix<f64>, ConstraintError> {
    dims.check_stack(m)?;
    let d = dims.d;
    let mut out = DMatrix::zeros(dims.ineq_rows(), dims.w);
    for k in 1..=dims.n {
        let mut dst = out.rows_mut((k - 1) * d, d);
        for i in 1..=dims.m {
            dst += m.rows(dims.block_row(k, i), d);
        }
    }
    Ok(out)
}

pub fn apply_b2_adjoint(dims: &Dims, v: &DMatrix<f64>) -> Result<DMatrix<f64>, ConstraintError> {
    dims.check("B2 adjoint input", v, dims.ineq_rows(), dims.w)?;
    let d = dims.d;
    let mut out = DMatrix::zeros(dims.lambda(), dims.w);
    for k in 1..=dims.n {
        let src = v.rows((k - 1) * d, d);
        for i in 1..=dims.m {
            out.rows_mut(dims.block_row(k, i), d).copy_from(&src);
        }
    }
    Ok(out)
}

/// `B3 M`: first differences of consecutive rows inside every block.
pub fn apply_b3(dims: &Dims, m: &DMatrix<f64>) -> Result<DMatrix<f64>, ConstraintError> {
    dims.check_stack(m)?;
    let (d, blocks) = (dims.d, dims.n * dims.m);
    let mut out = DMatrix::zeros(dims.rowsum_len(), dims.w);
    for b in 0..blocks {
        for t in 0..d - 1 {
            let diff = m.row(b * d + t) - m.row(b * d + t + 1);
            out.set_row(b * (d - 1) + t, &diff);
        }
    }
    Ok(out)
}

/// `B3 M 1`: per block, differences of consecutive row sums.
pub fn apply_b3_rowsum(dims: &Dims, m: &DMatrix<f64>) -> Result<DVector<f64>, ConstraintError> {
    dims.check_stack(m)?;
    let (d, blocks) = (dims.d, dims.n * dims.m);
    let sums: Vec<f64> = (0..m.nrows()).map(|r| m.row(r).sum()).collect();
    let mut out = DVector::zeros(dims.rowsum_len());
    for b in 0..blocks {
        for t in 0..d - 1 {
            out[b * (d - 1) + t] = sums[b * d + t] - sums[b * d + t + 1];
        }
    }
    Ok(out)
}

/// `B3^T y` as a `lambda`-vector.
pub fn b3_transpose_vector(dims: &Dims, y: &DVector<f64>) -> DVector<f64> {
    let (d, blocks) = (dims.d, dims.n * dims.m);
    let mut out = DVector::zeros(dims.lambda());
    for b in 0..blocks {
        let z = y.rows(b * (d - 1), d - 1);
        for t in 0..d {
            let up = if t < d - 1 { z[t] } else { 0.0 };
            let down = if t > 0 { z[t - 1] } else { 0.0 };
            out[b * d + t] = up - down;
        }
    }
    out
}

/// `B3^T y 1^T`: every column equals `B3^T y`.
pub fn apply_b3_rowsum_adjoint(
    dims: &Dims,
    y: &DVector<f64>,
) -> Result<DMatrix<f64>, ConstraintError> {
    if y.len() != dims.rowsum_len() {
        return Err(ConstraintError::Shape {
            what: "B3 adjoint input",
            expected_rows: dims.rowsum_len(),
            expected_cols: 1,
            rows: y.len(),
            cols: 1,
        });
    }
    let col = b3_transpose_vector(dims, y);
    Ok(DMatrix::from_fn(dims.lambda(), dims.w, |r, _| col[r]))
}

/// The stacked `lambda x w` sub-sketch matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SubSketchStack {
    dims: Dims,
    data: DMatrix<f64>,
}

impl SubSketchStack {
    pub fn zeros(dims: Dims) -> Self {
        SubSketchStack {
            dims,
            data: DMatrix::zeros(dims.lambda(), dims.w),
        }
    }

    pub fn from_matrix(dims: Dims, data: DMatrix<f64>) -> Result<Self, ConstraintError> {
        dims.check_stack(&data)?;
        Ok(SubSketchStack { dims, data })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.data
    }

    /// Block `M_{k,i}` (1-based) as a `d x w` matrix.
    pub fn block(&self, k: usize, i: usize) -> DMatrix<f64> {
        self.data
            .rows(self.dims.block_row(k, i), self.dims.d)
            .into_owned()
    }

    /// Adds a count to cell `(row, col)` of block `M_{k,i}`.
    pub fn add_to(&mut self, k: usize, i: usize, row: usize, col: usize, count: f64) {
        let r = self.dims.block_row(k, i) + row;
        self.data[(r, col)] += count;
    }

    /// Block `M_{k,i}` as a sketch bound to `family`; negative entries are clamped.
    pub fn block_sketch(
        &self,
        k: usize,
        i: usize,
        family: &HashFamily,
    ) -> Result<CmSketch, ConstraintError> {
        Ok(CmSketch::from_counts(
            family.clone(),
            matrix_to_counts(&self.block(k, i)),
        )?)
    }

    /// `sum_i M_{k,i}`.
    pub fn branch_sum(&self, k: usize) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.dims.d, self.dims.w);
        for i in 1..=self.dims.m {
            out += self.data.rows(self.dims.block_row(k, i), self.dims.d);
        }
        out
    }

    pub fn nuclear_norm(&self) -> f64 {
        self.data.singular_values().sum()
    }

    pub fn clamped(&self) -> Self {
        SubSketchStack {
            dims: self.dims,
            data: self.data.map(|x| x.max(0.0)),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct StackRepr {
    n: usize,
    m: usize,
    d: usize,
    w: usize,
    /// Row-major `lambda x w`, blocks in stacking order.
    blocks: Vec<f64>,
}

impl Serialize for SubSketchStack {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let Dims { n, m, d, w } = self.dims;
        StackRepr {
            n,
            m,
            d,
            w,
            blocks: self.data.transpose().as_slice().to_vec(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for SubSketchStack {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let r = StackRepr::deserialize(deserializer)?;
        let dims = Dims::new(r.n, r.m, r.d, r.w).map_err(serde::de::Error::custom)?;
        if r.blocks.len() != dims.lambda() * dims.w {
            return Err(serde::de::Error::custom(format!(
                "expected {} entries, got {}",
                dims.lambda() * dims.w,
                r.blocks.len()
            )));
        }
        let data = DMatrix::from_row_slice(dims.lambda(), dims.w, &r.blocks);
        Ok(SubSketchStack { dims, data })
    }
}

/// Row-major counters of a `d x w` matrix, negatives clamped to zero.
pub fn matrix_to_counts(x: &DMatrix<f64>) -> Vec<f64> {
    x.transpose().iter().map(|v| v.max(0.0)).collect()
}

pub fn sketch_to_matrix(s: &CmSketch) -> DMatrix<f64> {
    DMatrix::from_row_slice(s.depth(), s.width(), s.counts())
}

/// Observed right-hand sides of the model.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSystem {
    pub dims: Dims,
    /// `R_m; ...; R_n`, shape `(n-m+1)d x w`.
    pub r_stack: DMatrix<f64>,
    /// `S_1; ...; S_n`, shape `nd x w`.
    pub s_stack: DMatrix<f64>,
}

impl ConstraintSystem {
    pub fn new(
        dims: Dims,
        r_stack: DMatrix<f64>,
        s_stack: DMatrix<f64>,
    ) -> Result<Self, ConstraintError> {
        dims.check("R stack", &r_stack, dims.eq_rows(), dims.w)?;
        dims.check("S stack", &s_stack, dims.ineq_rows(), dims.w)?;
        Ok(ConstraintSystem {
            dims,
            r_stack,
            s_stack,
        })
    }

    pub fn from_series(series: &SketchSeries) -> Result<Self, ConstraintError> {
        let cfg = &series.config;
        let dims = Dims::new(cfg.n, cfg.m, cfg.d, cfg.w)?;
        let d = dims.d;
        let mut r_stack = DMatrix::zeros(dims.eq_rows(), dims.w);
        for (j, r) in series.downstream[dims.m - 1..].iter().enumerate() {
            r_stack.rows_mut(j * d, d).copy_from(&sketch_to_matrix(r));
        }
        let mut s_stack = DMatrix::zeros(dims.ineq_rows(), dims.w);
        for (k, s) in series.upstream.iter().enumerate() {
            s_stack.rows_mut(k * d, d).copy_from(&sketch_to_matrix(s));
        }
        Self::new(dims, r_stack, s_stack)
    }

    pub fn is_zero(&self) -> bool {
        self.r_stack.iter().all(|&x| x == 0.0) && self.s_stack.iter().all(|&x| x == 0.0)
    }
}

/// Loss sketches `phi_k` for the reportable windows `1..=n-m+1`.
#[derive(Debug, Clone, PartialEq)]
pub struct LossSketchSet {
    pub sketches: Vec<CmSketch>,
}

impl LossSketchSet {
    /// `phi_k` for 1-based `k`.
    pub fn get(&self, k: usize) -> &CmSketch {
        &self.sketches[k - 1]
    }

    pub fn len(&self) -> usize {
        self.sketches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sketches.is_empty()
    }
}

/// `phi_k = max(S_k - sum_i M_{k,i}, 0)` for `k = 1..=n-m+1`.
pub fn recover_loss_sketches(
    stack: &SubSketchStack,
    upstream: &[CmSketch],
) -> Result<LossSketchSet, ConstraintError> {
    let dims = stack.dims();
    if upstream.len() != dims.n {
        return Err(ConstraintError::BadDims(format!(
            "expected {} upstream sketches, got {}",
            dims.n,
            upstream.len()
        )));
    }
    let mut sketches = Vec::with_capacity(dims.reportable_windows());
    for (idx, s) in upstream.iter().take(dims.reportable_windows()).enumerate() {
        if s.depth() != dims.d || s.width() != dims.w {
            return Err(ConstraintError::Sketch(SketchError::ShapeMismatch {
                left_d: dims.d,
                left_w: dims.w,
                right_d: s.depth(),
                right_w: s.width(),
            }));
        }
        let diff = sketch_to_matrix(s) - stack.branch_sum(idx + 1);
        sketches.push(CmSketch::from_counts(
            s.family().clone(),
            matrix_to_counts(&diff),
        )?);
    }
    Ok(LossSketchSet { sketches })
}

/// Explicit matrices for small instances. Entries are integers, so products
/// of these matrices are exact in floating point as well.
pub mod dense {
    use super::Dims;
    use nalgebra::DMatrix;

    /// The `(d-1) x d` first-difference matrix.
    pub fn difference_matrix(d: usize) -> DMatrix<i64> {
        DMatrix::from_fn(d - 1, d, |r, c| {
            if c == r {
                1
            } else if c == r + 1 {
                -1
            } else {
                0
            }
        })
    }

    pub fn b1(dims: &Dims) -> DMatrix<i64> {
        let d = dims.d;
        let mut out = DMatrix::zeros(dims.eq_rows(), dims.lambda());
        for j in 0..dims.eq_blocks() {
            let k = dims.m + j;
            for i in 1..=dims.m {
                let col = dims.block_row(k - i + 1, i);
                for t in 0..d {
                    out[(j * d + t, col + t)] = 1;
                }
            }
        }
        out
    }

    pub fn b2(dims: &Dims) -> DMatrix<i64> {
        let d = dims.d;
        let mut out = DMatrix::zeros(dims.ineq_rows(), dims.lambda());
        for k in 1..=dims.n {
            for i in 1..=dims.m {
                let col = dims.block_row(k, i);
                for t in 0..d {
                    out[((k - 1) * d + t, col + t)] = 1;
                }
            }
        }
        out
    }

    /// Block-diagonal `diag(A, ..., A)` with `n*m` copies.
    pub fn b3(dims: &Dims) -> DMatrix<i64> {
        let a = difference_matrix(dims.d);
        let blocks = dims.n * dims.m;
        let mut out = DMatrix::zeros(blocks * (dims.d - 1), dims.lambda());
        for b in 0..blocks {
            out.view_mut((b * (dims.d - 1), b * dims.d), (dims.d - 1, dims.d))
                .copy_from(&a);
        }
        out
    }

    pub fn to_f64(x: &DMatrix<i64>) -> DMatrix<f64> {
        x.map(|v| v as f64)
    }
}

/// Deviation of the operator Gram matrices from the structure the solver's
/// closed-form updates rely on.
#[derive(Debug, Clone, PartialEq)]
pub struct GramReport {
    pub dims: Dims,
    /// `max |B1 B1^T - m I|`.
    pub b1_deviation: i64,
    /// `max |B2 B2^T - m I|`.
    pub b2_deviation: i64,
    /// `max |B3 B3^T - blockdiag(A A^T)|`.
    pub b3_deviation: i64,
    pub a_gram: DMatrix<i64>,
}

impl GramReport {
    pub fn is_exact(&self) -> bool {
        self.b1_deviation == 0 && self.b2_deviation == 0 && self.b3_deviation == 0
    }
}

pub fn gram_diagnostics(dims: &Dims) -> GramReport {
    let max_dev =
        |x: DMatrix<i64>, y: DMatrix<i64>| (x - y).iter().map(|v| v.abs()).max().unwrap_or(0);
    let m = dims.m as i64;
    let b1 = dense::b1(dims);
    let b2 = dense::b2(dims);
    let b3 = dense::b3(dims);
    let a = dense::difference_matrix(dims.d);
    let a_gram = &a * a.transpose();
    let mut expected_b3 = DMatrix::zeros(dims.rowsum_len(), dims.rowsum_len());
    let blocks = dims.n * dims.m;
    for b in 0..blocks {
        let off = b * (dims.d - 1);
        expected_b3
            .view_mut((off, off), (dims.d - 1, dims.d - 1))
            .copy_from(&a_gram);
    }
    GramReport {
        dims: *dims,
        b1_deviation: max_dev(
            &b1 * b1.transpose(),
            DMatrix::identity(dims.eq_rows(), dims.eq_rows()) * m,
        ),
        b2_deviation: max_dev(
            &b2 * b2.transpose(),
            DMatrix::identity(dims.ineq_rows(), dims.ineq_rows()) * m,
        ),
        b3_deviation: max_dev(&b3 * b3.transpose(), expected_b3),
        a_gram,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    fn max_abs(x: &DMatrix<f64>) -> f64 {
        x.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    #[test]
    fn dims_validation() {
        assert!(Dims::new(3, 4, 2, 2).is_err());
        assert!(Dims::new(3, 0, 2, 2).is_err());
        assert!(Dims::new(3, 1, 1, 2).is_err());
        let dims = Dims::new(5, 2, 3, 4).unwrap();
        assert_eq!(dims.lambda(), 30);
        assert_eq!(dims.eq_rows(), 12);
        assert_eq!(dims.rowsum_len(), 20);
        assert_eq!(dims.block_row(1, 1), 0);
        assert_eq!(dims.block_row(1, 2), 3);
        assert_eq!(dims.block_row(2, 1), 6);
    }

    #[test]
    fn all_ones_forward_maps() {
        let dims = Dims::new(3, 2, 2, 2).unwrap();
        let ones = DMatrix::from_element(dims.lambda(), dims.w, 1.0);
        let b1 = apply_b1(&dims, &ones).unwrap();
        assert_eq!(b1.shape(), (4, 2));
        assert!(b1.iter().all(|&x| x == 2.0));
        let b2 = apply_b2(&dims, &ones).unwrap();
        assert_eq!(b2.shape(), (6, 2));
        assert!(b2.iter().all(|&x| x == 2.0));
        assert!(apply_b3_rowsum(&dims, &ones)
            .unwrap()
            .iter()
            .all(|&x| x == 0.0));
    }

    #[test]
    fn rowsum_of_unbalanced_block() {
        let dims = Dims::new(1, 1, 2, 2).unwrap();
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        assert_eq!(apply_b3_rowsum(&dims, &m).unwrap().as_slice(), &[1.0]);
    }

    #[test]
    fn adjoints_of_zero_are_zero() {
        let dims = Dims::new(4, 2, 3, 3).unwrap();
        let z1 = apply_b1_adjoint(&dims, &DMatrix::zeros(dims.eq_rows(), 3)).unwrap();
        let z2 = apply_b2_adjoint(&dims, &DMatrix::zeros(dims.ineq_rows(), 3)).unwrap();
        let z3 = apply_b3_rowsum_adjoint(&dims, &DVector::zeros(dims.rowsum_len())).unwrap();
        assert_eq!(max_abs(&z1) + max_abs(&z2) + max_abs(&z3), 0.0);
    }

    #[test]
    fn operators_match_dense_on_small_instance() {
        let dims = Dims::new(4, 2, 3, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b1 = dense::to_f64(&dense::b1(&dims));
        let b2 = dense::to_f64(&dense::b2(&dims));
        let b3 = dense::to_f64(&dense::b3(&dims));
        let ones = DVector::from_element(dims.w, 1.0);
        for _ in 0..10 {
            let m = random(dims.lambda(), dims.w, &mut rng);
            assert!(max_abs(&(apply_b1(&dims, &m).unwrap() - &b1 * &m)) <= 1e-12);
            assert!(max_abs(&(apply_b2(&dims, &m).unwrap() - &b2 * &m)) <= 1e-12);
            assert!(max_abs(&(apply_b3(&dims, &m).unwrap() - &b3 * &m)) <= 1e-12);
            let rs = apply_b3_rowsum(&dims, &m).unwrap() - &b3 * &m * &ones;
            assert!(rs.amax() <= 1e-12);

            let y1 = random(dims.eq_rows(), dims.w, &mut rng);
            let y2 = random(dims.ineq_rows(), dims.w, &mut rng);
            let y3 = DVector::from_fn(dims.rowsum_len(), |_, _| rng.random_range(-1.0..1.0));
            assert!(
                max_abs(&(apply_b1_adjoint(&dims, &y1).unwrap() - b1.transpose() * &y1)) <= 1e-12
            );
            assert!(
                max_abs(&(apply_b2_adjoint(&dims, &y2).unwrap() - b2.transpose() * &y2)) <= 1e-12
            );
            let dense3 = b3.transpose() * &y3 * ones.transpose();
            assert!(max_abs(&(apply_b3_rowsum_adjoint(&dims, &y3).unwrap() - dense3)) <= 1e-12);
        }
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let dims = Dims::new(4, 2, 3, 3).unwrap();
        assert!(matches!(
            apply_b1(&dims, &DMatrix::zeros(5, 3)),
            Err(ConstraintError::Shape { .. })
        ));
        assert!(apply_b2_adjoint(&dims, &DMatrix::zeros(12, 2)).is_err());
        assert!(apply_b3_rowsum_adjoint(&dims, &DVector::zeros(3)).is_err());
    }

    #[test]
    fn gram_examples() {
        let r = gram_diagnostics(&Dims::new(4, 2, 3, 1).unwrap());
        assert!(r.is_exact());
        let r = gram_diagnostics(&Dims::new(3, 3, 2, 1).unwrap());
        assert!(r.is_exact());
        let r = gram_diagnostics(&Dims::new(2, 1, 4, 1).unwrap());
        assert_eq!(
            r.a_gram,
            DMatrix::from_row_slice(3, 3, &[2, -1, 0, -1, 2, -1, 0, -1, 2])
        );
    }

    #[test]
    fn stack_json_round_trip() {
        let dims = Dims::new(3, 2, 2, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let stack = SubSketchStack::from_matrix(dims, random(12, 3, &mut rng)).unwrap();
        let text = serde_json::to_string(&stack).unwrap();
        let back: SubSketchStack = serde_json::from_str(&text).unwrap();
        assert_eq!(back, stack);
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["blocks"][1].as_f64().unwrap(), stack.matrix()[(0, 1)]);
    }

    #[test]
    fn loss_sketches_from_exact_stack() {
        let dims = Dims::new(3, 2, 2, 2).unwrap();
        let family = HashFamily::new(2, 2, 0).unwrap();
        let mut stack = SubSketchStack::zeros(dims);
        let mut upstream = Vec::new();
        for k in 1..=3 {
            let mut s = CmSketch::with_family(family.clone());
            s.insert(&crate::sketch::FlowKey::from("a"), 10);
            upstream.push(s);
            for (i, share) in [(1, 6.0), (2, 4.0)] {
                for r in 0..2 {
                    let c = family.index(r, &crate::sketch::FlowKey::from("a"));
                    stack.add_to(k, i, r, c, share);
                }
            }
        }
        let phi = recover_loss_sketches(&stack, &upstream).unwrap();
        assert_eq!(phi.len(), 2);
        assert!(phi.sketches.iter().all(|p| p.total() == 0.0));

        // drop everything in window 1
        let empty = SubSketchStack::zeros(dims);
        let phi = recover_loss_sketches(&empty, &upstream).unwrap();
        assert_eq!(phi.get(1), &upstream[0]);
    }
}
