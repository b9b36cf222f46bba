//! Sparse instances, labels and kernel functions.
//!
//! Instances are stored as sorted `(index, value)` pairs. Dot products and
//! squared distances are computed with a merge over the two index lists, so
//! the cost is linear in the number of stored entries rather than in the
//! ambient dimension.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A sparse real vector with strictly increasing indices and no stored zeros.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SparseVector {
    indices: Vec<u32>,
    values: Vec<f64>,
}

impl SparseVector {
    /// The empty (all-zero) vector.
    pub fn empty() -> Self {
        Self::default()
    }

    /// Builds a vector from `(index, value)` pairs.
    ///
    /// Pairs must already be sorted by strictly increasing index. Explicit
    /// zeros are dropped; non-finite values are rejected.
    pub fn from_pairs<I>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (u32, f64)>,
    {
        let mut indices = Vec::new();
        let mut values = Vec::new();
        let mut last: Option<u32> = None;
        for (pos, (index, value)) in pairs.into_iter().enumerate() {
            if let Some(prev) = last {
                if index <= prev {
                    return Err(Error::UnsortedIndices(pos));
                }
            }
            last = Some(index);
            if !value.is_finite() {
                return Err(Error::NonFiniteValue { index, value });
            }
            if value != 0.0 {
                indices.push(index);
                values.push(value);
            }
        }
        Ok(Self { indices, values })
    }

    /// Builds a sparse vector from a dense slice; index `i` holds `dense[i]`.
    pub fn from_dense(dense: &[f64]) -> Result<Self> {
        Self::from_pairs(dense.iter().enumerate().map(|(i, &v)| (i as u32, v)))
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.indices.iter().copied().zip(self.values.iter().copied())
    }

    /// Largest stored index, if any.
    pub fn max_index(&self) -> Option<u32> {
        self.indices.last().copied()
    }

    pub fn sq_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    pub fn dot(&self, other: &SparseVector) -> f64 {
        let (mut i, mut j) = (0, 0);
        let mut acc = 0.0;
        while i < self.indices.len() && j < other.indices.len() {
            match self.indices[i].cmp(&other.indices[j]) {
                Ordering::Less => i += 1,
                Ordering::Greater => j += 1,
                Ordering::Equal => {
                    acc += self.values[i] * other.values[j];
                    i += 1;
                    j += 1;
                }
            }
        }
        acc
    }

    /// Returns a copy with every value multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::from_pairs(self.iter().map(|(i, v)| (i, v * factor)))
    }
}

/// Squared Euclidean distance over the union of both supports.
pub fn sparse_sq_dist(u: &SparseVector, v: &SparseVector) -> f64 {
    let (mut i, mut j) = (0, 0);
    let mut acc = 0.0;
    while i < u.indices.len() && j < v.indices.len() {
        match u.indices[i].cmp(&v.indices[j]) {
            Ordering::Less => {
                acc += u.values[i] * u.values[i];
                i += 1;
            }
            Ordering::Greater => {
                acc += v.values[j] * v.values[j];
                j += 1;
            }
            Ordering::Equal => {
                let d = u.values[i] - v.values[j];
                acc += d * d;
                i += 1;
                j += 1;
            }
        }
    }
    acc += u.values[i..].iter().map(|x| x * x).sum::<f64>();
    acc += v.values[j..].iter().map(|x| x * x).sum::<f64>();
    acc
}

/// A binary class label.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Negative,
    Positive,
}

impl Label {
    pub fn from_sign(y: i64) -> Result<Self> {
        match y {
            1 => Ok(Label::Positive),
            -1 => Ok(Label::Negative),
            other => Err(Error::InvalidLabel(other)),
        }
    }

    /// `+1.0` or `-1.0`.
    #[inline]
    pub fn value(self) -> f64 {
        match self {
            Label::Positive => 1.0,
            Label::Negative => -1.0,
        }
    }

    pub fn as_i8(self) -> i8 {
        match self {
            Label::Positive => 1,
            Label::Negative => -1,
        }
    }

    /// Label predicted by a real-valued score; a score of exactly zero maps to
    /// the negative class.
    #[inline]
    pub fn from_score(score: f64) -> Self {
        if score > 0.0 {
            Label::Positive
        } else {
            Label::Negative
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Label::Positive => Label::Negative,
            Label::Negative => Label::Positive,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Positive => write!(f, "+1"),
            Label::Negative => write!(f, "-1"),
        }
    }
}

/// An instance together with its binary label.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub x: SparseVector,
    pub y: Label,
}

impl LabeledExample {
    pub fn new(x: SparseVector, y: Label) -> Self {
        Self { x, y }
    }
}

/// Kernel family and parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum KernelSpec {
    /// `exp(-|u - v|^2 / (2 sigma^2))`
    Gaussian { sigma: f64 },
    /// `<u, v>`
    Linear,
    /// `(<u, v> + offset)^degree`
    Polynomial { degree: u32, offset: f64 },
}

impl KernelSpec {
    pub fn gaussian(sigma: f64) -> Result<Self> {
        let spec = KernelSpec::Gaussian { sigma };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Gaussian { sigma } if !(sigma > 0.0 && sigma.is_finite()) => Err(
                Error::InvalidKernel(format!("gaussian width must be positive, got {sigma}")),
            ),
            KernelSpec::Polynomial { degree, .. } if degree == 0 => Err(Error::InvalidKernel(
                "polynomial degree must be at least 1".into(),
            )),
            KernelSpec::Polynomial { offset, .. } if !(offset >= 0.0 && offset.is_finite()) => {
                Err(Error::InvalidKernel(format!(
                    "polynomial offset must be nonnegative, got {offset}"
                )))
            }
            _ => Ok(()),
        }
    }

    /// True when `k(x, x) == 1` for every `x`, independent of the data.
    pub fn is_normalized(&self) -> bool {
        matches!(self, KernelSpec::Gaussian { .. })
    }

    #[inline]
    pub fn eval(&self, u: &SparseVector, v: &SparseVector) -> f64 {
        match *self {
            KernelSpec::Gaussian { sigma } => {
                (-sparse_sq_dist(u, v) / (2.0 * sigma * sigma)).exp()
            }
            KernelSpec::Linear => u.dot(v),
            KernelSpec::Polynomial { degree, offset } => {
                (u.dot(v) + offset).powi(degree as i32)
            }
        }
    }

    /// `k(x, x)`.
    #[inline]
    pub fn self_eval(&self, x: &SparseVector) -> f64 {
        match *self {
            KernelSpec::Gaussian { .. } => 1.0,
            KernelSpec::Linear => x.sq_norm(),
            KernelSpec::Polynomial { degree, offset } => {
                (x.sq_norm() + offset).powi(degree as i32)
            }
        }
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelSpec::Gaussian { sigma } => write!(f, "gaussian(sigma={sigma})"),
            KernelSpec::Linear => write!(f, "linear"),
            KernelSpec::Polynomial { degree, offset } => {
                write!(f, "polynomial(degree={degree}, offset={offset})")
            }
        }
    }
}

/// Evaluates `spec` at `(u, v)`.
pub fn kernel_eval(spec: &KernelSpec, u: &SparseVector, v: &SparseVector) -> f64 {
    spec.eval(u, v)
}

/// Dense symmetric matrix stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct SymMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    /// Sets both `(i, j)` and `(j, i)`.
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
        self.data[j * self.n + i] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }
}

/// Gram matrix `M[i][j] = k(xs[i], xs[j])`.
pub fn gram_matrix(spec: &KernelSpec, xs: &[SparseVector]) -> SymMatrix {
    let n = xs.len();
    let mut m = SymMatrix::zeros(n);
    for i in 0..n {
        for j in 0..=i {
            m.set(i, j, spec.eval(&xs[i], &xs[j]));
        }
    }
    m
}
