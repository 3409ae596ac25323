//! Dense multilinear algebra on a fixed chart dimension.
//!
//! A [`Tensor`] stores `n^k` components in row-major order by slot, together
//! with the variance of each slot. Metric-dependent operations (index
//! gymnastics, contraction of like slots) always take the metric explicitly, so
//! the same routines serve the ambient metric, the fibre metric on `V`, and the
//! induced metric on the quotient bundle.

use std::fmt;

use itertools::Itertools;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{GeomError, Result};
use crate::exterior::ExteriorForm;

/// Largest chart dimension accepted anywhere in the crate.
pub const MAX_DIM: usize = 12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variance {
    Covariant,
    Contravariant,
}

impl Variance {
    fn name(self) -> &'static str {
        match self {
            Variance::Covariant => "covariant",
            Variance::Contravariant => "contravariant",
        }
    }

    fn flip(self) -> Self {
        match self {
            Variance::Covariant => Variance::Contravariant,
            Variance::Contravariant => Variance::Covariant,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    dim: usize,
    variance: Vec<Variance>,
    data: Vec<f64>,
}

fn check_dim(dim: usize) -> Result<()> {
    if dim == 0 || dim > MAX_DIM {
        return Err(GeomError::DimensionOutOfRange(dim));
    }
    Ok(())
}

impl Tensor {
    pub fn new(dim: usize, variance: Vec<Variance>, data: Vec<f64>) -> Result<Self> {
        check_dim(dim)?;
        let expected = dim.pow(variance.len() as u32);
        if data.len() != expected {
            return Err(GeomError::ComponentLength {
                expected,
                found: data.len(),
            });
        }
        Ok(Self {
            dim,
            variance,
            data,
        })
    }

    pub fn zeros(dim: usize, variance: Vec<Variance>) -> Result<Self> {
        check_dim(dim)?;
        let len = dim.pow(variance.len() as u32);
        Ok(Self {
            dim,
            variance,
            data: vec![0.0; len],
        })
    }

    /// All-covariant tensor of the given rank filled from `f(indices)`.
    pub fn covariant_from_fn(
        dim: usize,
        rank: usize,
        f: impl FnMut(&[usize]) -> f64,
    ) -> Result<Self> {
        Self::from_fn(dim, vec![Variance::Covariant; rank], f)
    }

    pub fn from_fn(
        dim: usize,
        variance: Vec<Variance>,
        mut f: impl FnMut(&[usize]) -> f64,
    ) -> Result<Self> {
        let mut out = Self::zeros(dim, variance)?;
        let rank = out.rank();
        let mut idx = vec![0usize; rank];
        for off in 0..out.data.len() {
            out.decode(off, &mut idx);
            out.data[off] = f(&idx);
        }
        Ok(out)
    }

    pub fn scalar(value: f64, dim: usize) -> Result<Self> {
        Self::new(dim, Vec::new(), vec![value])
    }

    /// The (1,1) identity tensor δ^i_j.
    pub fn identity(dim: usize) -> Result<Self> {
        Self::from_fn(
            dim,
            vec![Variance::Contravariant, Variance::Covariant],
            |i| if i[0] == i[1] { 1.0 } else { 0.0 },
        )
    }

    pub fn from_matrix(m: &DMatrix<f64>, variance: [Variance; 2]) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(GeomError::DimensionMismatch {
                expected: m.nrows(),
                found: m.ncols(),
            });
        }
        let n = m.nrows();
        Self::from_fn(n, variance.to_vec(), |i| m[(i[0], i[1])])
    }

    pub fn from_vector(v: &DVector<f64>, variance: Variance) -> Result<Self> {
        Self::new(v.len(), vec![variance], v.iter().copied().collect())
    }

    pub fn to_matrix(&self) -> Result<DMatrix<f64>> {
        if self.rank() != 2 {
            return Err(GeomError::InvalidArgument(format!(
                "to_matrix needs rank 2, got rank {}",
                self.rank()
            )));
        }
        let n = self.dim;
        Ok(DMatrix::from_fn(n, n, |i, j| self.data[i * n + j]))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rank(&self) -> usize {
        self.variance.len()
    }

    pub fn variance(&self) -> &[Variance] {
        &self.variance
    }

    pub fn components(&self) -> &[f64] {
        &self.data
    }

    pub fn components_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn is_covariant(&self) -> bool {
        self.variance.iter().all(|v| *v == Variance::Covariant)
    }

    pub fn offset(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.rank());
        idx.iter().fold(0, |acc, &i| acc * self.dim + i)
    }

    fn decode(&self, mut off: usize, idx: &mut [usize]) {
        for slot in (0..idx.len()).rev() {
            idx[slot] = off % self.dim;
            off /= self.dim;
        }
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[self.offset(idx)]
    }

    pub fn set(&mut self, idx: &[usize], value: f64) {
        let off = self.offset(idx);
        self.data[off] = value;
    }

    /// Max-abs component norm.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn has_non_finite(&self) -> bool {
        self.data.iter().any(|x| !x.is_finite())
    }

    fn check_same_shape(&self, other: &Tensor) -> Result<()> {
        if self.dim != other.dim {
            return Err(GeomError::DimensionMismatch {
                expected: self.dim,
                found: other.dim,
            });
        }
        if self.variance != other.variance {
            return Err(GeomError::Variance(
                "operands have different slot variances".into(),
            ));
        }
        Ok(())
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.check_same_shape(other)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + b)
            .collect();
        Ok(Tensor {
            dim: self.dim,
            variance: self.variance.clone(),
            data,
        })
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.check_same_shape(other)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        Ok(Tensor {
            dim: self.dim,
            variance: self.variance.clone(),
            data,
        })
    }

    pub fn scale(&self, factor: f64) -> Tensor {
        Tensor {
            dim: self.dim,
            variance: self.variance.clone(),
            data: self.data.iter().map(|x| x * factor).collect(),
        }
    }

    /// Outer product `self ⊗ other`, slots of `self` first.
    pub fn outer(&self, other: &Tensor) -> Result<Tensor> {
        if self.dim != other.dim {
            return Err(GeomError::DimensionMismatch {
                expected: self.dim,
                found: other.dim,
            });
        }
        let mut variance = self.variance.clone();
        variance.extend_from_slice(&other.variance);
        let data = self
            .data
            .iter()
            .flat_map(|a| other.data.iter().map(move |b| a * b))
            .collect();
        Tensor::new(self.dim, variance, data)
    }

    /// Largest deviation under the transposition of slots `a` and `b`.
    pub fn symmetry_defect(&self, a: usize, b: usize) -> Result<f64> {
        self.check_slot(a)?;
        self.check_slot(b)?;
        let mut idx = vec![0; self.rank()];
        let mut worst: f64 = 0.0;
        for off in 0..self.data.len() {
            self.decode(off, &mut idx);
            idx.swap(a, b);
            worst = worst.max((self.data[off] - self.get(&idx)).abs());
        }
        Ok(worst)
    }

    pub fn is_symmetric_in(&self, a: usize, b: usize, tol: f64) -> Result<bool> {
        Ok(self.symmetry_defect(a, b)? <= tol)
    }

    /// True when every component with a repeated index is within `tol` of zero
    /// and every slot transposition flips the sign.
    pub fn is_alternating(&self, tol: f64) -> bool {
        let rank = self.rank();
        let mut idx = vec![0; rank];
        for off in 0..self.data.len() {
            self.decode(off, &mut idx);
            if idx.iter().duplicates().next().is_some() {
                if self.data[off].abs() > tol {
                    return false;
                }
                continue;
            }
            for s in 0..rank.saturating_sub(1) {
                idx.swap(s, s + 1);
                let swapped = self.get(&idx);
                idx.swap(s, s + 1);
                if (self.data[off] + swapped).abs() > tol {
                    return false;
                }
            }
        }
        true
    }

    fn check_slot(&self, slot: usize) -> Result<()> {
        if slot >= self.rank() {
            return Err(GeomError::SlotOutOfRange {
                slot,
                rank: self.rank(),
            });
        }
        Ok(())
    }

    /// Moves slot `from` to position `to`, shifting the slots in between.
    pub fn move_slot(&self, from: usize, to: usize) -> Result<Tensor> {
        self.check_slot(from)?;
        self.check_slot(to)?;
        let rank = self.rank();
        let mut order: Vec<usize> = (0..rank).filter(|&s| s != from).collect();
        order.insert(to, from);
        let variance = order.iter().map(|&s| self.variance[s]).collect();
        let mut src = vec![0; rank];
        Tensor::from_fn(self.dim, variance, |dst| {
            for (pos, &s) in order.iter().enumerate() {
                src[s] = dst[pos];
            }
            self.get(&src)
        })
    }
}

impl fmt::Display for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut idx = vec![0; self.rank()];
        for off in 0..self.data.len() {
            if self.data[off] == 0.0 {
                continue;
            }
            self.decode(off, &mut idx);
            writeln!(f, "[{}] = {:.16e}", idx.iter().join(","), self.data[off])?;
        }
        Ok(())
    }
}

/// Relative residual `‖res‖ / max(1, ‖reference‖)` in the max-abs norm.
pub fn relative_residual(residual: f64, reference: f64) -> f64 {
    residual / reference.abs().max(1.0)
}

fn metric_matches(metric: &Tensor, want: Variance, dim: usize) -> bool {
    metric.dim == dim && metric.variance == [want, want]
}

/// Contracts slots `slot_a` and `slot_b` of `t`.
///
/// Slots of opposite variance are traced directly. Two covariant slots need
/// the inverse metric (a (2,0) tensor) and two contravariant slots need the
/// metric itself.
pub fn contract(
    t: &Tensor,
    slot_a: usize,
    slot_b: usize,
    metric: Option<&Tensor>,
) -> Result<Tensor> {
    t.check_slot(slot_a)?;
    t.check_slot(slot_b)?;
    if slot_a == slot_b {
        return Err(GeomError::SameSlot);
    }
    let (va, vb) = (t.variance[slot_a], t.variance[slot_b]);
    let n = t.dim;
    let factor: Option<&Tensor> = if va == vb {
        let want = va.flip();
        match metric {
            Some(m) if metric_matches(m, want, n) => Some(m),
            _ => return Err(GeomError::MissingMetric(want.name())),
        }
    } else {
        None
    };

    let keep: Vec<usize> = (0..t.rank())
        .filter(|&s| s != slot_a && s != slot_b)
        .collect();
    let variance = keep.iter().map(|&s| t.variance[s]).collect();
    let mut full = vec![0usize; t.rank()];
    Tensor::from_fn(n, variance, |out| {
        for (pos, &s) in keep.iter().enumerate() {
            full[s] = out[pos];
        }
        let mut acc = 0.0;
        match factor {
            None => {
                for i in 0..n {
                    full[slot_a] = i;
                    full[slot_b] = i;
                    acc += t.get(&full);
                }
            }
            Some(m) => {
                for i in 0..n {
                    for j in 0..n {
                        let w = m.data[i * n + j];
                        if w == 0.0 {
                            continue;
                        }
                        full[slot_a] = i;
                        full[slot_b] = j;
                        acc += w * t.get(&full);
                    }
                }
            }
        }
        acc
    })
}

fn transvect(t: &Tensor, slot: usize, metric: &Tensor, want_metric: Variance) -> Result<Tensor> {
    t.check_slot(slot)?;
    if !metric_matches(metric, want_metric, t.dim) {
        return Err(GeomError::Variance(format!(
            "index gymnastics needs a {} rank-2 metric",
            want_metric.name()
        )));
    }
    let n = t.dim;
    let mut variance = t.variance.clone();
    variance[slot] = variance[slot].flip();
    let mut src = vec![0usize; t.rank()];
    Tensor::from_fn(n, variance, |dst| {
        src.copy_from_slice(dst);
        let mut acc = 0.0;
        for j in 0..n {
            src[slot] = j;
            acc += metric.data[dst[slot] * n + j] * t.get(&src);
        }
        acc
    })
}

/// Raises a covariant slot with the inverse metric `ginv` (a (2,0) tensor).
pub fn raise(t: &Tensor, slot: usize, ginv: &Tensor) -> Result<Tensor> {
    if t.variance.get(slot) != Some(&Variance::Covariant) {
        return Err(GeomError::Variance(format!("slot {slot} is not covariant")));
    }
    transvect(t, slot, ginv, Variance::Contravariant)
}

/// Lowers a contravariant slot with the metric `g` (a (0,2) tensor).
pub fn lower(t: &Tensor, slot: usize, g: &Tensor) -> Result<Tensor> {
    if t.variance.get(slot) != Some(&Variance::Contravariant) {
        return Err(GeomError::Variance(format!(
            "slot {slot} is not contravariant"
        )));
    }
    transvect(t, slot, g, Variance::Covariant)
}

/// Permutations of `0..k` paired with their signs.
pub fn signed_permutations(k: usize) -> Vec<(Vec<usize>, f64)> {
    (0..k)
        .permutations(k)
        .map(|p| {
            let inversions = (0..k)
                .flat_map(|i| (i + 1..k).map(move |j| (i, j)))
                .filter(|&(i, j)| p[i] > p[j])
                .count();
            let sign = if inversions % 2 == 0 { 1.0 } else { -1.0 };
            (p, sign)
        })
        .collect()
}

/// Alternation `(1/k!) Σ_σ sgn(σ) T(x_σ(1), …, x_σ(k))` of a covariant tensor.
pub fn alternate(t: &Tensor) -> Result<Tensor> {
    if !t.is_covariant() {
        return Err(GeomError::Variance(
            "alternation needs an all-covariant tensor".into(),
        ));
    }
    let k = t.rank();
    let perms = signed_permutations(k);
    let norm = 1.0 / perms.len() as f64;
    let mut src = vec![0usize; k];
    Tensor::from_fn(t.dim, t.variance.clone(), |idx| {
        if idx.iter().duplicates().next().is_some() {
            return 0.0;
        }
        let mut acc = 0.0;
        for (p, sign) in &perms {
            for (slot, &q) in p.iter().enumerate() {
                src[slot] = idx[q];
            }
            acc += sign * t.get(&src);
        }
        acc * norm
    })
}

fn check_two_form(z: &Tensor, dim: usize) -> Result<()> {
    if z.dim != dim {
        return Err(GeomError::DimensionMismatch {
            expected: dim,
            found: z.dim,
        });
    }
    if z.rank() != 2 || !z.is_covariant() {
        return Err(GeomError::NotAlternating(
            "expected a covariant rank-2 tensor".into(),
        ));
    }
    let tol = 1e-12 * z.max_abs().max(1.0);
    if !z.is_alternating(tol) {
        return Err(GeomError::NotAlternating("2-form is not skew".into()));
    }
    Ok(())
}

/// The scalar `s` with `ζ₁∧…∧ζ_m = s·Θ` in dimension `2m`.
///
/// Both sides are evaluated on the coordinate basis `(e₁, …, e_{2m})`; the
/// wedge product uses the determinant convention, so `(e¹∧e²)(e₁, e₂) = 1`.
pub fn wedge_power_coefficient(zetas: &[Tensor], orientation_form: &Tensor) -> Result<f64> {
    let dim = orientation_form.dim;
    let m = zetas.len();
    if dim != 2 * m {
        return Err(GeomError::DimensionMismatch {
            expected: 2 * m,
            found: dim,
        });
    }
    if orientation_form.rank() != dim || !orientation_form.is_covariant() {
        return Err(GeomError::NotAlternating(
            "orientation form must be a covariant top-degree form".into(),
        ));
    }
    for z in zetas {
        check_two_form(z, dim)?;
    }
    let top: Vec<usize> = (0..dim).collect();
    let theta = orientation_form.get(&top);
    if theta == 0.0 || !theta.is_finite() {
        return Err(GeomError::ZeroOrientation);
    }
    let mut acc = ExteriorForm::one(dim);
    for z in zetas {
        acc = acc.wedge(&ExteriorForm::from_two_form(z.components(), dim));
    }
    Ok(acc.top_coefficient() / theta)
}

/// A point of the coordinate chart, coordinates ordered `(t, s, v¹, …)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChartPoint(pub Vec<f64>);

impl ChartPoint {
    pub fn new(coords: Vec<f64>) -> Self {
        Self(coords)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn t(&self) -> f64 {
        self.0[0]
    }

    pub fn check_dim(&self, n: usize) -> Result<()> {
        if self.0.len() != n {
            return Err(GeomError::DimensionMismatch {
                expected: n,
                found: self.0.len(),
            });
        }
        Ok(())
    }

    pub fn shifted(&self, axis: usize, delta: f64) -> Self {
        let mut c = self.0.clone();
        c[axis] += delta;
        Self(c)
    }

    pub fn to_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.0)
    }
}

/// A nondegenerate symmetric bilinear form on a real vector space.
#[derive(Clone, Debug, PartialEq)]
pub struct FibreMetric {
    matrix: DMatrix<f64>,
    inverse: DMatrix<f64>,
    signature: (usize, usize),
}

impl FibreMetric {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        let n = matrix.nrows();
        if n == 0 || n != matrix.ncols() {
            return Err(GeomError::FibreMetric(format!(
                "matrix must be square and nonempty, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        if matrix.iter().any(|x| !x.is_finite()) {
            return Err(GeomError::FibreMetric("non-finite entry".into()));
        }
        let scale = matrix.amax().max(1.0);
        let asym = (&matrix - matrix.transpose()).amax();
        if asym > 1e-14 * scale {
            return Err(GeomError::FibreMetric(format!(
                "matrix is not symmetric (defect {asym:e})"
            )));
        }
        let eig = SymmetricEigen::new(matrix.clone());
        let max_ev = eig.eigenvalues.amax();
        let min_ev = eig
            .eigenvalues
            .iter()
            .fold(f64::INFINITY, |m, x| m.min(x.abs()));
        if !(min_ev > 1e-12 * max_ev) {
            return Err(GeomError::FibreMetric(format!(
                "matrix is degenerate (min |eigenvalue| {min_ev:e}, max {max_ev:e})"
            )));
        }
        let neg = eig.eigenvalues.iter().filter(|&&x| x < 0.0).count();
        let signature = (neg, n - neg);
        let inverse = matrix
            .clone()
            .try_inverse()
            .ok_or_else(|| GeomError::FibreMetric("matrix is not invertible".into()))?;
        Ok(Self {
            matrix,
            inverse,
            signature,
        })
    }

    pub fn diagonal(entries: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(entries)))
    }

    pub fn euclidean(dim: usize) -> Result<Self> {
        Self::new(DMatrix::identity(dim, dim))
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn inverse(&self) -> &DMatrix<f64> {
        &self.inverse
    }

    /// (count of negative, count of positive) eigenvalues.
    pub fn signature(&self) -> (usize, usize) {
        self.signature
    }

    pub fn inner(&self, u: &DVector<f64>, v: &DVector<f64>) -> f64 {
        (u.transpose() * &self.matrix * v)[(0, 0)]
    }

    /// `Θ(e₁, …, e_r)` on the coordinate basis for the volume form that is 1
    /// on positively oriented orthonormal bases.
    pub fn volume_coefficient(&self) -> f64 {
        self.matrix.determinant().abs().sqrt()
    }
}

/// Signature (negatives, positives) of a symmetric matrix, or `None` when the
/// matrix is degenerate under the fibre-metric threshold.
pub fn signature_of(matrix: &DMatrix<f64>) -> Option<(usize, usize)> {
    FibreMetric::new(matrix.clone()).ok().map(|m| m.signature())
}
