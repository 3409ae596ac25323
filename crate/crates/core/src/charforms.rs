//! Pfaffians of skew-adjoint operator tuples and the pointwise Euler and
//! generating forms of a curvature pack.
//!
//! Constant factors are fixed as follows: wedge products use the
//! determinant convention, the Euler form is `(1/n!) Σ_σ sgn σ Pf(…)` and the
//! generating form of degree `4i` is `(1/(4i)!) Σ_σ sgn σ tr(…)`.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};

use crate::curvature::CurvaturePack;
use crate::error::{GeomError, Result};
use crate::exterior::ExteriorForm;
use crate::tensor::{signed_permutations, FibreMetric};

/// Skew-adjointness tolerance for [`SkewTuple`] operators.
pub const SKEW_TOLERANCE: f64 = 1e-10;
/// Largest dimension for which full permutation sums are evaluated.
pub const MAX_ALTERNATION: usize = 8;

/// `m` operators on a `2m`-dimensional space with inner product, each
/// skew-adjoint for that inner product.
#[derive(Clone, Debug, PartialEq)]
pub struct SkewTuple {
    fibre: FibreMetric,
    operators: Vec<DMatrix<f64>>,
    orientation: f64,
}

/// `max |⟨Su,v⟩ + ⟨u,Sv⟩|` over basis pairs, relative to `max(1, ‖S‖)`.
pub fn skew_residual(fibre: &FibreMetric, s: &DMatrix<f64>) -> f64 {
    let h = fibre.matrix();
    let sym = s.transpose() * h + h * s;
    sym.amax() / s.amax().max(1.0)
}

impl SkewTuple {
    /// `orientation` must be `+1` or `−1`.
    pub fn new(fibre: FibreMetric, operators: Vec<DMatrix<f64>>, orientation: f64) -> Result<Self> {
        let dim = fibre.dim();
        if !dim.is_multiple_of(2) {
            return Err(GeomError::OddDimension(dim));
        }
        if operators.len() != dim / 2 {
            return Err(GeomError::InvalidArgument(format!(
                "{} operators supplied for a space of dimension {dim}",
                operators.len()
            )));
        }
        if orientation != 1.0 && orientation != -1.0 {
            return Err(GeomError::ZeroOrientation);
        }
        for (index, s) in operators.iter().enumerate() {
            if s.nrows() != dim || s.ncols() != dim {
                return Err(GeomError::DimensionMismatch {
                    expected: dim,
                    found: s.nrows(),
                });
            }
            let residual = skew_residual(&fibre, s);
            if !(residual < SKEW_TOLERANCE) {
                return Err(GeomError::NotSkew { index, residual });
            }
        }
        Ok(Self {
            fibre,
            operators,
            orientation,
        })
    }

    pub fn fibre(&self) -> &FibreMetric {
        &self.fibre
    }

    pub fn operators(&self) -> &[DMatrix<f64>] {
        &self.operators
    }

    pub fn orientation(&self) -> f64 {
        self.orientation
    }

    /// Coordinate components of the volume form, `Θ(e₁, …, e_{2m})`.
    pub fn volume_coefficient(&self) -> f64 {
        self.orientation * self.fibre.volume_coefficient()
    }

    /// Components `ζ_j(e_a, e_b) = ⟨S_j e_a, e_b⟩`, i.e. the matrix `S_jᵀ H`.
    pub fn two_forms(&self) -> Vec<DMatrix<f64>> {
        self.operators
            .iter()
            .map(|s| s.transpose() * self.fibre.matrix())
            .collect()
    }
}

fn top_wedge(forms: &[DMatrix<f64>], dim: usize) -> f64 {
    let mut acc = ExteriorForm::one(dim);
    for z in forms {
        let comps: Vec<f64> = (0..dim * dim).map(|o| z[(o / dim, o % dim)]).collect();
        acc = acc.wedge_two_form(&comps);
    }
    acc.top_coefficient()
}

/// `Pf(S₁, …, S_m)`: the scalar with `ζ₁∧…∧ζ_m = Pf·Θ`.
pub fn pfaffian(st: &SkewTuple) -> f64 {
    top_wedge(&st.two_forms(), st.fibre.dim()) / st.volume_coefficient()
}

/// The endomorphism `w ↦ R(u,v)w` of the tangent space at the pack's point.
pub fn curvature_operator(
    pack: &CurvaturePack,
    u: &DVector<f64>,
    v: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    let n = pack.dim();
    if u.len() != n || v.len() != n {
        return Err(GeomError::DimensionMismatch {
            expected: n,
            found: u.len().max(v.len()),
        });
    }
    let op = raw_operator(pack, u, v);
    let g = pack.metric_matrix();
    let defect = (op.transpose() * &g + &g * &op).amax() / (op.amax() * g.amax()).max(1.0);
    if !(defect < 1e-8) {
        return Err(GeomError::FailedInvariant(format!(
            "curvature operator is not skew-adjoint (residual {defect:e})"
        )));
    }
    Ok(op)
}

fn raw_operator(pack: &CurvaturePack, u: &DVector<f64>, v: &DVector<f64>) -> DMatrix<f64> {
    let n = pack.dim();
    let mut op = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let c = u[i] * v[j];
            if c == 0.0 {
                continue;
            }
            for k in 0..n {
                for l in 0..n {
                    op[(l, k)] += c * pack.riemann13.get(&[i, j, k, l]);
                }
            }
        }
    }
    op
}

fn check_vectors(n: usize, vectors: &[DVector<f64>], count: usize) -> Result<()> {
    if vectors.len() != count {
        return Err(GeomError::InvalidArgument(format!(
            "expected {count} vectors, got {}",
            vectors.len()
        )));
    }
    if let Some(v) = vectors.iter().find(|v| v.len() != n) {
        return Err(GeomError::DimensionMismatch {
            expected: n,
            found: v.len(),
        });
    }
    let m = DMatrix::from_fn(n, count, |r, c| vectors[c][r]);
    let sv = m.svd(false, false).singular_values;
    let smax = sv.amax();
    let smin = sv.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    if !(smin > 1e-12 * smax.max(1.0)) {
        return Err(GeomError::DependentVectors(smin));
    }
    Ok(())
}

/// Operators `R(v_a, v_b)` for every ordered pair.
fn pair_operators(pack: &CurvaturePack, vectors: &[DVector<f64>]) -> Vec<Vec<DMatrix<f64>>> {
    vectors
        .iter()
        .map(|a| vectors.iter().map(|b| raw_operator(pack, a, b)).collect())
        .collect()
}

/// Canonical key of a sequence of ordered pairs: the sorted unordered pairs,
/// and the sign relating the original product to the canonical one.
fn pairing_key(perm: &[usize]) -> (Vec<(usize, usize)>, f64) {
    let mut sign = 1.0;
    let mut pairs: Vec<(usize, usize)> = perm
        .chunks(2)
        .map(|c| {
            if c[0] < c[1] {
                (c[0], c[1])
            } else {
                sign = -sign;
                (c[1], c[0])
            }
        })
        .collect();
    pairs.sort_unstable();
    (pairs, sign)
}

/// `(1/n!) Σ_σ sgn σ Pf(R(v_σ1, v_σ2), …, R(v_σ(n−1), v_σn))` with the
/// tangent space oriented so that the coordinate basis is positive.
pub fn euler_form_at(pack: &CurvaturePack, vectors: &[DVector<f64>]) -> Result<f64> {
    let n = pack.dim();
    if !n.is_multiple_of(2) {
        return Err(GeomError::OddDimension(n));
    }
    if n > MAX_ALTERNATION {
        return Err(GeomError::DimensionOutOfRange(n));
    }
    check_vectors(n, vectors, n)?;
    let ops = pair_operators(pack, vectors);
    let g = pack.metric_matrix();
    let theta = g.determinant().abs().sqrt();
    // Pf is symmetric in its arguments and linear in each, so a term depends
    // only on the unordered pairing up to sign
    let mut cache: HashMap<Vec<(usize, usize)>, f64> = HashMap::new();
    let perms = signed_permutations(n);
    let mut acc = 0.0;
    for (perm, sign) in &perms {
        let (key, flip) = pairing_key(perm);
        let value = *cache.entry(key.clone()).or_insert_with(|| {
            let forms: Vec<DMatrix<f64>> = key
                .iter()
                .map(|&(a, b)| ops[a][b].transpose() * &g)
                .collect();
            top_wedge(&forms, n) / theta
        });
        acc += sign * flip * value;
    }
    Ok(acc / perms.len() as f64)
}

/// `(1/(4i)!) Σ_σ sgn σ tr(R(v_σ1, v_σ2) ∘ … ∘ R(v_σ(4i−1), v_σ(4i)))`.
pub fn generating_form_at(pack: &CurvaturePack, i: usize, vectors: &[DVector<f64>]) -> Result<f64> {
    let n = pack.dim();
    let k = 4 * i;
    if i == 0 || k > n {
        return Err(GeomError::InvalidArgument(format!(
            "degree 4i = {k} must lie in 4..={n}"
        )));
    }
    if k > MAX_ALTERNATION {
        return Err(GeomError::InvalidArgument(format!(
            "degree {k} exceeds the alternation cap {MAX_ALTERNATION}"
        )));
    }
    if vectors.len() != k {
        return Err(GeomError::InvalidArgument(format!(
            "expected {k} vectors, got {}",
            vectors.len()
        )));
    }
    if let Some(v) = vectors.iter().find(|v| v.len() != n) {
        return Err(GeomError::DimensionMismatch {
            expected: n,
            found: v.len(),
        });
    }
    let ops = pair_operators(pack, vectors);
    let perms = signed_permutations(k);
    let mut acc = 0.0;
    for (perm, sign) in &perms {
        let mut prod = ops[perm[0]][perm[1]].clone();
        for c in perm[2..].chunks(2) {
            prod *= &ops[c[0]][c[1]];
        }
        acc += sign * prod.trace();
    }
    Ok(acc / perms.len() as f64)
}

/// Classical Pfaffian of a skew matrix by expansion along the first row.
pub fn classical_pfaffian(z: &DMatrix<f64>) -> f64 {
    let n = z.nrows();
    if n == 0 {
        return 1.0;
    }
    if n % 2 == 1 {
        return 0.0;
    }
    let mut acc = 0.0;
    for j in 1..n {
        let keep: Vec<usize> = (1..n).filter(|&k| k != j).collect();
        let minor = DMatrix::from_fn(n - 2, n - 2, |a, b| z[(keep[a], keep[b])]);
        let sign = if j % 2 == 1 { 1.0 } else { -1.0 };
        acc += sign * z[(0, j)] * classical_pfaffian(&minor);
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::{ConstantCurvature, FlatMetric, MetricProvider, RoterSpec};
    use crate::profile::ScalarProfile;
    use crate::tensor::ChartPoint;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rotation(dim: usize, a: usize, b: usize) -> DMatrix<f64> {
        let mut s = DMatrix::zeros(dim, dim);
        s[(b, a)] = 1.0;
        s[(a, b)] = -1.0;
        s
    }

    fn random_skew(rng: &mut ChaCha8Rng, fibre: &FibreMetric) -> DMatrix<f64> {
        let n = fibre.dim();
        let k = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        fibre.inverse() * (&k - k.transpose())
    }

    #[test]
    fn decomposable_rotations() {
        let st = SkewTuple::new(
            FibreMetric::euclidean(4).unwrap(),
            vec![rotation(4, 0, 1), rotation(4, 2, 3)],
            1.0,
        )
        .unwrap();
        assert!((pfaffian(&st) - 1.0).abs() < 1e-15);
        let flipped = SkewTuple::new(st.fibre().clone(), st.operators().to_vec(), -1.0).unwrap();
        assert!((pfaffian(&flipped) + 1.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_tuples() {
        let e3 = FibreMetric::euclidean(3).unwrap();
        assert!(matches!(
            SkewTuple::new(e3, vec![], 1.0),
            Err(GeomError::OddDimension(3))
        ));
        let e4 = FibreMetric::euclidean(4).unwrap();
        let sym = DMatrix::identity(4, 4);
        assert!(matches!(
            SkewTuple::new(e4, vec![rotation(4, 0, 1), sym], 1.0),
            Err(GeomError::NotSkew { index: 1, .. })
        ));
    }

    #[test]
    fn permutation_oracle_and_cofactor() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for m in 1..=3 {
            let dim = 2 * m;
            let diag: Vec<f64> = (0..dim)
                .map(|i| if i == 0 { -1.5 } else { 1.0 + 0.1 * i as f64 })
                .collect();
            let fibre = FibreMetric::diagonal(&diag).unwrap();
            let ops: Vec<DMatrix<f64>> = (0..m).map(|_| random_skew(&mut rng, &fibre)).collect();
            let st = SkewTuple::new(fibre.clone(), ops, 1.0).unwrap();
            let zs = st.two_forms();
            // (1/2^m) Σ_σ sgn σ Π ζ_j(e_σ(2j−1), e_σ(2j))
            let mut brute = 0.0;
            for (p, sign) in signed_permutations(dim) {
                brute += sign
                    * (0..m)
                        .map(|j| zs[j][(p[2 * j], p[2 * j + 1])])
                        .product::<f64>();
            }
            brute /= 2f64.powi(m as i32);
            let theta = fibre.volume_coefficient();
            assert!((pfaffian(&st) - brute / theta).abs() < 1e-12);
            // m copies of one operator
            let s = random_skew(&mut rng, &fibre);
            let same = SkewTuple::new(fibre.clone(), vec![s.clone(); m], 1.0).unwrap();
            let factorial: f64 = (1..=m).map(|k| k as f64).product();
            let want = factorial * classical_pfaffian(&(s.transpose() * fibre.matrix())) / theta;
            assert!((pfaffian(&same) - want).abs() < 1e-12 * want.abs().max(1.0));
        }
    }

    #[test]
    fn common_kernel_gives_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let fibre = FibreMetric::diagonal(&[-1.0, 1.0, 1.0, 1.0, 1.0, 1.0]).unwrap();
        for _ in 0..20 {
            // skew operators killing e_0: K with zero first row and column
            let ops: Vec<DMatrix<f64>> = (0..3)
                .map(|_| {
                    let mut k = DMatrix::from_fn(6, 6, |_, _| rng.gen_range(-1.0..1.0));
                    k = &k - k.transpose();
                    for i in 0..6 {
                        k[(0, i)] = 0.0;
                        k[(i, 0)] = 0.0;
                    }
                    fibre.inverse() * k
                })
                .collect();
            let st = SkewTuple::new(fibre.clone(), ops, 1.0).unwrap();
            assert!(pfaffian(&st).abs() < 1e-10);
        }
    }

    fn basis(n: usize) -> Vec<DVector<f64>> {
        (0..n)
            .map(|i| DVector::from_fn(n, |r, _| if r == i { 1.0 } else { 0.0 }))
            .collect()
    }

    #[test]
    fn flat_forms_vanish() {
        let flat = FlatMetric::euclidean(4).unwrap();
        let pack = CurvaturePack::at(&flat, &ChartPoint::new(vec![0.0; 4]), 2).unwrap();
        assert_eq!(euler_form_at(&pack, &basis(4)).unwrap(), 0.0);
        assert_eq!(generating_form_at(&pack, 1, &basis(4)).unwrap(), 0.0);
        let op = curvature_operator(&pack, &basis(4)[0], &basis(4)[1]).unwrap();
        assert_eq!(op.amax(), 0.0);
    }

    #[test]
    fn sphere_euler_is_nonzero_and_alternating() {
        let sphere = ConstantCurvature::new(1.0, 4).unwrap();
        let pack =
            CurvaturePack::at(&sphere, &ChartPoint::new(vec![0.1, 0.2, -0.1, 0.3]), 2).unwrap();
        let mut vs = basis(4);
        let e = euler_form_at(&pack, &vs).unwrap();
        assert!(e.abs() > 1e-6);
        vs.swap(0, 2);
        let swapped = euler_form_at(&pack, &vs).unwrap();
        assert!((e + swapped).abs() < 1e-12 * e.abs());
        vs[1] = vs[0].clone();
        assert!(matches!(
            euler_form_at(&pack, &vs),
            Err(GeomError::DependentVectors(_))
        ));
    }

    #[test]
    fn roter_forms_vanish() {
        let spec = RoterSpec::new(
            4,
            FibreMetric::euclidean(2).unwrap(),
            DMatrix::from_diagonal(&DVector::from_column_slice(&[1.0, -1.0])),
            ScalarProfile::sin(),
        )
        .unwrap();
        let pack =
            CurvaturePack::at(&spec, &ChartPoint::new(vec![0.5, 0.1, 0.7, -0.4]), 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let vs: Vec<DVector<f64>> = (0..4)
            .map(|_| DVector::from_fn(4, |_, _| rng.gen_range(-1.0..1.0)))
            .collect();
        assert!(euler_form_at(&pack, &vs).unwrap().abs() < 1e-8);
        assert!(generating_form_at(&pack, 1, &vs).unwrap().abs() < 1e-8);
        assert!(matches!(
            generating_form_at(&pack, 2, &vs),
            Err(GeomError::InvalidArgument(_))
        ));
        // R(u,v) = 0 for u, v in D-perp = span(∂_s, ∂_v)
        let op = curvature_operator(&pack, &basis(4)[1], &basis(4)[3]).unwrap();
        assert!(op.amax() < 1e-12);
        let _ = spec.dim();
    }

    #[test]
    fn odd_dimension_euler_rejected() {
        let flat = FlatMetric::euclidean(5).unwrap();
        let pack = CurvaturePack::at(&flat, &ChartPoint::new(vec![0.0; 5]), 2).unwrap();
        assert!(matches!(
            euler_form_at(&pack, &basis(5)),
            Err(GeomError::OddDimension(5))
        ));
    }
}
