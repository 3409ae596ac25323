//! The Olszak distribution `D` of a Weyl tensor, its structure checks, and
//! the bilinear form `Φ` on `D^⊥/D` from which the operator `A` is recovered.

use nalgebra::{DMatrix, DVector};

use crate::curvature::CurvaturePack;
use crate::error::{GeomError, Result};
use crate::linalg::{canonical_direction, column_space, columns, inclusion_residual, null_space};
use crate::metric::{MetricProvider, RoterSpec};
use crate::report::CheckRecord;
use crate::tensor::{ChartPoint, Tensor};

/// Relative singular-value threshold for kernels.
pub const KERNEL_TOLERANCE: f64 = 1e-9;
/// `‖W‖` below this marks the point as degenerate.
pub const DEGENERATE_WEYL: f64 = 1e-12;

/// `D` and `D^⊥` at a point, as unit coordinate vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct DistributionBasis {
    pub point: ChartPoint,
    pub dim_d: usize,
    pub basis_d: Vec<DVector<f64>>,
    pub basis_dperp: Vec<DVector<f64>>,
    /// `W = 0` at the point; the defining condition is then vacuous and both
    /// bases are left empty.
    pub degenerate: bool,
}

impl DistributionBasis {
    pub fn d_matrix(&self) -> DMatrix<f64> {
        columns(self.point.dim(), &self.basis_d)
    }

    pub fn dperp_matrix(&self) -> DMatrix<f64> {
        columns(self.point.dim(), &self.basis_dperp)
    }
}

/// The bilinear form `Φ(λ⊗λ)` on `D^⊥/D` in the coset basis of the
/// `v`-coordinate directions, and `|Φ|^{−1/2}`.
#[derive(Clone, Debug, PartialEq)]
pub struct PhiValue {
    pub point: ChartPoint,
    pub matrix: DMatrix<f64>,
    pub norm_factor: f64,
}

fn check_weyl(w: &Tensor, g: &Tensor) -> Result<usize> {
    let n = g.dim();
    if w.dim() != n || w.rank() != 4 || !w.is_covariant() || g.rank() != 2 || !g.is_covariant() {
        return Err(GeomError::Variance(
            "expected a (0,4) tensor and a (0,2) metric of equal dimension".into(),
        ));
    }
    Ok(n)
}

/// The nonzero 2-forms `W(e_a, e_b, ·, ·)`, `a < b`.
pub fn weyl_image_2forms(w: &Tensor) -> Vec<Tensor> {
    let n = w.dim();
    let threshold = DEGENERATE_WEYL * w.max_abs().max(1.0);
    let mut out = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            let omega = Tensor::covariant_from_fn(n, 2, |x| w.get(&[a, b, x[0], x[1]]))
                .expect("dimension of w");
            if omega.max_abs() > threshold {
                out.push(omega);
            }
        }
    }
    out
}

/// Dimension of the span of a list of 2-forms.
pub fn span_dimension(forms: &[Tensor]) -> usize {
    if forms.is_empty() {
        return 0;
    }
    let len = forms[0].components().len();
    let m = DMatrix::from_fn(forms.len(), len, |r, c| forms[r].components()[c]);
    crate::linalg::rank(&m, KERNEL_TOLERANCE, 0.0)
}

/// Coefficient matrix of `u ↦ g(u,·)∧Ω` over all `Ω` and index triples.
fn wedge_condition_matrix(forms: &[Tensor], g: &Tensor) -> DMatrix<f64> {
    let n = g.dim();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for omega in forms {
        for i in 0..n {
            for j in i + 1..n {
                for k in j + 1..n {
                    let row = (0..n)
                        .map(|m| {
                            g.get(&[i, m]) * omega.get(&[j, k])
                                - g.get(&[j, m]) * omega.get(&[i, k])
                                + g.get(&[k, m]) * omega.get(&[i, j])
                        })
                        .collect();
                    rows.push(row);
                }
            }
        }
    }
    DMatrix::from_fn(rows.len(), n, |r, c| rows[r][c])
}

fn g_orthogonal_complement(basis: &[DVector<f64>], g: &Tensor) -> Vec<DVector<f64>> {
    let n = g.dim();
    let gm = g.to_matrix().expect("rank 2");
    let constraint = DMatrix::from_fn(basis.len(), n, |r, c| (basis[r].transpose() * &gm)[(0, c)]);
    let ker = null_space(&constraint, KERNEL_TOLERANCE, 0.0);
    ker.column_iter()
        .map(|c| canonical_direction(&c.into_owned()))
        .collect()
}

/// `D` as the kernel of `u ↦ (g(u,·)∧Ω)_Ω` and `D^⊥` as its g-orthogonal
/// complement.
pub fn olszak_distribution(w: &Tensor, g: &Tensor, p: &ChartPoint) -> Result<DistributionBasis> {
    let n = check_weyl(w, g)?;
    p.check_dim(n)?;
    if w.max_abs() < DEGENERATE_WEYL {
        return Ok(DistributionBasis {
            point: p.clone(),
            dim_d: 0,
            basis_d: Vec::new(),
            basis_dperp: Vec::new(),
            degenerate: true,
        });
    }
    let forms = weyl_image_2forms(w);
    let m = wedge_condition_matrix(&forms, g);
    let ker = null_space(&m, KERNEL_TOLERANCE, 0.0);
    let basis_d: Vec<DVector<f64>> = if ker.ncols() == 1 {
        vec![canonical_direction(&ker.column(0).into_owned())]
    } else {
        ker.column_iter().map(|c| c.into_owned()).collect()
    };
    let basis_dperp = g_orthogonal_complement(&basis_d, g);
    Ok(DistributionBasis {
        point: p.clone(),
        dim_d: basis_d.len(),
        basis_d,
        basis_dperp,
        degenerate: false,
    })
}

fn bilinear(g: &DMatrix<f64>, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a.transpose() * g * b)[(0, 0)]
}

/// `W(x, y, z, w)` on coordinate vectors.
pub fn eval4(
    t: &Tensor,
    x: &DVector<f64>,
    y: &DVector<f64>,
    z: &DVector<f64>,
    w: &DVector<f64>,
) -> f64 {
    let n = t.dim();
    let mut acc = 0.0;
    for i in 0..n {
        if x[i] == 0.0 {
            continue;
        }
        for j in 0..n {
            if y[j] == 0.0 {
                continue;
            }
            for k in 0..n {
                if z[k] == 0.0 {
                    continue;
                }
                for l in 0..n {
                    acc += t.get(&[i, j, k, l]) * x[i] * y[j] * z[k] * w[l];
                }
            }
        }
    }
    acc
}

/// `Φ_ab = W(x_a, ũ, ũ, x_b)` for the spanning vector `d` of a
/// one-dimensional `D`, with `λ(d) = 1`, `ũ` a vector with `g(ũ, d) = 1`, and
/// `x_a` the projections of `reps` into `D^⊥` along `ũ`.
///
/// Rescaling `d` by `c` rescales the result by `c⁻²`.
pub fn phi_form(
    pack: &CurvaturePack,
    d: &DVector<f64>,
    reps: &[DVector<f64>],
) -> Result<DMatrix<f64>> {
    let n = pack.dim();
    let g = pack.metric_matrix();
    let gd = &g * d;
    let (k, gk) = gd
        .iter()
        .enumerate()
        .fold((0, 0.0f64), |(bk, bv), (i, &x)| {
            if x.abs() > bv.abs() {
                (i, x)
            } else {
                (bk, bv)
            }
        });
    if gk == 0.0 {
        return Err(GeomError::InvalidArgument("spanning vector is zero".into()));
    }
    let mut u_tilde = DVector::zeros(n);
    u_tilde[k] = 1.0 / gk;
    let xs: Vec<DVector<f64>> = reps
        .iter()
        .map(|x| x - &u_tilde * bilinear(&g, x, d))
        .collect();
    Ok(DMatrix::from_fn(xs.len(), xs.len(), |a, b| {
        eval4(&pack.weyl, &xs[a], &u_tilde, &u_tilde, &xs[b])
    }))
}

/// Builds `Φ(λ⊗λ)` with `D` spanned by `∇t` and returns it together with
/// the recovered operator `γ⁻¹Φ` on the `v`-directions.
pub fn phi_and_recover_a(
    pack: &CurvaturePack,
    db: &DistributionBasis,
    spec: &RoterSpec,
) -> Result<(PhiValue, DMatrix<f64>)> {
    let n = pack.dim();
    if spec.n() != n || db.point.dim() != n {
        return Err(GeomError::DimensionMismatch {
            expected: spec.n(),
            found: n,
        });
    }
    if db.degenerate || db.dim_d != 1 {
        return Err(GeomError::DistributionDimension(db.dim_d));
    }
    let g = pack.metric_matrix();
    let raw = &db.basis_d[0];
    // λ(u) = 1 with u = ∇t, i.e. g(u, ∂_t) = 1
    let scale = (&g * raw)[0];
    if scale.abs() < 1e-12 {
        return Err(GeomError::FailedInvariant(
            "D is g-orthogonal to the t-direction".into(),
        ));
    }
    let u = raw / scale;
    let reps: Vec<DVector<f64>> = (2..n)
        .map(|a| {
            let mut e = DVector::zeros(n);
            e[a] = 1.0;
            e
        })
        .collect();
    let phi = phi_form(pack, &u, &reps)?;
    let gamma = DMatrix::from_fn(n - 2, n - 2, |a, b| g[(a + 2, b + 2)]);
    let gamma_inv = gamma
        .clone()
        .try_inverse()
        .ok_or_else(|| GeomError::SingularMetric(gamma.determinant()))?;
    let recovered = &gamma_inv * &phi;
    let norm_sq = (&recovered * &recovered).trace().abs();
    if !(norm_sq > 1e-24) {
        return Err(GeomError::FailedInvariant(format!(
            "Φ(λ⊗λ) vanishes (|Φ|² = {norm_sq:e})"
        )));
    }
    Ok((
        PhiValue {
            point: pack.point.clone(),
            matrix: phi,
            norm_factor: norm_sq.powf(-0.25),
        },
        recovered,
    ))
}

/// Default tolerances for [`check_structure`].
pub mod tolerances {
    pub const NULL: f64 = 1e-10;
    pub const PARALLEL: f64 = 1e-8;
    pub const INCLUSION: f64 = 1e-9;
    pub const DPERP_CURVATURE: f64 = 1e-9;
}

const FD_STEP: f64 = 1e-3;

/// Largest `D`-transverse component of `∇_i d_a`, with `∂_i d_a` taken by
/// finite differences of `D` at shifted points.
fn parallel_residual(
    db: &DistributionBasis,
    pack: &CurvaturePack,
    provider: &dyn MetricProvider,
) -> Result<f64> {
    let n = pack.dim();
    let d = db.d_matrix();
    let dorth = column_space(&d, 1e-12, 0.0);
    let transverse = DMatrix::identity(n, n) - &dorth * dorth.transpose();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        // shifted bases, aligned by projecting the base vectors onto D there
        let mut derivs = vec![DVector::zeros(n); db.dim_d];
        for (offset, weight) in [
            (-2.0, 1.0 / 12.0),
            (-1.0, -8.0 / 12.0),
            (1.0, 8.0 / 12.0),
            (2.0, -1.0 / 12.0),
        ] {
            let q = db.point.shifted(i, offset * FD_STEP);
            let shifted_pack = CurvaturePack::at(provider, &q, 2)?;
            let shifted = olszak_distribution(&shifted_pack.weyl, &shifted_pack.metric, &q)?;
            if shifted.dim_d != db.dim_d {
                return Err(GeomError::FailedInvariant(format!(
                    "dimension of D jumps from {} to {} near the point",
                    db.dim_d, shifted.dim_d
                )));
            }
            let so = column_space(&shifted.d_matrix(), 1e-12, 0.0);
            let proj = &so * so.transpose();
            for (a, v) in db.basis_d.iter().enumerate() {
                derivs[a] += (&proj * v) * (weight / FD_STEP);
            }
        }
        for (a, v) in db.basis_d.iter().enumerate() {
            let mut cov = derivs[a].clone();
            for k in 0..n {
                for j in 0..n {
                    cov[k] += pack.christoffel.get(k, i, j) * v[j];
                }
            }
            worst = worst.max((&transverse * cov).amax());
        }
    }
    Ok(worst)
}

fn contraction_max(t: &Tensor, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
    let n = t.dim();
    let mut worst: f64 = 0.0;
    for k in 0..n {
        for l in 0..n {
            let mut acc = 0.0;
            for i in 0..n {
                for j in 0..n {
                    acc += t.get(&[i, j, k, l]) * x[i] * y[j];
                }
            }
            worst = worst.max(acc.abs());
        }
    }
    worst
}

/// Residuals of the structure statements for `D`: null, parallel, the
/// inclusion chain `(Ker ρ)^⊥ ⊂ D ⊂ D^⊥ ⊂ Ker ρ` with `D ⊂ Ker W`, and the
/// vanishing of `W` and `R` on pairs from `D^⊥`.
///
/// Never fails; problems surface as failing records. A degenerate basis
/// yields no records.
pub fn check_structure(
    db: &DistributionBasis,
    pack: &CurvaturePack,
    provider: &dyn MetricProvider,
) -> Vec<CheckRecord> {
    use tolerances::*;
    if db.degenerate {
        return Vec::new();
    }
    let n = pack.dim();
    let g = pack.metric_matrix();
    let mut out = Vec::new();

    let dim_ok = if (1..=2).contains(&db.dim_d) {
        0.0
    } else {
        1.0
    };
    out.push(
        CheckRecord::at_most(
            "lemma_2_2_i_dimension",
            "Olszak distribution has dimension 1 or 2",
            dim_ok,
            0.0,
        )
        .with_note(format!("dim D = {}", db.dim_d)),
    );

    let mut null = 0.0f64;
    for a in &db.basis_d {
        for b in &db.basis_d {
            null = null.max(bilinear(&g, a, b).abs());
        }
    }
    out.push(CheckRecord::below(
        "lemma_2_2_i_null",
        "Olszak distribution is null",
        null,
        NULL,
    ));

    out.push(match parallel_residual(db, pack, provider) {
        Ok(r) => CheckRecord::below(
            "lemma_2_2_i_parallel",
            "Olszak distribution is parallel",
            r,
            PARALLEL,
        ),
        Err(e) => CheckRecord::failed(
            "lemma_2_2_i_parallel",
            "Olszak distribution is parallel",
            PARALLEL,
            crate::report::Comparison::Below,
            e.to_string(),
        ),
    });

    // inclusion chain
    let ricci = pack.ricci.to_matrix().expect("rank 2");
    let ricci_scale = ricci.amax().max(1.0);
    let ricci_image = column_space(&(pack.inverse_matrix() * &ricci), KERNEL_TOLERANCE, 1.0);
    let d = db.d_matrix();
    let dperp = db.dperp_matrix();
    let image_in_d = inclusion_residual(&ricci_image, &d);
    let d_in_dperp = inclusion_residual(&d, &dperp);
    let dperp_in_ker_ricci = (ricci.transpose() * &dperp).amax() / ricci_scale;
    let w_scale = pack.weyl.max_abs().max(1.0);
    let mut d_in_ker_w = 0.0f64;
    for v in &db.basis_d {
        for e in 0..n {
            let mut x = DVector::zeros(n);
            x[e] = 1.0;
            d_in_ker_w = d_in_ker_w.max(contraction_max(&pack.weyl, v, &x));
        }
    }
    d_in_ker_w /= w_scale;
    let chain = image_in_d
        .max(d_in_dperp)
        .max(dperp_in_ker_ricci)
        .max(d_in_ker_w);
    out.push(
        CheckRecord::below("lemma_2_2_ii_inclusion_chain", "image of Ricci lies in D, and D is inside D-perp, Ker Ricci and Ker W", chain, INCLUSION)
            .with_note(format!(
                "image(rho) in D {image_in_d:.3e}; D in D^perp {d_in_dperp:.3e}; D^perp in Ker rho {dperp_in_ker_ricci:.3e}; D in Ker W {d_in_ker_w:.3e}"
            )),
    );

    let r_scale = pack.riemann04.max_abs().max(1.0);
    let mut dperp_curv = 0.0f64;
    for x in &db.basis_dperp {
        for y in &db.basis_dperp {
            dperp_curv = dperp_curv
                .max(contraction_max(&pack.weyl, x, y) / w_scale)
                .max(contraction_max(&pack.riemann04, x, y) / r_scale);
        }
    }
    out.push(CheckRecord::below(
        "lemma_2_2_iii",
        "W and R vanish on pairs of vectors from D-perp",
        dperp_curv,
        DPERP_CURVATURE,
    ));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curvature::kulkarni_nomizu;
    use crate::metric::FlatMetric;
    use crate::profile::ScalarProfile;
    use crate::tensor::{FibreMetric, Variance};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn lorentz4() -> RoterSpec {
        RoterSpec::new(
            4,
            FibreMetric::euclidean(2).unwrap(),
            DMatrix::from_diagonal(&DVector::from_column_slice(&[1.0, -1.0])),
            ScalarProfile::sin(),
        )
        .unwrap()
    }

    fn roter_setup(p: &[f64]) -> (RoterSpec, CurvaturePack, DistributionBasis) {
        let spec = lorentz4();
        let p = ChartPoint::new(p.to_vec());
        let pack = CurvaturePack::at(&spec, &p, 2).unwrap();
        let db = olszak_distribution(&pack.weyl, &pack.metric, &p).unwrap();
        (spec, pack, db)
    }

    #[test]
    fn roter_distribution_is_ds() {
        let (_, _, db) = roter_setup(&[0.7, 0.2, -0.5, 0.3]);
        assert!(!db.degenerate);
        assert_eq!(db.dim_d, 1);
        let d = &db.basis_d[0];
        let off_axis = (0..4)
            .filter(|&i| i != 1)
            .fold(0.0f64, |m, i| m.max(d[i].abs()));
        assert!(off_axis < 1e-12, "{d}");
        assert_eq!(db.basis_dperp.len(), 3);
    }

    #[test]
    fn flat_is_degenerate() {
        let flat = FlatMetric::new(&[-1.0, 1.0, 1.0, 1.0]).unwrap();
        let p = ChartPoint::new(vec![0.0; 4]);
        let pack = CurvaturePack::at(&flat, &p, 2).unwrap();
        let db = olszak_distribution(&pack.weyl, &pack.metric, &p).unwrap();
        assert!(db.degenerate);
        assert!(weyl_image_2forms(&pack.weyl).is_empty());
        assert!(check_structure(&db, &pack, &flat).is_empty());
    }

    #[test]
    fn roter_forms_have_dt_factor() {
        // span dimension equals rank A; nilpotent A of rank one needs an
        // indefinite inner product on V
        let nilpotent = RoterSpec::new(
            4,
            FibreMetric::new(DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])).unwrap(),
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]),
            ScalarProfile::sin(),
        )
        .unwrap();
        let p = ChartPoint::new(vec![0.4, 0.0, 0.5, -0.2]);
        let pack1 = CurvaturePack::at(&nilpotent, &p, 2).unwrap();
        assert_eq!(span_dimension(&weyl_image_2forms(&pack1.weyl)), 1);
        let (_, pack, _) = roter_setup(&[0.4, 0.0, 0.5, -0.2]);
        let forms = weyl_image_2forms(&pack.weyl);
        assert_eq!(span_dimension(&forms), 2);
        for omega in forms.iter().chain(&weyl_image_2forms(&pack1.weyl)) {
            // Ω∧dt = 0: every component Ω_jk with j,k ≠ t vanishes
            for j in 1..4 {
                for k in 1..4 {
                    assert!(omega.get(&[j, k]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn roter_structure_passes() {
        let spec = lorentz4();
        let (_, pack, db) = roter_setup(&[1.1, -0.3, 0.4, 0.9]);
        let recs = check_structure(&db, &pack, &spec);
        assert_eq!(recs.len(), 5);
        for r in &recs {
            assert!(r.passed, "{r:?}");
        }
    }

    #[test]
    fn corrupted_weyl_fails_dperp_check() {
        let spec = lorentz4();
        let (_, mut pack, db) = roter_setup(&[1.1, -0.3, 0.4, 0.9]);
        let v = pack.weyl.get(&[2, 3, 2, 3]);
        pack.weyl.set(&[2, 3, 2, 3], v + 0.1);
        let recs = check_structure(&db, &pack, &spec);
        let iii = recs.iter().find(|r| r.name == "lemma_2_2_iii").unwrap();
        assert!(!iii.passed);
    }

    #[test]
    fn recovers_a() {
        let (spec, pack, db) = roter_setup(&[0.3, 1.0, 0.6, -0.8]);
        let (phi, a) = phi_and_recover_a(&pack, &db, &spec).unwrap();
        assert!((&a - spec.a()).amax() < 1e-10, "{a}");
        assert!((phi.norm_factor - 2f64.powf(-0.25)).abs() < 1e-12);
        assert!((&phi.matrix - phi.matrix.transpose()).amax() < 1e-12);
    }

    #[test]
    fn rescaled_spanning_vector() {
        let (spec, pack, mut db) = roter_setup(&[0.3, 1.0, 0.6, -0.8]);
        let reps: Vec<DVector<f64>> = (2..4)
            .map(|a| DVector::from_fn(4, |i, _| if i == a { 1.0 } else { 0.0 }))
            .collect();
        let u = DVector::from_column_slice(&[0.0, 2.0, 0.0, 0.0]);
        let phi1 = phi_form(&pack, &u, &reps).unwrap();
        let phi2 = phi_form(&pack, &(&u * 2.0), &reps).unwrap();
        assert!((&phi1 * 0.25 - &phi2).amax() < 1e-14);
        let (_, a1) = phi_and_recover_a(&pack, &db, &spec).unwrap();
        db.basis_d[0] *= -2.0;
        let (_, a2) = phi_and_recover_a(&pack, &db, &spec).unwrap();
        assert!((a1 - a2).amax() < 1e-14);
    }

    #[test]
    fn dimension_two_synthetic() {
        // W = ε ω⊗ω with ω = α∧β of rank 2 on a flat background: D = (Ker ω)^⊥
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let n = 5;
        let alpha: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let beta: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let omega = Tensor::covariant_from_fn(n, 2, |x| {
            alpha[x[0]] * beta[x[1]] - alpha[x[1]] * beta[x[0]]
        })
        .unwrap();
        let eps = -1.0;
        let w = omega.outer(&omega).unwrap().scale(eps);
        let diag = [-1.0, 1.0, 1.0, 2.0, 1.0];
        let g = Tensor::from_matrix(
            &DMatrix::from_diagonal(&DVector::from_column_slice(&diag)),
            [Variance::Covariant; 2],
        )
        .unwrap();
        let db = olszak_distribution(&w, &g, &ChartPoint::new(vec![0.0; n])).unwrap();
        assert_eq!(db.dim_d, 2);
        // (Ker ω)^⊥ = span(g⁻¹α, g⁻¹β)
        let want = columns(
            n,
            &[
                DVector::from_fn(n, |i, _| alpha[i] / diag[i]),
                DVector::from_fn(n, |i, _| beta[i] / diag[i]),
            ],
        );
        let d = db.d_matrix();
        assert!(inclusion_residual(&d, &want) < 1e-10);
        assert!(inclusion_residual(&want, &d) < 1e-10);
    }

    #[test]
    fn random_curvature_span_matches_operator_rank() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 5;
        for terms in 1..=3 {
            let mut w = Tensor::covariant_from_fn(n, 4, |_| 0.0).unwrap();
            for _ in 0..terms {
                let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
                let a =
                    Tensor::from_matrix(&(&a + a.transpose()), [Variance::Covariant; 2]).unwrap();
                let b = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
                let b =
                    Tensor::from_matrix(&(&b + b.transpose()), [Variance::Covariant; 2]).unwrap();
                w = w.add(&kulkarni_nomizu(&a, &b).unwrap()).unwrap();
            }
            let forms = weyl_image_2forms(&w);
            // operator on 2-forms: rows (a<b), columns (c<d); rank by
            // Gaussian elimination with full pivoting
            let pairs: Vec<(usize, usize)> = (0..n)
                .flat_map(|a| (a + 1..n).map(move |b| (a, b)))
                .collect();
            let mut m: Vec<Vec<f64>> = pairs
                .iter()
                .map(|&(a, b)| pairs.iter().map(|&(c, d)| w.get(&[a, b, c, d])).collect())
                .collect();
            let mut rank = 0;
            let size = pairs.len();
            for _ in 0..size {
                let mut best = (0.0f64, 0, 0);
                for (r, row) in m.iter().enumerate().skip(rank) {
                    for (c, &x) in row.iter().enumerate() {
                        if x.abs() > best.0 {
                            best = (x.abs(), r, c);
                        }
                    }
                }
                if best.0 < 1e-9 {
                    break;
                }
                m.swap(rank, best.1);
                for row in m.iter_mut() {
                    row.swap(rank, best.2);
                }
                let pivot = m[rank].clone();
                for row in m.iter_mut().skip(rank + 1) {
                    let f = row[rank] / pivot[rank];
                    for (x, p) in row.iter_mut().zip(&pivot) {
                        *x -= f * p;
                    }
                }
                rank += 1;
            }
            assert_eq!(span_dimension(&forms), rank);
        }
    }

    #[test]
    fn phi_needs_one_dimensional_d() {
        let (spec, pack, mut db) = roter_setup(&[0.3, 1.0, 0.6, -0.8]);
        db.dim_d = 2;
        db.basis_d.push(db.basis_dperp[0].clone());
        assert!(matches!(
            phi_and_recover_a(&pack, &db, &spec),
            Err(GeomError::DistributionDimension(2))
        ));
    }
}
