//! Levi-Civita connection and curvature from a metric jet.
//!
//! Sign convention: `R(∂i,∂j)∂k = (∂_j Γ^l_ik − ∂_i Γ^l_jk + Γ^m_ik Γ^l_jm −
//! Γ^m_jk Γ^l_im) ∂_l`, stored as `riemann13[i][j][k][l]`. The (0,4) form
//! lowers the last slot. Ricci is `ρ_jk = R_{jik}^i`, which gives the
//! Roter family `ρ = (2−n) f dt⊗dt` and positive Ricci on round spheres.
//!
//! Jets of order three also yield coordinate derivatives of every tensor in
//! closed form, and from them `∇R`, `∇ρ` and `∇W`.

use nalgebra::DMatrix;

use crate::error::{GeomError, Result};
use crate::metric::{MetricJet, MetricProvider};
use crate::tensor::{ChartPoint, Tensor, Variance};

use Variance::{Contravariant as Up, Covariant as Dn};

/// Christoffel symbols `Γ^k_ij`, stored `[k][i][j]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Christoffel {
    dim: usize,
    data: Vec<f64>,
}

impl Christoffel {
    /// Wraps components laid out as `data[(k n + i) n + j] = Γ^k_ij`.
    pub fn from_components(dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != dim * dim * dim {
            return Err(GeomError::DimensionMismatch {
                expected: dim * dim * dim,
                found: data.len(),
            });
        }
        Ok(Self { dim, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, k: usize, i: usize, j: usize) -> f64 {
        self.data[(k * self.dim + i) * self.dim + j]
    }

    pub fn components(&self) -> &[f64] {
        &self.data
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// Largest `|Γ^k_ij − Γ^k_ji|`.
    pub fn symmetry_defect(&self) -> f64 {
        let n = self.dim;
        let mut worst: f64 = 0.0;
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    worst = worst.max((self.get(k, i, j) - self.get(k, j, i)).abs());
                }
            }
        }
        worst
    }

    /// `Γ^k_ij a^i b^j` for each `k`.
    pub fn contract(&self, a: &[f64], b: &[f64]) -> Vec<f64> {
        let n = self.dim;
        (0..n)
            .map(|k| {
                let mut acc = 0.0;
                for i in 0..n {
                    if a[i] == 0.0 {
                        continue;
                    }
                    for j in 0..n {
                        acc += self.get(k, i, j) * a[i] * b[j];
                    }
                }
                acc
            })
            .collect()
    }
}

/// Inverse metric and its first two coordinate derivatives.
struct InverseJet {
    gi: Vec<f64>,
    dgi: Vec<f64>,
    d2gi: Vec<f64>,
}

fn inverse_jet(jet: &MetricJet) -> Result<InverseJet> {
    let n = jet.dim();
    let inv = jet.inverse_metric()?;
    let gi: Vec<f64> = (0..n * n).map(|o| inv[(o / n, o % n)]).collect();
    let mut dgi = vec![0.0; if jet.order() >= 1 { n.pow(3) } else { 0 }];
    if jet.order() >= 1 {
        // ∂_m g^ab = −g^ac ∂_m g_cd g^db
        for m in 0..n {
            let dg = DMatrix::from_fn(n, n, |c, d| jet.dg(c, d, m));
            let prod = -(&inv * dg * &inv);
            for a in 0..n {
                for b in 0..n {
                    dgi[(a * n + b) * n + m] = prod[(a, b)];
                }
            }
        }
    }
    let mut d2gi = vec![0.0; if jet.order() >= 2 { n.pow(4) } else { 0 }];
    if jet.order() >= 2 {
        let dgi_m = |m: usize| DMatrix::from_fn(n, n, |a, b| dgi[(a * n + b) * n + m]);
        for m in 0..n {
            let dg_m = DMatrix::from_fn(n, n, |c, d| jet.dg(c, d, m));
            for p in 0..n {
                let d2g = DMatrix::from_fn(n, n, |c, d| jet.d2g(c, d, m, p));
                let prod = -(dgi_m(p) * &dg_m * &inv + &inv * d2g * &inv + &inv * &dg_m * dgi_m(p));
                for a in 0..n {
                    for b in 0..n {
                        d2gi[((a * n + b) * n + m) * n + p] = prod[(a, b)];
                    }
                }
            }
        }
    }
    Ok(InverseJet { gi, dgi, d2gi })
}

/// Christoffel symbols and their first and second coordinate derivatives,
/// as far as the jet order allows.
struct ConnectionJet {
    gamma: Vec<f64>,
    /// `[k][i][j][m] = ∂_m Γ^k_ij`
    dgamma: Vec<f64>,
    /// `[k][i][j][m][p] = ∂_p ∂_m Γ^k_ij`
    d2gamma: Vec<f64>,
}

fn connection_jet(jet: &MetricJet, inv: &InverseJet) -> Result<ConnectionJet> {
    jet.require_order(1)?;
    let n = jet.dim();
    let order = jet.order();
    // first-kind symbols Γ_lij and derivatives
    let first =
        |l: usize, i: usize, j: usize| 0.5 * (jet.dg(j, l, i) + jet.dg(i, l, j) - jet.dg(i, j, l));
    let dfirst = |l: usize, i: usize, j: usize, m: usize| {
        0.5 * (jet.d2g(j, l, i, m) + jet.d2g(i, l, j, m) - jet.d2g(i, j, l, m))
    };
    let d2first = |l: usize, i: usize, j: usize, m: usize, p: usize| {
        0.5 * (jet.d3g(j, l, i, m, p) + jet.d3g(i, l, j, m, p) - jet.d3g(i, j, l, m, p))
    };
    let gl: Vec<f64> = (0..n.pow(3))
        .map(|o| first(o / (n * n), (o / n) % n, o % n))
        .collect();
    let mut gamma = vec![0.0; n.pow(3)];
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                gamma[(k * n + i) * n + j] = (0..n)
                    .map(|l| inv.gi[k * n + l] * gl[(l * n + i) * n + j])
                    .sum();
            }
        }
    }
    let mut dgamma = Vec::new();
    let mut dgl = Vec::new();
    if order >= 2 {
        dgl = (0..n.pow(4))
            .map(|o| dfirst(o / n.pow(3), (o / (n * n)) % n, (o / n) % n, o % n))
            .collect();
        dgamma = vec![0.0; n.pow(4)];
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    for m in 0..n {
                        let mut acc = 0.0;
                        for l in 0..n {
                            acc += inv.dgi[(k * n + l) * n + m] * gl[(l * n + i) * n + j]
                                + inv.gi[k * n + l] * dgl[((l * n + i) * n + j) * n + m];
                        }
                        dgamma[((k * n + i) * n + j) * n + m] = acc;
                    }
                }
            }
        }
    }
    let mut d2gamma = Vec::new();
    if order >= 3 {
        d2gamma = vec![0.0; n.pow(5)];
        for k in 0..n {
            for i in 0..n {
                for j in i..n {
                    for m in 0..n {
                        for p in m..n {
                            let mut acc = 0.0;
                            for l in 0..n {
                                let kl = k * n + l;
                                let lij = (l * n + i) * n + j;
                                acc += inv.d2gi[(kl * n + m) * n + p] * gl[lij]
                                    + inv.dgi[kl * n + m] * dgl[lij * n + p]
                                    + inv.dgi[kl * n + p] * dgl[lij * n + m]
                                    + inv.gi[kl] * d2first(l, i, j, m, p);
                            }
                            for (a, b) in [(i, j), (j, i)] {
                                for (x, y) in [(m, p), (p, m)] {
                                    d2gamma[((((k * n + a) * n + b) * n + x) * n) + y] = acc;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(ConnectionJet {
        gamma,
        dgamma,
        d2gamma,
    })
}

/// Levi-Civita Christoffel symbols `Γ^k_ij = ½ g^kl (∂_i g_jl + ∂_j g_il − ∂_l g_ij)`.
pub fn christoffel(jet: &MetricJet) -> Result<Christoffel> {
    let inv = inverse_jet(jet)?;
    let conn = connection_jet(jet, &inv)?;
    Ok(Christoffel {
        dim: jet.dim(),
        data: conn.gamma,
    })
}

/// Christoffel symbols and `riemann13` together, without the rest of a pack.
pub fn christoffel_and_riemann13(jet: &MetricJet) -> Result<(Christoffel, Tensor)> {
    jet.require_order(2)?;
    let inv = inverse_jet(jet)?;
    let conn = connection_jet(jet, &inv)?;
    let r13 = riemann13_from(jet.dim(), &conn);
    Ok((
        Christoffel {
            dim: jet.dim(),
            data: conn.gamma,
        },
        r13,
    ))
}

/// `(riemann13, riemann04)` at the jet's point.
pub fn riemann(jet: &MetricJet) -> Result<(Tensor, Tensor)> {
    jet.require_order(2)?;
    let inv = inverse_jet(jet)?;
    let conn = connection_jet(jet, &inv)?;
    let r13 = riemann13_from(jet.dim(), &conn);
    let r04 = lower_last(&r13, &jet.metric())?;
    Ok((r13, r04))
}

fn riemann13_from(n: usize, c: &ConnectionJet) -> Tensor {
    let g = |k: usize, i: usize, j: usize| c.gamma[(k * n + i) * n + j];
    let dg = |k: usize, i: usize, j: usize, m: usize| c.dgamma[((k * n + i) * n + j) * n + m];
    Tensor::from_fn(n, vec![Dn, Dn, Dn, Up], |x| {
        let (i, j, k, l) = (x[0], x[1], x[2], x[3]);
        let mut acc = dg(l, i, k, j) - dg(l, j, k, i);
        for m in 0..n {
            acc += g(m, i, k) * g(l, j, m) - g(m, j, k) * g(l, i, m);
        }
        acc
    })
    .expect("dimension validated by the jet")
}

/// `∂_p R_ijk^l`, stored with the derivative slot first.
fn d_riemann13_from(n: usize, c: &ConnectionJet) -> Tensor {
    let g = |k: usize, i: usize, j: usize| c.gamma[(k * n + i) * n + j];
    let dg = |k: usize, i: usize, j: usize, m: usize| c.dgamma[((k * n + i) * n + j) * n + m];
    let d2g = |k: usize, i: usize, j: usize, m: usize, p: usize| {
        c.d2gamma[(((k * n + i) * n + j) * n + m) * n + p]
    };
    Tensor::from_fn(n, vec![Dn, Dn, Dn, Dn, Up], |x| {
        let (p, i, j, k, l) = (x[0], x[1], x[2], x[3], x[4]);
        let mut acc = d2g(l, i, k, j, p) - d2g(l, j, k, i, p);
        for m in 0..n {
            acc += dg(m, i, k, p) * g(l, j, m) + g(m, i, k) * dg(l, j, m, p)
                - dg(m, j, k, p) * g(l, i, m)
                - g(m, j, k) * dg(l, i, m, p);
        }
        acc
    })
    .expect("dimension validated by the jet")
}

fn lower_last(r13: &Tensor, g: &DMatrix<f64>) -> Result<Tensor> {
    let n = r13.dim();
    let rank = r13.rank();
    let mut variance = r13.variance().to_vec();
    variance[rank - 1] = Dn;
    let mut src = vec![0; rank];
    Tensor::from_fn(n, variance, |x| {
        src.copy_from_slice(x);
        let l = x[rank - 1];
        let mut acc = 0.0;
        for m in 0..n {
            src[rank - 1] = m;
            acc += r13.get(&src) * g[(m, l)];
        }
        acc
    })
}

/// Ricci tensor, scalar curvature and Schouten tensor.
pub fn ricci_scalar_schouten(jet: &MetricJet, riemann13: &Tensor) -> Result<(Tensor, f64, Tensor)> {
    let n = jet.dim();
    if riemann13.dim() != n || riemann13.variance() != [Dn, Dn, Dn, Up] {
        return Err(GeomError::Variance(
            "expected a (1,3) curvature tensor of matching dimension".into(),
        ));
    }
    let ginv = jet.inverse_metric()?;
    let ricci = Tensor::covariant_from_fn(n, 2, |x| {
        (0..n).map(|i| riemann13.get(&[x[0], i, x[1], i])).sum()
    })?;
    let scalar = trace_with(&ricci, &ginv);
    let g = Tensor::from_matrix(&jet.metric(), [Dn, Dn])?;
    let schouten = ricci.sub(&g.scale(scalar / (2.0 * n as f64 - 2.0)))?;
    Ok((ricci, scalar, schouten))
}

fn trace_with(b: &Tensor, ginv: &DMatrix<f64>) -> f64 {
    let n = b.dim();
    let mut acc = 0.0;
    for j in 0..n {
        for k in 0..n {
            acc += ginv[(j, k)] * b.get(&[j, k]);
        }
    }
    acc
}

/// Kulkarni–Nomizu product `(a∧b)_ijkl = a_ik b_jl + a_jl b_ik − a_il b_jk − a_jk b_il`.
pub fn kulkarni_nomizu(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    for t in [a, b] {
        if t.variance() != [Dn, Dn] {
            return Err(GeomError::Variance(
                "Kulkarni–Nomizu product takes (0,2) tensors".into(),
            ));
        }
    }
    if a.dim() != b.dim() {
        return Err(GeomError::DimensionMismatch {
            expected: a.dim(),
            found: b.dim(),
        });
    }
    let n = a.dim();
    let (a, b) = (a.components(), b.components());
    Tensor::covariant_from_fn(n, 4, |x| {
        let (i, j, k, l) = (x[0], x[1], x[2], x[3]);
        a[i * n + k] * b[j * n + l] + a[j * n + l] * b[i * n + k]
            - a[i * n + l] * b[j * n + k]
            - a[j * n + k] * b[i * n + l]
    })
}

/// `W = R − (n−2)⁻¹ g∧σ`.
pub fn weyl(metric: &Tensor, riemann04: &Tensor, schouten: &Tensor) -> Result<Tensor> {
    let n = metric.dim();
    if n < 4 {
        return Err(GeomError::DimensionTooSmall(n));
    }
    let kn = kulkarni_nomizu(metric, schouten)?;
    riemann04.sub(&kn.scale(1.0 / (n as f64 - 2.0)))
}

/// `(∇T)_{m …} = ∂_m T_… ∓ Γ` corrections, one per slot.
///
/// `dt` holds coordinate derivatives with the derivative slot first; its
/// remaining slots must match `t`.
pub fn covariant_derivative(t: &Tensor, gamma: &Christoffel, dt: &Tensor) -> Result<Tensor> {
    let n = t.dim();
    let rank = t.rank();
    if dt.dim() != n || gamma.dim() != n {
        return Err(GeomError::DimensionMismatch {
            expected: n,
            found: dt.dim(),
        });
    }
    if dt.rank() != rank + 1 || dt.variance()[0] != Dn || dt.variance()[1..] != *t.variance() {
        return Err(GeomError::Variance(
            "derivative array must carry one leading covariant slot".into(),
        ));
    }
    let variance = t.variance().to_vec();
    let mut src = vec![0; rank];
    Tensor::from_fn(n, dt.variance().to_vec(), |x| {
        let m = x[0];
        let idx = &x[1..];
        let mut acc = dt.get(x);
        for (slot, kind) in variance.iter().enumerate() {
            src.copy_from_slice(idx);
            for q in 0..n {
                src[slot] = q;
                let value = t.get(&src);
                if value == 0.0 {
                    continue;
                }
                acc += match kind {
                    Dn => -gamma.get(q, m, idx[slot]) * value,
                    Up => gamma.get(idx[slot], m, q) * value,
                };
            }
        }
        acc
    })
}

/// Coordinate derivatives and covariant derivatives of the curvature
/// tensors; present when the pack was built from a third-order jet.
#[derive(Clone, Debug, PartialEq)]
pub struct CurvatureDerivatives {
    /// `∂_p R_ijkl`, derivative slot first.
    pub d_riemann04: Tensor,
    pub d_ricci: Tensor,
    pub d_scalar: Vec<f64>,
    pub d_weyl: Tensor,
    pub nabla_riemann: Tensor,
    pub nabla_ricci: Tensor,
    pub nabla_weyl: Tensor,
}

/// Curvature data at one point.
#[derive(Clone, Debug, PartialEq)]
pub struct CurvaturePack {
    pub point: ChartPoint,
    pub metric: Tensor,
    pub inverse_metric: Tensor,
    pub christoffel: Christoffel,
    /// `∂_m Γ^k_ij` stored `[k][i][j][m]`.
    pub dchristoffel: Vec<f64>,
    pub riemann13: Tensor,
    pub riemann04: Tensor,
    pub ricci: Tensor,
    pub scalar: f64,
    pub schouten: Tensor,
    pub weyl: Tensor,
    pub derivatives: Option<CurvatureDerivatives>,
}

impl CurvaturePack {
    /// Builds the pack from a jet of order at least two; order three adds
    /// [`CurvatureDerivatives`].
    pub fn from_jet(jet: &MetricJet) -> Result<Self> {
        let n = jet.dim();
        if n < 4 {
            return Err(GeomError::DimensionTooSmall(n));
        }
        jet.require_order(2)?;
        if jet.has_non_finite() {
            return Err(GeomError::Numerical(format!(
                "non-finite metric jet at {:?}",
                jet.point().coords()
            )));
        }
        let inv = inverse_jet(jet)?;
        let conn = connection_jet(jet, &inv)?;
        let gmat = jet.metric();
        let ginv = DMatrix::from_row_slice(n, n, &inv.gi);
        let metric = Tensor::from_matrix(&gmat, [Dn, Dn])?;
        let inverse_metric = Tensor::from_matrix(&ginv, [Up, Up])?;
        let riemann13 = riemann13_from(n, &conn);
        let riemann04 = lower_last(&riemann13, &gmat)?;
        let (ricci, scalar, schouten) = ricci_scalar_schouten(jet, &riemann13)?;
        let weyl_t = weyl(&metric, &riemann04, &schouten)?;
        let christoffel = Christoffel {
            dim: n,
            data: conn.gamma.clone(),
        };

        let derivatives = if jet.order() >= 3 {
            let dr13 = d_riemann13_from(n, &conn);
            // ∂_p R_ijkl = ∂_p R_ijk^m g_ml + R_ijk^m ∂_p g_ml
            let d_riemann04 = Tensor::covariant_from_fn(n, 5, |x| {
                let (p, i, j, k, l) = (x[0], x[1], x[2], x[3], x[4]);
                (0..n)
                    .map(|m| {
                        dr13.get(&[p, i, j, k, m]) * gmat[(m, l)]
                            + riemann13.get(&[i, j, k, m]) * jet.dg(m, l, p)
                    })
                    .sum()
            })?;
            let d_ricci = Tensor::covariant_from_fn(n, 3, |x| {
                (0..n).map(|i| dr13.get(&[x[0], x[1], i, x[2], i])).sum()
            })?;
            let d_scalar: Vec<f64> = (0..n)
                .map(|p| {
                    let mut acc = 0.0;
                    for j in 0..n {
                        for k in 0..n {
                            acc += inv.dgi[(j * n + k) * n + p] * ricci.get(&[j, k])
                                + inv.gi[j * n + k] * d_ricci.get(&[p, j, k]);
                        }
                    }
                    acc
                })
                .collect();
            let c = 1.0 / (2.0 * n as f64 - 2.0);
            let d_schouten = Tensor::covariant_from_fn(n, 3, |x| {
                let (p, j, k) = (x[0], x[1], x[2]);
                d_ricci.get(x) - c * (d_scalar[p] * gmat[(j, k)] + scalar * jet.dg(j, k, p))
            })?;
            let mut d_weyl = d_riemann04.clone();
            let w = 1.0 / (n as f64 - 2.0);
            for p in 0..n {
                let dg_p = Tensor::covariant_from_fn(n, 2, |x| jet.dg(x[0], x[1], p))?;
                let ds_p = Tensor::covariant_from_fn(n, 2, |x| d_schouten.get(&[p, x[0], x[1]]))?;
                let kn =
                    kulkarni_nomizu(&dg_p, &schouten)?.add(&kulkarni_nomizu(&metric, &ds_p)?)?;
                let stride = n.pow(4);
                for (dst, v) in d_weyl.components_mut()[p * stride..(p + 1) * stride]
                    .iter_mut()
                    .zip(kn.components())
                {
                    *dst -= w * v;
                }
            }
            let nabla_riemann = covariant_derivative(&riemann04, &christoffel, &d_riemann04)?;
            let nabla_ricci = covariant_derivative(&ricci, &christoffel, &d_ricci)?;
            let nabla_weyl = covariant_derivative(&weyl_t, &christoffel, &d_weyl)?;
            Some(CurvatureDerivatives {
                d_riemann04,
                d_ricci,
                d_scalar,
                d_weyl,
                nabla_riemann,
                nabla_ricci,
                nabla_weyl,
            })
        } else {
            None
        };

        let pack = Self {
            point: jet.point().clone(),
            metric,
            inverse_metric,
            christoffel,
            dchristoffel: conn.dgamma,
            riemann13,
            riemann04,
            ricci,
            scalar,
            schouten,
            weyl: weyl_t,
            derivatives,
        };
        if pack.has_non_finite() {
            return Err(GeomError::Numerical(format!(
                "non-finite curvature at {:?}",
                pack.point.coords()
            )));
        }
        Ok(pack)
    }

    /// Evaluates `provider` at `p` with a jet of the given order and builds the pack.
    pub fn at(provider: &dyn MetricProvider, p: &ChartPoint, order: u8) -> Result<Self> {
        Self::from_jet(&provider.jet(p, order)?)
    }

    pub fn dim(&self) -> usize {
        self.metric.dim()
    }

    pub fn derivatives(&self) -> Result<&CurvatureDerivatives> {
        self.derivatives
            .as_ref()
            .ok_or(GeomError::MissingDerivatives { have: 2, need: 3 })
    }

    pub fn metric_matrix(&self) -> DMatrix<f64> {
        self.metric.to_matrix().expect("rank 2")
    }

    pub fn inverse_matrix(&self) -> DMatrix<f64> {
        self.inverse_metric.to_matrix().expect("rank 2")
    }

    pub fn has_non_finite(&self) -> bool {
        self.riemann13.has_non_finite()
            || self.weyl.has_non_finite()
            || !self.scalar.is_finite()
            || self
                .derivatives
                .as_ref()
                .is_some_and(|d| d.nabla_riemann.has_non_finite() || d.nabla_weyl.has_non_finite())
    }
}

/// Largest violation of the algebraic curvature symmetries of a (0,4) tensor:
/// skew pairs, pair exchange, and the first Bianchi identity.
pub fn riemann_symmetry_defect(r: &Tensor) -> f64 {
    let n = r.dim();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                for l in 0..n {
                    let v = r.get(&[i, j, k, l]);
                    worst = worst
                        .max((v + r.get(&[j, i, k, l])).abs())
                        .max((v + r.get(&[i, j, l, k])).abs())
                        .max((v - r.get(&[k, l, i, j])).abs())
                        .max((v + r.get(&[j, k, i, l]) + r.get(&[k, i, j, l])).abs());
                }
            }
        }
    }
    worst
}

/// Largest cyclic sum `∇_m R_ijkl + ∇_i R_jmkl + ∇_j R_mikl`.
pub fn second_bianchi_defect(nabla_r: &Tensor) -> f64 {
    let n = nabla_r.dim();
    let mut worst: f64 = 0.0;
    for m in 0..n {
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        let s = nabla_r.get(&[m, i, j, k, l])
                            + nabla_r.get(&[i, j, m, k, l])
                            + nabla_r.get(&[j, m, i, k, l]);
                        worst = worst.max(s.abs());
                    }
                }
            }
        }
    }
    worst
}

/// Largest component over all six metric traces of a (0,4) tensor.
pub fn trace_defect(w: &Tensor, inverse_metric: &Tensor) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for a in 0..4 {
        for b in a + 1..4 {
            let c = crate::tensor::contract(w, a, b, Some(inverse_metric))?;
            worst = worst.max(c.max_abs());
        }
    }
    Ok(worst)
}

/// Largest `|T_…ab… − T_…ba…|` over all slot pairs of a covariant tensor.
pub fn total_symmetry_defect(t: &Tensor) -> f64 {
    let mut worst: f64 = 0.0;
    for a in 0..t.rank() {
        for b in a + 1..t.rank() {
            worst = worst.max(t.symmetry_defect(a, b).unwrap_or(f64::INFINITY));
        }
    }
    worst
}

/// Max-abs difference of two tensors of equal shape.
pub fn max_abs_diff(a: &Tensor, b: &Tensor) -> f64 {
    a.components()
        .iter()
        .zip(b.components())
        .fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::{
        fd_jet_oracle, ConstantCurvature, FlatMetric, RandomPerturbation, RoterSpec,
    };
    use crate::profile::ScalarProfile;
    use crate::tensor::FibreMetric;
    use nalgebra::DVector;

    fn lorentz4() -> RoterSpec {
        RoterSpec::new(
            4,
            FibreMetric::euclidean(2).unwrap(),
            DMatrix::from_diagonal(&DVector::from_column_slice(&[1.0, -1.0])),
            ScalarProfile::sin(),
        )
        .unwrap()
    }

    #[test]
    fn flat_is_flat() {
        let flat = FlatMetric::new(&[-1.0, 1.0, 1.0, 1.0]).unwrap();
        let pack = CurvaturePack::at(&flat, &ChartPoint::new(vec![0.1, 0.2, 0.3, 0.4]), 3).unwrap();
        assert_eq!(pack.christoffel.max_abs(), 0.0);
        assert_eq!(pack.riemann04.max_abs(), 0.0);
        assert_eq!(pack.weyl.max_abs(), 0.0);
    }

    #[test]
    fn roter_christoffel_example() {
        let spec = lorentz4();
        let p = ChartPoint::new(vec![0.0, 0.0, 1.0, 0.0]);
        let gamma = christoffel(&spec.jet(&p, 1).unwrap()).unwrap();
        assert!((gamma.get(1, 0, 0) - 1.0).abs() < 1e-14);
        assert!((gamma.get(2, 0, 0) + 1.0).abs() < 1e-14);
        for i in 0..4 {
            for k in 0..4 {
                assert_eq!(gamma.get(k, i, 1), 0.0);
            }
        }
        // same symbols from a differenced jet
        let fd = christoffel(&fd_jet_oracle(&spec, &p, 5e-3).unwrap()).unwrap();
        let err = gamma
            .components()
            .iter()
            .zip(fd.components())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(err < 1e-9, "{err}");
    }

    #[test]
    fn roter_ricci_at_quarter_period() {
        let spec = lorentz4();
        let pack = CurvaturePack::at(
            &spec,
            &ChartPoint::new(vec![std::f64::consts::FRAC_PI_2, 0.3, -0.4, 0.7]),
            2,
        )
        .unwrap();
        let mut want = Tensor::covariant_from_fn(4, 2, |_| 0.0).unwrap();
        want.set(&[0, 0], -2.0);
        assert!(max_abs_diff(&pack.ricci, &want) < 1e-10);
        assert!(pack.scalar.abs() < 1e-10);
    }

    #[test]
    fn constant_curvature_model() {
        for (k, n) in [(1.0, 4), (-0.5, 5), (2.0, 6)] {
            let provider = ConstantCurvature::new(k, n).unwrap();
            let mut x = vec![0.0; n];
            x[0] = 0.2;
            x[n - 1] = -0.1;
            let pack = CurvaturePack::at(&provider, &ChartPoint::new(x), 3).unwrap();
            let g = &pack.metric;
            let model = Tensor::covariant_from_fn(n, 4, |i| {
                k * (g.get(&[i[0], i[2]]) * g.get(&[i[1], i[3]])
                    - g.get(&[i[0], i[3]]) * g.get(&[i[1], i[2]]))
            })
            .unwrap();
            assert!(max_abs_diff(&pack.riemann04, &model) < 1e-12);
            let want = (n * (n - 1)) as f64 * k;
            assert!((pack.scalar - want).abs() < 1e-10 * want.abs());
            assert!(pack.weyl.max_abs() < 1e-12);
            let d = pack.derivatives().unwrap();
            assert!(d.nabla_riemann.max_abs() < 1e-11);
        }
    }

    #[test]
    fn kulkarni_nomizu_identity_component() {
        let g = Tensor::from_matrix(&DMatrix::identity(4, 4), [Dn, Dn]).unwrap();
        let kn = kulkarni_nomizu(&g, &g).unwrap();
        assert_eq!(kn.get(&[0, 1, 0, 1]), 2.0);
        assert_eq!(riemann_symmetry_defect(&kn), 0.0);
    }

    #[test]
    fn covariant_derivative_of_metric_vanishes() {
        let provider = RandomPerturbation::new(5, 0.1, 5).unwrap();
        let jet = provider
            .jet(&ChartPoint::new(vec![0.1, -0.2, 0.3, 0.0, 0.2]), 1)
            .unwrap();
        let n = 5;
        let g = Tensor::from_matrix(&jet.metric(), [Dn, Dn]).unwrap();
        let dg = Tensor::covariant_from_fn(n, 3, |x| jet.dg(x[1], x[2], x[0])).unwrap();
        let gamma = christoffel(&jet).unwrap();
        let nabla = covariant_derivative(&g, &gamma, &dg).unwrap();
        assert!(nabla.max_abs() < 1e-14);
    }

    #[test]
    fn weyl_rejects_small_dimension() {
        let g = Tensor::from_matrix(&DMatrix::identity(3, 3), [Dn, Dn]).unwrap();
        let r = Tensor::covariant_from_fn(3, 4, |_| 0.0).unwrap();
        assert!(weyl(&g, &r, &g).is_err());
    }

    #[test]
    fn pack_needs_second_derivatives() {
        let spec = lorentz4();
        let jet = spec.jet(&ChartPoint::new(vec![0.0; 4]), 1).unwrap();
        assert!(matches!(
            CurvaturePack::from_jet(&jet),
            Err(GeomError::MissingDerivatives { .. })
        ));
        let pack = CurvaturePack::at(&spec, &ChartPoint::new(vec![0.0; 4]), 2).unwrap();
        assert!(pack.derivatives().is_err());
    }
}
