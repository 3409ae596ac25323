//! Geodesics, parallel transport, the solution space `E` of
//! `ü = f(t)u + Au` with its group action, and the variation experiment
//! showing that `t ↦ exp_{y(t)}(w(t))` is a geodesic.
//!
//! All integration is classical fixed-step RK4.

use std::io::{self, Write};

use nalgebra::{DMatrix, DVector};

use crate::curvature::Christoffel;
use crate::error::{GeomError, Result};
use crate::metric::{MetricProvider, RoterSpec};
use crate::profile::ScalarProfile;
use crate::report::CheckRecord;
use crate::tensor::ChartPoint;

pub const MAX_STEP: f64 = 1e-2;
pub const DEFAULT_STEP: f64 = 1e-3;

fn check_step(step: f64) -> Result<()> {
    if !(step > 0.0 && step <= MAX_STEP) {
        return Err(GeomError::InvalidArgument(format!(
            "step {step} must lie in (0, {MAX_STEP}]"
        )));
    }
    Ok(())
}

fn check_finite(y: &DVector<f64>, t: f64) -> Result<()> {
    if y.iter().any(|x| !x.is_finite()) {
        return Err(GeomError::Numerical(format!(
            "non-finite state at parameter {t}"
        )));
    }
    Ok(())
}

fn rk4_step<F>(rhs: &mut F, t: f64, y: &DVector<f64>, h: f64) -> Result<DVector<f64>>
where
    F: FnMut(f64, &DVector<f64>) -> Result<DVector<f64>>,
{
    let k1 = rhs(t, y)?;
    let k2 = rhs(t + 0.5 * h, &(y + &k1 * (0.5 * h)))?;
    let k3 = rhs(t + 0.5 * h, &(y + &k2 * (0.5 * h)))?;
    let k4 = rhs(t + h, &(y + &k3 * h))?;
    Ok(y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0))
}

/// States on the grid `anchor + k·h`, `k = −back..=forward`, integrated
/// outward from `y0` at the anchor.
fn integrate_anchored<F>(
    mut rhs: F,
    anchor: f64,
    y0: DVector<f64>,
    back: usize,
    forward: usize,
    h: f64,
) -> Result<Vec<DVector<f64>>>
where
    F: FnMut(f64, &DVector<f64>) -> Result<DVector<f64>>,
{
    check_finite(&y0, anchor)?;
    let mut behind = Vec::with_capacity(back);
    let mut y = y0.clone();
    for k in 0..back {
        let t = anchor - k as f64 * h;
        y = rk4_step(&mut rhs, t, &y, -h)?;
        check_finite(&y, t - h)?;
        behind.push(y.clone());
    }
    behind.reverse();
    behind.push(y0.clone());
    let mut y = y0;
    for k in 0..forward {
        let t = anchor + k as f64 * h;
        y = rk4_step(&mut rhs, t, &y, h)?;
        check_finite(&y, t + h)?;
        behind.push(y.clone());
    }
    Ok(behind)
}

/// Number of steps covering `length` with steps no longer than `step`.
fn steps_for(length: f64, step: f64) -> usize {
    (length / step - 1e-9).ceil().max(0.0) as usize
}

/// Quintic Hermite basis on `[0,1]` for `(p0, h·v0, h²·a0, h²·a1, h·v1, p1)`,
/// as polynomial coefficients in ascending powers.
const HERMITE5: [[f64; 6]; 6] = [
    [1.0, 0.0, 0.0, -10.0, 15.0, -6.0],
    [0.0, 1.0, 0.0, -6.0, 8.0, -3.0],
    [0.0, 0.0, 0.5, -1.5, 1.5, -0.5],
    [0.0, 0.0, 0.0, 0.5, -1.0, 0.5],
    [0.0, 0.0, 0.0, -4.0, 7.0, -3.0],
    [0.0, 0.0, 0.0, 10.0, -15.0, 6.0],
];

fn hermite_weights(s: f64, order: usize) -> [f64; 6] {
    let mut w = [0.0; 6];
    for (b, coeffs) in HERMITE5.iter().enumerate() {
        let mut acc = 0.0;
        for (k, &c) in coeffs.iter().enumerate().skip(order) {
            let falling: f64 = ((k - order + 1)..=k).map(|x| x as f64).product();
            acc += c * falling * s.powi((k - order) as i32);
        }
        w[b] = acc;
    }
    w
}

/// Values with first and second derivatives on a uniform grid, interpolated
/// by piecewise quintic Hermite polynomials.
#[derive(Clone, Debug, PartialEq)]
pub struct Sampled {
    start: f64,
    step: f64,
    values: Vec<DVector<f64>>,
    first: Vec<DVector<f64>>,
    second: Vec<DVector<f64>>,
}

impl Sampled {
    pub fn new(
        start: f64,
        step: f64,
        values: Vec<DVector<f64>>,
        first: Vec<DVector<f64>>,
        second: Vec<DVector<f64>>,
    ) -> Result<Self> {
        if values.len() < 2 || values.len() != first.len() || values.len() != second.len() {
            return Err(GeomError::InvalidArgument(
                "need at least two consistent samples".into(),
            ));
        }
        if !(step > 0.0) {
            return Err(GeomError::InvalidArgument(
                "sample step must be positive".into(),
            ));
        }
        Ok(Self {
            start,
            step,
            values,
            first,
            second,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn time(&self, k: usize) -> f64 {
        self.start + k as f64 * self.step
    }

    pub fn span(&self) -> (f64, f64) {
        (self.start, self.time(self.len() - 1))
    }

    pub fn values(&self) -> &[DVector<f64>] {
        &self.values
    }

    pub fn first(&self) -> &[DVector<f64>] {
        &self.first
    }

    pub fn second(&self) -> &[DVector<f64>] {
        &self.second
    }

    /// Derivative of order 0, 1 or 2 at `t`.
    pub fn eval(&self, t: f64, order: usize) -> Result<DVector<f64>> {
        let (a, b) = self.span();
        let slack = 1e-9 * self.step;
        if !(t >= a - slack && t <= b + slack) {
            return Err(GeomError::OutOfSpan {
                t,
                start: a,
                end: b,
            });
        }
        let x = ((t - a) / self.step).clamp(0.0, (self.len() - 1) as f64);
        let k = (x.floor() as usize).min(self.len() - 2);
        let s = x - k as f64;
        let h = self.step;
        let w = hermite_weights(s, order);
        let out = &self.values[k] * w[0]
            + &self.first[k] * (h * w[1])
            + &self.second[k] * (h * h * w[2])
            + &self.second[k + 1] * (h * h * w[3])
            + &self.first[k + 1] * (h * w[4])
            + &self.values[k + 1] * w[5];
        Ok(out / h.powi(order as i32))
    }
}

/// A parametrized curve in the chart.
pub trait Curve: Sync {
    fn dim(&self) -> usize;
    fn span(&self) -> (f64, f64);
    fn position(&self, tau: f64) -> Result<DVector<f64>>;
    fn velocity(&self, tau: f64) -> Result<DVector<f64>>;
    fn acceleration(&self, tau: f64) -> Result<DVector<f64>>;
}

/// A curve whose coordinates are closed-form profiles.
#[derive(Clone, Debug, PartialEq)]
pub struct ProfileCurve {
    coords: Vec<ScalarProfile>,
    span: (f64, f64),
}

impl ProfileCurve {
    pub fn new(coords: Vec<ScalarProfile>, span: (f64, f64)) -> Result<Self> {
        if coords.is_empty() || !(span.0 < span.1) {
            return Err(GeomError::InvalidArgument(
                "profile curve needs coordinates and a nonempty span".into(),
            ));
        }
        Ok(Self { coords, span })
    }

    fn eval(&self, tau: f64, k: u32) -> Result<DVector<f64>> {
        let (a, b) = self.span;
        if !(tau >= a && tau <= b) {
            return Err(GeomError::OutOfSpan {
                t: tau,
                start: a,
                end: b,
            });
        }
        Ok(DVector::from_iterator(
            self.coords.len(),
            self.coords.iter().map(|c| c.derivative(tau, k)),
        ))
    }
}

impl Curve for ProfileCurve {
    fn dim(&self) -> usize {
        self.coords.len()
    }

    fn span(&self) -> (f64, f64) {
        self.span
    }

    fn position(&self, tau: f64) -> Result<DVector<f64>> {
        self.eval(tau, 0)
    }

    fn velocity(&self, tau: f64) -> Result<DVector<f64>> {
        self.eval(tau, 1)
    }

    fn acceleration(&self, tau: f64) -> Result<DVector<f64>> {
        self.eval(tau, 2)
    }
}

fn metric_at(provider: &dyn MetricProvider, x: &DVector<f64>) -> Result<DMatrix<f64>> {
    provider.metric(&ChartPoint::new(x.iter().copied().collect()))
}

fn gamma_at(provider: &dyn MetricProvider, x: &DVector<f64>) -> Result<Christoffel> {
    provider.christoffel(&ChartPoint::new(x.iter().copied().collect()))
}

fn quad(g: &DMatrix<f64>, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a.transpose() * g * b)[(0, 0)]
}

/// `Σ |g_ij a^i b^j|`, the size of the terms in `g(a, b)`.
fn quad_scale(g: &DMatrix<f64>, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let n = a.len();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            acc += (g[(i, j)] * a[i] * b[j]).abs();
        }
    }
    acc
}

fn unit(n: usize, i: usize) -> DVector<f64> {
    let mut e = DVector::zeros(n);
    e[i] = 1.0;
    e
}

/// A sampled geodesic with its conserved quantities `g(ẋ,ẋ)` and `g(ẋ,∂_s)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    samples: Sampled,
    pub conserved_norm: Vec<f64>,
    pub conserved_ds: Vec<f64>,
    norm_scale: Vec<f64>,
    ds_scale: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.samples.time(k)).collect()
    }

    pub fn points(&self) -> Vec<ChartPoint> {
        self.samples
            .values()
            .iter()
            .map(|x| ChartPoint::new(x.iter().copied().collect()))
            .collect()
    }

    pub fn positions(&self) -> &[DVector<f64>] {
        self.samples.values()
    }

    pub fn velocities(&self) -> &[DVector<f64>] {
        self.samples.first()
    }

    /// Largest change of `g(ẋ,ẋ)` relative to `max(1, Σ|g_ij ẋ^i ẋ^j|)`.
    pub fn norm_drift(&self) -> f64 {
        drift(&self.conserved_norm, &self.norm_scale)
    }

    /// Largest change of `g(ẋ,∂_s)`, normalized like [`Self::norm_drift`].
    pub fn ds_drift(&self) -> f64 {
        drift(&self.conserved_ds, &self.ds_scale)
    }

    /// Largest deviation of the `t` coordinate from its least-squares affine
    /// fit in the curve parameter.
    pub fn t_affinity_deviation(&self) -> f64 {
        let taus = self.times();
        let ts: Vec<f64> = self.positions().iter().map(|x| x[0]).collect();
        let m = taus.len() as f64;
        let mt = taus.iter().sum::<f64>() / m;
        let my = ts.iter().sum::<f64>() / m;
        let sxy: f64 = taus.iter().zip(&ts).map(|(a, b)| (a - mt) * (b - my)).sum();
        let sxx: f64 = taus.iter().map(|a| (a - mt) * (a - mt)).sum();
        let slope = sxy / sxx;
        taus.iter()
            .zip(&ts)
            .fold(0.0, |w, (a, b)| w.max((b - (my + slope * (a - mt))).abs()))
    }

    /// CSV with header `step,tau,t,s,v1..vk,g_xdot_xdot,g_xdot_ds`, one row
    /// per step, 17 significant digits.
    pub fn write_csv(&self, out: &mut impl Write) -> io::Result<()> {
        let n = self.samples.values()[0].len();
        let mut header = vec!["step".to_string(), "tau".into(), "t".into(), "s".into()];
        header.extend((1..n - 1).map(|k| format!("v{k}")));
        header.push("g_xdot_xdot".into());
        header.push("g_xdot_ds".into());
        writeln!(out, "{}", header.join(","))?;
        for (k, x) in self.positions().iter().enumerate() {
            let mut row = vec![k.to_string(), format!("{:.16e}", self.samples.time(k))];
            row.extend(x.iter().map(|c| format!("{c:.16e}")));
            row.push(format!("{:.16e}", self.conserved_norm[k]));
            row.push(format!("{:.16e}", self.conserved_ds[k]));
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

fn drift(values: &[f64], scales: &[f64]) -> f64 {
    let scale = scales.iter().fold(1.0f64, |m, &s| m.max(s));
    values
        .iter()
        .fold(0.0f64, |m, v| m.max((v - values[0]).abs()))
        / scale
}

impl Curve for Trajectory {
    fn dim(&self) -> usize {
        self.samples.values()[0].len()
    }

    fn span(&self) -> (f64, f64) {
        self.samples.span()
    }

    fn position(&self, tau: f64) -> Result<DVector<f64>> {
        self.samples.eval(tau, 0)
    }

    fn velocity(&self, tau: f64) -> Result<DVector<f64>> {
        self.samples.eval(tau, 1)
    }

    fn acceleration(&self, tau: f64) -> Result<DVector<f64>> {
        self.samples.eval(tau, 2)
    }
}

/// Solves `ẍ^k + Γ^k_ij ẋ^i ẋ^j = 0` from `x0` with velocity `v0` over
/// `t_span`, parameter starting at `t_span.0`.
pub fn integrate_geodesic(
    provider: &dyn MetricProvider,
    x0: &ChartPoint,
    v0: &DVector<f64>,
    t_span: (f64, f64),
    step: f64,
) -> Result<Trajectory> {
    check_step(step)?;
    let n = provider.dim();
    x0.check_dim(n)?;
    if v0.len() != n {
        return Err(GeomError::DimensionMismatch {
            expected: n,
            found: v0.len(),
        });
    }
    if !(t_span.1 > t_span.0) {
        return Err(GeomError::InvalidArgument("empty integration span".into()));
    }
    let steps = steps_for(t_span.1 - t_span.0, step);
    let h = (t_span.1 - t_span.0) / steps as f64;
    let rhs = |_t: f64, y: &DVector<f64>| -> Result<DVector<f64>> {
        let x = y.rows(0, n).into_owned();
        let v = y.rows(n, n).into_owned();
        let acc = gamma_at(provider, &x)?.contract(v.as_slice(), v.as_slice());
        let mut out = DVector::zeros(2 * n);
        out.rows_mut(0, n).copy_from(&v);
        for k in 0..n {
            out[n + k] = -acc[k];
        }
        Ok(out)
    };
    let mut y0 = DVector::zeros(2 * n);
    y0.rows_mut(0, n).copy_from(&x0.to_vector());
    y0.rows_mut(n, n).copy_from(v0);
    let states = integrate_anchored(rhs, t_span.0, y0, 0, steps, h)?;
    let mut xs = Vec::with_capacity(states.len());
    let mut vs = Vec::with_capacity(states.len());
    let mut accs = Vec::with_capacity(states.len());
    let mut norm = Vec::with_capacity(states.len());
    let mut ds = Vec::with_capacity(states.len());
    let mut norm_scale = Vec::with_capacity(states.len());
    let mut ds_scale = Vec::with_capacity(states.len());
    let e_s = unit(n, 1);
    for y in &states {
        let x = y.rows(0, n).into_owned();
        let v = y.rows(n, n).into_owned();
        let g = metric_at(provider, &x)?;
        let acc = gamma_at(provider, &x)?.contract(v.as_slice(), v.as_slice());
        norm.push(quad(&g, &v, &v));
        ds.push(quad(&g, &v, &e_s));
        norm_scale.push(quad_scale(&g, &v, &v));
        ds_scale.push(quad_scale(&g, &v, &e_s));
        accs.push(-DVector::from_vec(acc));
        xs.push(x);
        vs.push(v);
    }
    Ok(Trajectory {
        samples: Sampled::new(t_span.0, h, xs, vs, accs)?,
        conserved_norm: norm,
        conserved_ds: ds,
        norm_scale,
        ds_scale,
    })
}

/// A vector field sampled along a curve.
#[derive(Clone, Debug, PartialEq)]
pub struct TransportedField {
    pub times: Vec<f64>,
    pub vectors: Vec<DVector<f64>>,
    /// `g(w,w)` at each sample
    pub norms: Vec<f64>,
    /// `g(w,∂_s)` at each sample
    pub ds: Vec<f64>,
}

impl TransportedField {
    pub fn last(&self) -> &DVector<f64> {
        self.vectors.last().expect("at least one sample")
    }

    /// Largest change of `g(w,w)` and `g(w,∂_s)`.
    pub fn invariant_drift(&self) -> f64 {
        let d = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max((x - v[0]).abs()));
        d(&self.norms).max(d(&self.ds))
    }
}

/// Solves `ẇ^k + Γ^k_ij ẋ^i w^j = 0` along `curve` from parameter `from` to
/// `to` (either direction).
pub fn parallel_transport(
    provider: &dyn MetricProvider,
    curve: &dyn Curve,
    w0: &DVector<f64>,
    from: f64,
    to: f64,
    step: f64,
) -> Result<TransportedField> {
    check_step(step)?;
    let n = provider.dim();
    if curve.dim() != n || w0.len() != n {
        return Err(GeomError::DimensionMismatch {
            expected: n,
            found: w0.len(),
        });
    }
    let steps = steps_for((to - from).abs(), step).max(1);
    let h = (to - from) / steps as f64;
    let rhs = |tau: f64, w: &DVector<f64>| -> Result<DVector<f64>> {
        let x = curve.position(tau)?;
        let xd = curve.velocity(tau)?;
        let c = gamma_at(provider, &x)?.contract(xd.as_slice(), w.as_slice());
        Ok(-DVector::from_vec(c))
    };
    // integrate_anchored runs forward in its own parameter; flip for h < 0
    let states = if h > 0.0 {
        integrate_anchored(rhs, from, w0.clone(), 0, steps, h)?
    } else {
        let mut back = integrate_anchored(rhs, from, w0.clone(), steps, 0, -h)?;
        back.reverse();
        back
    };
    let e_s = unit(n, 1);
    let mut field = TransportedField {
        times: Vec::with_capacity(states.len()),
        vectors: Vec::with_capacity(states.len()),
        norms: Vec::with_capacity(states.len()),
        ds: Vec::with_capacity(states.len()),
    };
    for (k, w) in states.into_iter().enumerate() {
        let tau = from + k as f64 * h;
        let g = metric_at(provider, &curve.position(tau)?)?;
        field.norms.push(quad(&g, &w, &w));
        field.ds.push(quad(&g, &w, &e_s));
        field.times.push(tau);
        field.vectors.push(w);
    }
    Ok(field)
}

/// A sampled solution of `ü = f(t)u + Au` on `V`, with initial data at `t = 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct OdeSolution {
    spec: RoterSpec,
    initial: (DVector<f64>, DVector<f64>),
    samples: Sampled,
}

fn e_rhs(spec: &RoterSpec, t: f64, u: &DVector<f64>) -> DVector<f64> {
    u * spec.f().value(t) + spec.a() * u
}

/// Integrates `ü = f(t)u + Au` from `(u(0), u̇(0))` over a grid through
/// `t = 0` covering `t_span` (which must contain 0).
pub fn solve_e_ode(
    spec: &RoterSpec,
    u0: &DVector<f64>,
    udot0: &DVector<f64>,
    t_span: (f64, f64),
    step: f64,
) -> Result<OdeSolution> {
    check_step(step)?;
    let k = spec.n() - 2;
    if u0.len() != k || udot0.len() != k {
        return Err(GeomError::DimensionMismatch {
            expected: k,
            found: if u0.len() != k { u0.len() } else { udot0.len() },
        });
    }
    if !(t_span.0 <= 0.0 && t_span.1 >= 0.0 && t_span.1 > t_span.0) {
        return Err(GeomError::InvalidArgument(format!(
            "span [{}, {}] must contain t = 0",
            t_span.0, t_span.1
        )));
    }
    let back = steps_for(-t_span.0, step);
    let forward = steps_for(t_span.1, step);
    let rhs = |t: f64, y: &DVector<f64>| -> Result<DVector<f64>> {
        let u = y.rows(0, k).into_owned();
        let mut out = DVector::zeros(2 * k);
        out.rows_mut(0, k).copy_from(&y.rows(k, k));
        out.rows_mut(k, k).copy_from(&e_rhs(spec, t, &u));
        Ok(out)
    };
    let mut y0 = DVector::zeros(2 * k);
    y0.rows_mut(0, k).copy_from(u0);
    y0.rows_mut(k, k).copy_from(udot0);
    let states = integrate_anchored(rhs, 0.0, y0, back, forward, step)?;
    let start = -(back as f64) * step;
    let mut us = Vec::with_capacity(states.len());
    let mut uds = Vec::with_capacity(states.len());
    let mut udds = Vec::with_capacity(states.len());
    for (i, y) in states.iter().enumerate() {
        let t = start + i as f64 * step;
        let u = y.rows(0, k).into_owned();
        udds.push(e_rhs(spec, t, &u));
        uds.push(y.rows(k, k).into_owned());
        us.push(u);
    }
    Ok(OdeSolution {
        spec: spec.clone(),
        initial: (u0.clone(), udot0.clone()),
        samples: Sampled::new(start, step, us, uds, udds)?,
    })
}

impl OdeSolution {
    pub fn spec(&self) -> &RoterSpec {
        &self.spec
    }

    pub fn initial(&self) -> (&DVector<f64>, &DVector<f64>) {
        (&self.initial.0, &self.initial.1)
    }

    pub fn span(&self) -> (f64, f64) {
        self.samples.span()
    }

    pub fn step(&self) -> f64 {
        self.samples.step()
    }

    pub fn samples(&self) -> &Sampled {
        &self.samples
    }

    pub fn u(&self, t: f64) -> Result<DVector<f64>> {
        self.samples.eval(t, 0)
    }

    pub fn udot(&self, t: f64) -> Result<DVector<f64>> {
        self.samples.eval(t, 1)
    }

    /// `ü(t) = f(t)u(t) + Au(t)` from the interpolated `u`.
    pub fn uddot(&self, t: f64) -> Result<DVector<f64>> {
        Ok(e_rhs(&self.spec, t, &self.u(t)?))
    }

    /// Largest gap between a five-point second difference of `u` and
    /// `f u + A u` at interior grid points, relative to `max(1, max ‖f u + A u‖)`.
    pub fn ode_residual(&self) -> f64 {
        let h = self.samples.step();
        let us = self.samples.values();
        let rhs = self.samples.second();
        let scale = rhs.iter().fold(1.0f64, |m, r| m.max(r.amax()));
        let mut worst: f64 = 0.0;
        for k in 2..us.len().saturating_sub(2) {
            let window: Vec<&DVector<f64>> = us[k - 2..=k + 2].iter().collect();
            worst = worst.max((second_difference(&window, h) - &rhs[k]).amax());
        }
        worst / scale
    }

    /// `⟨u̇, w⟩ − ⟨u, ẇ⟩` at `t`.
    pub fn wronskian_at(&self, other: &OdeSolution, t: f64) -> Result<f64> {
        let inner = self.spec.inner();
        Ok(inner.inner(&self.udot(t)?, &other.u(t)?) - inner.inner(&self.u(t)?, &other.udot(t)?))
    }

    /// Largest change of `⟨u̇,w⟩ − ⟨u,ẇ⟩` over the shared grid, relative to
    /// `max(1, size of its two terms)`.
    pub fn wronskian_drift(&self, other: &OdeSolution) -> Result<f64> {
        if self.samples.len() != other.samples.len() || self.samples.span() != other.samples.span()
        {
            return Err(GeomError::InvalidArgument(
                "solutions are sampled on different grids".into(),
            ));
        }
        let inner = self.spec.inner();
        let (u, ud) = (self.samples.values(), self.samples.first());
        let (w, wd) = (other.samples.values(), other.samples.first());
        let mut values = Vec::with_capacity(u.len());
        let mut scale: f64 = 1.0;
        for k in 0..u.len() {
            let a = inner.inner(&ud[k], &w[k]);
            let b = inner.inner(&u[k], &wd[k]);
            scale = scale.max(a.abs() + b.abs());
            values.push(a - b);
        }
        Ok(values
            .iter()
            .fold(0.0f64, |m, v| m.max((v - values[0]).abs()))
            / scale)
    }
}

/// Smallest singular value, over every `stride`-th grid time, of the matrix
/// whose columns are the states `(u, u̇)` of the given solutions.
pub fn state_matrix_min_singular(solutions: &[OdeSolution], stride: usize) -> Result<f64> {
    let first = solutions
        .first()
        .ok_or_else(|| GeomError::InvalidArgument("no solutions".into()))?;
    let len = first.samples.len();
    if solutions
        .iter()
        .any(|s| s.samples.len() != len || s.samples.span() != first.samples.span())
    {
        return Err(GeomError::InvalidArgument(
            "solutions are sampled on different grids".into(),
        ));
    }
    let k = first.samples.values()[0].len();
    let mut worst = f64::INFINITY;
    for i in (0..len).step_by(stride.max(1)) {
        let m = DMatrix::from_fn(2 * k, solutions.len(), |r, c| {
            let s = &solutions[c].samples;
            if r < k {
                s.values()[i][r]
            } else {
                s.first()[i][r - k]
            }
        });
        let sv = m.svd(false, false).singular_values;
        worst = worst.min(sv.iter().fold(f64::INFINITY, |a, &b| a.min(b)));
    }
    Ok(worst)
}

/// An element `(p, q, u)` of the group acting on the chart.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupElement {
    pub p: f64,
    pub q: f64,
    pub u: OdeSolution,
}

/// Tolerance for `f(t + p) = f(t)`.
pub const PERIOD_TOLERANCE: f64 = 1e-10;

impl GroupElement {
    /// Checks that `p` is a period of `f` on 100 sample points.
    pub fn new(p: f64, q: f64, u: OdeSolution) -> Result<Self> {
        if !p.is_finite() || !q.is_finite() {
            return Err(GeomError::InvalidArgument(
                "non-finite group parameters".into(),
            ));
        }
        if p != 0.0 {
            let f = u.spec().f();
            let worst = (0..100).map(|k| {
                let t = -5.0 + 0.1 * k as f64;
                (f.value(t + p) - f.value(t)).abs()
            });
            let worst = worst.fold(0.0f64, f64::max);
            if !(worst < PERIOD_TOLERANCE) {
                return Err(GeomError::InvalidArgument(format!(
                    "p = {p} is not a period of f (defect {worst:e})"
                )));
            }
        }
        Ok(Self { p, q, u })
    }

    pub fn identity(spec: &RoterSpec, t_span: (f64, f64), step: f64) -> Result<Self> {
        let zero = DVector::zeros(spec.n() - 2);
        Self::new(0.0, 0.0, solve_e_ode(spec, &zero, &zero, t_span, step)?)
    }

    fn split(x: &ChartPoint, n: usize) -> Result<(f64, f64, DVector<f64>)> {
        x.check_dim(n)?;
        let c = x.coords();
        Ok((c[0], c[1], DVector::from_column_slice(&c[2..])))
    }

    /// `(p,q,u)·(t,s,v) = (t+p, s+q−⟨u̇(t), 2v+u(t)⟩, v+u(t))`.
    pub fn act(&self, x: &ChartPoint) -> Result<ChartPoint> {
        let spec = self.u.spec();
        let (t, s, v) = Self::split(x, spec.n())?;
        let (u, ud) = (self.u.u(t)?, self.u.udot(t)?);
        let s_new = s + self.q - spec.inner().inner(&ud, &(&v * 2.0 + &u));
        let mut out = vec![t + self.p, s_new];
        out.extend((v + u).iter());
        Ok(ChartPoint::new(out))
    }

    /// Jacobian of `x ↦ self·x` at `x`.
    pub fn differential(&self, x: &ChartPoint) -> Result<DMatrix<f64>> {
        let spec = self.u.spec();
        let n = spec.n();
        let (t, _, v) = Self::split(x, n)?;
        let (u, ud, udd) = (self.u.u(t)?, self.u.udot(t)?, self.u.uddot(t)?);
        let h = spec.inner().matrix();
        let mut j = DMatrix::zeros(n, n);
        j[(0, 0)] = 1.0;
        j[(1, 0)] = -spec.inner().inner(&udd, &(&v * 2.0 + &u)) - spec.inner().inner(&ud, &ud);
        j[(1, 1)] = 1.0;
        let hud = h * &ud;
        for a in 0..n - 2 {
            j[(a + 2, 0)] = ud[a];
            j[(1, a + 2)] = -2.0 * hud[a];
            j[(a + 2, a + 2)] = 1.0;
        }
        Ok(j)
    }

    /// `self · other`, with the composed solution integrated afresh over
    /// `t_span` from its data at `t = 0`.
    pub fn compose(
        &self,
        other: &GroupElement,
        t_span: (f64, f64),
        step: f64,
    ) -> Result<GroupElement> {
        let spec = self.u.spec();
        let inner = spec.inner();
        let p2 = other.p;
        let (u1, ud1) = (self.u.u(p2)?, self.u.udot(p2)?);
        let (u2, ud2) = (other.u.u(0.0)?, other.u.udot(0.0)?);
        let q = self.q + other.q + inner.inner(&ud2, &u1) - inner.inner(&u2, &ud1);
        let u = solve_e_ode(spec, &(&u2 + &u1), &(&ud2 + &ud1), t_span, step)?;
        GroupElement::new(self.p + p2, q, u)
    }
}

/// `max |Jᵀ g(Ψx) J − g(x)|` for `Ψ = gel·`, relative to the size of the
/// terms in `Jᵀ g(Ψx) J`.
pub fn pullback_residual(spec: &RoterSpec, gel: &GroupElement, x: &ChartPoint) -> Result<f64> {
    let j = gel.differential(x)?;
    let gy = spec.metric_matrix(&gel.act(x)?)?;
    let gx = spec.metric_matrix(x)?;
    let pulled = j.transpose() * &gy * &j;
    let abs_terms = j.abs().transpose() * gy.abs() * j.abs();
    Ok((pulled - gx).amax() / abs_terms.amax().max(1.0))
}

/// Parameters of [`completeness_variation_check`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VariationOptions {
    /// step in `t` for the field `w` and for differencing in `t`
    pub step: f64,
    /// RK4 steps of the exponential map on `s ∈ [0, 1]`; a multiple of 4
    pub exp_steps: usize,
    /// evaluate every `stride`-th grid time
    pub stride: usize,
    /// `c` in `Q(w) = c[γ(Aw,w)]˙ + c f[g(w,w)]˙ + 2ḟ g(w,w)`
    pub q_coefficient: f64,
}

/// The coefficient for which `x_tt(·, 1)` vanishes. Expanding
/// `∇_t(R(x_t,x_s)x_s)` contributes two `x_st` terms besides the two from
/// `∇_s(R(x_s,x_t)x_t)`.
pub const Q_COEFFICIENT: f64 = 4.0;

impl Default for VariationOptions {
    fn default() -> Self {
        Self {
            step: DEFAULT_STEP,
            exp_steps: 200,
            stride: 50,
            q_coefficient: Q_COEFFICIENT,
        }
    }
}

/// Maxima collected by [`completeness_variation_check`].
#[derive(Clone, Debug, PartialEq)]
pub struct VariationOutcome {
    /// `max_t ‖x_tt(t, 1)‖`
    pub xtt_end: f64,
    /// `max_t ‖x_tt(t, 0)‖ = max_t ‖∇_ẏ ẏ‖`
    pub xtt_start: f64,
    /// `max ‖x_tt + (s−1)[v − s Q(x_s) u/4]‖` over `s ∈ {¼, ½, ¾}`
    pub intermediate: f64,
    /// largest spread of `Q(x_s)` over `s` at fixed `t`, relative to `max(1, |Q|)`
    pub q_spread: f64,
    /// largest `|w^t|` seen, i.e. how far `w` strayed from `D^⊥`
    pub transversality: f64,
    pub evaluated_times: usize,
}

/// Default tolerance of the variation checks.
pub const VARIATION_TOLERANCE: f64 = 5e-3;

impl VariationOutcome {
    pub fn records(&self) -> Vec<CheckRecord> {
        vec![
            CheckRecord::below(
                "lemma_6_2_xtt",
                "t-curves of the variation at s = 1 are geodesics",
                self.xtt_end,
                VARIATION_TOLERANCE,
            ),
            CheckRecord::below(
                "lemma_6_2_xtt_intermediate",
                "x_tt + (s-1)[v - s Q(x_s) u/4] vanishes along the variation",
                self.intermediate,
                VARIATION_TOLERANCE,
            ),
            CheckRecord::below(
                "lemma_6_2_q_constant",
                "Q(x_s) is independent of s",
                self.q_spread,
                VARIATION_TOLERANCE,
            ),
        ]
    }
}

/// `R(a,b)c` from a (1,3) curvature tensor.
/// Directional derivative along `b` of the Roter Christoffel form `Γ(a, c)`.
fn roter_gamma_derivative(
    spec: &RoterSpec,
    p: &DVector<f64>,
    a: &DVector<f64>,
    b: &DVector<f64>,
    c: &DVector<f64>,
) -> DVector<f64> {
    let n = p.len();
    let k = n - 2;
    let t = p[0];
    let v = p.rows(2, k).into_owned();
    let bv = b.rows(2, k).into_owned();
    let (av, cv) = (a.rows(2, k).into_owned(), c.rows(2, k).into_owned());
    let h = spec.inner().matrix();
    let (f0, f1, f2) = (
        spec.f().value(t),
        spec.f().derivative(t, 1),
        spec.f().derivative(t, 2),
    );
    let hv = h * &v;
    // ∂_t κ, ∇_V κ and f v + A v, each differentiated along b
    let d_kt = b[0] * f2 * v.dot(&hv) + 2.0 * f1 * hv.dot(&bv);
    let d_grad = &hv * (2.0 * f1 * b[0]) + (h * &bv * f0 + spec.a_form() * &bv) * 2.0;
    let d_acc = &v * (f1 * b[0]) + &bv * f0 + spec.a() * &bv;
    let mut out = DVector::zeros(n);
    out[1] = d_kt * a[0] * c[0] + d_grad.dot(&(&cv * a[0] + &av * c[0]));
    out.rows_mut(2, k).copy_from(&(-d_acc * (a[0] * c[0])));
    out
}

/// `R(a, b)c` for a Roter metric, where the quadratic Christoffel terms cancel.
fn roter_riemann_apply(
    spec: &RoterSpec,
    p: &DVector<f64>,
    a: &DVector<f64>,
    b: &DVector<f64>,
    c: &DVector<f64>,
) -> DVector<f64> {
    roter_gamma_derivative(spec, p, a, b, c) - roter_gamma_derivative(spec, p, b, a, c)
}

fn q_of(spec: &RoterSpec, c: f64, t: f64, w: &DVector<f64>, wdot: &DVector<f64>) -> f64 {
    let k = spec.n() - 2;
    let wv = w.rows(2, k).into_owned();
    let wdv = wdot.rows(2, k).into_owned();
    let h = spec.inner().matrix();
    let ha = spec.a_form();
    let f = spec.f();
    2.0 * c * (quad(ha, &wv, &wdv) + f.value(t) * quad(h, &wv, &wdv))
        + 2.0 * f.derivative(t, 1) * quad(h, &wv, &wv)
}

/// Step no larger than `DEFAULT_STEP` with `h ω ≤ 0.005`, where `ω²` bounds
/// `|f(t)| + ‖A‖` for `t` in `t_range`. Fast oscillation or growth in the
/// fibre directions runs at rate `ω`.
pub fn resolved_step(spec: &RoterSpec, t_range: (f64, f64)) -> f64 {
    let a_norm = spec
        .a()
        .row_iter()
        .map(|r| r.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let samples = 1000;
    let f_max = (0..=samples)
        .map(|k| {
            spec.f()
                .value(t_range.0 + (t_range.1 - t_range.0) * k as f64 / samples as f64)
                .abs()
        })
        .fold(0.0, f64::max);
    let omega = (f_max + a_norm).sqrt();
    if omega > 0.0 && omega.is_finite() {
        DEFAULT_STEP.min(0.005 / omega)
    } else {
        DEFAULT_STEP
    }
}

/// Fourth-order central first derivative from samples at `t-2h ..= t+2h`.
fn first_difference(x: &[&DVector<f64>], h: f64) -> DVector<f64> {
    (x[0] - x[1] * 8.0 + x[3] * 8.0 - x[4]) / (12.0 * h)
}

/// Fourth-order central second derivative from samples at `t-2h ..= t+2h`.
fn second_difference(x: &[&DVector<f64>], h: f64) -> DVector<f64> {
    (-x[0] + x[1] * 16.0 - x[2] * 30.0 + x[3] * 16.0 - x[4]) / (12.0 * h * h)
}

/// Samples of the `s`-geodesic with initial velocity `w`, and of the
/// parallel transport of `v` along it, at `s = 0, ¼, ½, ¾, 1`.
fn exp_with_transport(
    spec: &RoterSpec,
    x0: &DVector<f64>,
    w: &DVector<f64>,
    v: &DVector<f64>,
    steps: usize,
) -> Result<Vec<(DVector<f64>, DVector<f64>, DVector<f64>)>> {
    let n = x0.len();
    let rhs = |_s: f64, y: &DVector<f64>| -> Result<DVector<f64>> {
        let x = y.rows(0, n).into_owned();
        let xs = y.rows(n, n).into_owned();
        let tv = y.rows(2 * n, n).into_owned();
        let gamma = gamma_at(spec, &x)?;
        let acc = gamma.contract(xs.as_slice(), xs.as_slice());
        let tr = gamma.contract(xs.as_slice(), tv.as_slice());
        let mut out = DVector::zeros(3 * n);
        out.rows_mut(0, n).copy_from(&xs);
        for k in 0..n {
            out[n + k] = -acc[k];
            out[2 * n + k] = -tr[k];
        }
        Ok(out)
    };
    let mut y0 = DVector::zeros(3 * n);
    y0.rows_mut(0, n).copy_from(x0);
    y0.rows_mut(n, n).copy_from(w);
    y0.rows_mut(2 * n, n).copy_from(v);
    let states = integrate_anchored(rhs, 0.0, y0, 0, steps, 1.0 / steps as f64)?;
    Ok((0..=4)
        .map(|q| {
            let y = &states[q * steps / 4];
            (
                y.rows(0, n).into_owned(),
                y.rows(n, n).into_owned(),
                y.rows(2 * n, n).into_owned(),
            )
        })
        .collect())
}

/// Integrates the field `w` along the `t`-parametrized curve `y` with
/// `∇_ẏ∇_ẏ w = −R(ẏ,w)ẏ − ∇_ẏẏ − Q(w)u/4`, `u = ∇t = 2∂_s`, builds
/// `x(t,s) = exp_{y(t)}(s w(t))`, and measures `x_tt` along it.
///
/// The `t`-component of `w0` and `wdot0` is dropped so that `w` starts in
/// `D^⊥`; `wdot0` is the covariant derivative `∇_ẏ w` at the start.
pub fn completeness_variation_check(
    spec: &RoterSpec,
    y: &dyn Curve,
    w0: &DVector<f64>,
    wdot0: &DVector<f64>,
    t_span: (f64, f64),
    opts: VariationOptions,
) -> Result<VariationOutcome> {
    let n = spec.n();
    check_step(opts.step)?;
    if opts.exp_steps == 0 || !opts.exp_steps.is_multiple_of(4) || opts.stride == 0 {
        return Err(GeomError::InvalidArgument(
            "exp_steps must be a positive multiple of 4 and stride positive".into(),
        ));
    }
    if y.dim() != n || w0.len() != n || wdot0.len() != n {
        return Err(GeomError::DimensionMismatch {
            expected: n,
            found: w0.len(),
        });
    }
    let h = opts.step;
    let (a, b) = t_span;
    if !(b > a) {
        return Err(GeomError::InvalidArgument("empty span".into()));
    }
    let (ca, cb) = y.span();
    if a - 2.0 * h < ca || b + 2.0 * h > cb {
        return Err(GeomError::OutOfSpan {
            t: a - h,
            start: ca,
            end: cb,
        });
    }
    let forward = steps_for(b - a, h);
    let h = (b - a) / forward as f64;
    for k in 0..=forward {
        let vt = y.velocity(a + k as f64 * h)?[0];
        if !((vt - 1.0).abs() < 1e-9) {
            return Err(GeomError::InvalidArgument(format!(
                "curve is not parametrized by t (dt(ẏ) = {vt})"
            )));
        }
    }

    let mut e_s = DVector::zeros(n);
    e_s[1] = 1.0;
    let field_rhs = |tau: f64, state: &DVector<f64>| -> Result<DVector<f64>> {
        let w = state.rows(0, n).into_owned();
        let z = state.rows(n, n).into_owned();
        let p = y.position(tau)?;
        let yd = y.velocity(tau)?;
        let ydd = y.acceleration(tau)?;
        let gamma = gamma_at(spec, &p)?;
        let geodesic_defect =
            &ydd + DVector::from_vec(gamma.contract(yd.as_slice(), yd.as_slice()));
        let wdot = &z - DVector::from_vec(gamma.contract(yd.as_slice(), w.as_slice()));
        let q = q_of(spec, opts.q_coefficient, p[0], &w, &wdot);
        let cov_z =
            -roter_riemann_apply(spec, &p, &yd, &w, &yd) - geodesic_defect - &e_s * (0.5 * q);
        let zdot = cov_z - DVector::from_vec(gamma.contract(yd.as_slice(), z.as_slice()));
        let mut out = DVector::zeros(2 * n);
        out.rows_mut(0, n).copy_from(&wdot);
        out.rows_mut(n, n).copy_from(&zdot);
        Ok(out)
    };
    let mut state0 = DVector::zeros(2 * n);
    state0.rows_mut(0, n).copy_from(w0);
    state0.rows_mut(n, n).copy_from(wdot0);
    state0[0] = 0.0;
    state0[n] = 0.0;
    // two extra steps on each side for the five-point stencils
    let states = integrate_anchored(field_rhs, a, state0, 2, forward + 2, h)?;
    let time = |i: usize| a + (i as f64 - 2.0) * h;
    let transversality = states.iter().fold(0.0f64, |m, s| m.max(s[0].abs()));
    if transversality > 1e-9 {
        return Err(GeomError::FailedInvariant(format!(
            "w left D-perp (|w^t| = {transversality:e})"
        )));
    }

    let f = spec.f();
    let inner = spec.inner().matrix();
    let ha = spec.a_form();
    let kv = n - 2;
    let mut out = VariationOutcome {
        xtt_end: 0.0,
        xtt_start: 0.0,
        intermediate: 0.0,
        q_spread: 0.0,
        transversality,
        evaluated_times: 0,
    };
    for i in (2..=forward + 2).step_by(opts.stride) {
        let mut columns = Vec::with_capacity(5);
        for j in i - 2..=i + 2 {
            let tj = time(j);
            let p = y.position(tj)?;
            let w = states[j].rows(0, n).into_owned();
            let v = if j == i {
                let yd = y.velocity(tj)?;
                let gamma = gamma_at(spec, &p)?;
                y.acceleration(tj)?
                    + DVector::from_vec(gamma.contract(yd.as_slice(), yd.as_slice()))
            } else {
                DVector::zeros(n)
            };
            columns.push(exp_with_transport(spec, &p, &w, &v, opts.exp_steps)?);
        }
        let mut qs = Vec::with_capacity(5);
        for q in 0..=4 {
            let s = q as f64 / 4.0;
            let x: Vec<&DVector<f64>> = columns.iter().map(|c| &c[q].0).collect();
            let (x0, xs0, v_par) = &columns[2][q];
            let xt = first_difference(&x, h);
            let xtt_coord = second_difference(&x, h);
            let gamma = gamma_at(spec, x0)?;
            let xtt = xtt_coord + DVector::from_vec(gamma.contract(xt.as_slice(), xt.as_slice()));
            let v_of = |x: &DVector<f64>| x.rows(2, kv).into_owned();
            let a_terms: Vec<DVector<f64>> = columns
                .iter()
                .map(|c| DVector::from_element(1, quad(ha, &v_of(&c[q].1), &v_of(&c[q].1))))
                .collect();
            let g_terms: Vec<DVector<f64>> = columns
                .iter()
                .map(|c| DVector::from_element(1, quad(inner, &v_of(&c[q].1), &v_of(&c[q].1))))
                .collect();
            let tc = x0[0];
            let c = opts.q_coefficient;
            let qv = c * first_difference(&a_terms.iter().collect::<Vec<_>>(), h)[0]
                + c * f.value(tc) * first_difference(&g_terms.iter().collect::<Vec<_>>(), h)[0]
                + 2.0 * f.derivative(tc, 1) * quad(inner, &v_of(xs0), &v_of(xs0));
            qs.push(qv);
            let norm = xtt.amax();
            if q == 0 {
                out.xtt_start = out.xtt_start.max(norm);
            }
            if q == 4 {
                out.xtt_end = out.xtt_end.max(norm);
            }
            if (1..=3).contains(&q) {
                let r = &xtt + (v_par - &e_s * (s * qv / 2.0)) * (s - 1.0);
                out.intermediate = out.intermediate.max(r.amax());
            }
        }
        let qmax = qs.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
        let qmin = qs.iter().fold(f64::INFINITY, |m, &x| m.min(x));
        let qscale = qs.iter().fold(1.0f64, |m, x| m.max(x.abs()));
        out.q_spread = out.q_spread.max((qmax - qmin) / qscale);
        out.evaluated_times += 1;
    }
    Ok(out)
}
