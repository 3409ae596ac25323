//! The verification suite: a registry of named checks, the JSON config that
//! selects them, and the report they produce.
//!
//! Checks are grouped into tasks that share expensive work (a curvature
//! pack, a family of ODE solutions). Tasks run in parallel on the current
//! rayon pool; records always come out in registry order.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::charforms::{
    classical_pfaffian, euler_form_at, generating_form_at, pfaffian, SkewTuple,
};
use crate::curvature::{kulkarni_nomizu, max_abs_diff, total_symmetry_defect, CurvaturePack};
use crate::dynamics::{
    completeness_variation_check, integrate_geodesic, pullback_residual, resolved_step,
    solve_e_ode, state_matrix_min_singular, GroupElement, ProfileCurve, VariationOptions,
    DEFAULT_STEP,
};
use crate::error::{GeomError, Result};
use crate::metric::{
    fd_jet_oracle, jet_discrepancy, ConstantCurvature, MetricProvider, RandomPerturbation,
    RoterSpec,
};
use crate::olszak::{check_structure, olszak_distribution, phi_and_recover_a};
use crate::profile::ScalarProfile;
use crate::report::{CheckRecord, Comparison};
use crate::tensor::{contract, signed_permutations, ChartPoint, FibreMetric};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Groups of checks computed together.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Task {
    Curvature,
    Olszak,
    Recovery,
    CharForms,
    Isometry,
    Geodesic,
    EOde,
    Variation,
    Oracle,
}

impl Task {
    pub const ALL: [Task; 9] = [
        Task::Curvature,
        Task::Olszak,
        Task::Recovery,
        Task::CharForms,
        Task::Isometry,
        Task::Geodesic,
        Task::EOde,
        Task::Variation,
        Task::Oracle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Task::Curvature => "curvature",
            Task::Olszak => "olszak",
            Task::Recovery => "recovery",
            Task::CharForms => "charforms",
            Task::Isometry => "isometry",
            Task::Geodesic => "geodesic",
            Task::EOde => "e_ode",
            Task::Variation => "variation",
            Task::Oracle => "oracle",
        }
    }
}

/// A registered check with its default tolerance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CheckInfo {
    pub name: &'static str,
    pub anchor: &'static str,
    pub tolerance: f64,
    pub comparison: Comparison,
    pub task: Task,
}

const fn check(
    name: &'static str,
    anchor: &'static str,
    tolerance: f64,
    comparison: Comparison,
    task: Task,
) -> CheckInfo {
    CheckInfo {
        name,
        anchor,
        tolerance,
        comparison,
        task,
    }
}

use Comparison::{Above, AtMost, Below};

/// Every check, in report order.
pub const CHECKS: &[CheckInfo] = &[
    check(
        "lemma_2_1_scalar",
        "scalar curvature vanishes",
        1e-9,
        Below,
        Task::Curvature,
    ),
    check(
        "ricci_roter_form",
        "Ricci tensor equals (2-n) f(t) dt⊗dt",
        1e-9,
        Below,
        Task::Curvature,
    ),
    check(
        "lemma_2_1_a",
        "R = W + g∧ρ/(n-2), relative to max|R|",
        1e-10,
        Below,
        Task::Curvature,
    ),
    check(
        "weyl_parallel",
        "max|∇W| relative to max|W|",
        1e-8,
        Below,
        Task::Curvature,
    ),
    check(
        "weyl_nonzero",
        "max|W| stays away from zero (not conformally flat)",
        1e-3,
        Above,
        Task::Curvature,
    ),
    check(
        "not_locally_symmetric",
        "max|∇R| at points where f' does not vanish",
        1e-6,
        Above,
        Task::Curvature,
    ),
    check(
        "lemma_2_1_b",
        "∇ρ is totally symmetric (Codazzi)",
        1e-8,
        Below,
        Task::Curvature,
    ),
    check(
        "lemma_2_2_i_dimension",
        "Olszak distribution has dimension 1 or 2",
        0.0,
        AtMost,
        Task::Olszak,
    ),
    check(
        "olszak_basis_angle",
        "Olszak distribution is spanned by ∂_s",
        1e-8,
        Below,
        Task::Olszak,
    ),
    check(
        "lemma_2_2_i_null",
        "Olszak distribution is null",
        1e-10,
        Below,
        Task::Olszak,
    ),
    check(
        "christoffel_s_exact",
        "g(∂_s,∂_s) and Γ^k_is vanish exactly",
        0.0,
        AtMost,
        Task::Olszak,
    ),
    check(
        "lemma_2_2_i_parallel",
        "Olszak distribution is parallel",
        1e-8,
        Below,
        Task::Olszak,
    ),
    check(
        "lemma_2_2_ii_inclusion_chain",
        "image of Ricci lies in D, and D is inside D-perp, Ker Ricci and Ker W",
        1e-9,
        Below,
        Task::Olszak,
    ),
    check(
        "lemma_2_2_iii",
        "W and R vanish on pairs of vectors from D-perp",
        1e-9,
        Below,
        Task::Olszak,
    ),
    check(
        "lemma_7_1_iv_recover_a",
        "A recovered from W(·,u,u,·) matches the spec, relative",
        1e-6,
        Below,
        Task::Recovery,
    ),
    check(
        "phi_norm_constant",
        "spread of the normalization |tr A²|^(-1/4) over points",
        1e-7,
        Below,
        Task::Recovery,
    ),
    check(
        "lemma_3_1_common_kernel",
        "Pfaffian of skew operators with a common kernel vanishes",
        1e-10,
        Below,
        Task::CharForms,
    ),
    check(
        "lemma_3_2_euler",
        "Euler form vanishes",
        1e-8,
        Below,
        Task::CharForms,
    ),
    check(
        "lemma_3_2_generating",
        "first generating form vanishes",
        1e-8,
        Below,
        Task::CharForms,
    ),
    check(
        "euler_nontrivial_guard",
        "Euler form of the round sphere is nonzero",
        1e-6,
        Above,
        Task::CharForms,
    ),
    check(
        "generating_nontrivial_guard",
        "generating form of a perturbed flat metric is nonzero",
        1e-4,
        Above,
        Task::CharForms,
    ),
    check(
        "lemma_7_1_iii",
        "group elements act by isometries (pullback residual)",
        1e-7,
        Below,
        Task::Isometry,
    ),
    check(
        "group_associativity",
        "(g1 g2) x = g1 (g2 x) and (g1 g2) g3 = g1 (g2 g3)",
        1e-8,
        Below,
        Task::Isometry,
    ),
    check(
        "geodesic_conservation",
        "g(x',x') and g(x',∂_s) are conserved along geodesics",
        1e-7,
        Below,
        Task::Geodesic,
    ),
    check(
        "remark_6_4_t_affine",
        "t is affine along geodesics",
        1e-7,
        Below,
        Task::Geodesic,
    ),
    check(
        "geodesic_richardson",
        "geodesic endpoints agree under step halving",
        1e-7,
        Below,
        Task::Geodesic,
    ),
    check(
        "e_ode_residual",
        "second differences of u match f u + A u",
        1e-6,
        Below,
        Task::EOde,
    ),
    check(
        "e_ode_wronskian",
        "<u',w> - <u,w'> is constant",
        1e-8,
        Below,
        Task::EOde,
    ),
    check(
        "e_ode_dimension",
        "2(n-2) solutions stay independent (smallest singular value)",
        1e-6,
        Above,
        Task::EOde,
    ),
    check(
        "lemma_6_2_xtt",
        "t-curves of the variation at s = 1 are geodesics",
        5e-3,
        Below,
        Task::Variation,
    ),
    check(
        "lemma_6_2_xtt_intermediate",
        "x_tt + (s-1)[v - s Q(x_s) u/4] vanishes along the variation",
        5e-3,
        Below,
        Task::Variation,
    ),
    check(
        "lemma_6_2_q_constant",
        "Q(x_s) does not depend on s",
        5e-3,
        Below,
        Task::Variation,
    ),
    check(
        "jet_fd_oracle",
        "analytic metric jets match finite differences",
        1e-6,
        Below,
        Task::Oracle,
    ),
    check(
        "const_curvature_scalar",
        "scalar curvature n(n-1)K on constant curvature, relative",
        1e-8,
        Below,
        Task::Oracle,
    ),
    check(
        "const_curvature_weyl",
        "Weyl tensor vanishes on constant curvature",
        1e-9,
        Below,
        Task::Oracle,
    ),
    check(
        "brute_force_oracles",
        "contraction loops, permutation sums and cofactor Pfaffians agree",
        1e-12,
        Below,
        Task::Oracle,
    ),
];

pub fn check_info(name: &str) -> Option<&'static CheckInfo> {
    CHECKS.iter().find(|c| c.name == name)
}

/// Sampling ranges for `t`, `s` and every `v` coordinate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointBox {
    pub t: [f64; 2],
    pub s: [f64; 2],
    pub v: [f64; 2],
}

impl Default for PointBox {
    fn default() -> Self {
        Self {
            t: [-3.0, 3.0],
            s: [-1.0, 1.0],
            v: [-1.0, 1.0],
        }
    }
}

impl PointBox {
    fn validate(&self) -> Result<()> {
        for (name, r) in [("t", self.t), ("s", self.s), ("v", self.v)] {
            if !(r[0].is_finite() && r[1].is_finite() && r[0] < r[1]) {
                return Err(GeomError::Config(format!(
                    "point_box.{name} must be a finite range [lo, hi] with lo < hi"
                )));
            }
        }
        Ok(())
    }

    pub fn sample(&self, n: usize, rng: &mut ChaCha8Rng) -> ChartPoint {
        let mut c = Vec::with_capacity(n);
        c.push(rng.gen_range(self.t[0]..self.t[1]));
        c.push(rng.gen_range(self.s[0]..self.s[1]));
        for _ in 2..n {
            c.push(rng.gen_range(self.v[0]..self.v[1]));
        }
        ChartPoint::new(c)
    }
}

fn default_samples() -> usize {
    20
}

fn all_checks() -> Vec<String> {
    CHECKS.iter().map(|c| c.name.to_string()).collect()
}

pub const MAX_SAMPLES: usize = 10_000;

/// The JSON configuration of a verification run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteConfig {
    pub spec: RoterSpec,
    #[serde(default = "default_samples")]
    pub sample_count: usize,
    #[serde(default)]
    pub point_box: PointBox,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
    #[serde(default = "all_checks")]
    pub checks: Vec<String>,
}

impl SuiteConfig {
    /// A config running every check on `spec`.
    pub fn new(spec: RoterSpec, sample_count: usize, seed: u64) -> Self {
        Self {
            spec,
            sample_count,
            point_box: PointBox::default(),
            seed,
            tolerances: BTreeMap::new(),
            checks: all_checks(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let config: SuiteConfig =
            serde_json::from_str(text).map_err(|e| GeomError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sample_count == 0 || self.sample_count > MAX_SAMPLES {
            return Err(GeomError::Config(format!(
                "sample_count must lie in 1..={MAX_SAMPLES}"
            )));
        }
        self.point_box.validate()?;
        for name in &self.checks {
            if check_info(name).is_none() {
                return Err(GeomError::Config(format!("unknown check `{name}`")));
            }
        }
        for (name, tol) in &self.tolerances {
            if check_info(name).is_none() {
                return Err(GeomError::Config(format!(
                    "tolerance override for unknown check `{name}`"
                )));
            }
            if !tol.is_finite() || *tol < 0.0 {
                return Err(GeomError::Config(format!(
                    "tolerance for `{name}` must be finite and non-negative"
                )));
            }
        }
        Ok(())
    }

    pub fn tolerance(&self, info: &CheckInfo) -> f64 {
        self.tolerances
            .get(info.name)
            .copied()
            .unwrap_or(info.tolerance)
    }

    /// The sampled points, determined by `seed` alone.
    pub fn points(&self) -> Vec<ChartPoint> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        (0..self.sample_count)
            .map(|_| self.point_box.sample(self.spec.n(), &mut rng))
            .collect()
    }
}

/// Counts over the records of a report.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Summary {
    pub total: usize,
    pub passed: usize,
    pub failed: usize,
    pub numerical_abort: bool,
    pub all_passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub toolkit: String,
    pub version: String,
    pub config: SuiteConfig,
    pub records: Vec<CheckRecord>,
    pub summary: Summary,
}

impl VerificationReport {
    pub fn to_json(&self) -> String {
        crate::json::to_canonical_json(self).expect("report serializes")
    }

    pub fn record(&self, name: &str) -> Option<&CheckRecord> {
        self.records.iter().find(|r| r.name == name)
    }
}

/// One residual for a named check, before tolerances are applied.
#[derive(Clone, Debug, PartialEq)]
struct Measurement {
    name: &'static str,
    residual: f64,
    note: Option<String>,
}

fn measure(name: &'static str, residual: f64) -> Measurement {
    Measurement {
        name,
        residual,
        note: None,
    }
}

fn measure_note(name: &'static str, residual: f64, note: impl Into<String>) -> Measurement {
    Measurement {
        name,
        residual,
        note: Some(note.into()),
    }
}

/// Output of a task: measurements, or the error that stopped it.
type TaskResult = std::result::Result<Vec<Measurement>, GeomError>;

fn fnv1a(s: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in s.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Seed used by `task` for its own random draws.
pub fn task_seed(seed: u64, task: Task) -> u64 {
    seed ^ fnv1a(task.name())
}

struct Ctx<'a> {
    config: &'a SuiteConfig,
    points: Vec<ChartPoint>,
}

impl Ctx<'_> {
    fn spec(&self) -> &RoterSpec {
        &self.config.spec
    }

    fn rng(&self, task: Task) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(task_seed(self.config.seed, task))
    }
}

/// Runs the configured checks.
pub fn run_suite(config: &SuiteConfig) -> Result<VerificationReport> {
    config.validate()?;
    let ctx = Ctx {
        config,
        points: config.points(),
    };
    let wanted: Vec<&CheckInfo> = CHECKS
        .iter()
        .filter(|c| config.checks.iter().any(|n| n == c.name))
        .collect();
    let tasks: Vec<Task> = Task::ALL
        .iter()
        .copied()
        .filter(|t| wanted.iter().any(|c| c.task == *t))
        .collect();
    let results: Vec<(Task, TaskResult)> =
        tasks.par_iter().map(|&t| (t, run_task(&ctx, t))).collect();

    let mut numerical_abort = false;
    let mut records = Vec::with_capacity(wanted.len());
    for info in wanted {
        let tol = config.tolerance(info);
        let (_, result) = results
            .iter()
            .find(|(t, _)| *t == info.task)
            .expect("task ran");
        let record = match result {
            Ok(ms) => {
                let mine: Vec<&Measurement> = ms.iter().filter(|m| m.name == info.name).collect();
                if mine.is_empty() {
                    CheckRecord::failed(
                        info.name,
                        info.anchor,
                        tol,
                        info.comparison,
                        "no measurement produced",
                    )
                } else {
                    let worst = worst_measurement(&mine, info.comparison);
                    if !worst.residual.is_finite() {
                        numerical_abort = true;
                    }
                    let mut r = CheckRecord::new(
                        info.name,
                        info.anchor,
                        worst.residual,
                        tol,
                        info.comparison,
                    );
                    r.note = worst.note.clone();
                    r
                }
            }
            Err(e) => {
                if matches!(e, GeomError::Numerical(_)) {
                    numerical_abort = true;
                }
                CheckRecord::failed(info.name, info.anchor, tol, info.comparison, e.to_string())
            }
        };
        records.push(record);
    }
    let passed = records.iter().filter(|r| r.passed).count();
    let summary = Summary {
        total: records.len(),
        passed,
        failed: records.len() - passed,
        numerical_abort,
        all_passed: passed == records.len(),
    };
    Ok(VerificationReport {
        toolkit: "ecsw".into(),
        version: VERSION.into(),
        config: config.clone(),
        records,
        summary,
    })
}

fn worst_measurement<'a>(ms: &[&'a Measurement], cmp: Comparison) -> &'a Measurement {
    let mut worst = ms[0];
    for &m in &ms[1..] {
        if worst.residual.is_nan() {
            break;
        }
        let worse = m.residual.is_nan()
            || match cmp {
                Comparison::Above => m.residual < worst.residual,
                _ => m.residual > worst.residual,
            };
        if worse {
            worst = m;
        }
    }
    worst
}

fn run_task(ctx: &Ctx, task: Task) -> TaskResult {
    match task {
        Task::Curvature => curvature_task(ctx),
        Task::Olszak => olszak_task(ctx),
        Task::Recovery => recovery_task(ctx),
        Task::CharForms => charforms_task(ctx),
        Task::Isometry => isometry_task(ctx),
        Task::Geodesic => geodesic_task(ctx),
        Task::EOde => e_ode_task(ctx),
        Task::Variation => variation_task(ctx),
        Task::Oracle => oracle_task(ctx),
    }
}

/// Curvature pack with a NaN/overflow guard.
pub fn finite_pack(
    provider: &dyn MetricProvider,
    p: &ChartPoint,
    order: u8,
) -> Result<CurvaturePack> {
    let jet = provider.jet(p, order)?;
    if jet.has_non_finite() {
        return Err(GeomError::Numerical(format!(
            "non-finite metric jet at {:?}",
            p.coords()
        )));
    }
    let pack = CurvaturePack::from_jet(&jet)?;
    if pack.has_non_finite() {
        return Err(GeomError::Numerical(format!(
            "non-finite curvature at {:?}",
            p.coords()
        )));
    }
    Ok(pack)
}

fn collect<T: Send>(items: Vec<Result<T>>) -> Result<Vec<T>> {
    items.into_iter().collect()
}

fn curvature_task(ctx: &Ctx) -> TaskResult {
    let spec = ctx.spec();
    let n = spec.n();
    let per_point = collect(
        ctx.points
            .par_iter()
            .map(|p| -> Result<Vec<Measurement>> {
                let pack = finite_pack(spec, p, 3)?;
                let d = pack.derivatives()?;
                let f = spec.f().value(p.t());
                let mut ricci_err = 0.0f64;
                for i in 0..n {
                    for j in 0..n {
                        let want = if i == 0 && j == 0 {
                            (2.0 - n as f64) * f
                        } else {
                            0.0
                        };
                        ricci_err = ricci_err.max((pack.ricci.get(&[i, j]) - want).abs());
                    }
                }
                let kn = kulkarni_nomizu(&pack.metric, &pack.ricci)?.scale(1.0 / (n as f64 - 2.0));
                let decomposition =
                    max_abs_diff(&pack.riemann04, &pack.weyl.add(&kn)?) / pack.riemann04.max_abs();
                let w = pack.weyl.max_abs();
                let mut out = vec![
                    measure("lemma_2_1_scalar", pack.scalar.abs()),
                    measure("ricci_roter_form", ricci_err),
                    measure("lemma_2_1_a", decomposition),
                    measure("weyl_parallel", d.nabla_weyl.max_abs() / w),
                    measure("weyl_nonzero", w),
                    measure("lemma_2_1_b", total_symmetry_defect(&d.nabla_ricci)),
                ];
                if spec.f().derivative(p.t(), 1).abs() > 1e-2 {
                    out.push(measure("not_locally_symmetric", d.nabla_riemann.max_abs()));
                }
                Ok(out)
            })
            .collect(),
    )?;
    let mut out: Vec<Measurement> = per_point.into_iter().flatten().collect();
    if !out.iter().any(|m| m.name == "not_locally_symmetric") {
        out.push(measure_note(
            "not_locally_symmetric",
            0.0,
            "no sampled point has |f'| > 1e-2",
        ));
    }
    Ok(out)
}

fn olszak_task(ctx: &Ctx) -> TaskResult {
    let spec = ctx.spec();
    let n = spec.n();
    let per_point = collect(
        ctx.points
            .par_iter()
            .map(|p| -> Result<Vec<Measurement>> {
                let pack = finite_pack(spec, p, 2)?;
                let db = olszak_distribution(&pack.weyl, &pack.metric, p)?;
                if db.degenerate {
                    return Ok(vec![measure_note(
                        "lemma_2_2_i_dimension",
                        1.0,
                        "Weyl tensor vanishes at a sampled point",
                    )]);
                }
                let mut out: Vec<Measurement> = check_structure(&db, &pack, spec)
                    .into_iter()
                    .filter_map(|r| {
                        let info = check_info(&r.name)?;
                        Some(Measurement {
                            name: info.name,
                            residual: r.residual,
                            note: r.note,
                        })
                    })
                    .collect();
                let angle = db
                    .basis_d
                    .iter()
                    .map(|b| {
                        let mut perp = b / b.norm();
                        perp[1] = 0.0;
                        perp.norm()
                    })
                    .fold(0.0f64, f64::max);
                out.push(measure("olszak_basis_angle", angle));
                let mut exact = pack.metric.get(&[1, 1]).abs();
                for k in 0..n {
                    for i in 0..n {
                        exact = exact.max(pack.christoffel.get(k, i, 1).abs());
                    }
                }
                out.push(measure("christoffel_s_exact", exact));
                Ok(out)
            })
            .collect(),
    )?;
    Ok(per_point.into_iter().flatten().collect())
}

fn recovery_task(ctx: &Ctx) -> TaskResult {
    let spec = ctx.spec();
    let results = collect(
        ctx.points
            .par_iter()
            .map(|p| -> Result<(f64, f64)> {
                let pack = finite_pack(spec, p, 2)?;
                let db = olszak_distribution(&pack.weyl, &pack.metric, p)?;
                let (phi, a) = phi_and_recover_a(&pack, &db, spec)?;
                Ok(((a - spec.a()).amax() / spec.a().amax(), phi.norm_factor))
            })
            .collect(),
    )?;
    let mut out: Vec<Measurement> = results
        .iter()
        .map(|(e, _)| measure("lemma_7_1_iv_recover_a", *e))
        .collect();
    let lo = results.iter().fold(f64::INFINITY, |m, r| m.min(r.1));
    let hi = results.iter().fold(f64::NEG_INFINITY, |m, r| m.max(r.1));
    out.push(measure_note(
        "phi_norm_constant",
        hi - lo,
        format!("norm factor {lo:.12e}"),
    ));
    Ok(out)
}

fn random_vectors(rng: &mut ChaCha8Rng, count: usize, n: usize) -> Vec<DVector<f64>> {
    (0..count)
        .map(|_| DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0)))
        .collect()
}

fn coordinate_basis(n: usize) -> Vec<DVector<f64>> {
    (0..n)
        .map(|i| DVector::from_fn(n, |r, _| if r == i { 1.0 } else { 0.0 }))
        .collect()
}

/// Skew-adjoint operators for `fibre` all annihilating a random vector.
fn common_kernel_tuple(
    rng: &mut ChaCha8Rng,
    fibre: &FibreMetric,
    count: usize,
) -> Result<SkewTuple> {
    let m = fibre.dim();
    let x = DVector::from_fn(m, |_, _| rng.gen_range(-1.0..1.0));
    let proj = DMatrix::identity(m, m) - &x * x.transpose() / x.norm_squared();
    let ops = (0..count)
        .map(|_| {
            let k = DMatrix::from_fn(m, m, |_, _| rng.gen_range(-1.0..1.0));
            fibre.inverse() * (&proj * (&k - k.transpose()) * &proj)
        })
        .collect();
    SkewTuple::new(fibre.clone(), ops, 1.0)
}

fn random_fibre(rng: &mut ChaCha8Rng, m: usize) -> Result<FibreMetric> {
    let diag: Vec<f64> = (0..m)
        .map(|_| {
            let mag = rng.gen_range(0.5..2.0);
            if rng.gen_bool(0.3) {
                -mag
            } else {
                mag
            }
        })
        .collect();
    FibreMetric::diagonal(&diag)
}

fn charforms_task(ctx: &Ctx) -> TaskResult {
    let spec = ctx.spec();
    let n = spec.n();
    let mut rng = ctx.rng(Task::CharForms);
    let mut out = Vec::new();

    for _ in 0..200 {
        let m = 2 * rng.gen_range(1..=3usize);
        let fibre = random_fibre(&mut rng, m)?;
        let st = common_kernel_tuple(&mut rng, &fibre, m / 2)?;
        out.push(measure("lemma_3_1_common_kernel", pfaffian(&st).abs()));
    }

    let draws: Vec<(Vec<DVector<f64>>, Vec<DVector<f64>>)> = ctx
        .points
        .iter()
        .map(|_| {
            (
                random_vectors(&mut rng, n, n),
                random_vectors(&mut rng, 4, n),
            )
        })
        .collect();
    let per_point = collect(
        ctx.points
            .par_iter()
            .zip(draws.par_iter())
            .map(|(p, (ve, vg))| -> Result<Vec<Measurement>> {
                let pack = finite_pack(spec, p, 2)?;
                let mut m = Vec::new();
                if n.is_multiple_of(2) {
                    m.push(measure("lemma_3_2_euler", euler_form_at(&pack, ve)?.abs()));
                }
                m.push(measure(
                    "lemma_3_2_generating",
                    generating_form_at(&pack, 1, vg)?.abs(),
                ));
                Ok(m)
            })
            .collect(),
    )?;
    out.extend(per_point.into_iter().flatten());
    if n % 2 == 1 {
        out.push(measure_note(
            "lemma_3_2_euler",
            0.0,
            "odd dimension: the Euler form vanishes identically",
        ));
    }

    // non-triviality guards on fixtures, coordinate basis, points shrunk
    // towards the origin
    let sphere = ConstantCurvature::new(1.0, 4)?;
    let perturbed = RandomPerturbation::new(task_seed(ctx.config.seed, Task::CharForms), 0.5, 4)?;
    let basis = coordinate_basis(4);
    for p in ctx.points.iter().take(5) {
        let q = ChartPoint::new(p.coords().iter().take(4).map(|c| 0.25 * c).collect());
        let q = if q.dim() < 4 {
            ChartPoint::new(vec![0.1, 0.2, -0.1, 0.05])
        } else {
            q
        };
        let e = euler_form_at(&finite_pack(&sphere, &q, 2)?, &basis)?;
        out.push(measure("euler_nontrivial_guard", e.abs()));
        let g = generating_form_at(&finite_pack(&perturbed, &q, 2)?, 1, &basis)?;
        out.push(measure("generating_nontrivial_guard", g.abs()));
    }
    Ok(out)
}

/// Time span covering the sampling box and its translates by up to two
/// periods, so actions and compositions stay inside sampled data.
fn group_span(ctx: &Ctx) -> (f64, f64) {
    let period = ctx.spec().f().period().unwrap_or(0.0);
    let b = &ctx.config.point_box;
    (
        (b.t[0] - period).min(0.0) - 0.5,
        (b.t[1] + 2.0 * period).max(0.0) + 0.5,
    )
}

fn random_element(
    ctx: &Ctx,
    rng: &mut ChaCha8Rng,
    p: f64,
    span: (f64, f64),
) -> Result<GroupElement> {
    let k = ctx.spec().n() - 2;
    let u0 = DVector::from_fn(k, |_, _| rng.gen_range(-0.3..0.3));
    let ud0 = DVector::from_fn(k, |_, _| rng.gen_range(-0.3..0.3));
    let q = rng.gen_range(-1.0..1.0);
    GroupElement::new(
        p,
        q,
        solve_e_ode(ctx.spec(), &u0, &ud0, span, DEFAULT_STEP)?,
    )
}

fn point_error(a: &ChartPoint, b: &ChartPoint) -> f64 {
    let scale = a
        .coords()
        .iter()
        .chain(b.coords())
        .fold(1.0f64, |m, c| m.max(c.abs()));
    a.coords()
        .iter()
        .zip(b.coords())
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
        / scale
}

fn element_error(a: &GroupElement, b: &GroupElement) -> Result<f64> {
    let (au, aud) = a.u.initial();
    let (bu, bud) = b.u.initial();
    let scale = [a.p, a.q, au.amax(), aud.amax()]
        .iter()
        .fold(1.0f64, |m, x| m.max(x.abs()));
    let err = (a.p - b.p)
        .abs()
        .max((a.q - b.q).abs())
        .max((au - bu).amax())
        .max((aud - bud).amax());
    Ok(err / scale)
}

fn isometry_task(ctx: &Ctx) -> TaskResult {
    let spec = ctx.spec();
    let mut rng = ctx.rng(Task::Isometry);
    let span = group_span(ctx);
    let period = spec.f().period();
    let count = ctx.config.sample_count.clamp(3, 20);
    let mut elements = Vec::with_capacity(count);
    for i in 0..count {
        let p = match period {
            Some(per) if i % 2 == 1 => per,
            _ => 0.0,
        };
        elements.push(random_element(ctx, &mut rng, p, span)?);
    }
    let points: Vec<&ChartPoint> = ctx.points.iter().take(20).collect();
    let per_element = collect(
        (0..count)
            .into_par_iter()
            .map(|i| -> Result<Vec<Measurement>> {
                let g1 = &elements[i];
                let g2 = &elements[(i + 1) % count];
                let g3 = &elements[(i + 2) % count];
                let mut out = Vec::new();
                let g12 = g1.compose(g2, span, DEFAULT_STEP)?;
                for x in &points {
                    out.push(measure("lemma_7_1_iii", pullback_residual(spec, g1, x)?));
                    let lhs = g12.act(x)?;
                    let rhs = g1.act(&g2.act(x)?)?;
                    out.push(measure("group_associativity", point_error(&lhs, &rhs)));
                }
                let left = g12.compose(g3, span, DEFAULT_STEP)?;
                let right = g1.compose(&g2.compose(g3, span, DEFAULT_STEP)?, span, DEFAULT_STEP)?;
                out.push(measure(
                    "group_associativity",
                    element_error(&left, &right)?,
                ));
                Ok(out)
            })
            .collect(),
    )?;
    Ok(per_element.into_iter().flatten().collect())
}

fn geodesic_task(ctx: &Ctx) -> TaskResult {
    let spec = ctx.spec();
    let n = spec.n();
    let mut rng = ctx.rng(Task::Geodesic);
    let starts: Vec<(ChartPoint, DVector<f64>)> = ctx
        .points
        .iter()
        .take(5)
        .map(|p| {
            let mut v = DVector::from_fn(n, |_, _| rng.gen_range(-0.5..0.5));
            v[0] = 1.0;
            (p.clone(), v)
        })
        .collect();
    let per_start = collect(
        starts
            .par_iter()
            .map(|(x0, v0)| -> Result<Vec<Measurement>> {
                let span = (0.0, 10.0);
                let t0 = x0.t();
                let h = resolved_step(
                    spec,
                    (t0.min(t0 + span.1 * v0[0]), t0.max(t0 + span.1 * v0[0])),
                );
                let fine = integrate_geodesic(spec, x0, v0, span, h)?;
                let coarse = integrate_geodesic(spec, x0, v0, span, 2.0 * h)?;
                let a = fine.positions().last().expect("samples");
                let b = coarse.positions().last().expect("samples");
                let scale = a.amax().max(1.0);
                Ok(vec![
                    measure(
                        "geodesic_conservation",
                        fine.norm_drift().max(fine.ds_drift()),
                    ),
                    measure("remark_6_4_t_affine", fine.t_affinity_deviation()),
                    measure("geodesic_richardson", (a - b).amax() / scale),
                ])
            })
            .collect(),
    )?;
    Ok(per_start.into_iter().flatten().collect())
}

fn e_ode_task(ctx: &Ctx) -> TaskResult {
    let spec = ctx.spec();
    let k = spec.n() - 2;
    let mut rng = ctx.rng(Task::EOde);
    let span = (-3.0, 3.0);
    let mut draw = || {
        (
            DVector::from_fn(k, |_, _| rng.gen_range(-1.0..1.0)),
            DVector::from_fn(k, |_, _| rng.gen_range(-1.0..1.0)),
        )
    };
    let data: Vec<_> = (0..2 * k).map(|_| draw()).collect();
    let sols = collect(
        data.par_iter()
            .map(|(u, ud)| solve_e_ode(spec, u, ud, span, DEFAULT_STEP))
            .collect(),
    )?;
    let mut out: Vec<Measurement> = sols
        .iter()
        .map(|s| measure("e_ode_residual", s.ode_residual()))
        .collect();
    for pair in sols.windows(2) {
        out.push(measure(
            "e_ode_wronskian",
            pair[0].wronskian_drift(&pair[1])?,
        ));
    }
    out.push(measure_note(
        "e_ode_dimension",
        state_matrix_min_singular(&sols, 100)?,
        format!("{} solutions", sols.len()),
    ));
    Ok(out)
}

/// A non-geodesic curve parametrized by `t`.
fn variation_curve(rng: &mut ChaCha8Rng, n: usize) -> Result<ProfileCurve> {
    let mut coords = vec![ScalarProfile::polynomial(&[0.0, 1.0])];
    coords.push(ScalarProfile::polynomial(&[
        rng.gen_range(-0.5..0.5),
        rng.gen_range(-0.5..0.5),
        rng.gen_range(-0.3..0.3),
    ]));
    for _ in 2..n {
        coords.push(ScalarProfile::Sinusoid {
            amplitude: rng.gen_range(0.2..0.6),
            frequency: rng.gen_range(0.5..1.5),
            phase: rng.gen_range(0.0..std::f64::consts::TAU),
        });
    }
    ProfileCurve::new(coords, (-1.0, 4.0))
}

fn variation_task(ctx: &Ctx) -> TaskResult {
    let spec = ctx.spec();
    let n = spec.n();
    let mut rng = ctx.rng(Task::Variation);
    let y = variation_curve(&mut rng, n)?;
    let mut draw = || {
        let mut w = DVector::from_fn(n, |_, _| rng.gen_range(-0.3..0.3));
        w[0] = 0.0;
        w
    };
    let data: Vec<(DVector<f64>, DVector<f64>)> = (0..5).map(|_| (draw(), draw())).collect();
    let outcomes = collect(
        data.par_iter()
            .map(|(w0, wd0)| {
                completeness_variation_check(
                    spec,
                    &y,
                    w0,
                    wd0,
                    (0.0, 3.0),
                    VariationOptions::default(),
                )
            })
            .collect(),
    )?;
    let mut out = Vec::new();
    for o in outcomes {
        out.push(measure_note(
            "lemma_6_2_xtt",
            o.xtt_end,
            format!("max |x_tt(t,0)| = {:.6e}", o.xtt_start),
        ));
        out.push(measure("lemma_6_2_xtt_intermediate", o.intermediate));
        out.push(measure("lemma_6_2_q_constant", o.q_spread));
    }
    Ok(out)
}

/// Largest disagreement among the independent evaluations of the same
/// quantities: a general contraction against explicit loops, the exterior
/// algebra Pfaffian against permutation sums and cofactor expansion.
fn brute_force_residual(rng: &mut ChaCha8Rng, pack: &CurvaturePack) -> Result<f64> {
    let n = pack.dim();
    let contracted = contract(&pack.riemann13, 1, 3, None)?;
    let mut worst = 0.0f64;
    for j in 0..n {
        for k in 0..n {
            let looped: f64 = (0..n).map(|i| pack.riemann13.get(&[j, i, k, i])).sum();
            worst = worst.max((contracted.get(&[j, k]) - looped).abs() / looped.abs().max(1.0));
            worst = worst.max((pack.ricci.get(&[j, k]) - looped).abs() / looped.abs().max(1.0));
        }
    }
    for m in 1..=3 {
        let dim = 2 * m;
        let fibre = random_fibre(rng, dim)?;
        let ops: Vec<DMatrix<f64>> = (0..m)
            .map(|_| {
                let k = DMatrix::from_fn(dim, dim, |_, _| rng.gen_range(-1.0..1.0));
                fibre.inverse() * (&k - k.transpose())
            })
            .collect();
        let st = SkewTuple::new(fibre.clone(), ops.clone(), 1.0)?;
        let zs = st.two_forms();
        let mut brute = 0.0;
        for (p, sign) in signed_permutations(dim) {
            brute += sign
                * (0..m)
                    .map(|j| zs[j][(p[2 * j], p[2 * j + 1])])
                    .product::<f64>();
        }
        brute /= 2f64.powi(m as i32) * fibre.volume_coefficient();
        let pf = pfaffian(&st);
        worst = worst.max((pf - brute).abs() / pf.abs().max(1.0));
        let same = SkewTuple::new(fibre.clone(), vec![ops[0].clone(); m], 1.0)?;
        let factorial: f64 = (1..=m).map(|k| k as f64).product();
        let cofactor = factorial * classical_pfaffian(&(ops[0].transpose() * fibre.matrix()))
            / fibre.volume_coefficient();
        let pf_same = pfaffian(&same);
        worst = worst.max((pf_same - cofactor).abs() / pf_same.abs().max(1.0));
    }
    Ok(worst)
}

fn oracle_task(ctx: &Ctx) -> TaskResult {
    let spec = ctx.spec();
    let n = spec.n();
    let mut rng = ctx.rng(Task::Oracle);
    let sphere = ConstantCurvature::new(1.0, n)?;
    let hyperbolic = ConstantCurvature::new(-0.5, n)?;
    let perturbed = RandomPerturbation::new(task_seed(ctx.config.seed, Task::Oracle), 0.3, n)?;
    let points: Vec<&ChartPoint> = ctx.points.iter().take(50).collect();
    let seeds: Vec<u64> = points.iter().map(|_| rng.gen()).collect();
    let per_point = collect(
        points
            .par_iter()
            .zip(seeds.par_iter())
            .map(|(p, &seed)| -> Result<Vec<Measurement>> {
                let small = ChartPoint::new(p.coords().iter().map(|c| 0.25 * c).collect());
                let mut out = Vec::new();
                let providers: [(&dyn MetricProvider, &ChartPoint); 3] =
                    [(spec, p), (&sphere, &small), (&perturbed, &small)];
                for (provider, q) in providers {
                    let exact = provider.jet(q, 3)?;
                    let fd = fd_jet_oracle(provider, q, 5e-3)?;
                    let worst = jet_discrepancy(&exact, &fd)
                        .iter()
                        .fold(0.0f64, |m, &x| m.max(x));
                    out.push(measure("jet_fd_oracle", worst));
                }
                for (k, provider) in [(1.0, &sphere), (-0.5, &hyperbolic)] {
                    let pack = finite_pack(provider, &small, 2)?;
                    let want = (n * (n - 1)) as f64 * k;
                    out.push(measure(
                        "const_curvature_scalar",
                        (pack.scalar - want).abs() / want.abs(),
                    ));
                    out.push(measure("const_curvature_weyl", pack.weyl.max_abs()));
                }
                let mut local = ChaCha8Rng::seed_from_u64(seed);
                let pack = finite_pack(spec, p, 2)?;
                out.push(measure(
                    "brute_force_oracles",
                    brute_force_residual(&mut local, &pack)?,
                ));
                Ok(out)
            })
            .collect(),
    )?;
    Ok(per_point.into_iter().flatten().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config_json(checks: &str) -> String {
        format!(
            r#"{{
  "spec": {{"n": 4, "inner": [[1, 0], [0, 1]], "a": [[1, 0], [0, -1]],
           "f": {{"family": "sinusoid", "amplitude": 1, "frequency": 1, "phase": 0}}}},
  "sample_count": 4,
  "seed": 7,
  "checks": {checks}
}}"#
        )
    }

    #[test]
    fn registry_names_unique() {
        for (i, a) in CHECKS.iter().enumerate() {
            assert!(
                CHECKS[i + 1..].iter().all(|b| b.name != a.name),
                "{}",
                a.name
            );
        }
    }

    #[test]
    fn unknown_names_rejected() {
        let err =
            SuiteConfig::from_json(&config_json(r#"["lemma_2_1_scalar", "bogus"]"#)).unwrap_err();
        assert!(err.to_string().contains("bogus"));
        let mut c = SuiteConfig::from_json(&config_json(r#"["lemma_2_1_scalar"]"#)).unwrap();
        c.tolerances.insert("nope".into(), 1.0);
        assert!(c.validate().is_err());
    }

    #[test]
    fn invalid_spec_is_config_error() {
        let text = config_json("[]").replace(r#"[[1, 0], [0, -1]]"#, r#"[[1, 0], [0, 1]]"#);
        let err = SuiteConfig::from_json(&text).unwrap_err();
        assert!(matches!(err, GeomError::Config(_)));
        assert!(err.to_string().contains("traceless"), "{err}");
    }

    #[test]
    fn points_depend_on_seed_only() {
        let c = SuiteConfig::from_json(&config_json("[]")).unwrap();
        assert_eq!(c.points(), c.points());
        let mut d = c.clone();
        d.seed = 8;
        assert_ne!(c.points(), d.points());
    }

    #[test]
    fn curvature_and_olszak_pass() {
        let c = SuiteConfig::from_json(&config_json(
            r#"["lemma_2_1_scalar", "ricci_roter_form", "lemma_2_1_a", "weyl_parallel", "lemma_2_1_b", "olszak_basis_angle", "christoffel_s_exact", "lemma_2_2_iii"]"#,
        ))
        .unwrap();
        let report = run_suite(&c).unwrap();
        assert_eq!(report.records.len(), 8);
        for r in &report.records {
            assert!(r.passed, "{r:?}");
        }
        assert!(report.summary.all_passed);
        assert_eq!(report.to_json(), run_suite(&c).unwrap().to_json());
    }

    #[test]
    fn override_recomputes_pass() {
        let mut c = SuiteConfig::from_json(&config_json(r#"["lemma_2_1_b"]"#)).unwrap();
        c.tolerances.insert("lemma_2_1_b".into(), 0.0);
        let r = run_suite(&c).unwrap();
        assert_eq!(r.records[0].tolerance, 0.0);
        assert_eq!(r.records[0].passed, r.records[0].residual < 0.0);
    }

    #[test]
    fn overflow_aborts() {
        let text = config_json(r#"["lemma_2_1_scalar"]"#).replace(
            r#"{"family": "sinusoid", "amplitude": 1, "frequency": 1, "phase": 0}"#,
            r#"{"family": "exponential", "amplitude": 1, "rate": 1000}"#,
        );
        let mut c = SuiteConfig::from_json(&text).unwrap();
        c.point_box.t = [1.0, 3.0];
        let r = run_suite(&c).unwrap();
        assert!(r.summary.numerical_abort, "{r:?}");
        assert!(!r.summary.all_passed);
    }
}
