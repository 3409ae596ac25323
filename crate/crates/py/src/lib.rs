//! Python bindings: `pyecsw.RoterSpec` and `pyecsw.verify`.

use nalgebra::{DMatrix, DVector};
use pyo3::exceptions::{PyArithmeticError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use ecsw::charforms::{euler_form_at, generating_form_at};
use ecsw::curvature::CurvaturePack;
use ecsw::dynamics::integrate_geodesic;
use ecsw::olszak::{olszak_distribution, phi_and_recover_a};
use ecsw::suite::{run_suite, SuiteConfig};
use ecsw::{ChartPoint, GeomError, MetricProvider, Tensor};

fn to_py(e: GeomError) -> PyErr {
    match e {
        GeomError::Numerical(m) => PyArithmeticError::new_err(m),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn matrix_of(t: &Tensor) -> PyResult<Vec<Vec<f64>>> {
    Ok(rows(&t.to_matrix().map_err(to_py)?))
}

/// A Roter metric `κ dt² + dt ds + ⟨·,·⟩` with `κ = f(t)⟨v,v⟩ + ⟨Av,v⟩`.
#[pyclass(name = "RoterSpec", frozen)]
struct PyRoterSpec {
    inner: ecsw::RoterSpec,
}

impl PyRoterSpec {
    fn point(&self, coords: Vec<f64>) -> PyResult<ChartPoint> {
        let p = ChartPoint::new(coords);
        p.check_dim(self.inner.n()).map_err(to_py)?;
        Ok(p)
    }

    fn pack(&self, coords: Vec<f64>, order: u8) -> PyResult<CurvaturePack> {
        let p = self.point(coords)?;
        CurvaturePack::at(&self.inner, &p, order).map_err(to_py)
    }
}

#[pymethods]
impl PyRoterSpec {
    /// `f_json` describes the profile, e.g. `{"family": "sinusoid", ...}`.
    #[new]
    fn new(n: usize, inner: Vec<Vec<f64>>, a: Vec<Vec<f64>>, f_json: &str) -> PyResult<Self> {
        let text = format!(
            "{{\"n\": {n}, \"inner\": {}, \"a\": {}, \"f\": {f_json}}}",
            serde_json::to_string(&inner).expect("numbers serialize"),
            serde_json::to_string(&a).expect("numbers serialize"),
        );
        Self::from_json(&text)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner: ecsw::RoterSpec =
            serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok(Self { inner })
    }

    fn to_json(&self) -> String {
        serde_json::to_string(&self.inner).expect("spec serializes")
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    fn kappa(&self, t: f64, v: Vec<f64>) -> PyResult<f64> {
        if v.len() + 2 != self.inner.n() {
            return Err(PyValueError::new_err("v must have n - 2 components"));
        }
        Ok(self.inner.kappa(t, &DVector::from_vec(v)))
    }

    fn metric(&self, point: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
        let p = self.point(point)?;
        Ok(rows(&self.inner.metric(&p).map_err(to_py)?))
    }

    /// Ricci tensor, scalar curvature and the largest Weyl component.
    fn curvature<'py>(&self, py: Python<'py>, point: Vec<f64>) -> PyResult<Bound<'py, PyDict>> {
        let pack = self.pack(point, 2)?;
        let out = PyDict::new(py);
        out.set_item("ricci", matrix_of(&pack.ricci)?)?;
        out.set_item("scalar", pack.scalar)?;
        out.set_item("weyl_max", pack.weyl.max_abs())?;
        out.set_item("riemann_max", pack.riemann04.max_abs())?;
        Ok(out)
    }

    /// Olszak distribution, and for a line distribution Φ and the recovered `A`.
    fn olszak<'py>(&self, py: Python<'py>, point: Vec<f64>) -> PyResult<Bound<'py, PyDict>> {
        let pack = self.pack(point.clone(), 2)?;
        let p = self.point(point)?;
        let db = olszak_distribution(&pack.weyl, &pack.metric, &p).map_err(to_py)?;
        let out = PyDict::new(py);
        out.set_item("dim_d", db.dim_d)?;
        let basis: Vec<Vec<f64>> = db
            .basis_d
            .iter()
            .map(|b| b.iter().copied().collect())
            .collect();
        out.set_item("basis_d", basis)?;
        if db.dim_d == 1 {
            let (phi, a) = phi_and_recover_a(&pack, &db, &self.inner).map_err(to_py)?;
            out.set_item("phi", rows(&phi.matrix))?;
            out.set_item("norm_factor", phi.norm_factor)?;
            out.set_item("a", rows(&a))?;
        }
        Ok(out)
    }

    /// Euler form (`None` for odd `n`) and first generating form on `vectors`.
    fn charforms(&self, point: Vec<f64>, vectors: Vec<Vec<f64>>) -> PyResult<(Option<f64>, f64)> {
        let n = self.inner.n();
        let pack = self.pack(point, 2)?;
        if vectors.len() != n || vectors.iter().any(|v| v.len() != n) {
            return Err(PyValueError::new_err("need n vectors of length n"));
        }
        let vs: Vec<DVector<f64>> = vectors.into_iter().map(DVector::from_vec).collect();
        let euler = if n.is_multiple_of(2) {
            Some(euler_form_at(&pack, &vs).map_err(to_py)?)
        } else {
            None
        };
        let generating = generating_form_at(&pack, 1, &vs[..4]).map_err(to_py)?;
        Ok((euler, generating))
    }

    /// Integrates a geodesic; returns times, positions and drift diagnostics.
    #[pyo3(signature = (x0, v0, span, step = ecsw::dynamics::DEFAULT_STEP))]
    fn geodesic<'py>(
        &self,
        py: Python<'py>,
        x0: Vec<f64>,
        v0: Vec<f64>,
        span: (f64, f64),
        step: f64,
    ) -> PyResult<Bound<'py, PyDict>> {
        let p = self.point(x0)?;
        if v0.len() != self.inner.n() {
            return Err(PyValueError::new_err("v0 must have n components"));
        }
        let traj = py
            .detach(|| integrate_geodesic(&self.inner, &p, &DVector::from_vec(v0), span, step))
            .map_err(to_py)?;
        let out = PyDict::new(py);
        out.set_item("times", traj.times())?;
        let pos: Vec<Vec<f64>> = traj
            .positions()
            .iter()
            .map(|x| x.iter().copied().collect())
            .collect();
        out.set_item("positions", pos)?;
        out.set_item("norm_drift", traj.norm_drift())?;
        out.set_item("ds_drift", traj.ds_drift())?;
        out.set_item("t_affinity_deviation", traj.t_affinity_deviation())?;
        Ok(out)
    }

    fn __repr__(&self) -> String {
        format!("RoterSpec({})", self.to_json())
    }
}

/// Runs the verification suite for a JSON config and returns the JSON report.
#[pyfunction]
fn verify(py: Python<'_>, config_json: &str) -> PyResult<String> {
    let config = SuiteConfig::from_json(config_json).map_err(to_py)?;
    let report = py.detach(|| run_suite(&config)).map_err(to_py)?;
    Ok(report.to_json())
}

#[pymodule]
fn pyecsw(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyRoterSpec>()?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
