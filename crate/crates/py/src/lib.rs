//! Python bindings: scenarios, transition profiles and the certification
//! sweep.  Build with `cargo build -p curvglue-py --release`; the cdylib in
//! `target/release` imports as `curvglue_py` (see `python/smoke_test.py`).

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use curvglue::bounds::{self, CertifyOptions, CMode, Functional};
use curvglue::collar::Side;
use curvglue::curvature::FrameSearch;
use curvglue::gluing;
use curvglue::profile;
use curvglue::scenarios;

fn err_to_py(e: curvglue::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_functional(name: &str) -> PyResult<Functional> {
    Functional::from_name(name)
        .ok_or_else(|| PyValueError::new_err(format!("unknown functional `{name}`")))
}

fn parse_side(side: &str) -> PyResult<Side> {
    match side {
        "m0" | "M0" | "0" => Ok(Side::M0),
        "m1" | "M1" | "1" => Ok(Side::M1),
        other => Err(PyValueError::new_err(format!(
            "side must be m0 or m1, got `{other}`"
        ))),
    }
}

/// A gluing scenario: two metrics in a shared boundary-normal chart.
#[pyclass(name = "Scenario")]
struct PyScenario {
    inner: scenarios::Scenario,
}

#[pymethods]
impl PyScenario {
    /// Load one of the built-in scenarios by name.
    #[staticmethod]
    fn builtin(name: &str) -> PyResult<Self> {
        Ok(PyScenario {
            inner: scenarios::builtin(name).map_err(err_to_py)?,
        })
    }

    /// Parse a scenario from config text.
    #[staticmethod]
    fn from_config(text: &str) -> PyResult<Self> {
        Ok(PyScenario {
            inner: scenarios::from_config(text).map_err(err_to_py)?,
        })
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name.clone()
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n
    }

    #[getter]
    fn width(&self) -> f64 {
        self.inner.collar.width()
    }

    #[getter]
    fn l_spectrum(&self) -> Vec<f64> {
        self.inner.metadata.l_spectrum.clone()
    }

    #[getter]
    fn smooth_across(&self) -> bool {
        self.inner.metadata.smooth_across
    }

    /// Declared lower bound for a functional, if any.
    fn kappa(&self, functional: &str) -> PyResult<Option<f64>> {
        Ok(self.inner.kappa_for(parse_functional(functional)?))
    }

    /// Metric coefficients of one side at a chart point.
    fn metric(&self, side: &str, point: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
        let field = self.inner.collar.side(parse_side(side)?);
        if point.len() != self.inner.n {
            return Err(PyValueError::new_err(format!(
                "point must have {} coordinates",
                self.inner.n
            )));
        }
        let g = field.coeff(&point);
        Ok((0..g.nrows())
            .map(|i| (0..g.ncols()).map(|j| g[(i, j)]).collect())
            .collect())
    }

    /// Christoffel symbols of one side at a point, indexed [k][i][j].
    fn christoffels(&self, side: &str, point: Vec<f64>) -> PyResult<Vec<Vec<Vec<f64>>>> {
        let field = self.inner.collar.side(parse_side(side)?);
        let gamma = curvglue::curvature::christoffels(field, &point).map_err(err_to_py)?;
        Ok(gamma
            .iter()
            .map(|m| {
                (0..m.nrows())
                    .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
                    .collect()
            })
            .collect())
    }

    /// Value of a curvature functional of one side at a point.
    #[pyo3(signature = (side, functional, point, seed = 42))]
    fn functional_value(
        &self,
        side: &str,
        functional: &str,
        point: Vec<f64>,
        seed: u64,
    ) -> PyResult<f64> {
        let field = self.inner.collar.side(parse_side(side)?);
        let search = FrameSearch {
            seed,
            ..FrameSearch::default()
        };
        bounds::evaluate_functional(parse_functional(functional)?, field, &point, &search)
            .map_err(err_to_py)
    }

    /// Interface identity and slack report: the curvature of the continued
    /// far-side metric against the assembled combination, and the margin
    /// above kappa.
    fn boundary_check(&self, kappa: f64) -> PyResult<(f64, f64)> {
        let report =
            gluing::check_boundary_inequality(&self.inner.collar, kappa).map_err(err_to_py)?;
        Ok((report.identity_error, report.min_slack))
    }

    fn __repr__(&self) -> String {
        format!(
            "Scenario(name='{}', n={}, width={})",
            self.inner.name,
            self.inner.n,
            self.inner.collar.width()
        )
    }
}

/// The transition profile (f, F, FF) for one delta.
#[pyclass(name = "Profile")]
struct PyProfile {
    inner: profile::BumpProfile,
}

#[pymethods]
impl PyProfile {
    #[new]
    #[pyo3(signature = (delta, blend_width = 0.05))]
    fn new(delta: f64, blend_width: f64) -> PyResult<Self> {
        Ok(PyProfile {
            inner: profile::build_bump(delta, blend_width).map_err(err_to_py)?,
        })
    }

    #[getter]
    fn delta(&self) -> f64 {
        self.inner.delta
    }

    #[getter]
    fn amplitude(&self) -> f64 {
        self.inner.amplitude
    }

    fn f(&self, x: f64) -> f64 {
        self.inner.f(x)
    }

    /// First antiderivative F(x).
    fn big_f(&self, x: f64) -> f64 {
        self.inner.big_f(x)
    }

    /// Second antiderivative FF(x).
    fn big_ff(&self, x: f64) -> f64 {
        self.inner.big_ff(x)
    }

    /// Worst violation per defining constraint.
    fn certify(&self) -> Vec<(String, f64)> {
        profile::certify(&self.inner, 10_000)
            .rows()
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect()
    }

    fn csv(&self, rows: usize) -> String {
        self.inner.dump_csv(rows)
    }
}

/// One certification row.
#[pyclass(name = "SweepRow", skip_from_py_object)]
#[derive(Clone)]
struct PySweepRow {
    #[pyo3(get)]
    delta: f64,
    #[pyo3(get)]
    h: f64,
    #[pyo3(get)]
    c: f64,
    #[pyo3(get)]
    eps_observed: f64,
    #[pyo3(get)]
    sup_dist: f64,
    #[pyo3(get)]
    decomp_residual: f64,
}

#[pymethods]
impl PySweepRow {
    fn __repr__(&self) -> String {
        format!(
            "SweepRow(delta={}, h={}, C={}, eps={:.3e}, sup_dist={:.3e})",
            self.delta, self.h, self.c, self.eps_observed, self.sup_dist
        )
    }
}

/// Result of a certification sweep.
#[pyclass(name = "CertifyResult")]
struct PyCertifyResult {
    #[pyo3(get)]
    scenario: String,
    #[pyo3(get)]
    functional: String,
    #[pyo3(get)]
    kappa: f64,
    #[pyo3(get)]
    passed: bool,
    #[pyo3(get)]
    rows: Vec<PySweepRow>,
    #[pyo3(get)]
    csv: String,
}

#[pymethods]
impl PyCertifyResult {
    fn __repr__(&self) -> String {
        format!(
            "CertifyResult(scenario='{}', functional='{}', passed={}, rows={})",
            self.scenario,
            self.functional,
            self.passed,
            self.rows.len()
        )
    }
}

/// Names of the built-in scenarios.
#[pyfunction]
fn builtin_names() -> Vec<String> {
    scenarios::BUILTIN_NAMES.iter().map(|s| s.to_string()).collect()
}

/// Run the certification sweep.
#[pyfunction]
#[pyo3(signature = (scenario, functional, kappa = None, deltas = None, hs = None, c = None, seed = 42))]
fn certify(
    scenario: &PyScenario,
    functional: &str,
    kappa: Option<f64>,
    deltas: Option<Vec<f64>>,
    hs: Option<Vec<f64>>,
    c: Option<f64>,
    seed: u64,
) -> PyResult<PyCertifyResult> {
    let f = parse_functional(functional)?;
    let opts = CertifyOptions {
        deltas: deltas.unwrap_or_else(|| vec![0.4, 0.2, 0.1]),
        hs,
        c_mode: c.map_or(CMode::Auto, CMode::Fixed),
        seed,
        kappa,
        per_axis: 2,
    };
    let res = bounds::certify(&scenario.inner, f, &opts).map_err(err_to_py)?;
    Ok(PyCertifyResult {
        scenario: res.scenario.clone(),
        functional: res.functional.name().to_string(),
        kappa: res.kappa,
        passed: res.passed,
        rows: res
            .rows
            .iter()
            .map(|r| PySweepRow {
                delta: r.delta,
                h: r.h,
                c: r.c,
                eps_observed: r.eps_observed,
                sup_dist: r.sup_dist,
                decomp_residual: r.decomp_residual,
            })
            .collect(),
        csv: res.to_csv(None),
    })
}

/// Gluing scenarios, curvature functionals and certification sweeps.
#[pymodule]
fn curvglue_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyScenario>()?;
    m.add_class::<PyProfile>()?;
    m.add_class::<PySweepRow>()?;
    m.add_class::<PyCertifyResult>()?;
    m.add_function(wrap_pyfunction!(builtin_names, m)?)?;
    m.add_function(wrap_pyfunction!(certify, m)?)?;
    Ok(())
}
