//! Python bindings: connections, transport, holonomy, seminorms, trace and
//! extension, and the scenario runner behind the command-line tool.

use std::sync::Arc;

use gaugetrace::config::{preset_names, ScenarioConfig};
use gaugetrace::connection::ConnectionForm;
use gaugetrace::grid::{HalfSpaceGrid, QuadratureSpec};
use gaugetrace::lie::{Matrix, SkewMap, Vector};
use gaugetrace::registry::{ConnectionSpec, FieldSpec};
use gaugetrace::report::Report;
use gaugetrace::sobolev::{gagliardo_seminorm, weighted_w1p_energy, GagliardoParams};
use gaugetrace::trace_ext::{extend as extend_field, trace, ExtensionConfig};
use gaugetrace::transport::{holonomy_triangle, transport_segment};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn vector(v: Vec<f64>) -> Vector {
    Vector::from_vec(v)
}

fn rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn matrix(rows: &[Vec<f64>]) -> PyResult<Matrix> {
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(err("expected a square matrix"));
    }
    Ok(Matrix::from_fn(n, n, |i, j| rows[i][j]))
}

/// A connection form built from a registry spec.
#[pyclass(name = "Connection", frozen)]
struct PyConnection {
    spec: ConnectionSpec,
    inner: Arc<ConnectionForm>,
}

#[pymethods]
impl PyConnection {
    /// Builds from a JSON spec such as `{"family": "flux-abelian", "b": 1.0}` on ℝ^d with fiber ℝ^m.
    #[staticmethod]
    fn from_json(spec: &str, d: usize, m: usize) -> PyResult<Self> {
        let spec: ConnectionSpec = serde_json::from_str(spec).map_err(err)?;
        let inner = spec.build(d, m).map_err(err)?;
        Ok(PyConnection { spec, inner })
    }

    #[staticmethod]
    fn flux(b: f64, d: usize) -> PyResult<Self> {
        let spec = ConnectionSpec::FluxAbelian { b };
        let inner = spec.build(d, 2).map_err(err)?;
        Ok(PyConnection { spec, inner })
    }

    #[staticmethod]
    fn zero(d: usize, m: usize) -> PyResult<Self> {
        let spec = ConnectionSpec::Zero;
        let inner = spec.build(d, m).map_err(err)?;
        Ok(PyConnection { spec, inner })
    }

    #[getter]
    fn dim_domain(&self) -> usize {
        self.inner.dim_domain()
    }

    #[getter]
    fn dim_fiber(&self) -> usize {
        self.inner.dim_fiber()
    }

    #[getter]
    fn family(&self) -> &'static str {
        self.spec.name()
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.spec).map_err(err)
    }

    /// `Γ(x)[v]`.
    fn eval(&self, x: Vec<f64>, v: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
        Ok(rows(self.inner.eval(&vector(x), &vector(v)).map_err(err)?.matrix()))
    }

    /// `K(x)[v, w]`.
    fn curvature(&self, x: Vec<f64>, v: Vec<f64>, w: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
        Ok(rows(self.inner.curvature(&vector(x), &vector(v), &vector(w)).map_err(err)?.matrix()))
    }

    /// `R(x, y)`: transport along the segment from `y` to `x`.
    #[pyo3(signature = (x, y, steps = 256))]
    fn transport(&self, x: Vec<f64>, y: Vec<f64>, steps: usize) -> PyResult<Vec<Vec<f64>>> {
        Ok(rows(transport_segment(&self.inner, &vector(x), &vector(y), steps).map_err(err)?.matrix()))
    }

    /// Holonomy defect of the triangle `x, y, z` with its curvature bound.
    #[pyo3(signature = (x, y, z, steps = 256))]
    fn holonomy<'py>(&self, py: Python<'py>, x: Vec<f64>, y: Vec<f64>, z: Vec<f64>, steps: usize) -> PyResult<Bound<'py, PyDict>> {
        let h = holonomy_triangle(&self.inner, &vector(x), &vector(y), &vector(z), steps).map_err(err)?;
        let out = PyDict::new(py);
        out.set_item("defect", h.defect)?;
        out.set_item("bound", h.bound)?;
        out.set_item("sup_norm", h.sup_norm)?;
        out.set_item("area", h.area)?;
        out.set_item("holds", h.holds)?;
        Ok(out)
    }

    fn __repr__(&self) -> String {
        format!("Connection({}, d={}, m={})", self.spec.name(), self.inner.dim_domain(), self.inner.dim_fiber())
    }
}

/// Half-space quadrature grid `[−L, L]^n × [0, H]`.
#[pyclass(name = "Grid", frozen)]
struct PyGrid {
    inner: HalfSpaceGrid,
}

#[pymethods]
impl PyGrid {
    #[new]
    #[pyo3(signature = (n, half_width = 2.6, height = 1.5, n_lat = 32, n_vert = 32, grading = 2.0, r_excl = 1))]
    fn new(n: usize, half_width: f64, height: f64, n_lat: usize, n_vert: usize, grading: f64, r_excl: usize) -> PyResult<Self> {
        let spec = QuadratureSpec::new(n_lat, n_vert, grading, r_excl).map_err(err)?;
        Ok(PyGrid { inner: HalfSpaceGrid::new(n, half_width, height, spec).map_err(err)? })
    }

    fn lateral_axis(&self) -> Vec<f64> {
        self.inner.lateral_axis()
    }

    fn vertical_axis(&self) -> Vec<f64> {
        self.inner.vertical_axis()
    }
}

fn field_spec(text: &str) -> PyResult<FieldSpec> {
    serde_json::from_str(text).map_err(err)
}

/// Matrix exponential of a skew-symmetric matrix.
#[pyfunction]
fn expm(a: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
    let skew = SkewMap::new(matrix(&a)?).map_err(err)?;
    Ok(rows(gaugetrace::lie::expm(&skew).matrix()))
}

/// p-th power of the covariant Gagliardo seminorm of a boundary field.
/// Returns `(value, shell_correction, residual_bound)`.
#[pyfunction]
#[pyo3(signature = (connection, field, grid, p, s = None, steps = 64))]
fn seminorm(connection: &PyConnection, field: &str, grid: &PyGrid, p: f64, s: Option<f64>, steps: usize) -> PyResult<(f64, f64, f64)> {
    let params = match s {
        Some(s) => GagliardoParams::new(s, p),
        None => GagliardoParams::critical(p),
    }
    .map_err(err)?;
    let u = field_spec(field)?.build_boundary(grid.inner.n);
    let gamma_b = connection.inner.restrict_to_boundary().map_err(err)?;
    let r = gagliardo_seminorm(&u, &gamma_b, params, &grid.inner, steps).map_err(err)?;
    Ok((r.value, r.shell_correction, r.residual_bound))
}

/// Weighted energies `(∫‖D_ΓU‖^p z^α, ∫‖U‖^p z^α)` of a bulk field.
#[pyfunction]
fn energy(connection: &PyConnection, field: &str, grid: &PyGrid, p: f64, alpha: f64) -> PyResult<(f64, f64)> {
    let u = field_spec(field)?.build(grid.inner.n + 1);
    let e = weighted_w1p_energy(&u, &connection.inner, p, alpha, &grid.inner).map_err(err)?;
    Ok((e.grad, e.mass))
}

/// Boundary values of a bulk field at the grid's lateral nodes, node-major.
#[pyfunction]
fn trace_values(field: &str, grid: &PyGrid) -> PyResult<Vec<Vec<f64>>> {
    let u = Arc::new(field_spec(field)?.build(grid.inner.n + 1));
    let b = trace(u).map_err(err)?;
    let nodes = grid.inner.boundary_tensor();
    (0..nodes.len())
        .map(|a| b.value(&nodes.node(a)).map(|v| v.iter().copied().collect()).map_err(err))
        .collect()
}

/// Extension of a boundary field to the half-space grid. Returns node values as
/// a `(lateral nodes × vertical nodes) × m` nested list, lateral index outermost.
#[pyfunction]
#[pyo3(signature = (connection, field, grid, beta, p = 2.0, steps = 64))]
fn extend(connection: &PyConnection, field: &str, grid: &PyGrid, beta: f64, p: f64, steps: usize) -> PyResult<Vec<Vec<f64>>> {
    let u = field_spec(field)?.build_boundary(grid.inner.n);
    let cfg = ExtensionConfig {
        beta,
        params: GagliardoParams::critical(p).map_err(err)?,
        grid: grid.inner.clone(),
        steps,
    };
    let ext = extend_field(&u, &connection.inner, &cfg).map_err(err)?;
    Ok(ext.data.chunks(ext.dim_fiber).map(|c| c.to_vec()).collect())
}

#[pyfunction]
fn presets() -> Vec<&'static str> {
    preset_names()
}

/// Runs a subcommand (`transport`, `holonomy`, …, `suite`) on a preset or a TOML
/// scenario and returns the report as JSON.
#[pyfunction]
#[pyo3(signature = (command, preset = None, config = None, seed = None))]
fn run(py: Python<'_>, command: &str, preset: Option<&str>, config: Option<&str>, seed: Option<u64>) -> PyResult<String> {
    let mut cfg = match (preset, config) {
        (Some(name), None) => ScenarioConfig::preset(name),
        (None, Some(text)) => ScenarioConfig::parse(text),
        _ => return Err(err("pass exactly one of preset= or config=")),
    }
    .map_err(err)?;
    if let Some(seed) = seed {
        cfg = cfg.with_seed(seed);
    }
    let command = command.to_string();
    let report: Report = py.detach(move || gaugetrace::cli::run(&command, cfg)).map_err(err)?;
    report.to_json().map_err(err)
}

#[pymodule]
fn gaugetrace_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyConnection>()?;
    m.add_class::<PyGrid>()?;
    m.add_function(wrap_pyfunction!(expm, m)?)?;
    m.add_function(wrap_pyfunction!(seminorm, m)?)?;
    m.add_function(wrap_pyfunction!(energy, m)?)?;
    m.add_function(wrap_pyfunction!(trace_values, m)?)?;
    m.add_function(wrap_pyfunction!(extend, m)?)?;
    m.add_function(wrap_pyfunction!(presets, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    Ok(())
}
