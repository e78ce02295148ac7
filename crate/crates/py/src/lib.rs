//! Python module `relhartree`.
//!
//! Fields cross the boundary as flat row-major lists of complex numbers.
//! Records and reports come back as plain dicts (via JSON).

use std::path::PathBuf;

use num_complex::Complex64;
use pyo3::exceptions::{PyArithmeticError, PyValueError};
use pyo3::prelude::*;

use relhartree::analysis;
use relhartree::dynamics::{self, Probe};
use relhartree::harness::{self, Command, ExperimentConfig};
use relhartree::observables;
use relhartree::operators::{self, ZeroModePolicy};
use relhartree::{Error, Space};

fn err(e: Error) -> PyErr {
    if e.exit_code() == 2 {
        PyValueError::new_err(e.to_string())
    } else {
        PyArithmeticError::new_err(e.to_string())
    }
}

fn to_py(py: Python<'_>, v: &impl serde::Serialize) -> PyResult<Py<PyAny>> {
    let s = serde_json::to_string(v).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (s,))?.unbind())
}

#[pyclass(name = "Grid", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyGrid(relhartree::Grid);

#[pymethods]
impl PyGrid {
    #[new]
    fn new(n: usize, extent: f64) -> PyResult<Self> {
        relhartree::Grid::new(n, extent).map(PyGrid).map_err(err)
    }

    #[getter]
    fn n(&self) -> usize {
        self.0.n()
    }

    #[getter]
    fn extent(&self) -> f64 {
        self.0.extent()
    }

    #[getter]
    fn dx(&self) -> f64 {
        self.0.dx()
    }

    /// Frequencies along one axis in transform order.
    fn freqs(&self) -> Vec<f64> {
        self.0.freqs().to_vec()
    }

    /// Cell-centre coordinates along one axis.
    fn coords(&self) -> Vec<f64> {
        self.0.coords()
    }

    fn resolvable_band(&self) -> (f64, f64) {
        self.0.resolvable_band()
    }

    fn __repr__(&self) -> String {
        format!("Grid(n={}, extent={})", self.0.n(), self.0.extent())
    }
}

#[pyclass(name = "Field", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyField(relhartree::Field);

#[pymethods]
impl PyField {
    /// Physical-space field from `n*n` row-major values.
    #[new]
    fn new(grid: &PyGrid, values: Vec<Complex64>) -> PyResult<Self> {
        relhartree::Field::new(&grid.0, values, Space::Physical)
            .map(PyField)
            .map_err(err)
    }

    /// `amplitude * exp(-|x|^2 / (2 width^2))`.
    #[staticmethod]
    fn gaussian(grid: &PyGrid, width: f64, amplitude: f64) -> Self {
        PyField(relhartree::Field::from_fn(&grid.0, |x, y| {
            Complex64::new(amplitude * (-(x * x + y * y) / (2.0 * width * width)).exp(), 0.0)
        }))
    }

    fn values(&self) -> Vec<Complex64> {
        self.0.values().to_vec()
    }

    #[getter]
    fn grid(&self) -> PyGrid {
        PyGrid(self.0.grid().clone())
    }

    #[getter]
    fn spectral(&self) -> bool {
        self.0.space() == Space::Spectral
    }

    fn to_spectral(&self) -> PyResult<Self> {
        self.0.to_spectral().map(PyField).map_err(err)
    }

    fn to_physical(&self) -> PyResult<Self> {
        self.0.to_physical().map(PyField).map_err(err)
    }

    fn l2_norm(&self) -> f64 {
        self.0.l2_norm()
    }

    fn max_abs(&self) -> f64 {
        self.0.max_abs()
    }

    fn __sub__(&self, other: &PyField) -> PyResult<Self> {
        self.0.sub(&other.0).map(PyField).map_err(err)
    }

    fn __add__(&self, other: &PyField) -> PyResult<Self> {
        self.0.add(&other.0).map(PyField).map_err(err)
    }
}

#[pyclass(name = "PotentialParams", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyPotential(operators::PotentialParams);

#[pymethods]
impl PyPotential {
    /// `zero_mode` is `"zero"`, `"free_space"` or a float offset.
    #[new]
    #[pyo3(signature = (gamma, lam, mass=1.0, zero_mode=None))]
    fn new(gamma: f64, lam: f64, mass: f64, zero_mode: Option<&Bound<'_, PyAny>>) -> PyResult<Self> {
        let policy = match zero_mode {
            None => ZeroModePolicy::Zero,
            Some(z) => {
                if let Ok(c) = z.extract::<f64>() {
                    ZeroModePolicy::Value(c)
                } else {
                    match z.extract::<String>()?.as_str() {
                        "zero" => ZeroModePolicy::Zero,
                        "free_space" => ZeroModePolicy::FreeSpace,
                        other => return Err(PyValueError::new_err(format!("unknown zero mode {other}"))),
                    }
                }
            }
        };
        let p = operators::PotentialParams::new(gamma, lam)
            .and_then(|p| p.with_mass(mass))
            .map_err(err)?;
        Ok(PyPotential(p.with_zero_mode(policy)))
    }

    #[getter]
    fn gamma(&self) -> f64 {
        self.0.gamma()
    }

    #[getter]
    fn lam(&self) -> f64 {
        self.0.lambda()
    }

    #[getter]
    fn mass(&self) -> f64 {
        self.0.mass()
    }
}

#[pyfunction]
fn half_wave(f: &PyField, t: f64) -> PyResult<PyField> {
    operators::half_wave(&f.0, t).map(PyField).map_err(err)
}

#[pyfunction]
fn bessel_power(f: &PyField, s: f64) -> PyResult<PyField> {
    operators::bessel_power(&f.0, s).map(PyField).map_err(err)
}

#[pyfunction]
fn riesz_convolve(g: &PyField, p: &PyPotential) -> PyResult<PyField> {
    operators::riesz_convolve(&g.0, &p.0).map(PyField).map_err(err)
}

#[pyfunction]
fn hartree_term(u: &PyField, v: &PyField, w: &PyField, p: &PyPotential) -> PyResult<PyField> {
    operators::hartree_term(&u.0, &v.0, &w.0, &p.0).map(PyField).map_err(err)
}

#[pyfunction]
fn lp_project(f: &PyField, scale: f64) -> PyResult<PyField> {
    operators::lp_project(&f.0, scale).map(PyField).map_err(err)
}

#[pyfunction]
fn riesz_constant(gamma: f64) -> f64 {
    operators::riesz_constant(gamma)
}

#[pyfunction]
fn mass(u: &PyField) -> f64 {
    observables::mass(&u.0)
}

#[pyfunction]
fn energy(u: &PyField, p: &PyPotential) -> PyResult<f64> {
    observables::energy(&u.0, &p.0).map_err(err)
}

#[pyfunction]
fn sup_norm(u: &PyField) -> PyResult<f64> {
    observables::sup_norm(&u.0).map_err(err)
}

#[pyfunction]
fn sobolev_norm(u: &PyField, s: f64) -> PyResult<f64> {
    observables::sobolev_norm(&u.0, s).map_err(err)
}

#[pyfunction]
fn wkinf_norm(u: &PyField, k: u32) -> PyResult<f64> {
    observables::wkinf_norm(&u.0, k).map_err(err)
}

/// Power-law fit `y ~ C t^p` on the open window; returns a dict.
#[pyfunction]
fn fit_power_law(py: Python<'_>, times: Vec<f64>, ys: Vec<f64>, window: (f64, f64)) -> PyResult<Py<PyAny>> {
    let f = observables::fit_power_law(&times, &ys, [window.0, window.1]).map_err(err)?;
    to_py(py, &f)
}

/// Integrates the config (dotted-key text, `simulate` defaults) and returns
/// `{"times": [...], "<probe>": [...], ...}` for the given probe names.
#[pyfunction]
#[pyo3(signature = (config, probes=vec!["mass".to_string(), "energy".to_string()]))]
fn run(py: Python<'_>, config: &str, probes: Vec<String>) -> PyResult<Py<PyAny>> {
    let cfg = ExperimentConfig::from_str_for(Command::Simulate, config).map_err(err)?;
    let sim = cfg.sim_config().map_err(err)?;
    let probes = probes
        .iter()
        .map(|n| Probe::parse(n, &sim.potential))
        .collect::<Result<Vec<_>, _>>()
        .map_err(err)?;
    let out = py.detach(|| dynamics::run(&sim, &probes)).map_err(err)?;
    let mut map = serde_json::Map::new();
    map.insert("times".into(), out.series.times.clone().into());
    for (name, vals) in out.series.channels {
        map.insert(name, vals.into());
    }
    to_py(py, &map)
}

/// Runs a harness command and returns its record as a dict, with the
/// output directory under `"dir"`.
#[pyfunction]
#[pyo3(signature = (command, config="", out="relhartree-out"))]
fn run_command(py: Python<'_>, command: &str, config: &str, out: &str) -> PyResult<Py<PyAny>> {
    let command = Command::parse(command).map_err(err)?;
    let cfg = ExperimentConfig::from_str_for(command, config).map_err(err)?;
    let root = PathBuf::from(out);
    let o = py.detach(|| harness::run_command(command, &cfg, &root)).map_err(err)?;
    let mut v = serde_json::to_value(&o.record).map_err(|e| PyValueError::new_err(e.to_string()))?;
    v["dir"] = o.dir.display().to_string().into();
    v["passed"] = o.record.passed().into();
    to_py(py, &v)
}

#[pyfunction]
fn verify_null_structure(py: Python<'_>, seed: u64, n: usize) -> PyResult<Py<PyAny>> {
    let s = py
        .detach(|| analysis::verify_null_structure(&analysis::SamplerSpec::new(seed), n))
        .map_err(err)?;
    to_py(py, &s)
}

#[pyfunction]
fn verify_m_derivatives(py: Python<'_>, max_order: u32, seed: u64, n: usize) -> PyResult<Py<PyAny>> {
    let s = py
        .detach(|| analysis::verify_m_derivatives(max_order, &analysis::SamplerSpec::new(seed), n))
        .map_err(err)?;
    to_py(py, &s)
}

#[pyfunction]
fn verify_hls(py: Python<'_>, gamma: f64, n_fields: usize, seed: u64) -> PyResult<Py<PyAny>> {
    let s = py.detach(|| analysis::verify_hls(gamma, n_fields, seed)).map_err(err)?;
    to_py(py, &s)
}

#[pyfunction]
fn hls_constant(gamma: f64) -> f64 {
    analysis::hls_constant(gamma)
}

#[pyfunction]
fn verify_dispersive(py: Python<'_>, n_list: Vec<f64>, t_list: Vec<f64>, datum: &PyField) -> PyResult<Py<PyAny>> {
    let r = py
        .detach(|| analysis::verify_dispersive(&n_list, &t_list, &datum.0))
        .map_err(err)?;
    to_py(py, &r)
}

#[pyfunction]
#[pyo3(signature = (l, n1=1.0, n2=1.0, points=16, oversample=2))]
fn estimate_m1_norm(py: Python<'_>, l: f64, n1: f64, n2: f64, points: usize, oversample: usize) -> PyResult<f64> {
    let g = analysis::CmGrid {
        n_xi: points,
        n_eta: points,
        oversample,
    };
    py.detach(|| analysis::estimate_m1_norm(l, n1, n2, g)).map_err(err)
}

#[pymodule]
#[pyo3(name = "relhartree")]
fn relhartree_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGrid>()?;
    m.add_class::<PyField>()?;
    m.add_class::<PyPotential>()?;
    m.add_function(wrap_pyfunction!(half_wave, m)?)?;
    m.add_function(wrap_pyfunction!(bessel_power, m)?)?;
    m.add_function(wrap_pyfunction!(riesz_convolve, m)?)?;
    m.add_function(wrap_pyfunction!(hartree_term, m)?)?;
    m.add_function(wrap_pyfunction!(lp_project, m)?)?;
    m.add_function(wrap_pyfunction!(riesz_constant, m)?)?;
    m.add_function(wrap_pyfunction!(mass, m)?)?;
    m.add_function(wrap_pyfunction!(energy, m)?)?;
    m.add_function(wrap_pyfunction!(sup_norm, m)?)?;
    m.add_function(wrap_pyfunction!(sobolev_norm, m)?)?;
    m.add_function(wrap_pyfunction!(wkinf_norm, m)?)?;
    m.add_function(wrap_pyfunction!(fit_power_law, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(run_command, m)?)?;
    m.add_function(wrap_pyfunction!(verify_null_structure, m)?)?;
    m.add_function(wrap_pyfunction!(verify_m_derivatives, m)?)?;
    m.add_function(wrap_pyfunction!(verify_hls, m)?)?;
    m.add_function(wrap_pyfunction!(hls_constant, m)?)?;
    m.add_function(wrap_pyfunction!(verify_dispersive, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_m1_norm, m)?)?;
    Ok(())
}
