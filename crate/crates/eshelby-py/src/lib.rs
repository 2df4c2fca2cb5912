//! Python bindings: materials, obstacles, the construct/verify pipeline,
//! closed-form ellipsoid potentials and TI Green functions.
//!
//! Structured results cross the boundary as Python dicts built from the
//! same JSON the CLI writes.

use eshelby::cli::{self, RunConfig};
use eshelby::ellipsoid_potential::EllipsoidPose;
use eshelby::elliptic::{compute_i_integrals, EllipsoidAxes};
use eshelby::geometry::{read_csv, write_csv, VoxelRegion};
use eshelby::materials::{check_construction_constraints, scale_factors, validate_elastic_tensor, ElasticTensor};
use eshelby::obstacle::{eval_obstacle, ObstacleSpec};
use eshelby::verify::{ellipsoid_potential_closed_form, DensityPolynomial};
use eshelby::Error;
use nalgebra::Vector3;
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

create_exception!(eshelby_py, EshelbyError, PyException);

fn err(e: Error) -> PyErr {
    match e {
        Error::Domain(_) | Error::Parse(_) | Error::Unsupported(_) | Error::Singular(_) => {
            PyValueError::new_err(e.to_string())
        }
        _ => EshelbyError::new_err(e.to_string()),
    }
}

fn to_py<'py>(py: Python<'py>, v: &impl Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(v).map_err(|e| EshelbyError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn from_py<T: serde::de::DeserializeOwned>(py: Python<'_>, obj: &Bound<'_, PyAny>) -> PyResult<T> {
    let text: String = if let Ok(s) = obj.extract::<String>() {
        s
    } else {
        py.import("json")?.call_method1("dumps", (obj,))?.extract()?
    };
    serde_json::from_str(&text).map_err(|e| PyValueError::new_err(e.to_string()))
}

fn vec3(p: [f64; 3]) -> Vector3<f64> {
    Vector3::new(p[0], p[1], p[2])
}

/// Elastic stiffness tensor in Voigt form with a declared symmetry class.
#[pyclass(name = "ElasticTensor", module = "eshelby_py", frozen)]
struct PyElasticTensor {
    inner: ElasticTensor,
}

#[pymethods]
impl PyElasticTensor {
    /// Builds from a dict or JSON string with a `symmetry_class` key.
    #[staticmethod]
    fn from_json(py: Python<'_>, doc: &Bound<'_, PyAny>) -> PyResult<Self> {
        Ok(Self {
            inner: from_py(py, doc)?,
        })
    }

    #[staticmethod]
    fn isotropic(lam: f64, mu: f64) -> Self {
        Self {
            inner: ElasticTensor::isotropic(lam, mu),
        }
    }

    #[staticmethod]
    fn cubic(c11: f64, c12: f64, c44: f64) -> Self {
        Self {
            inner: ElasticTensor::cubic(c11, c12, c44),
        }
    }

    #[staticmethod]
    fn transversely_isotropic(c11: f64, c12: f64, c13: f64, c33: f64, c44: f64) -> Self {
        Self {
            inner: ElasticTensor::transversely_isotropic(c11, c12, c13, c33, c44),
        }
    }

    #[getter]
    fn symmetry_class(&self) -> String {
        self.inner.class().to_string()
    }

    /// 6×6 Voigt matrix as nested lists.
    fn voigt(&self) -> Vec<Vec<f64>> {
        let v = self.inner.voigt();
        (0..6).map(|i| (0..6).map(|j| v[(i, j)]).collect()).collect()
    }

    fn validate<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &validate_elastic_tensor(&self.inner))
    }

    fn construction_constraints<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &check_construction_constraints(&self.inner).map_err(err)?)
    }

    fn scale_factors<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &scale_factors(&self.inner).map_err(err)?)
    }

    /// Constants of the TI Green function (branch, v's, coefficients).
    fn ti_constants<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &eshelby::greens_ti::ti_constants(&self.inner).map_err(err)?)
    }

    /// Green function G(x) as a 3×3 nested list.
    fn green(&self, x: [f64; 3]) -> PyResult<Vec<Vec<f64>>> {
        let g = eshelby::greens_ti::green_ti(&self.inner, &vec3(x)).map_err(err)?;
        Ok((0..3).map(|i| (0..3).map(|j| g[(i, j)]).collect()).collect())
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(|e| EshelbyError::new_err(e.to_string()))
    }

    fn __repr__(&self) -> String {
        format!("ElasticTensor({})", self.inner.class())
    }
}

/// Occupied voxels on a regular lattice.
#[pyclass(name = "VoxelRegion", module = "eshelby_py", frozen)]
struct PyVoxelRegion {
    inner: VoxelRegion,
}

#[pymethods]
impl PyVoxelRegion {
    /// Voxelizes the axis-aligned ellipsoid with the given semi-axes on a
    /// centered cube of `n`³ voxels of spacing `h`.
    #[staticmethod]
    fn ellipsoid(axes: [f64; 3], n: usize, h: f64) -> PyResult<Self> {
        let inside = |x: &Vector3<f64>| (0..3).map(|k| (x[k] / axes[k]).powi(2)).sum::<f64>() <= 1.0;
        Ok(Self {
            inner: VoxelRegion::centered_cube(n, h, inside).map_err(err)?,
        })
    }

    #[staticmethod]
    #[pyo3(signature = (text, spacing=None))]
    fn from_csv(text: &str, spacing: Option<[f64; 3]>) -> PyResult<Self> {
        Ok(Self {
            inner: read_csv(text, spacing).map_err(err)?,
        })
    }

    fn to_csv(&self) -> PyResult<String> {
        let mut buf = Vec::new();
        write_csv(&self.inner, &mut buf).map_err(err)?;
        String::from_utf8(buf).map_err(|e| EshelbyError::new_err(e.to_string()))
    }

    fn count(&self) -> usize {
        self.inner.count()
    }

    fn volume(&self) -> f64 {
        self.inner.count() as f64 * self.inner.voxel_volume()
    }

    #[getter]
    fn spacing(&self) -> [f64; 3] {
        self.inner.spacing
    }

    fn centers(&self) -> Vec<[f64; 3]> {
        self.inner.centers().iter().map(|c| [c[0], c[1], c[2]]).collect()
    }

    fn components(&self) -> usize {
        eshelby::geometry::connected_components(&self.inner).count
    }

    fn __len__(&self) -> usize {
        self.inner.count()
    }

    fn __repr__(&self) -> String {
        format!("VoxelRegion(count={}, dims={:?})", self.inner.count(), self.inner.dims)
    }
}

/// Result of the obstacle solve: the raw coincidence set, the stretched
/// inclusion and the run summary.
#[pyclass(name = "Construction", module = "eshelby_py", frozen)]
struct PyConstruction {
    config: RunConfig,
    #[pyo3(get)]
    region: Py<PyVoxelRegion>,
    #[pyo3(get)]
    inclusion: Py<PyVoxelRegion>,
    summary: String,
}

#[pymethods]
impl PyConstruction {
    #[getter]
    fn summary<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        py.import("json")?.call_method1("loads", (&self.summary,))
    }

    /// Certifies the inclusion under the configured eigenstrain.
    fn verify<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let inclusion = self.inclusion.get().inner.clone();
        let cfg = self.config.clone();
        let outcome = py.detach(move || cli::verify_region(&cfg, &inclusion)).map_err(err)?;
        to_py(py, &outcome)
    }
}

/// Parses and validates a run configuration (dict or JSON string) and
/// returns it normalised as a dict.
#[pyfunction]
fn load_config<'py>(py: Python<'py>, config: &Bound<'py, PyAny>) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &parse_config(py, config)?)
}

fn parse_config(py: Python<'_>, config: &Bound<'_, PyAny>) -> PyResult<RunConfig> {
    let text: String = if let Ok(s) = config.extract::<String>() {
        s
    } else {
        py.import("json")?.call_method1("dumps", (config,))?.extract()?
    };
    RunConfig::from_json(&text).map_err(err)
}

/// Bundled configuration by name (`omega1` or `omega2`).
#[pyfunction]
fn preset<'py>(py: Python<'py>, name: &str) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &RunConfig::preset(name).map_err(err)?)
}

/// Runs obstacle → solver → extraction → stretch. Releases the GIL.
#[pyfunction]
#[pyo3(signature = (config, eps_coincidence=1e-4))]
fn construct(py: Python<'_>, config: &Bound<'_, PyAny>, eps_coincidence: f64) -> PyResult<PyConstruction> {
    let cfg = parse_config(py, config)?;
    let run_cfg = cfg.clone();
    let c = py
        .detach(move || cli::construct(&run_cfg, eps_coincidence))
        .map_err(err)?;
    let summary = serde_json::to_string(&c.summary).map_err(|e| EshelbyError::new_err(e.to_string()))?;
    Ok(PyConstruction {
        config: cfg,
        region: Py::new(py, PyVoxelRegion { inner: c.region })?,
        inclusion: Py::new(py, PyVoxelRegion { inner: c.inclusion })?,
        summary,
    })
}

/// Certifies a region (inclusion frame) under a config's eigenstrain.
#[pyfunction]
fn verify<'py>(py: Python<'py>, config: &Bound<'py, PyAny>, region: &PyVoxelRegion) -> PyResult<Bound<'py, PyAny>> {
    let cfg = parse_config(py, config)?;
    let inclusion = region.inner.clone();
    let outcome = py.detach(move || cli::verify_region(&cfg, &inclusion)).map_err(err)?;
    to_py(py, &outcome)
}

/// Obstacle value at a point; `spec` is a dict or JSON string with `family`.
#[pyfunction]
fn obstacle(py: Python<'_>, spec: &Bound<'_, PyAny>, x: [f64; 3]) -> PyResult<f64> {
    let spec: ObstacleSpec = from_py(py, spec)?;
    Ok(eval_obstacle(&spec, &vec3(x)))
}

/// Closed-form interior potential of the centered ellipsoid, with density
/// `"constant"` (ρ = 1) or `"quadratic"` (ρ = −|x|²).
#[pyfunction]
#[pyo3(signature = (axes, x, density="quadratic"))]
fn ellipsoid_potential(axes: [f64; 3], x: [f64; 3], density: &str) -> PyResult<f64> {
    let rho = match density {
        "constant" => DensityPolynomial::Constant { c0: 1.0 },
        "quadratic" => DensityPolynomial::unit_quadratic(),
        other => return Err(PyValueError::new_err(format!("unknown density '{other}'"))),
    };
    let pose = EllipsoidPose::centered(EllipsoidAxes::new(axes[0], axes[1], axes[2]).map_err(err)?);
    let f = ellipsoid_potential_closed_form(&pose, &rho).map_err(err)?;
    Ok(f(&vec3(x)))
}

/// The I-integral table of an ellipsoid as a dict.
#[pyfunction]
fn i_integrals<'py>(py: Python<'py>, axes: [f64; 3]) -> PyResult<Bound<'py, PyAny>> {
    let ax = EllipsoidAxes::new(axes[0], axes[1], axes[2]).map_err(err)?;
    to_py(py, &compute_i_integrals(&ax).map_err(err)?)
}

#[pymodule]
fn eshelby_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("EshelbyError", m.py().get_type::<EshelbyError>())?;
    m.add_class::<PyElasticTensor>()?;
    m.add_class::<PyVoxelRegion>()?;
    m.add_class::<PyConstruction>()?;
    m.add_function(wrap_pyfunction!(load_config, m)?)?;
    m.add_function(wrap_pyfunction!(preset, m)?)?;
    m.add_function(wrap_pyfunction!(construct, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add_function(wrap_pyfunction!(obstacle, m)?)?;
    m.add_function(wrap_pyfunction!(ellipsoid_potential, m)?)?;
    m.add_function(wrap_pyfunction!(i_integrals, m)?)?;
    Ok(())
}
