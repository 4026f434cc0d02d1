//! Python bindings: problems, spectra, counting-function fits, quantum
//! graphs and resistance helpers.

use pyo3::exceptions::{PyIndexError, PyMemoryError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use fractal_spectra::analysis::{self, CountingFunction, WindowRule};
use fractal_spectra::error::Error;
use fractal_spectra::geometry::{layout_coordinates, HybridModel, ModelKind, DEFAULT_VERTEX_CAP};
use fractal_spectra::measure::vertex_masses;
use fractal_spectra::pipeline::Problem as CoreProblem;
use fractal_spectra::quantum::{self, LengthConvention, ScanOptions};
use fractal_spectra::resistance::{self, effective_resistance, ResistanceParams};
use fractal_spectra::spectrum::{self, BoundaryCondition, SolveOptions};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Parameter(_) | Error::Precondition(_) => PyValueError::new_err(e.to_string()),
        Error::Index { .. } => PyIndexError::new_err(e.to_string()),
        Error::Resource { .. } => PyMemoryError::new_err(e.to_string()),
        Error::Numeric(_) | Error::Structure(_) => PyRuntimeError::new_err(e.to_string()),
    }
}

fn parse_model(name: &str) -> PyResult<ModelKind> {
    match name {
        "hanoi" => Ok(ModelKind::Hanoi),
        "sg3" => Ok(ModelKind::Sg3Hybrid),
        _ => Err(PyValueError::new_err(format!("unknown model {name:?}, expected hanoi or sg3"))),
    }
}

fn parse_bc(name: &str) -> PyResult<BoundaryCondition> {
    match name {
        "dirichlet" => Ok(BoundaryCondition::Dirichlet),
        "neumann" => Ok(BoundaryCondition::Neumann),
        _ => Err(PyValueError::new_err(format!("unknown boundary condition {name:?}"))),
    }
}

fn parse_convention(name: &str) -> PyResult<LengthConvention> {
    match name {
        "resistance" => Ok(LengthConvention::ResistanceLengths),
        "power" => Ok(LengthConvention::PowerLengths),
        "bond-scaled" => Ok(LengthConvention::BondScaledLengths),
        _ => Err(PyValueError::new_err(format!("unknown length convention {name:?}"))),
    }
}

fn parse_window(text: &str) -> PyResult<WindowRule> {
    if text == "bend" {
        return Ok(WindowRule::Bend);
    }
    text.strip_prefix("quantile:")
        .and_then(|q| q.parse::<f64>().ok())
        .filter(|q| *q > 0.0 && *q < 1.0)
        .map(WindowRule::Quantile)
        .ok_or_else(|| PyValueError::new_err(format!("bad fit window {text:?}, expected bend or quantile:<q>")))
}

/// Parses `"p/q"` or a decimal into the nearest double.
#[pyfunction]
fn parse_rational(text: &str) -> PyResult<f64> {
    let bad = || PyValueError::new_err(format!("cannot parse {text:?}"));
    match text.split_once('/') {
        Some((p, q)) => {
            let p: i64 = p.trim().parse().map_err(|_| bad())?;
            let q: i64 = q.trim().parse().map_err(|_| bad())?;
            if q == 0 {
                return Err(bad());
            }
            Ok(p as f64 / q as f64)
        }
        None => text.trim().parse().map_err(|_| bad()),
    }
}

/// Power-law fit of a counting function.
#[pyclass(get_all, frozen, skip_from_py_object, module = "fractal_spectra_py")]
#[derive(Clone)]
struct ExponentFit {
    slope: f64,
    stderr: f64,
    intercept: f64,
    window: (f64, f64),
    points: usize,
}

#[pymethods]
impl ExponentFit {
    fn __repr__(&self) -> String {
        format!(
            "ExponentFit(slope={:.6}, stderr={:.2e}, window=({:.6}, {:.6}), points={})",
            self.slope, self.stderr, self.window.0, self.window.1, self.points
        )
    }
}

fn fit_counting(cf: &CountingFunction, window: &str) -> PyResult<ExponentFit> {
    let w = analysis::fit_window(cf, parse_window(window)?).map_err(py_err)?;
    let f = analysis::fit_spectral_exponent(cf, w).map_err(py_err)?;
    Ok(ExponentFit {
        slope: f.slope,
        stderr: f.stderr,
        intercept: f.intercept,
        window: f.window,
        points: f.points,
    })
}

/// Solved Laplacian spectrum.
#[pyclass(frozen, module = "fractal_spectra_py")]
struct Spectrum {
    inner: spectrum::Spectrum,
}

#[pymethods]
impl Spectrum {
    /// Every eigenvalue, ascending, repeated by multiplicity.
    #[getter]
    fn values(&self) -> Vec<f64> {
        self.inner.values.clone()
    }

    /// `(value, multiplicity)` per cluster.
    #[getter]
    fn clusters(&self) -> Vec<(f64, usize)> {
        self.inner.clusters.iter().map(|c| (c.value, c.multiplicity)).collect()
    }

    #[getter]
    fn bc(&self) -> &'static str {
        self.inner.bc.name()
    }

    #[getter]
    fn level(&self) -> u32 {
        self.inner.level
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    /// Jump points and counts of `N(x)`.
    fn counting(&self) -> (Vec<f64>, Vec<usize>) {
        let cf = CountingFunction::from_spectrum(&self.inner);
        (cf.jumps, cf.counts)
    }

    /// Slope of `log N` against `log x`; `window` is `bend` or `quantile:<q>`.
    #[pyo3(signature = (window="bend"))]
    fn fit_exponent(&self, window: &str) -> PyResult<ExponentFit> {
        fit_counting(&CountingFunction::from_spectrum(&self.inner), window)
    }

    fn to_csv(&self) -> String {
        self.inner.to_csv()
    }

    fn __repr__(&self) -> String {
        format!(
            "Spectrum(level={}, bc={}, dim={}, distinct={})",
            self.inner.level,
            self.inner.bc,
            self.inner.len(),
            self.inner.clusters.len()
        )
    }
}

/// A level-`m` approximation with resistance and measure parameters.
#[pyclass(frozen, module = "fractal_spectra_py")]
struct Problem {
    inner: CoreProblem,
}

#[pymethods]
impl Problem {
    #[new]
    #[pyo3(signature = (model, level, r, a, b=None, c=None, vertex_cap=DEFAULT_VERTEX_CAP))]
    fn new(model: &str, level: u32, r: f64, a: f64, b: Option<f64>, c: Option<f64>, vertex_cap: u64) -> PyResult<Self> {
        let mut inner = match parse_model(model)? {
            ModelKind::Hanoi => {
                if b.is_some() || c.is_some() {
                    return Err(PyValueError::new_err("the Hanoi model derives b from a and has no c"));
                }
                CoreProblem::hanoi(level, r, a)
            }
            ModelKind::Sg3Hybrid => {
                let b = b.ok_or_else(|| PyValueError::new_err("sg3 needs b"))?;
                CoreProblem::sg3(level, r, a, b, c)
            }
        }
        .map_err(py_err)?;
        let issues = fractal_spectra::measure::validate_measure(&inner.measure);
        if !issues.is_empty() {
            return Err(PyValueError::new_err(issues.join("; ")));
        }
        inner.vertex_cap = vertex_cap;
        Ok(Problem { inner })
    }

    #[getter]
    fn model(&self) -> &'static str {
        self.inner.model().name()
    }

    #[getter]
    fn level(&self) -> u32 {
        self.inner.level
    }

    #[getter]
    fn rho(&self) -> f64 {
        self.inner.resistance.rho
    }

    fn vertex_count(&self) -> PyResult<usize> {
        Ok(self.inner.graph().map_err(py_err)?.vertex_count())
    }

    /// Vertex masses in graph order.
    fn masses(&self) -> PyResult<Vec<f64>> {
        let g = self.inner.graph().map_err(py_err)?;
        Ok(vertex_masses(&g, &self.inner.measure).map_err(py_err)?.masses)
    }

    fn total_mass(&self) -> PyResult<f64> {
        let g = self.inner.graph().map_err(py_err)?;
        Ok(vertex_masses(&g, &self.inner.measure).map_err(py_err)?.total())
    }

    /// Plot coordinates of every vertex.
    fn layout(&self) -> PyResult<Vec<(f64, f64)>> {
        let g = self.inner.graph().map_err(py_err)?;
        layout_coordinates(&g, HybridModel::from_kind(g.model).layout_scale).map_err(py_err)
    }

    #[pyo3(signature = (bc="dirichlet"))]
    fn spectrum(&self, py: Python<'_>, bc: &str) -> PyResult<Spectrum> {
        let bc = parse_bc(bc)?;
        let p = self.inner;
        let (_, inner) = py
            .detach(move || p.solve(bc, SolveOptions::default()))
            .map_err(py_err)?;
        Ok(Spectrum { inner })
    }

    /// Eigenfunction `index` on all vertices.
    #[pyo3(signature = (index, bc="dirichlet"))]
    fn eigenfunction(&self, py: Python<'_>, index: usize, bc: &str) -> PyResult<Vec<f64>> {
        let bc = parse_bc(bc)?;
        let p = self.inner;
        py.detach(move || {
            let opts = SolveOptions {
                vectors: true,
                ..SolveOptions::default()
            };
            let (op, spec) = p.solve(bc, opts)?;
            spectrum::eigenfunction(&op, &spec, index)
        })
        .map_err(py_err)
    }

    /// Effective resistance between the first two boundary vertices.
    fn boundary_resistance(&self) -> PyResult<f64> {
        let net = self.inner.network().map_err(py_err)?;
        let b = net.graph.boundary();
        effective_resistance(&net, b[0], b[1]).map_err(py_err)
    }

    fn __repr__(&self) -> String {
        format!(
            "Problem(model={}, level={}, r={}, a={})",
            self.inner.model(),
            self.inner.level,
            self.inner.resistance.r,
            self.inner.measure.a
        )
    }
}

/// Quantum-graph `λ²` values on the Hanoi graph up to `lambda_max` in `λ`.
#[pyfunction]
#[pyo3(signature = (level, r, lambda_max, convention="bond-scaled", grid_step=None))]
fn qg_spectrum(py: Python<'_>, level: u32, r: f64, lambda_max: f64, convention: &str, grid_step: Option<f64>) -> PyResult<Vec<f64>> {
    let convention = parse_convention(convention)?;
    py.detach(move || {
        let params = ResistanceParams::hanoi(r)?;
        let g = fractal_spectra::geometry::build_graph(&HybridModel::hanoi(), level)?;
        let mg = quantum::build_metric_graph(&g, &params, convention)?;
        let opts = ScanOptions {
            grid_step,
            ..ScanOptions::upto(lambda_max)
        };
        Ok(quantum::scan_spectrum(&mg, &opts)?.values_sq())
    })
    .map_err(py_err)
}

/// Factor taking quantum-graph `λ²` to the discrete Laplacian scale.
#[pyfunction]
fn renormalization_factor(a: f64, r: f64) -> PyResult<f64> {
    quantum::renormalization_factor(a, r).map_err(py_err)
}

/// `(regime, d_S, exponent or None)` for SG3 parameters.
#[pyfunction]
fn sg3_regime(r: f64, a: f64) -> PyResult<(String, f64, Option<f64>)> {
    let rep = analysis::sg3_regime(r, a).map_err(py_err)?;
    let name = match rep.regime {
        analysis::Regime::Sub => "sub",
        analysis::Regime::Critical => "critical",
        analysis::Regime::Super => "super",
    };
    Ok((name.to_string(), rep.d_s, rep.exponent))
}

/// `ρ` for the SG3 hybrid at scaling `r`.
#[pyfunction]
fn solve_sg3_rho(r: f64) -> PyResult<f64> {
    resistance::solve_sg3_rho(r).map_err(py_err)
}

/// Worst deviation of the level-1 boundary trace from the level-0 network;
/// `rho` defaults to the compatible value.
#[pyfunction]
#[pyo3(signature = (model, r, rho=None))]
fn check_compatibility(model: &str, r: f64, rho: Option<f64>) -> PyResult<f64> {
    let kind = parse_model(model)?;
    let mut params = ResistanceParams::for_model(kind, r).map_err(py_err)?;
    if let Some(rho) = rho {
        params.rho = rho;
    }
    resistance::check_compatibility(&HybridModel::from_kind(kind), &params).map_err(py_err)
}

/// Truncated boundary-resistance series of the Hanoi network.
#[pyfunction]
fn hanoi_boundary_series(r: f64, level: u32) -> PyResult<f64> {
    Ok(resistance::hanoi_boundary_series(r, level).map_err(py_err)?.truncated)
}

/// Power-law fit of an arbitrary list of eigenvalues.
#[pyfunction]
#[pyo3(signature = (values, window="bend"))]
fn fit_exponent(values: Vec<f64>, window: &str) -> PyResult<ExponentFit> {
    fit_counting(&CountingFunction::from_values(&values), window)
}

#[pymodule]
fn fractal_spectra_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Problem>()?;
    m.add_class::<Spectrum>()?;
    m.add_class::<ExponentFit>()?;
    m.add_function(wrap_pyfunction!(parse_rational, m)?)?;
    m.add_function(wrap_pyfunction!(qg_spectrum, m)?)?;
    m.add_function(wrap_pyfunction!(renormalization_factor, m)?)?;
    m.add_function(wrap_pyfunction!(sg3_regime, m)?)?;
    m.add_function(wrap_pyfunction!(solve_sg3_rho, m)?)?;
    m.add_function(wrap_pyfunction!(check_compatibility, m)?)?;
    m.add_function(wrap_pyfunction!(hanoi_boundary_series, m)?)?;
    m.add_function(wrap_pyfunction!(fit_exponent, m)?)?;
    Ok(())
}
