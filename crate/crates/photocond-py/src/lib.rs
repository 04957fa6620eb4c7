//! Python bindings: the photon-number distributions, process parameters and
//! conditional maps, plus the brute-force oracle diagonals for verification.

use pyo3::exceptions::{PyOverflowError, PyValueError};
use pyo3::prelude::*;

use photocond::add as add_ops;
use photocond::error::Error;
use photocond::oracle as oracle_ops;
use photocond::states::FieldStateSpec;
use photocond::subtract as subtract_ops;

fn to_py_err(err: Error) -> PyErr {
    match err {
        Error::Range(_) | Error::TruncationLeakage { .. } => {
            PyOverflowError::new_err(err.to_string())
        }
        other => PyValueError::new_err(other.to_string()),
    }
}

fn parse_state(spec: &str) -> PyResult<FieldStateSpec> {
    spec.parse().map_err(to_py_err)
}

/// Truncated photon-number distribution p_0..p_N.
#[pyclass(name = "Distribution", frozen)]
struct Distribution {
    inner: photocond::PhotonNumberDistribution,
}

#[pymethods]
impl Distribution {
    /// Thermal state with mean photon number n0.
    #[staticmethod]
    #[pyo3(signature = (n0, epsilon = photocond::DEFAULT_EPSILON))]
    fn thermal(n0: f64, epsilon: f64) -> PyResult<Self> {
        photocond::states::thermal_distribution(n0, epsilon)
            .map(|inner| Distribution { inner })
            .map_err(to_py_err)
    }

    /// Coherent state with mean photon number n0.
    #[staticmethod]
    #[pyo3(signature = (n0, epsilon = photocond::DEFAULT_EPSILON))]
    fn coherent(n0: f64, epsilon: f64) -> PyResult<Self> {
        photocond::states::coherent_distribution(n0, epsilon)
            .map(|inner| Distribution { inner })
            .map_err(to_py_err)
    }

    /// Superposed coherent and thermal light with means n_c and n_t.
    #[staticmethod]
    #[pyo3(signature = (n_c, n_t, epsilon = photocond::DEFAULT_EPSILON))]
    fn mixed_light(n_c: f64, n_t: f64, epsilon: f64) -> PyResult<Self> {
        photocond::states::mixed_light_distribution(n_c, n_t, epsilon)
            .map(|inner| Distribution { inner })
            .map_err(to_py_err)
    }

    /// Number state |m>.
    #[staticmethod]
    fn fock(m: u32) -> Self {
        Distribution {
            inner: photocond::states::fock_distribution(m),
        }
    }

    /// Explicit probability vector, rescaled to unit sum.
    #[staticmethod]
    fn from_probs(probs: Vec<f64>) -> PyResult<Self> {
        photocond::PhotonNumberDistribution::from_unnormalized(probs)
            .map(|inner| Distribution { inner })
            .map_err(to_py_err)
    }

    #[getter]
    fn cutoff(&self) -> usize {
        self.inner.cutoff()
    }

    #[getter]
    fn tail_bound(&self) -> f64 {
        self.inner.tail_bound()
    }

    fn probs(&self) -> Vec<f64> {
        self.inner.probs().to_vec()
    }

    fn prob(&self, n: usize) -> f64 {
        self.inner.prob(n)
    }

    fn mean(&self) -> f64 {
        self.inner.mean()
    }

    fn second_factorial(&self) -> f64 {
        self.inner.second_factorial()
    }

    /// Copy with the cutoff forced to `cutoff`, truncating into the tail
    /// bound or zero-padding as needed.
    fn resized(&self, cutoff: usize) -> Self {
        Distribution {
            inner: self.inner.resized(cutoff),
        }
    }

    fn __len__(&self) -> usize {
        self.inner.cutoff() + 1
    }

    fn __repr__(&self) -> String {
        format!(
            "Distribution(cutoff={}, mean={:.6})",
            self.inner.cutoff(),
            self.inner.mean()
        )
    }
}

/// Beam splitter with reflectivity R = sin^2(theta).
#[pyclass(name = "BeamSplitter", frozen)]
struct BeamSplitter {
    inner: photocond::BeamSplitterParams,
}

#[pymethods]
impl BeamSplitter {
    #[new]
    fn new(reflectivity: f64) -> PyResult<Self> {
        photocond::BeamSplitterParams::from_reflectivity(reflectivity)
            .map(|inner| BeamSplitter { inner })
            .map_err(to_py_err)
    }

    #[staticmethod]
    fn from_theta(theta: f64) -> PyResult<Self> {
        photocond::BeamSplitterParams::from_theta(theta)
            .map(|inner| BeamSplitter { inner })
            .map_err(to_py_err)
    }

    #[getter]
    fn theta(&self) -> f64 {
        self.inner.theta()
    }

    #[getter]
    fn reflectivity(&self) -> f64 {
        self.inner.reflectivity()
    }

    #[getter]
    fn transmittivity(&self) -> f64 {
        self.inner.transmittivity()
    }
}

/// Parametric down-converter with gain lambda, r = sinh^2, t = cosh^-2.
#[pyclass(name = "Pdc", frozen)]
struct Pdc {
    inner: photocond::PdcParams,
}

#[pymethods]
impl Pdc {
    #[new]
    fn new(gain: f64) -> PyResult<Self> {
        photocond::PdcParams::from_gain(gain)
            .map(|inner| Pdc { inner })
            .map_err(to_py_err)
    }

    #[getter]
    fn gain(&self) -> f64 {
        self.inner.gain()
    }

    #[getter]
    fn r(&self) -> f64 {
        self.inner.r()
    }

    #[getter]
    fn t(&self) -> f64 {
        self.inner.t()
    }
}

/// k-photon detector, spelled "r:K" (resolving) or "n:K" (nonresolving).
#[pyclass(name = "Detector", frozen)]
struct Detector {
    inner: photocond::DetectorModel,
}

#[pymethods]
impl Detector {
    #[new]
    fn new(spec: &str) -> PyResult<Self> {
        spec.parse()
            .map(|inner| Detector { inner })
            .map_err(to_py_err)
    }

    #[getter]
    fn k(&self) -> u32 {
        self.inner.k()
    }

    #[getter]
    fn resolving(&self) -> bool {
        self.inner.flavor() == photocond::DetectorFlavor::Resolving
    }

    fn upsilon(&self, l: u64) -> u8 {
        self.inner.upsilon(l)
    }

    fn __repr__(&self) -> String {
        format!("Detector('{}')", self.inner)
    }
}

/// Result of one conditional process.
#[pyclass(name = "Outcome", frozen)]
struct Outcome {
    #[pyo3(get)]
    probability: f64,
    #[pyo3(get)]
    mean: f64,
    #[pyo3(get)]
    second_factorial: f64,
    weights: Vec<f64>,
    posterior: photocond::PhotonNumberDistribution,
}

#[pymethods]
impl Outcome {
    fn weights(&self) -> Vec<f64> {
        self.weights.clone()
    }

    fn posterior(&self) -> Distribution {
        Distribution {
            inner: self.posterior.clone(),
        }
    }

    fn __repr__(&self) -> String {
        format!(
            "Outcome(probability={:.6e}, mean={:.6})",
            self.probability, self.mean
        )
    }
}

impl From<photocond::OutcomeRecord> for Outcome {
    fn from(record: photocond::OutcomeRecord) -> Self {
        Outcome {
            probability: record.probability(),
            mean: record.mean(),
            second_factorial: record.second_factorial(),
            weights: record.weights().to_vec(),
            posterior: record.posterior().clone(),
        }
    }
}

#[pyfunction]
fn subtract_exact(p: &Distribution, bs: &BeamSplitter, detector: &Detector) -> PyResult<Outcome> {
    subtract_ops::subtract_exact(&p.inner, &bs.inner, &detector.inner)
        .map(Outcome::from)
        .map_err(to_py_err)
}

#[pyfunction]
fn subtract_model_a(p: &Distribution, bs: &BeamSplitter, k: u32) -> PyResult<Outcome> {
    subtract_ops::subtract_model_a(&p.inner, &bs.inner, k)
        .map(Outcome::from)
        .map_err(to_py_err)
}

#[pyfunction]
fn subtract_model_e(p: &Distribution, k: u32) -> PyResult<Outcome> {
    subtract_ops::subtract_model_e(&p.inner, k)
        .map(Outcome::from)
        .map_err(to_py_err)
}

#[pyfunction]
fn subtract_sequential(p: &Distribution, bs: &BeamSplitter, k: u32) -> PyResult<Outcome> {
    subtract_ops::subtract_sequential(&p.inner, &bs.inner, k)
        .map(Outcome::from)
        .map_err(to_py_err)
}

/// Closed-form subtraction for "coherent:N0", "thermal:N0" or "mixed:NC,NT".
#[pyfunction]
fn closed_form_subtraction(
    state: &str,
    bs: &BeamSplitter,
    detector: &Detector,
) -> PyResult<Outcome> {
    subtract_ops::closed_form_subtraction(&parse_state(state)?, &bs.inner, &detector.inner)
        .map(Outcome::from)
        .map_err(to_py_err)
}

/// Closed forms for two sequential on/off detections (k = 2).
#[pyfunction]
fn closed_form_sequential(state: &str, bs: &BeamSplitter, k: u32) -> PyResult<Outcome> {
    subtract_ops::closed_form_sequential(&parse_state(state)?, &bs.inner, k)
        .map(Outcome::from)
        .map_err(to_py_err)
}

#[pyfunction]
fn add_exact(p: &Distribution, pdc: &Pdc, detector: &Detector) -> PyResult<Outcome> {
    add_ops::add_exact(&p.inner, &pdc.inner, &detector.inner)
        .map(Outcome::from)
        .map_err(to_py_err)
}

#[pyfunction]
fn add_model_a(p: &Distribution, pdc: &Pdc, k: u32) -> PyResult<Outcome> {
    add_ops::add_model_a(&p.inner, &pdc.inner, k)
        .map(Outcome::from)
        .map_err(to_py_err)
}

#[pyfunction]
fn add_model_e(p: &Distribution, k: u32) -> PyResult<Outcome> {
    add_ops::add_model_e(&p.inner, k)
        .map(Outcome::from)
        .map_err(to_py_err)
}

/// Closed-form addition (k = 1) for "thermal:N0" (both detector flavors)
/// or "coherent:N0" (nonresolving).
#[pyfunction]
fn closed_form_addition(state: &str, pdc: &Pdc, detector: &Detector) -> PyResult<Outcome> {
    add_ops::closed_form_addition(&parse_state(state)?, &pdc.inner, &detector.inner)
        .map(Outcome::from)
        .map_err(to_py_err)
}

/// <n> and <n(n-1)> of a distribution.
#[pyfunction]
fn factorial_moments(p: &Distribution) -> (f64, f64) {
    subtract_ops::factorial_moments(&p.inner)
}

/// Click probabilities of every resolving subtraction threshold including
/// the no-click branch; they sum to one.
#[pyfunction]
fn subtraction_click_probabilities(p: &Distribution, bs: &BeamSplitter) -> Vec<f64> {
    subtract_ops::resolving_click_probabilities(&p.inner, &bs.inner)
}

/// Click probabilities of the resolving addition thresholds 0..=max_k.
#[pyfunction]
fn addition_click_probabilities(p: &Distribution, pdc: &Pdc, max_k: usize) -> Vec<f64> {
    add_ops::resolving_click_probabilities(&p.inner, &pdc.inner, max_k)
}

/// Brute-force two-mode verification of subtraction: the diagonal of the
/// unnormalized post-selected state and the click probability.
#[pyfunction]
fn oracle_subtract_diagonal(
    p: &Distribution,
    bs: &BeamSplitter,
    detector: &Detector,
) -> PyResult<(Vec<f64>, f64)> {
    let rho = oracle_ops::diagonal_density_matrix(&p.inner);
    oracle_ops::oracle_subtract(&rho, &bs.inner, &detector.inner)
        .map(|(out, prob)| (out.diagonal(), prob))
        .map_err(to_py_err)
}

/// Brute-force two-mode verification of addition.
#[pyfunction]
fn oracle_add_diagonal(
    p: &Distribution,
    pdc: &Pdc,
    detector: &Detector,
) -> PyResult<(Vec<f64>, f64)> {
    let rho = oracle_ops::diagonal_density_matrix(&p.inner);
    oracle_ops::oracle_add(&rho, &pdc.inner, &detector.inner)
        .map(|(out, prob)| (out.diagonal(), prob))
        .map_err(to_py_err)
}

/// Standard Laguerre polynomial L_n(x); raises OverflowError when the
/// recurrence leaves f64 range.
#[pyfunction]
fn laguerre(n: u32, x: f64) -> PyResult<f64> {
    photocond::numerics::laguerre(n, x).map_err(to_py_err)
}

#[pymodule]
fn photocond_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Distribution>()?;
    m.add_class::<BeamSplitter>()?;
    m.add_class::<Pdc>()?;
    m.add_class::<Detector>()?;
    m.add_class::<Outcome>()?;
    m.add_function(wrap_pyfunction!(subtract_exact, m)?)?;
    m.add_function(wrap_pyfunction!(subtract_model_a, m)?)?;
    m.add_function(wrap_pyfunction!(subtract_model_e, m)?)?;
    m.add_function(wrap_pyfunction!(subtract_sequential, m)?)?;
    m.add_function(wrap_pyfunction!(closed_form_subtraction, m)?)?;
    m.add_function(wrap_pyfunction!(closed_form_sequential, m)?)?;
    m.add_function(wrap_pyfunction!(add_exact, m)?)?;
    m.add_function(wrap_pyfunction!(add_model_a, m)?)?;
    m.add_function(wrap_pyfunction!(add_model_e, m)?)?;
    m.add_function(wrap_pyfunction!(closed_form_addition, m)?)?;
    m.add_function(wrap_pyfunction!(factorial_moments, m)?)?;
    m.add_function(wrap_pyfunction!(subtraction_click_probabilities, m)?)?;
    m.add_function(wrap_pyfunction!(addition_click_probabilities, m)?)?;
    m.add_function(wrap_pyfunction!(oracle_subtract_diagonal, m)?)?;
    m.add_function(wrap_pyfunction!(oracle_add_diagonal, m)?)?;
    m.add_function(wrap_pyfunction!(laguerre, m)?)?;
    Ok(())
}
