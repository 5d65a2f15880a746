//! Python bindings for the shrinkrf library: feature families, finite-support
//! hypotheses with sampled scalar-product estimation, the shrinking-gradient
//! online learner, and the seeded synthetic streams.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use shrinkrf::error::Error;
use shrinkrf::estimator::{self, Coefficients, Hypothesis};
use shrinkrf::feature_space::{Example, FamilySpec, FeatureFamily};
use shrinkrf::learner::{self, LearnerConfig, LearnerState};
use shrinkrf::rng::RngStream;
use shrinkrf::synthetic::{self, DataStream, StreamRole};
use shrinkrf::telemetry::Counters;

fn py_err(err: Error) -> PyErr {
    PyValueError::new_err(err.to_string())
}

fn example(values: Vec<f64>) -> PyResult<Example> {
    Example::new(values).map_err(py_err)
}

/// A random-feature family.
#[pyclass(name = "Family", from_py_object)]
#[derive(Clone)]
struct PyFamily {
    inner: FeatureFamily,
}

#[pymethods]
impl PyFamily {
    /// Family(id, dim, sigma=None) with ids "cosine-rff", "sign-neuron",
    /// "tanh-neuron", "const-one".
    #[new]
    #[pyo3(signature = (id, dim, sigma=None))]
    fn new(id: &str, dim: usize, sigma: Option<f64>) -> PyResult<Self> {
        let spec = FamilySpec {
            id: id.to_string(),
            dim,
            sigma,
        };
        Ok(PyFamily {
            inner: FeatureFamily::from_spec(&spec).map_err(py_err)?,
        })
    }

    #[getter]
    fn id(&self) -> &'static str {
        self.inner.id()
    }

    #[getter]
    fn input_dim(&self) -> usize {
        self.inner.input_dim()
    }

    #[getter]
    fn has_exact_kernel(&self) -> bool {
        self.inner.has_exact_kernel()
    }

    /// Closed-form kernel value, or None for families without one.
    fn exact_kernel(&self, x1: Vec<f64>, x2: Vec<f64>) -> PyResult<Option<f64>> {
        self.inner
            .exact_kernel(&example(x1)?, &example(x2)?)
            .map_err(py_err)
    }

    /// Monte-Carlo kernel estimate from n fresh weights.
    fn monte_carlo_kernel(&self, x1: Vec<f64>, x2: Vec<f64>, n: usize, seed: u64) -> PyResult<f64> {
        let mut rng = RngStream::from_seed(seed);
        self.inner
            .monte_carlo_kernel(&example(x1)?, &example(x2)?, n, &mut rng)
            .map_err(py_err)
    }
}

/// A finite-support hypothesis `f = sum_i alpha_i psi_{x_i}`.
#[pyclass(name = "Hypothesis")]
struct PyHypothesis {
    inner: Hypothesis,
}

#[pymethods]
impl PyHypothesis {
    #[new]
    fn new(family: PyFamily, support: Vec<Vec<f64>>, coefficients: Vec<f64>) -> PyResult<Self> {
        let support: PyResult<Vec<Example>> = support.into_iter().map(example).collect();
        let coeffs = Coefficients::from_parts(coefficients, 1.0).map_err(py_err)?;
        Ok(PyHypothesis {
            inner: Hypothesis::from_parts(family.inner, support?, coeffs).map_err(py_err)?,
        })
    }

    fn support_size(&self) -> usize {
        self.inner.len()
    }

    fn l1(&self) -> f64 {
        self.inner.coeffs().l1_exact()
    }

    /// `<f, psi_x>` through the closed-form kernel (oracle evaluation).
    fn exact_value(&self, x: Vec<f64>) -> PyResult<f64> {
        self.inner.exact_value(&example(x)?).map_err(py_err)
    }

    /// Two-stage sampled estimate of `<f, psi_x>` from m inner samples.
    /// Returns (value, l1_at_estimate).
    fn estimate(&self, x: Vec<f64>, m: usize, seed: u64) -> PyResult<(f64, f64)> {
        let mut rng = RngStream::from_seed(seed);
        let mut counters = Counters::default();
        let est = estimator::est_scalar_prod(&self.inner, &example(x)?, m, &mut rng, &mut counters)
            .map_err(py_err)?;
        Ok((est.value, est.l1_at_estimate))
    }

    /// Sampled estimate with the sample count dictated by the accuracy
    /// contract (eps0, delta).
    #[pyo3(signature = (x, eps0=0.1, delta=0.05, seed=0, clamp=false))]
    fn predict(&self, x: Vec<f64>, eps0: f64, delta: f64, seed: u64, clamp: bool) -> PyResult<f64> {
        let mut rng = RngStream::from_seed(seed);
        let mut counters = Counters::default();
        let x = example(x)?;
        let value = if clamp {
            learner::predict_clamped(&self.inner, &x, eps0, delta, &mut rng, &mut counters)
        } else {
            learner::predict(&self.inner, &x, eps0, delta, &mut rng, &mut counters)
        };
        value.map_err(py_err)
    }
}

/// The shrinking-gradient online learner.
#[pyclass(name = "OnlineLearner")]
struct PyOnlineLearner {
    config: LearnerConfig,
    state: LearnerState,
}

#[pymethods]
impl PyOnlineLearner {
    #[new]
    #[pyo3(signature = (family, horizon, norm_bound, eta, m_train, seed=0,
                        shrink_threshold_factor=16.0, shrink_ratio=0.25))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        family: PyFamily,
        horizon: usize,
        norm_bound: f64,
        eta: f64,
        m_train: usize,
        seed: u64,
        shrink_threshold_factor: f64,
        shrink_ratio: f64,
    ) -> PyResult<Self> {
        let config = LearnerConfig {
            horizon,
            norm_bound,
            eta,
            m_train,
            shrink_threshold_factor,
            shrink_ratio,
            seed,
            c_eta: 1.0,
            c_m: 1.0,
        };
        config.validate().map_err(py_err)?;
        let state = LearnerState::new(family.inner, &config);
        Ok(PyOnlineLearner { config, state })
    }

    /// One online round; returns the round record as a dict.
    fn step<'py>(&mut self, py: Python<'py>, x: Vec<f64>, y: f64) -> PyResult<Bound<'py, PyDict>> {
        let record = self.state.step(&example(x)?, y, &self.config).map_err(py_err)?;
        let out = PyDict::new(py);
        out.set_item("t", record.t)?;
        out.set_item("e_t", record.e_t)?;
        out.set_item("shrink", record.shrink)?;
        out.set_item("y_t", record.y_t)?;
        out.set_item("l1_after", record.l1_after)?;
        out.set_item("surrogate_loss", record.surrogate_loss)?;
        out.set_item("exact_loss", record.exact_loss)?;
        Ok(out)
    }

    fn rounds_done(&self) -> usize {
        self.state.rounds_done()
    }

    fn counters<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let c = self.state.counters();
        let out = PyDict::new(py);
        out.set_item("weight_samples", c.weight_samples)?;
        out.set_item("feature_evals", c.feature_evals)?;
        out.set_item("shrink_events", c.shrink_events)?;
        Ok(out)
    }

    /// Current hypothesis f_{t+1}.
    fn current(&self) -> PyHypothesis {
        PyHypothesis {
            inner: self.state.hypothesis().clone(),
        }
    }

    /// Online-to-batch averaged predictor over the completed rounds.
    fn averaged(&self) -> PyResult<PyHypothesis> {
        Ok(PyHypothesis {
            inner: self.state.averaged_hypothesis().map_err(py_err)?,
        })
    }
}

/// A seeded (example, label) stream.
#[pyclass(name = "Stream")]
struct PyStream {
    inner: DataStream,
}

#[pymethods]
impl PyStream {
    /// The fixed 2-d nonlinear toy regression stream.
    #[staticmethod]
    #[pyo3(signature = (noise_sd, seed, test=false))]
    fn toy2d(noise_sd: f64, seed: u64, test: bool) -> Self {
        let role = if test { StreamRole::Test } else { StreamRole::Train };
        PyStream {
            inner: synthetic::toy2d_stream(noise_sd, seed, role),
        }
    }

    /// Stream realizable by a norm-bounded hypothesis over the family.
    #[staticmethod]
    #[pyo3(signature = (family, support_size, target_norm, noise_sd, seed, test=false))]
    fn realizable(
        family: PyFamily,
        support_size: usize,
        target_norm: f64,
        noise_sd: f64,
        seed: u64,
        test: bool,
    ) -> PyResult<Self> {
        let role = if test { StreamRole::Test } else { StreamRole::Train };
        Ok(PyStream {
            inner: synthetic::realizable_stream(&family.inner, support_size, target_norm, noise_sd, seed, role)
                .map_err(py_err)?,
        })
    }

    /// Next (features, label) pair.
    fn next(&mut self) -> PyResult<(Vec<f64>, f64)> {
        let (x, y) = self.inner.next_pair().map_err(py_err)?;
        Ok((x.features().to_vec(), y))
    }

    fn take(&mut self, n: usize) -> PyResult<Vec<(Vec<f64>, f64)>> {
        (0..n).map(|_| self.next()).collect()
    }

    /// Ground-truth hypothesis for realizable streams, None otherwise.
    fn ground_truth(&self) -> Option<PyHypothesis> {
        self.inner.ground_truth().map(|h| PyHypothesis { inner: h.clone() })
    }
}

/// Step size and per-round sample count from the regret analysis; returns
/// (eta, m_train, gamma).
#[pyfunction]
#[pyo3(signature = (norm_bound, horizon, c_eta=1.0, c_m=1.0))]
fn theorem_schedule(norm_bound: f64, horizon: usize, c_eta: f64, c_m: f64) -> (f64, usize, f64) {
    let s = learner::theorem_schedule(norm_bound, horizon, c_eta, c_m);
    (s.eta, s.m_train, s.gamma)
}

/// Two-sided Hoeffding bound on the estimation error.
#[pyfunction]
fn tail_bound(l1: f64, m: usize, eps: f64) -> f64 {
    estimator::tail_bound(l1, m, eps)
}

/// Smallest m meeting the (eps0, delta) accuracy contract for a hypothesis
/// with the given L1 norm.
#[pyfunction]
fn required_test_samples(l1: f64, eps0: f64, delta: f64) -> usize {
    estimator::required_test_samples(l1, eps0, delta)
}

/// The L1-norm guarantee `(16 B + 1) eta t`.
#[pyfunction]
fn l1_norm_bound(norm_bound: f64, eta: f64, t: usize) -> f64 {
    learner::l1_norm_bound(norm_bound, eta, t)
}

/// The fixed 2-d toy regression target.
#[pyfunction]
fn toy2d_target(x: Vec<f64>) -> f64 {
    synthetic::toy2d_target(&x)
}

#[pymodule]
fn shrinkrf_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyFamily>()?;
    m.add_class::<PyHypothesis>()?;
    m.add_class::<PyOnlineLearner>()?;
    m.add_class::<PyStream>()?;
    m.add_function(wrap_pyfunction!(theorem_schedule, m)?)?;
    m.add_function(wrap_pyfunction!(tail_bound, m)?)?;
    m.add_function(wrap_pyfunction!(required_test_samples, m)?)?;
    m.add_function(wrap_pyfunction!(l1_norm_bound, m)?)?;
    m.add_function(wrap_pyfunction!(toy2d_target, m)?)?;
    Ok(())
}
