//! Python bindings: the network septuple, datasets, training, spectral
//! analysis and the sampling/toy-model helpers.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use thermolearn::dataio;
use thermolearn::ensemble::{metropolis_sample, McConfig, WindowMode};
use thermolearn::loss::{self, MinimizeMode};
use thermolearn::septuple::{Activation, LossKind, Septuple, StateVector, Topology};
use thermolearn::spectral;
use thermolearn::trainer::{sgd_train, TrainConfig};

fn value_err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err<E: std::fmt::Display>(e: E) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn parse_activation(name: &str) -> PyResult<Activation> {
    Activation::from_name(name)
        .ok_or_else(|| PyValueError::new_err(format!("unknown activation {name:?}")))
}

#[pyclass(name = "Dataset")]
struct PyDataset {
    inner: dataio::Dataset,
}

#[pymethods]
impl PyDataset {
    /// Synthetic corner-prototype dataset with clipped Gaussian jitter.
    #[staticmethod]
    #[pyo3(signature = (records, input_dim, n_classes, sigma=0.2, seed=0))]
    fn synth(
        records: usize,
        input_dim: usize,
        n_classes: usize,
        sigma: f64,
        seed: u64,
    ) -> PyResult<Self> {
        Ok(PyDataset {
            inner: dataio::synth(records, input_dim, n_classes, sigma, seed).map_err(value_err)?,
        })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(PyDataset {
            inner: dataio::Dataset::load(path.as_ref()).map_err(value_err)?,
        })
    }

    /// Read an IDX image/label pair and encode it into boundary records.
    #[staticmethod]
    #[pyo3(signature = (images, labels, downsample=1))]
    fn from_idx(images: &str, labels: &str, downsample: usize) -> PyResult<Self> {
        let raw = dataio::read_idx(images.as_ref(), labels.as_ref()).map_err(value_err)?;
        Ok(PyDataset {
            inner: dataio::encode(&raw, downsample).map_err(value_err)?,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(path.as_ref()).map_err(runtime_err)
    }

    #[getter]
    fn input_dim(&self) -> usize {
        self.inner.input_dim
    }

    #[getter]
    fn output_dim(&self) -> usize {
        self.inner.output_dim
    }

    fn record(&self, index: usize) -> PyResult<(Vec<f64>, Vec<f64>)> {
        let r = self
            .inner
            .records
            .get(index)
            .ok_or_else(|| PyValueError::new_err(format!("record {index} out of range")))?;
        Ok((r.input.clone(), r.target.clone()))
    }

    fn __len__(&self) -> usize {
        self.inner.records.len()
    }
}

#[pyclass(name = "Septuple")]
struct PySeptuple {
    inner: Septuple,
}

#[pymethods]
impl PySeptuple {
    /// Random layered network (weights uniform on ±1/sqrt(fan_in)).
    #[new]
    #[pyo3(signature = (layers, activation="tanh", seed=0, objective_m=0.0))]
    fn new(layers: Vec<usize>, activation: &str, seed: u64, objective_m: f64) -> PyResult<Self> {
        let topo = Topology::layered(&layers).map_err(value_err)?;
        let mut inner = Septuple::random(topo, parse_activation(activation)?, seed);
        inner.objective_coeff = objective_m;
        Ok(PySeptuple { inner })
    }

    /// Layered network with all weights and biases at zero.
    #[staticmethod]
    #[pyo3(signature = (layers, activation="tanh"))]
    fn zeroed(layers: Vec<usize>, activation: &str) -> PyResult<Self> {
        let topo = Topology::layered(&layers).map_err(value_err)?;
        Ok(PySeptuple {
            inner: Septuple::zeroed(topo, parse_activation(activation)?),
        })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(PySeptuple {
            inner: Septuple::load(path.as_ref()).map_err(value_err)?,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(path.as_ref()).map_err(runtime_err)
    }

    #[getter]
    fn n_total(&self) -> usize {
        self.inner.n_total()
    }

    #[getter]
    fn layer_count(&self) -> usize {
        self.inner.topology().layer_count()
    }

    #[getter]
    fn epoch(&self) -> usize {
        self.inner.epoch
    }

    #[getter]
    fn objective_m(&self) -> f64 {
        self.inner.objective_coeff
    }

    fn set_weight(&mut self, to: usize, from: usize, weight: f64) -> PyResult<()> {
        self.inner.set_weight(to, from, weight).map_err(value_err)
    }

    fn weight(&self, to: usize, from: usize) -> f64 {
        self.inner.weight(to, from)
    }

    /// Structural constraint report; empty when well formed.
    fn validate(&self) -> Vec<String> {
        self.inner.validate()
    }

    /// Fixed state after clamped propagation (exactly L−1 steps).
    fn fixed_state(&self, inputs: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(self.inner.fixed_state(&inputs).map_err(value_err)?.to_vec())
    }

    /// Iterative propagation; returns (state, steps, converged).
    #[pyo3(signature = (inputs, max_steps=100, tol=1e-12))]
    fn propagate(
        &self,
        inputs: Vec<f64>,
        max_steps: usize,
        tol: f64,
    ) -> PyResult<(Vec<f64>, usize, bool)> {
        let p = self
            .inner
            .propagate(&inputs, max_steps, tol)
            .map_err(value_err)?;
        Ok((p.state.to_vec(), p.steps, p.converged))
    }

    /// Boundary loss of this record at the free fixed state.
    fn boundary_loss(&self, input: Vec<f64>, target: Vec<f64>) -> PyResult<f64> {
        let record = dataio::Record { input, target };
        let state = self.inner.fixed_state(&record.input).map_err(value_err)?;
        Ok(loss::boundary_loss(&state, &record, &self.inner)
            .map_err(value_err)?
            .total)
    }

    /// Minimized bulk loss: mode "forward" or "descent".
    #[pyo3(signature = (input, target, mode="forward", budget=0))]
    fn bulk_loss(
        &self,
        input: Vec<f64>,
        target: Vec<f64>,
        mode: &str,
        budget: usize,
    ) -> PyResult<f64> {
        let record = dataio::Record { input, target };
        let mode = match mode {
            "forward" => MinimizeMode::Forward,
            "descent" => MinimizeMode::Descent,
            other => return Err(PyValueError::new_err(format!("unknown mode {other:?}"))),
        };
        Ok(loss::minimize_bulk(&record, &self.inner, mode, budget)
            .map_err(value_err)?
            .loss
            .total)
    }

    /// Bulk loss of an arbitrary full state vector.
    fn bulk_loss_at(&self, state: Vec<f64>) -> PyResult<f64> {
        Ok(loss::bulk_loss(&StateVector(state), &self.inner)
            .map_err(value_err)?
            .total)
    }

    /// Stochastic gradient descent in place. Returns the per-epoch losses
    /// as a dict of lists.
    #[pyo3(signature = (data, epochs, learning_rate=0.05, batch_size=32, seed=0,
                        loss="boundary", shuffle=true))]
    #[allow(clippy::too_many_arguments)]
    fn train<'py>(
        &mut self,
        py: Python<'py>,
        data: &PyDataset,
        epochs: usize,
        learning_rate: f64,
        batch_size: usize,
        seed: u64,
        loss: &str,
        shuffle: bool,
    ) -> PyResult<Bound<'py, PyDict>> {
        let loss_kind = LossKind::from_name(loss)
            .ok_or_else(|| PyValueError::new_err(format!("unknown loss kind {loss:?}")))?;
        let cfg = TrainConfig {
            epochs,
            batch_size,
            learning_rate,
            seed,
            loss_kind,
            shuffle,
            checkpoint_every: 0,
            ..TrainConfig::default()
        };
        let mut trace = spectral::ThermoTrace::default();
        sgd_train(
            &mut self.inner,
            &data.inner,
            &cfg,
            &mut trace,
            |_, _| Ok(()),
        )
        .map_err(runtime_err)?;
        let out = PyDict::new(py);
        out.set_item(
            "epoch",
            trace.epochs.iter().map(|e| e.epoch).collect::<Vec<_>>(),
        )?;
        out.set_item(
            "u_boundary",
            trace
                .epochs
                .iter()
                .map(|e| e.u_boundary)
                .collect::<Vec<_>>(),
        )?;
        out.set_item(
            "u_bulk_forward",
            trace
                .epochs
                .iter()
                .map(|e| e.u_bulk_forward)
                .collect::<Vec<_>>(),
        )?;
        Ok(out)
    }

    /// Spectral analysis against a dataset: eigenvalues of the residual
    /// Gram operator and the derived diagnostics.
    #[pyo3(signature = (data, theta=10.0))]
    fn analyze<'py>(
        &self,
        py: Python<'py>,
        data: &PyDataset,
        theta: f64,
    ) -> PyResult<Bound<'py, PyDict>> {
        let report = spectral::analyze(
            &self.inner,
            &data.inner,
            theta,
            spectral::GramMode::MeanState,
        )
        .map_err(runtime_err)?;
        let out = PyDict::new(py);
        out.set_item("lambdas", report.lambdas.clone())?;
        out.set_item("log_lambdas", report.log_lambdas.clone())?;
        out.set_item("sum_log", report.sum_log)?;
        out.set_item("mu2", report.mu2)?;
        out.set_item("mu3", report.mu3)?;
        out.set_item("n_greater", report.n_greater)?;
        out.set_item("beta_gap", report.beta_gap)?;
        out.set_item("gap_location", report.gap_location)?;
        out.set_item("mean_state", report.mean_state.clone())?;
        Ok(out)
    }

    /// Metropolis estimate of ⟨H⟩ over the canonical ensemble (free-boundary
    /// mode, at most 12 neurons). Window is "gaussian" or "hard".
    #[pyo3(signature = (beta, window="gaussian", n_samples=100_000, burn_in=10_000, seed=0))]
    fn metropolis<'py>(
        &self,
        py: Python<'py>,
        beta: f64,
        window: &str,
        n_samples: usize,
        burn_in: usize,
        seed: u64,
    ) -> PyResult<Bound<'py, PyDict>> {
        let window = WindowMode::from_name(window)
            .ok_or_else(|| PyValueError::new_err(format!("unknown window {window:?}")))?;
        let cfg = McConfig {
            beta,
            window,
            n_samples,
            burn_in,
            seed,
        };
        let est = metropolis_sample(&self.inner, None, &cfg).map_err(runtime_err)?;
        let out = PyDict::new(py);
        out.set_item("mean_h", est.mean_h)?;
        out.set_item("stderr_h", est.stderr_h)?;
        out.set_item("acceptance_rate", est.acceptance_rate)?;
        out.set_item("u_gaussian_exact", est.u_gaussian_exact)?;
        out.set_item("log_z_full", est.log_z_full)?;
        out.set_item("log_z_truncated", est.log_z_truncated)?;
        Ok(out)
    }
}

/// (location, value, "minimum" | "maximum") triples.
type PyExtrema = Vec<(f64, f64, String)>;

/// Two-peak −ΔF curve on an even grid; returns (log_lambdas, values,
/// extrema) with extrema as (location, value, kind) triples.
#[pyfunction]
#[pyo3(signature = (beta, gamma=1.0/3.0, n_total=854, lo=-6.0, hi=3.0, points=721))]
fn toy_curve(
    beta: f64,
    gamma: f64,
    n_total: usize,
    lo: f64,
    hi: f64,
    points: usize,
) -> PyResult<(Vec<f64>, Vec<f64>, PyExtrema)> {
    if !(0.0 < gamma && gamma < 1.0) {
        return Err(PyValueError::new_err("gamma must lie in (0, 1)"));
    }
    let grid = spectral::linspace(lo, hi, points);
    let curve = spectral::toy_curve(beta, gamma, n_total, &grid);
    let extrema = curve
        .extrema
        .iter()
        .map(|e| {
            (
                e.log_lambda,
                e.value,
                match e.kind {
                    spectral::ExtremumKind::Minimum => "minimum".to_string(),
                    spectral::ExtremumKind::Maximum => "maximum".to_string(),
                },
            )
        })
        .collect();
    Ok((curve.log_lambdas, curve.values, extrema))
}

/// Gaussian-model free energy F = (1/2β) Σ log(1−βm+βλ) − (N/2β) log 2π.
#[pyfunction]
#[pyo3(signature = (beta, lambdas, m=0.0))]
fn free_energy(beta: f64, lambdas: Vec<f64>, m: f64) -> PyResult<f64> {
    let n = lambdas.len();
    Ok(spectral::free_energy(beta, &lambdas, m, n)
        .map_err(value_err)?
        .value)
}

/// Gaussian-model average loss U = ½ Σ (λ−m)/(1−βm+βλ).
#[pyfunction]
#[pyo3(signature = (beta, lambdas, m=0.0))]
fn avg_loss(beta: f64, lambdas: Vec<f64>, m: f64) -> PyResult<f64> {
    Ok(
        spectral::avg_loss(beta, &lambdas, m, spectral::DEFAULT_THETA)
            .map_err(value_err)?
            .exact,
    )
}

/// Gap-based inverse-temperature estimate from log-eigenvalues:
/// (beta, gap_location) or None.
#[pyfunction]
fn beta_from_gap(log_lambdas: Vec<f64>) -> Option<(f64, f64)> {
    spectral::beta_from_gap(&log_lambdas)
}

#[pymodule]
fn thermolearn_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySeptuple>()?;
    m.add_class::<PyDataset>()?;
    m.add_function(wrap_pyfunction!(toy_curve, m)?)?;
    m.add_function(wrap_pyfunction!(free_energy, m)?)?;
    m.add_function(wrap_pyfunction!(avg_loss, m)?)?;
    m.add_function(wrap_pyfunction!(beta_from_gap, m)?)?;
    Ok(())
}
