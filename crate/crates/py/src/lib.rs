//! Python bindings for `kpr-core`.

use std::collections::HashMap;

use kpr_core::mixing::{self, format_weight_matrix, parse_weight_matrix};
use kpr_core::runner::{self, SweepParameter};
use kpr_core::{model, theory};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

fn err(e: kpr_core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn kind_from(kind: &str, param: Option<f64>) -> PyResult<kpr_core::StrategyKind> {
    use kpr_core::StrategyKind as K;
    let need = |name: &str| {
        param.ok_or_else(|| PyValueError::new_err(format!("kind `{kind}` needs parameter `{name}`")))
    };
    let k = match kind {
        "uniform" | "random" => K::UniformRandom,
        "strategy1" => K::Strategy1,
        "strategy2a" => K::Strategy2A { step: need("s")? },
        "strategy2b" => K::Strategy2B { fraction: need("f")? },
        "polya" => K::Polya { multiplier: need("m")? },
        other => return Err(PyValueError::new_err(format!("unknown strategy kind `{other}`"))),
    };
    if param.is_some() && matches!(k, K::UniformRandom | K::Strategy1) {
        return Err(PyValueError::new_err(format!("kind `{kind}` takes no parameter")));
    }
    Ok(k)
}

/// Seeded ChaCha8 stream; replication `r` of a run uses stream `r`.
#[pyclass(module = "kpr")]
pub struct RngStream {
    inner: kpr_core::RngStream,
}

#[pymethods]
impl RngStream {
    #[new]
    #[pyo3(signature = (seed, stream = 0))]
    fn new(seed: u64, stream: u64) -> Self {
        Self {
            inner: kpr_core::RngStream::new(seed, stream),
        }
    }

    /// Uniform integer in `[0, n)`.
    fn index(&mut self, n: usize) -> PyResult<usize> {
        if n == 0 {
            return Err(PyValueError::new_err("n must be positive"));
        }
        Ok(self.inner.index(n))
    }

    /// Uniform float in `[0, 1)`.
    fn unit(&mut self) -> f64 {
        self.inner.unit()
    }
}

/// One client's strategy row and learning state.
#[pyclass(module = "kpr")]
pub struct ClientState {
    inner: kpr_core::ClientState,
}

#[pymethods]
impl ClientState {
    #[new]
    #[pyo3(signature = (kind, n, param = None))]
    fn new(kind: &str, n: usize, param: Option<f64>) -> PyResult<Self> {
        let inner = kpr_core::ClientState::new(kind_from(kind, param)?, n).map_err(err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn kind(&self) -> &'static str {
        self.inner.kind().name()
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn pinned(&self) -> Option<usize> {
        self.inner.pinned()
    }

    fn row(&self) -> Vec<f64> {
        self.inner.row()
    }

    fn probability(&self, server: usize) -> PyResult<f64> {
        if server >= self.inner.n() {
            return Err(PyValueError::new_err("server out of range"));
        }
        Ok(self.inner.probability(server))
    }

    fn max_probability(&self) -> f64 {
        self.inner.max_probability()
    }

    fn sample(&self, rng: &mut RngStream) -> usize {
        self.inner.sample(&mut rng.inner)
    }

    /// Applies the client's own rule to the outcome of a request.
    fn update(&mut self, server: usize, fulfilled: bool) -> PyResult<()> {
        self.inner.update(server, fulfilled).map_err(err)
    }
}

/// Serves one uniformly chosen requester per requested server. Returns the
/// per-client payoffs and the served client of each server.
#[pyfunction]
fn resolve_round(
    requests: Vec<usize>,
    n_servers: usize,
    rng: &mut RngStream,
) -> PyResult<(Vec<bool>, Vec<Option<usize>>)> {
    let alloc = model::Allocation::new(requests, n_servers).map_err(err)?;
    let out = model::resolve_round(&alloc, &mut rng.inner);
    Ok((out.fulfilled, out.winners))
}

#[pyclass(module = "kpr", skip_from_py_object)]
#[derive(Clone)]
pub struct ExperimentConfig {
    inner: runner::ExperimentConfig,
}

#[pymethods]
impl ExperimentConfig {
    #[new]
    #[pyo3(signature = (n, horizon, seed, replications = 1, stability_threshold = 0.99, record_every = 1, shuffle_groups = false))]
    fn new(
        n: usize,
        horizon: usize,
        seed: u64,
        replications: usize,
        stability_threshold: f64,
        record_every: usize,
        shuffle_groups: bool,
    ) -> Self {
        Self {
            inner: runner::ExperimentConfig {
                n,
                horizon,
                groups: Vec::new(),
                seed,
                replications,
                stability_threshold,
                record_every,
                shuffle_groups,
            },
        }
    }

    #[pyo3(signature = (label, size, kind, param = None))]
    fn add_group(&mut self, label: String, size: usize, kind: &str, param: Option<f64>) -> PyResult<()> {
        self.inner
            .groups
            .push(runner::PopulationGroup::new(label, size, kind_from(kind, param)?));
        Ok(())
    }

    fn validate(&self) -> PyResult<()> {
        self.inner.validate().map_err(err)
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }
}

/// Per-slice replication means (and standard deviations).
#[pyclass(module = "kpr")]
pub struct TimeSeries {
    inner: runner::TimeSeries,
}

#[pymethods]
impl TimeSeries {
    #[getter]
    fn slices(&self) -> Vec<usize> {
        self.inner.slices.clone()
    }

    #[getter]
    fn utilization(&self) -> Vec<f64> {
        self.inner.utilization.mean.clone()
    }

    #[getter]
    fn utilization_std(&self) -> Vec<f64> {
        self.inner.utilization.std.clone()
    }

    #[getter]
    fn stability(&self) -> Vec<f64> {
        self.inner.stability.mean.clone()
    }

    #[getter]
    fn group_rates(&self) -> HashMap<String, Vec<f64>> {
        self.inner
            .groups
            .iter()
            .zip(&self.inner.group_rates)
            .map(|(g, s)| (g.label.clone(), s.mean.clone()))
            .collect()
    }

    /// Means over the final 10% of recorded slices.
    fn steady_state(&self) -> HashMap<String, f64> {
        let ss = self.inner.steady_state();
        let mut out = HashMap::from([
            ("utilization".to_string(), ss.utilization),
            ("stability".to_string(), ss.stability),
        ]);
        for (g, r) in self.inner.groups.iter().zip(ss.group_rates) {
            out.insert(format!("rate:{}", g.label), r);
        }
        out
    }
}

#[pyfunction]
fn run_replications(py: Python<'_>, config: &ExperimentConfig) -> PyResult<TimeSeries> {
    let cfg = config.inner.clone();
    let inner = py.detach(move || runner::run_replications(&cfg)).map_err(err)?;
    Ok(TimeSeries { inner })
}

/// `(value, utilization, stability, group_rates)`.
type SweepRowTuple = (f64, f64, f64, Vec<f64>);

/// One steady-state row per swept value.
#[pyfunction]
fn sweep(
    py: Python<'_>,
    config: &ExperimentConfig,
    parameter: &str,
    values: Vec<f64>,
) -> PyResult<Vec<SweepRowTuple>> {
    let p = match parameter {
        "group_split" => SweepParameter::GroupSplit,
        "step" => SweepParameter::Step,
        "fraction" => SweepParameter::Fraction,
        "multiplier" => SweepParameter::Multiplier,
        other => return Err(PyValueError::new_err(format!("unknown sweep parameter `{other}`"))),
    };
    let cfg = config.inner.clone();
    let table = py.detach(move || runner::sweep(&cfg, p, &values)).map_err(err)?;
    Ok(table
        .rows
        .into_iter()
        .map(|r| (r.value, r.utilization, r.stability, r.group_rates))
        .collect())
}

#[pyfunction]
fn poisson_idle_probability(lam: f64) -> PyResult<f64> {
    theory::poisson_idle_probability(lam).map_err(err)
}

#[pyfunction]
fn random_choice_utilization(lam: f64) -> PyResult<f64> {
    theory::random_choice_utilization(lam).map_err(err)
}

/// Rows `(t, g, f, theta)` of the Strategy 1 recursion.
#[pyfunction]
fn strategy1_recursion(horizon: usize) -> PyResult<Vec<(usize, f64, f64, f64)>> {
    let trace = theory::strategy1_recursion(horizon).map_err(err)?;
    Ok(trace.steps.iter().map(|s| (s.t, s.g, s.f, s.theta)).collect())
}

#[pyfunction]
fn strategy1_limit_interval() -> (f64, f64) {
    theory::strategy1_limit_interval()
}

/// Sparse `N^2 x N^2` mixing weights over flattened client-major indices.
#[pyclass(module = "kpr")]
pub struct WeightMatrix {
    inner: kpr_core::WeightMatrix,
}

fn wrap(r: kpr_core::Result<kpr_core::WeightMatrix>) -> PyResult<WeightMatrix> {
    r.map(|inner| WeightMatrix { inner }).map_err(err)
}

#[pymethods]
impl WeightMatrix {
    #[staticmethod]
    fn from_triples(n: usize, triples: Vec<(usize, usize, f64)>) -> PyResult<Self> {
        wrap(kpr_core::WeightMatrix::from_triples(n, triples))
    }

    #[staticmethod]
    fn identity(n: usize) -> PyResult<Self> {
        wrap(kpr_core::WeightMatrix::identity(n))
    }

    #[staticmethod]
    fn uniform_rows(n: usize) -> PyResult<Self> {
        wrap(kpr_core::WeightMatrix::uniform_rows(n))
    }

    #[staticmethod]
    fn copy_client(n: usize, sources: Vec<usize>) -> PyResult<Self> {
        wrap(kpr_core::WeightMatrix::copy_client(n, &sources))
    }

    #[staticmethod]
    fn pairwise_average(n: usize, partners: Vec<usize>) -> PyResult<Self> {
        wrap(kpr_core::WeightMatrix::pairwise_average(n, &partners))
    }

    #[staticmethod]
    fn kronecker(clients: Vec<Vec<f64>>, servers: Vec<Vec<f64>>) -> PyResult<Self> {
        wrap(kpr_core::WeightMatrix::kronecker(&clients, &servers))
    }

    /// Parses the plain-text sparse-triple format.
    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        wrap(parse_weight_matrix(text))
    }

    fn format(&self) -> String {
        format_weight_matrix(&self.inner)
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn nnz(&self) -> usize {
        self.inner.nnz()
    }

    /// Verdict string and the reasons behind it.
    fn certify(&self) -> PyResult<(String, Vec<String>)> {
        let r = mixing::certify_uniform_consensus(&self.inner).map_err(err)?;
        Ok((r.verdict.to_string(), r.reasons))
    }

    /// Runs the mixing dynamics from `p0`; returns `(p_final, iterations, converged)`.
    #[pyo3(signature = (p0, tol = mixing::DEFAULT_TOL, max_iter = mixing::DEFAULT_MAX_ITER))]
    fn iterate(&self, p0: Vec<f64>, tol: f64, max_iter: usize) -> PyResult<(Vec<f64>, usize, bool)> {
        let p = mixing::FlatStrategyVector::new(self.inner.n(), p0).map_err(err)?;
        let out = mixing::iterate(&self.inner, &p, tol, max_iter).map_err(err)?;
        Ok((out.p_final.entries().to_vec(), out.iterations, out.converged))
    }
}

#[pymodule]
pub fn kpr(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<RngStream>()?;
    m.add_class::<ClientState>()?;
    m.add_class::<ExperimentConfig>()?;
    m.add_class::<TimeSeries>()?;
    m.add_class::<WeightMatrix>()?;
    m.add_function(wrap_pyfunction!(resolve_round, m)?)?;
    m.add_function(wrap_pyfunction!(run_replications, m)?)?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    m.add_function(wrap_pyfunction!(poisson_idle_probability, m)?)?;
    m.add_function(wrap_pyfunction!(random_choice_utilization, m)?)?;
    m.add_function(wrap_pyfunction!(strategy1_recursion, m)?)?;
    m.add_function(wrap_pyfunction!(strategy1_limit_interval, m)?)?;
    Ok(())
}
