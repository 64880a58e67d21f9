//! Python bindings for randsum-core.
//!
//! Distributions, random indices and arrays are small classes; reports come back as
//! plain dicts decoded from the same JSON the command line writes.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyComplex;
use serde::Serialize;

use randsum_core::conditions::{self, EvalOptions, FunctionalSelection, Functional};
use randsum_core::config::{CounterexampleSettings, ScenarioConfig};
use randsum_core::metrics::{self, Law, MixtureOptions};
use randsum_core::{mc, SeriesBase, SumModel};

fn value_error(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py<'py, T: Serialize>(py: Python<'py>, v: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(v).map_err(value_error)?;
    py.import("json")?.call_method1("loads", (text,))
}

fn from_json<T: serde::de::DeserializeOwned>(text: &str) -> PyResult<T> {
    serde_json::from_str(text).map_err(value_error)
}

/// A scalar distribution.
#[pyclass(name = "Distribution", frozen, from_py_object)]
#[derive(Clone)]
struct Distribution(randsum_core::ScalarDistribution);

#[pymethods]
impl Distribution {
    #[staticmethod]
    #[pyo3(signature = (mean=0.0, var=1.0))]
    fn normal(mean: f64, var: f64) -> PyResult<Self> {
        randsum_core::ScalarDistribution::normal(mean, var).map(Self).map_err(value_error)
    }

    #[staticmethod]
    fn uniform(a: f64, b: f64) -> PyResult<Self> {
        randsum_core::ScalarDistribution::uniform(a, b).map(Self).map_err(value_error)
    }

    #[staticmethod]
    fn rademacher() -> Self {
        Self(randsum_core::ScalarDistribution::rademacher())
    }

    #[staticmethod]
    fn two_point(low: f64, high: f64, p_low: f64) -> PyResult<Self> {
        randsum_core::ScalarDistribution::two_point(low, high, p_low).map(Self).map_err(value_error)
    }

    #[staticmethod]
    fn exponential_centered(rate: f64) -> PyResult<Self> {
        randsum_core::ScalarDistribution::exponential_centered(rate).map(Self).map_err(value_error)
    }

    #[staticmethod]
    fn finite_discrete(atoms: Vec<f64>, probs: Vec<f64>) -> PyResult<Self> {
        randsum_core::ScalarDistribution::finite_discrete(atoms, probs).map(Self).map_err(value_error)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let d: randsum_core::ScalarDistribution = from_json(text)?;
        d.validate().map_err(value_error)?;
        Ok(Self(d))
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.0).map_err(value_error)
    }

    fn scaled(&self, c: f64) -> Self {
        Self(self.0.clone().scaled(c))
    }

    fn mean(&self) -> f64 {
        self.0.mean()
    }

    fn variance(&self) -> f64 {
        self.0.variance()
    }

    /// P(X ≤ x).
    fn cdf(&self, x: f64) -> f64 {
        self.0.cdf_right(x)
    }

    fn char_fn<'py>(&self, py: Python<'py>, t: f64) -> Bound<'py, PyComplex> {
        let z = self.0.char_fn(t);
        PyComplex::from_doubles(py, z.re, z.im)
    }

    fn truncated_second_moment(&self, threshold: f64) -> PyResult<f64> {
        self.0.truncated_second_moment(threshold).map_err(value_error)
    }

    fn __repr__(&self) -> String {
        format!("Distribution({})", serde_json::to_string(&self.0).unwrap_or_default())
    }
}

/// A positive integer-valued random index ν.
#[pyclass(name = "RandomIndex", frozen, skip_from_py_object)]
#[derive(Clone)]
struct RandomIndex(randsum_core::RandomIndex);

#[pymethods]
impl RandomIndex {
    #[staticmethod]
    fn deterministic(k: u64) -> PyResult<Self> {
        randsum_core::RandomIndex::deterministic(k).map(Self).map_err(value_error)
    }

    /// 1 + Poisson(mean − 1), so that E ν = mean.
    #[staticmethod]
    fn poisson(mean: f64) -> PyResult<Self> {
        randsum_core::RandomIndex::poisson_with_mean(mean).map(Self).map_err(value_error)
    }

    #[staticmethod]
    fn geometric(p: f64) -> PyResult<Self> {
        randsum_core::RandomIndex::geometric(p).map(Self).map_err(value_error)
    }

    #[staticmethod]
    fn negative_binomial(r: f64, mean: f64) -> PyResult<Self> {
        randsum_core::RandomIndex::negative_binomial_with_mean(r, mean).map(Self).map_err(value_error)
    }

    #[staticmethod]
    fn finite_support(support: Vec<u64>, probs: Vec<f64>) -> PyResult<Self> {
        randsum_core::RandomIndex::finite_support(support, probs).map(Self).map_err(value_error)
    }

    fn pmf(&self, k: u64) -> f64 {
        self.0.pmf(k)
    }

    fn mean(&self) -> f64 {
        self.0.mean()
    }

    /// Smallest K with P(ν > K) ≤ eta.
    fn truncation(&self, eta: f64) -> PyResult<u64> {
        self.0.truncation(eta).map_err(value_error)
    }

    fn family(&self) -> &'static str {
        self.0.family()
    }
}

/// A triangular array of independent row entries.
#[pyclass(name = "TriangularArray", frozen, skip_from_py_object)]
#[derive(Clone)]
struct TriangularArray(randsum_core::TriangularArray);

#[pymethods]
impl TriangularArray {
    #[staticmethod]
    #[pyo3(signature = (base, multiplier=1))]
    fn iid(base: &Distribution, multiplier: u64) -> PyResult<Self> {
        randsum_core::TriangularArray::iid(base.0.clone(), randsum_core::Rows::times(multiplier))
            .map(Self)
            .map_err(value_error)
    }

    #[staticmethod]
    fn shiryaev() -> Self {
        Self(randsum_core::TriangularArray::shiryaev(randsum_core::Rows::default()))
    }

    #[staticmethod]
    fn rare_jumps() -> Self {
        Self(randsum_core::TriangularArray::rare_jumps(randsum_core::Rows::default()))
    }

    /// Series array with σ²_j = j^power · Var(base).
    #[staticmethod]
    fn power_variance(base: &Distribution, power: f64) -> PyResult<Self> {
        randsum_core::TriangularArray::from_series(SeriesBase::PowerVariance { base: base.0.clone(), power })
            .map(Self)
            .map_err(value_error)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let a: randsum_core::TriangularArray = from_json(text)?;
        a.check().map_err(value_error)?;
        Ok(Self(a))
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.0).map_err(value_error)
    }

    fn label(&self) -> String {
        self.0.label()
    }

    fn row_length(&self, n: u64) -> u64 {
        self.0.row_length(n)
    }

    fn row_variances(&self, n: u64) -> Vec<f64> {
        self.0.row_variances(n, self.0.row_length(n))
    }

    fn row(&self, n: u64) -> Vec<Distribution> {
        self.0.row(n, self.0.row_length(n)).into_iter().map(Distribution).collect()
    }
}

fn functional(name: &str, epsilon: Option<f64>, delta: Option<f64>) -> PyResult<Functional> {
    let eps = || epsilon.ok_or_else(|| PyValueError::new_err(format!("{name} needs epsilon")));
    Ok(match name {
        "L" => Functional::Lindeberg(eps()?),
        "Lambda" => Functional::Lyapunov(delta.ok_or_else(|| PyValueError::new_err("Lambda needs delta"))?),
        "F" => Functional::Feller,
        "I" => Functional::Infinitesimality(eps()?),
        "R" => Functional::Rotar(eps()?),
        "sigma_star" => Functional::SigmaStar,
        _ => return Err(PyValueError::new_err(format!("unknown functional {name:?}"))),
    })
}

/// Classical functional of row n: "L", "Lambda", "F", "I", "R" or "sigma_star".
/// Returns (value, error bound).
#[pyfunction]
#[pyo3(signature = (name, array, n, epsilon=None, delta=None))]
fn classical(name: &str, array: &TriangularArray, n: u64, epsilon: Option<f64>, delta: Option<f64>) -> PyResult<(f64, f64)> {
    let f = functional(name, epsilon, delta)?;
    let mut ev = conditions::RowEvaluator::new(&array.0, n, EvalOptions::default()).map_err(value_error)?;
    let e = ev.classical(f).map_err(value_error)?;
    Ok((e.value, e.error))
}

/// Randomized functional E[functional over j ≤ ν]. Returns (value, error bound).
#[pyfunction]
#[pyo3(signature = (name, array, index, n, epsilon=None, delta=None, eta=1e-10))]
fn randomized(
    name: &str,
    array: &TriangularArray,
    index: &RandomIndex,
    n: u64,
    epsilon: Option<f64>,
    delta: Option<f64>,
    eta: f64,
) -> PyResult<(f64, f64)> {
    let f = functional(name, epsilon, delta)?;
    let r = conditions::randomized(f, &array.0, &index.0, n, eta).map_err(value_error)?;
    Ok((r.value, r.error_bound()))
}

/// Every functional of one (n, ε, δ) cell, classical and (with an index) randomized.
#[pyfunction]
#[pyo3(signature = (array, n, epsilon, delta=1.0, index=None))]
fn condition_report<'py>(
    py: Python<'py>,
    array: &TriangularArray,
    n: u64,
    epsilon: f64,
    delta: f64,
    index: Option<&RandomIndex>,
) -> PyResult<Bound<'py, PyAny>> {
    let rep = conditions::condition_report(
        &array.0,
        index.map(|i| &i.0),
        n,
        epsilon,
        delta,
        &FunctionalSelection::default(),
        EvalOptions::default(),
    )
    .map_err(value_error)?;
    to_py(py, &rep)
}

/// Implication inequalities on a grid; returns the report with every check.
#[pyfunction]
fn implication_suite<'py>(
    py: Python<'py>,
    array: &TriangularArray,
    index: &RandomIndex,
    n_grid: Vec<u64>,
    epsilon_grid: Vec<f64>,
    delta_grid: Vec<f64>,
) -> PyResult<Bound<'py, PyAny>> {
    let rep = conditions::implication_suite(&array.0, &index.0, &n_grid, &epsilon_grid, &delta_grid, EvalOptions::default(), 1e-9)
        .map_err(value_error)?;
    to_py(py, &rep)
}

/// Kolmogorov distance between two distributions: (value, bound).
#[pyfunction]
fn kolmogorov(a: &Distribution, b: &Distribution) -> (f64, f64) {
    let d = metrics::kolmogorov(&Law::Scalar(a.0.clone()), &Law::Scalar(b.0.clone()));
    (d.value, d.bound)
}

/// Zolotarev ζ_s distance, s ∈ {1, 2, 3}: (value, bound).
#[pyfunction]
fn zeta(a: &Distribution, b: &Distribution, s: u32) -> PyResult<(f64, f64)> {
    let d = metrics::zeta(&Law::Scalar(a.0.clone()), &Law::Scalar(b.0.clone()), s).map_err(value_error)?;
    Ok((d.value, d.bound))
}

/// Law of the row sum of independent normal or atomic entries, against N(0, 1).
#[pyfunction]
fn row_sum_distance(entries: Vec<Distribution>) -> PyResult<(f64, f64)> {
    let row: Vec<_> = entries.into_iter().map(|d| d.0).collect();
    let law = metrics::row_sum_law(&row).ok_or_else(|| PyValueError::new_err("entries must be normal or atomic"))?;
    let d = metrics::kolmogorov(&law, &Law::standard_normal());
    Ok((d.value, d.bound))
}

fn sum_model(array: &TriangularArray, n: u64, self_normalized: bool) -> PyResult<SumModel> {
    if !self_normalized {
        return Ok(SumModel::Array { array: array.0.clone(), n });
    }
    match &array.0 {
        randsum_core::TriangularArray::Series { base_seq } => Ok(SumModel::SelfNormalized { base_seq: base_seq.clone() }),
        _ => Err(PyValueError::new_err("self-normalized sums need a series array")),
    }
}

/// Kolmogorov distance of the random sum from N(0, 1) estimated from `samples` draws,
/// with the DKW half-width as bound.
#[pyfunction]
#[pyo3(signature = (array, index, n, samples=100_000, alpha=0.01, seed=42, self_normalized=false))]
fn empirical_delta(
    py: Python<'_>,
    array: &TriangularArray,
    index: &RandomIndex,
    n: u64,
    samples: usize,
    alpha: f64,
    seed: u64,
    self_normalized: bool,
) -> PyResult<(f64, f64)> {
    let model = sum_model(array, n, self_normalized)?;
    let d = py
        .detach(|| mc::empirical_delta(&model, &index.0, samples, alpha, seed, 0))
        .map_err(value_error)?;
    Ok((d.value, d.bound))
}

/// Exact distances of the random sum: Σ P(ν = k) Δ_k when `kind` is "mixture", the
/// distance of the random-sum law itself when it is "randomsum".
#[pyfunction]
#[pyo3(signature = (array, index, n, kind="mixture", self_normalized=false))]
fn exact_delta(
    py: Python<'_>,
    array: &TriangularArray,
    index: &RandomIndex,
    n: u64,
    kind: &str,
    self_normalized: bool,
) -> PyResult<(f64, f64)> {
    let model = sum_model(array, n, self_normalized)?;
    let opts = MixtureOptions::default();
    let d = py
        .detach(|| match kind {
            "mixture" => metrics::delta_mixture(&model, &index.0, &opts).map(Some),
            "randomsum" => metrics::delta_randomsum(&model, &index.0, &opts).map(Some),
            _ => Ok(None),
        })
        .map_err(value_error)?
        .ok_or_else(|| PyValueError::new_err(format!("unknown kind {kind:?}")))?;
    Ok((d.value, d.bound))
}

/// Runs the study described by a scenario config (JSON text).
#[pyfunction]
#[pyo3(signature = (config, seed=None))]
fn run_study<'py>(py: Python<'py>, config: &str, seed: Option<u64>) -> PyResult<Bound<'py, PyAny>> {
    let mut cfg = ScenarioConfig::from_json(config).map_err(value_error)?;
    if let Some(s) = seed {
        cfg.monte_carlo.seed = s;
    }
    let plan = cfg.study_plan().map_err(value_error)?;
    let run = py.detach(|| mc::run_study(&plan)).map_err(value_error)?;
    to_py(py, &run.result)
}

/// The Shiryaev counterexample findings with default settings.
#[pyfunction]
#[pyo3(signature = (seed=42, oracle_samples=100_000))]
fn counterexample<'py>(py: Python<'py>, seed: u64, oracle_samples: usize) -> PyResult<Bound<'py, PyAny>> {
    let settings = CounterexampleSettings {
        oracle_samples,
        ..CounterexampleSettings::default()
    };
    let rep = randsum_core::counterexample::counterexample(&settings, seed, EvalOptions::default()).map_err(value_error)?;
    to_py(py, &rep)
}

/// Built-in numerical checks against closed forms.
#[pyfunction]
#[pyo3(signature = (seed=42))]
fn selfcheck<'py>(py: Python<'py>, seed: u64) -> PyResult<Bound<'py, PyAny>> {
    let rep = py.detach(|| randsum_core::selfcheck::selfcheck(seed));
    to_py(py, &rep)
}

#[pyfunction]
fn dkw_bound(samples: usize, alpha: f64) -> f64 {
    metrics::dkw_bound(samples, alpha)
}

#[pymodule]
fn randsum(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Distribution>()?;
    m.add_class::<RandomIndex>()?;
    m.add_class::<TriangularArray>()?;
    m.add_function(wrap_pyfunction!(classical, m)?)?;
    m.add_function(wrap_pyfunction!(randomized, m)?)?;
    m.add_function(wrap_pyfunction!(condition_report, m)?)?;
    m.add_function(wrap_pyfunction!(implication_suite, m)?)?;
    m.add_function(wrap_pyfunction!(kolmogorov, m)?)?;
    m.add_function(wrap_pyfunction!(zeta, m)?)?;
    m.add_function(wrap_pyfunction!(row_sum_distance, m)?)?;
    m.add_function(wrap_pyfunction!(empirical_delta, m)?)?;
    m.add_function(wrap_pyfunction!(exact_delta, m)?)?;
    m.add_function(wrap_pyfunction!(run_study, m)?)?;
    m.add_function(wrap_pyfunction!(counterexample, m)?)?;
    m.add_function(wrap_pyfunction!(selfcheck, m)?)?;
    m.add_function(wrap_pyfunction!(dkw_bound, m)?)?;
    Ok(())
}
