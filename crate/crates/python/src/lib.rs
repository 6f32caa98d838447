//! Python bindings for `causeq`.
//!
//! Evidence and histories use the same text grammar as the command line:
//! comma-separated `X=v` and `do(X=v)` terms with variable names and labels.

use pyo3::create_exception;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use causeq::meta_trainer::{run_training, TrainingConfig, TrainingVariant};
use causeq::oracle::mint_constants;
use causeq::policies::{action_distribution_conditional, action_distribution_interventional, posterior_recursive};
use causeq::simulator::{self, EpisodeRecord, Estimate, ExperimentSummary, Policy};
use causeq::{CausalProcess, HistoryKey, LearnerTable, Mode, TaggedHistory};

create_exception!(
    pycauseq,
    CausalError,
    PyValueError,
    "Invalid input to a causeq operation."
);
create_exception!(
    pycauseq,
    ZeroProbabilityError,
    CausalError,
    "Evidence or history has probability zero."
);

fn err(e: causeq::Error) -> PyErr {
    match e {
        causeq::Error::ZeroProbabilityEvidence => ZeroProbabilityError::new_err(e.to_string()),
        other => CausalError::new_err(other.to_string()),
    }
}

/// A finite discrete causal process.
#[pyclass(module = "pycauseq", name = "Process", frozen)]
struct PyProcess {
    inner: CausalProcess,
}

impl PyProcess {
    fn history(&self, text: &str) -> PyResult<TaggedHistory> {
        Ok(TaggedHistory::new(self.inner.parse_evidence(text).map_err(err)?))
    }

    fn id(&self, name: &str) -> PyResult<usize> {
        self.inner.id_of(name).map_err(err)
    }
}

#[pymethods]
impl PyProcess {
    /// Built-in process by name; `horizon` sets the bandit's rounds.
    #[staticmethod]
    #[pyo3(signature = (name, horizon = 1))]
    fn builtin(name: &str, horizon: usize) -> PyResult<Self> {
        Ok(Self {
            inner: causeq::builtin(name, horizon).map_err(err)?,
        })
    }

    #[staticmethod]
    fn builtin_names() -> Vec<&'static str> {
        causeq::BUILTIN_NAMES.to_vec()
    }

    /// Parses the line-based spec format.
    #[staticmethod]
    fn from_spec(text: &str) -> PyResult<Self> {
        causeq::parse_process_spec(text)
            .map(|inner| Self { inner })
            .map_err(|e| CausalError::new_err(e.to_string()))
    }

    fn to_spec(&self) -> String {
        causeq::serialize_process(&self.inner)
    }

    #[getter]
    fn name(&self) -> &str {
        &self.inner.name
    }

    /// Variable names in causal order.
    #[getter]
    fn variables(&self) -> Vec<String> {
        self.inner.variables.iter().map(|v| v.name.clone()).collect()
    }

    fn labels(&self, variable: &str) -> PyResult<Vec<String>> {
        Ok(self.inner.variable(self.id(variable)?).labels.clone())
    }

    fn role(&self, variable: &str) -> PyResult<&'static str> {
        Ok(self.inner.variable(self.id(variable)?).role.as_str())
    }

    /// Distribution of `target` given the evidence, one entry per label.
    #[pyo3(signature = (target, evidence = ""))]
    fn query(&self, target: &str, evidence: &str) -> PyResult<Vec<f64>> {
        let target = self.id(target)?;
        let evidence = self.inner.parse_evidence(evidence).map_err(err)?;
        causeq::query(&self.inner, target, &evidence)
            .map(|d| d.into_probs())
            .map_err(err)
    }

    /// Next-action distribution after `history`, treating past actions as
    /// interventions (default) or as conditions.
    #[pyo3(signature = (history = "", interventional = true))]
    fn action_distribution(&self, history: &str, interventional: bool) -> PyResult<Vec<f64>> {
        let history = self.history(history)?;
        let d = if interventional {
            action_distribution_interventional(&self.inner, &history)
        } else {
            action_distribution_conditional(&self.inner, &history)
        };
        d.map(|d| d.into_probs()).map_err(err)
    }

    /// Posterior over the latent block after each history symbol. Returns
    /// (latent variable names, one posterior per step).
    #[pyo3(signature = (history = ""))]
    fn posterior(&self, history: &str) -> PyResult<(Vec<String>, Vec<Vec<f64>>)> {
        let history = self.history(history)?.with_action_mode(&self.inner, Mode::Intervene);
        let trace = posterior_recursive(&self.inner, &history).map_err(err)?;
        let names = trace
            .last()
            .variables
            .iter()
            .map(|&v| self.inner.variable(v).name.clone())
            .collect();
        Ok((
            names,
            trace.steps.iter().map(|s| s.posterior.probs().to_vec()).collect(),
        ))
    }

    fn __repr__(&self) -> String {
        format!("Process({:?}, {} variables)", self.inner.name, self.inner.len())
    }
}

/// Tabular learner trained by factual/counterfactual teaching.
#[pyclass(module = "pycauseq", name = "Learner", frozen)]
struct PyLearner {
    inner: LearnerTable,
}

#[pymethods]
impl PyLearner {
    /// Trains on `process` (a one-round template or any stationary rounds).
    #[staticmethod]
    #[pyo3(signature = (process, horizon, episodes, seed, alpha = 1.0, variant = "frozen", workers = 1))]
    fn train(
        process: &PyProcess,
        horizon: usize,
        episodes: usize,
        seed: u64,
        alpha: f64,
        variant: &str,
        workers: usize,
    ) -> PyResult<Self> {
        let variant = match variant {
            "frozen" => TrainingVariant::Frozen,
            "interleaved" => TrainingVariant::Interleaved,
            other => return Err(CausalError::new_err(format!("unknown variant {other:?}"))),
        };
        let config = TrainingConfig {
            horizon,
            episodes,
            alpha,
            seed,
            variant,
            workers,
        };
        Ok(Self {
            inner: run_training(&process.inner, &config).map_err(err)?,
        })
    }

    #[staticmethod]
    fn from_text(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: LearnerTable::from_text(text).map_err(err)?,
        })
    }

    fn to_text(&self) -> String {
        self.inner.to_text()
    }

    /// Predicted next action for a history key such as `do(1=0),2=1`.
    #[pyo3(signature = (key = "-"))]
    fn action_predictive(&self, key: &str) -> PyResult<Vec<f64>> {
        Ok(self.inner.action_predictive(&parse_key(key)?).into_probs())
    }

    fn observation_predictive(&self, key: &str) -> PyResult<Vec<f64>> {
        Ok(self.inner.observation_predictive(&parse_key(key)?).into_probs())
    }

    /// Number of (action keys, observation keys).
    fn __len__(&self) -> usize {
        self.inner.actions.len() + self.inner.observations.len()
    }
}

fn parse_key(key: &str) -> PyResult<HistoryKey> {
    causeq::meta_trainer::parse_key(key).ok_or_else(|| CausalError::new_err(format!("invalid history key {key:?}")))
}

fn policy<'a>(name: &str, learner: Option<&'a PyLearner>) -> PyResult<Policy<'a>> {
    match (name, learner) {
        ("conditional", _) => Ok(Policy::Conditional),
        ("interventional", _) => Ok(Policy::Interventional),
        ("learned", Some(l)) => Ok(Policy::Learned(&l.inner)),
        ("learned", None) => Err(CausalError::new_err("the learned policy needs a learner")),
        (other, _) => Err(CausalError::new_err(format!("unknown policy {other:?}"))),
    }
}

fn record_dict<'py>(py: Python<'py>, r: &EpisodeRecord) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("seed", r.seed)?;
    d.set_item("theta", r.theta.clone())?;
    d.set_item("policy", r.policy.as_str())?;
    d.set_item("aborted", r.aborted)?;
    d.set_item("actions", r.steps.iter().map(|s| s.action).collect::<Vec<_>>())?;
    d.set_item(
        "observations",
        r.steps.iter().map(|s| s.observation).collect::<Vec<_>>(),
    )?;
    d.set_item("rewards", r.steps.iter().map(|s| s.reward).collect::<Vec<_>>())?;
    Ok(d)
}

fn summary_dict<'py>(py: Python<'py>, s: &ExperimentSummary) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("policy", s.policy.as_str())?;
    d.set_item("horizon", s.horizon)?;
    d.set_item("episodes", s.episodes)?;
    d.set_item("aborted", s.aborted)?;
    let pair = |e: &Estimate| (e.mean, e.se);
    d.set_item("mean_reward", pair(&s.mean_reward))?;
    d.set_item("best_arm_rate", pair(&s.best_arm_rate))?;
    d.set_item("repeat_rate", pair(&s.repeat_rate))?;
    Ok(d)
}

/// One seeded episode. Symbols in the record are 0-based.
#[pyfunction]
#[pyo3(signature = (process, policy_name, horizon, seed, learner = None))]
fn run_episode<'py>(
    py: Python<'py>,
    process: &PyProcess,
    policy_name: &str,
    horizon: usize,
    seed: u64,
    learner: Option<&PyLearner>,
) -> PyResult<Bound<'py, PyDict>> {
    let record = simulator::run_episode(&process.inner, policy(policy_name, learner)?, horizon, seed).map_err(err)?;
    record_dict(py, &record)
}

/// Summary of `episodes` seeded episodes; estimates are (mean, standard error).
#[allow(clippy::too_many_arguments)]
#[pyfunction]
#[pyo3(signature = (process, policy_name, horizon, episodes, seed, workers = 1, learner = None))]
fn run_experiment<'py>(
    py: Python<'py>,
    process: &PyProcess,
    policy_name: &str,
    horizon: usize,
    episodes: usize,
    seed: u64,
    workers: usize,
    learner: Option<&PyLearner>,
) -> PyResult<Bound<'py, PyDict>> {
    let policy = policy(policy_name, learner)?;
    let (summary, _) = py
        .detach(|| simulator::run_experiment(&process.inner, policy, horizon, episodes, seed, workers))
        .map_err(err)?;
    summary_dict(py, &summary)
}

/// Offline fit on expert demonstrations: one dict per history key.
#[pyfunction]
#[pyo3(signature = (process, horizon, trajectories, seed, alpha = 1.0))]
fn offline_demo<'py>(
    py: Python<'py>,
    process: &PyProcess,
    horizon: usize,
    trajectories: usize,
    seed: u64,
    alpha: f64,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let report = simulator::offline_demo(&process.inner, horizon, trajectories, seed, alpha).map_err(err)?;
    report
        .rows
        .iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("key", r.key.to_string())?;
            d.set_item("samples", r.samples)?;
            d.set_item("fitted", r.fitted.probs().to_vec())?;
            d.set_item("conditional", r.conditional.probs().to_vec())?;
            d.set_item("interventional", r.interventional.probs().to_vec())?;
            d.set_item("tv_conditional", (r.tv_conditional, r.tv_conditional_se))?;
            d.set_item("tv_interventional", (r.tv_interventional, r.tv_interventional_se))?;
            Ok(d)
        })
        .collect()
}

/// Reference constants computed by brute-force enumeration.
#[pyfunction]
fn reference_constants(py: Python<'_>) -> PyResult<Bound<'_, PyDict>> {
    let d = PyDict::new(py);
    for c in mint_constants().map_err(err)? {
        d.set_item(c.name, c.value)?;
    }
    Ok(d)
}

#[pymodule]
fn pycauseq(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add("CausalError", m.py().get_type::<CausalError>())?;
    m.add("ZeroProbabilityError", m.py().get_type::<ZeroProbabilityError>())?;
    m.add_class::<PyProcess>()?;
    m.add_class::<PyLearner>()?;
    m.add_function(wrap_pyfunction!(run_episode, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(offline_demo, m)?)?;
    m.add_function(wrap_pyfunction!(reference_constants, m)?)?;
    Ok(())
}
