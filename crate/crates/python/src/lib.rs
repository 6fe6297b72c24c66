use std::path::PathBuf;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use wmprobe::agents::{simulate_cohort, HumanGenParams, SimKind, StyleParams};
use wmprobe::anomaly::{ScoringModel, ScoringOptions};
use wmprobe::paradigm::{SessionPlan, TaskConfig};
use wmprobe::store::{session_from_json, session_to_json, SessionRecord};

fn err(e: wmprobe::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn task_config(config_json: Option<&str>) -> PyResult<TaskConfig> {
    let config: TaskConfig = match config_json {
        Some(t) => serde_json::from_str(t).map_err(|e| PyValueError::new_err(e.to_string()))?,
        None => TaskConfig::default(),
    };
    config.validate().map_err(err)?;
    Ok(config)
}

fn chains_ref(chains: &[Vec<f64>]) -> Vec<&[f64]> {
    chains.iter().map(Vec::as_slice).collect()
}

/// Session plan for `seed` as JSON.
#[pyfunction]
#[pyo3(signature = (seed, config_json = None))]
fn session_plan(seed: u64, config_json: Option<&str>) -> PyResult<String> {
    let plan = SessionPlan::new(seed, &task_config(config_json)?).map_err(err)?;
    serde_json::to_string(&plan).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// `n` simulated sessions of `kind` ("human", "perfect" or "wm") as JSON strings.
#[pyfunction]
#[pyo3(signature = (kind, n, seed = 0, config_json = None))]
fn simulate(kind: &str, n: usize, seed: u64, config_json: Option<&str>) -> PyResult<Vec<String>> {
    let kind = match kind {
        "human" => SimKind::Human,
        "perfect" => SimKind::Perfect,
        "wm" => SimKind::Wm,
        other => return Err(PyValueError::new_err(format!("unknown kind {other:?}"))),
    };
    let config = task_config(config_json)?;
    simulate_cohort(kind, n, seed, &config, &HumanGenParams::default(), &StyleParams::default())
        .map_err(err)?
        .iter()
        .map(|s| session_to_json(s).map_err(err))
        .collect()
}

#[pyfunction]
fn session_schema() -> String {
    wmprobe::store::session_schema()
}

/// Parses and validates a session; raises ValueError naming the bad field.
#[pyfunction]
fn validate_session(text: &str) -> PyResult<String> {
    Ok(session_from_json(text).map_err(err)?.participant_id.to_string())
}

#[pyfunction]
fn main_accuracy(text: &str) -> PyResult<Option<f64>> {
    Ok(session_from_json(text).map_err(err)?.main_accuracy())
}

/// Participant ids whose main-trial accuracy is at least `threshold`.
#[pyfunction]
#[pyo3(signature = (sessions, threshold = wmprobe::anomaly::DEFAULT_SCREEN_THRESHOLD))]
fn accuracy_screen(sessions: Vec<String>, threshold: f64) -> PyResult<Vec<String>> {
    let records: Vec<SessionRecord> = sessions.iter().map(|s| session_from_json(s).map_err(err)).collect::<PyResult<_>>()?;
    Ok(wmprobe::anomaly::accuracy_screen(&records, threshold)
        .into_iter()
        .map(|h| h.participant_id.to_string())
        .collect())
}

#[pyfunction]
fn roc<'py>(py: Python<'py>, pos: Vec<f64>, neg: Vec<f64>) -> PyResult<Bound<'py, PyDict>> {
    let c = wmprobe::anomaly::roc(&pos, &neg).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("thresholds", c.thresholds)?;
    d.set_item("tpr", c.tpr)?;
    d.set_item("fpr", c.fpr)?;
    d.set_item("auroc", c.auroc)?;
    Ok(d)
}

#[pyfunction]
fn auroc(pos: Vec<f64>, neg: Vec<f64>) -> PyResult<f64> {
    Ok(wmprobe::anomaly::roc(&pos, &neg).map_err(err)?.auroc)
}

#[pyfunction]
fn threshold_at_fnr<'py>(py: Python<'py>, pos: Vec<f64>, neg: Vec<f64>, max_fnr: f64) -> PyResult<Bound<'py, PyDict>> {
    let c = wmprobe::anomaly::roc(&pos, &neg).map_err(err)?;
    let op = wmprobe::anomaly::threshold_at_fnr(&c, max_fnr).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("threshold", op.threshold)?;
    d.set_item("tpr", op.tpr)?;
    d.set_item("fpr", op.fpr)?;
    d.set_item("fnr", op.fnr)?;
    d.set_item("attained", op.attained)?;
    Ok(d)
}

#[pyfunction]
fn rhat(chains: Vec<Vec<f64>>) -> PyResult<f64> {
    wmprobe::inference::rhat(&chains_ref(&chains)).map_err(err)
}

#[pyfunction]
fn ess_bulk(chains: Vec<Vec<f64>>) -> PyResult<f64> {
    wmprobe::inference::ess_bulk(&chains_ref(&chains)).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (samples, mass = 0.94))]
fn hdi(samples: Vec<f64>, mass: f64) -> PyResult<(f64, f64)> {
    wmprobe::inference::hdi(&samples, mass).map_err(err)
}

/// A fitted normative model loaded from disk.
#[pyclass(frozen, name = "FitArtifact")]
struct PyFitArtifact {
    inner: wmprobe::store::FitArtifact,
    model: ScoringModel,
}

#[pymethods]
impl PyFitArtifact {
    #[staticmethod]
    #[pyo3(signature = (path, thin_to = wmprobe::anomaly::DEFAULT_THIN_TO))]
    fn load(path: PathBuf, thin_to: usize) -> PyResult<Self> {
        let inner = wmprobe::store::FitArtifact::read(&path).map_err(err)?;
        let model = inner.scoring_model(thin_to).map_err(err)?;
        Ok(Self { inner, model })
    }

    #[getter]
    fn fingerprint(&self) -> String {
        self.inner.header.fingerprint.clone()
    }

    #[getter]
    fn roster(&self) -> Vec<String> {
        self.inner.header.roster.iter().map(|u| u.to_string()).collect()
    }

    #[getter]
    fn names(&self) -> Vec<String> {
        self.inner.draws.names.clone()
    }

    #[getter]
    fn min_set_size(&self) -> u32 {
        self.inner.header.min_set_size
    }

    /// Pooled draws of one constrained parameter, e.g. `mu_capacity`.
    fn draws(&self, name: &str) -> PyResult<Vec<f64>> {
        let j = self
            .inner
            .draws
            .names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| PyValueError::new_err(format!("no parameter named {name:?}")))?;
        Ok(self.inner.draws.pooled(j))
    }

    #[pyo3(signature = (session_json, m = wmprobe::anomaly::DEFAULT_M_POINTWISE, m_joint = wmprobe::anomaly::DEFAULT_M_JOINT, seed = 0, min_set_size = None))]
    fn score<'py>(
        &self,
        py: Python<'py>,
        session_json: &str,
        m: usize,
        m_joint: usize,
        seed: u64,
        min_set_size: Option<u32>,
    ) -> PyResult<Bound<'py, PyDict>> {
        let record = session_from_json(session_json).map_err(err)?;
        let rows = wmprobe::design::rows_from_session(&record).map_err(err)?;
        let opts = ScoringOptions {
            m_pointwise: m,
            m_joint,
            min_set_size: min_set_size.unwrap_or(self.inner.header.min_set_size),
            seed,
            joint: true,
        };
        let r = py
            .detach(|| wmprobe::anomaly::score_pointwise(&rows, &record.participant_type, &self.model, &opts))
            .map_err(err)?;
        let d = PyDict::new(py);
        d.set_item("participant_id", r.participant_id.to_string())?;
        d.set_item("participant_type", r.participant_type)?;
        d.set_item("n_trials_scored", r.n_trials_scored)?;
        d.set_item("mean_lppd", r.mean_lppd)?;
        d.set_item("joint_lpd", r.joint_lpd)?;
        Ok(d)
    }
}

#[pymodule]
#[pyo3(name = "wmprobe")]
fn wmprobe_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(session_plan, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(session_schema, m)?)?;
    m.add_function(wrap_pyfunction!(validate_session, m)?)?;
    m.add_function(wrap_pyfunction!(main_accuracy, m)?)?;
    m.add_function(wrap_pyfunction!(accuracy_screen, m)?)?;
    m.add_function(wrap_pyfunction!(roc, m)?)?;
    m.add_function(wrap_pyfunction!(auroc, m)?)?;
    m.add_function(wrap_pyfunction!(threshold_at_fnr, m)?)?;
    m.add_function(wrap_pyfunction!(rhat, m)?)?;
    m.add_function(wrap_pyfunction!(ess_bulk, m)?)?;
    m.add_function(wrap_pyfunction!(hdi, m)?)?;
    m.add_class::<PyFitArtifact>()?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
