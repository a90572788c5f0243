//! Python bindings: load a world model, score words, sample scenarios and
//! run the simulator. Structured values cross the boundary as JSON text.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use swarm_infer::inference::{abnormality, PlannerConfig};
use swarm_infer::qlearning::QTable;
use swarm_infer::sim::{run, Planner, Scenario, ScenarioSampler, SimConfig};
use swarm_infer::world_model::{Level, WordContext};

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

#[pyclass(name = "WorldModel", frozen)]
struct PyWorldModel {
    inner: swarm_infer::world_model::WorldModel,
}

#[pymethods]
impl PyWorldModel {
    /// Accepts the bare model JSON or the CLI's `{"world_model": ...}` file.
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(err)?;
        let inner = value.get("world_model").cloned().unwrap_or(value);
        let inner = swarm_infer::world_model::WorldModel::from_json(&inner.to_string()).map_err(err)?;
        Ok(Self { inner })
    }

    /// Mission words take `role` and `fleet`; Route and Motion words take
    /// their `parent` word.
    #[pyo3(signature = (level, word, role=None, fleet=None, parent=None))]
    fn abnormality(&self, level: &str, word: Vec<usize>, role: Option<usize>, fleet: Option<usize>, parent: Option<Vec<usize>>) -> PyResult<f64> {
        let level: Level = level.parse().map_err(err)?;
        let ctx = match (level, role, fleet, parent) {
            (Level::Mission, Some(role), Some(fleet), None) => WordContext::Role { role, fleet },
            (Level::Route | Level::Motion, None, None, Some(p)) => WordContext::Parent(p),
            _ => return Err(PyValueError::new_err("mission words need role and fleet; route and motion words need parent")),
        };
        abnormality(&self.inner, level, &word, &ctx).map_err(err)
    }

    /// Cell letter of a point.
    fn letter(&self, x: f64, y: f64) -> usize {
        self.inner.spatial.letter(swarm_infer::model::Point::new(x, y))
    }

    #[getter]
    fn thresholds(&self) -> (f64, f64, f64, f64) {
        let t = self.inner.thresholds;
        (t.mission, t.route, t.motion, t.total)
    }

    #[getter]
    fn num_demos(&self) -> usize {
        self.inner.num_demos
    }
}

/// Scenario `index` of the default benchmark suite for `master_seed`, as JSON.
#[pyfunction]
fn sample_scenario(master_seed: u64, index: u64) -> PyResult<String> {
    ScenarioSampler::default().sample(master_seed, index).and_then(|s| s.to_json()).map_err(err)
}

/// Runs a scenario with the active-inference planner (`model`) or the
/// Q-learning baseline (`qtable_json`) and returns the metrics as JSON.
#[pyfunction]
#[pyo3(signature = (scenario_json, model=None, qtable_json=None))]
fn simulate(scenario_json: &str, model: Option<&PyWorldModel>, qtable_json: Option<&str>) -> PyResult<String> {
    let scenario = Scenario::from_json(scenario_json).map_err(err)?;
    let table;
    let planner = match (model, qtable_json) {
        (Some(m), None) => Planner::ActiveInference {
            model: &m.inner,
            config: PlannerConfig::default(),
        },
        (None, Some(text)) => {
            let value: serde_json::Value = serde_json::from_str(text).map_err(err)?;
            let inner = value.get("qtable").cloned().unwrap_or(value);
            table = QTable::from_json(&inner.to_string()).map_err(err)?;
            Planner::QLearning(&table)
        }
        _ => return Err(PyValueError::new_err("pass exactly one of model or qtable_json")),
    };
    let out = run(&scenario, planner, &SimConfig::default()).map_err(err)?;
    serde_json::to_string(&out.metrics).map_err(err)
}

#[pymodule]
fn swarm_infer_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyWorldModel>()?;
    m.add_function(wrap_pyfunction!(sample_scenario, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    Ok(())
}
