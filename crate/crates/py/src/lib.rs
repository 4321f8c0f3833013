//! Python bindings: run missions, synthesize controllers, characterize
//! objects, and query the capability library from Python.

use std::path::{Path, PathBuf};

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::IntoPyObjectExt;
use pyo3::types::{PyDict, PyList};

use morphbot_core::designlib::Library;
use morphbot_core::envchar::{characterize, CharacterizationParams, EnvironmentType};
use morphbot_core::executor::{run_mission as run_mission_core, MissionResult, MissionSetupError};
use morphbot_core::mapping::OccupancyGrid;
use morphbot_core::reconfig::PlanSet;
use morphbot_core::scenario::Scenario;
use morphbot_core::synth::{parse_spec, synthesize, SynthesisOutcome};

fn load_library(path: &str) -> PyResult<Library> {
    Library::load(Path::new(path)).map_err(|e| PyValueError::new_err(format!("{path}: {e}")))
}

fn json_to_py(py: Python<'_>, v: &serde_json::Value) -> PyResult<Py<PyAny>> {
    match v {
        serde_json::Value::Null => Ok(py.None()),
        serde_json::Value::Bool(b) => b.into_py_any(py),
        serde_json::Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                i.into_py_any(py)
            } else {
                n.as_f64().unwrap().into_py_any(py)
            }
        }
        serde_json::Value::String(s) => s.into_py_any(py),
        serde_json::Value::Array(items) => {
            let list = PyList::empty(py);
            for item in items {
                list.append(json_to_py(py, item)?)?;
            }
            list.into_py_any(py)
        }
        serde_json::Value::Object(map) => {
            let dict = PyDict::new(py);
            for (k, val) in map {
                dict.set_item(k, json_to_py(py, val)?)?;
            }
            dict.into_py_any(py)
        }
    }
}

/// Run a mission from file paths; returns a summary dict with the full
/// event log under "events".
#[pyfunction]
#[pyo3(signature = (scenario, spec, library, plans, seed = 0))]
fn run_mission(
    py: Python<'_>,
    scenario: &str,
    spec: &str,
    library: &str,
    plans: &str,
    seed: u64,
) -> PyResult<Py<PyAny>> {
    let scenario = Scenario::load(&PathBuf::from(scenario))
        .map_err(|e| PyValueError::new_err(format!("{scenario}: {e}")))?;
    let text = std::fs::read_to_string(spec)
        .map_err(|e| PyValueError::new_err(format!("{spec}: {e}")))?;
    let spec = parse_spec(&text).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let lib = load_library(library)?;
    let plans = PlanSet::load(Path::new(plans))
        .map_err(|e| PyValueError::new_err(format!("{plans}: {e}")))?;
    let ms = run_mission_core(&scenario, &spec, &lib, &plans, seed).map_err(|e| match e {
        MissionSetupError::Unrealizable(_) => {
            PyValueError::new_err("specification is unrealizable")
        }
        other => PyRuntimeError::new_err(other.to_string()),
    })?;
    let dict = PyDict::new(py);
    let (result, cause) = match &ms.result {
        MissionResult::Complete => ("complete", None),
        MissionResult::Failed { cause } => ("failed", Some(cause.clone())),
    };
    dict.set_item("result", result)?;
    if let Some(cause) = cause {
        dict.set_item("cause", cause)?;
    }
    dict.set_item("ticks", ms.ticks)?;
    dict.set_item("reconfigurations", ms.reconfigurations)?;
    dict.set_item("distance_traveled", ms.distance_traveled)?;
    dict.set_item("final_configuration", &ms.final_configuration)?;
    let events = PyList::empty(py);
    for e in &ms.events {
        let ev = PyDict::new(py);
        ev.set_item("tick", e.tick)?;
        ev.set_item("kind", serde_json::to_value(e.kind).unwrap().as_str().unwrap())?;
        ev.set_item("payload", json_to_py(py, &e.payload)?)?;
        events.append(ev)?;
    }
    dict.set_item("events", events)?;
    dict.into_py_any(py)
}

/// Synthesize a controller from mission spec text; returns the transition
/// table. Raises ValueError on parse errors or unrealizable specs.
#[pyfunction]
fn synthesize_spec(spec_text: &str) -> PyResult<String> {
    let spec = parse_spec(spec_text).map_err(|e| PyValueError::new_err(e.to_string()))?;
    match synthesize(&spec).map_err(|e| PyValueError::new_err(e.to_string()))? {
        SynthesisOutcome::Realizable(aut) => Ok(aut.export_table()),
        SynthesisOutcome::Unrealizable(_) => {
            Err(PyValueError::new_err("specification is unrealizable"))
        }
    }
}

/// Characterize a scenario object against the fully observed map.
#[pyfunction]
fn characterize_object(
    py: Python<'_>,
    scenario: &str,
    library: &str,
    object_id: &str,
) -> PyResult<Py<PyAny>> {
    let lib = load_library(library)?;
    let scenario = Scenario::load(&PathBuf::from(scenario))
        .map_err(|e| PyValueError::new_err(format!("{scenario}: {e}")))?;
    let world = scenario.build(&lib, None).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let object = world
        .object(object_id)
        .ok_or_else(|| PyValueError::new_err(format!("unknown object `{object_id}`")))?
        .clone();
    let grid = OccupancyGrid::from_world(&world);
    let det = grid
        .detect_objects()
        .into_iter()
        .filter(|d| d.color == object.color)
        .min_by(|a, b| {
            a.centroid
                .xy()
                .dist(object.position.xy())
                .total_cmp(&b.centroid.xy().dist(object.position.xy()))
        })
        .ok_or_else(|| PyValueError::new_err(format!("object `{object_id}` not on the map")))?;
    let c = characterize(&grid, world.cluster_pose().pos(), &det, &CharacterizationParams::default())
        .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    let dict = PyDict::new(py);
    dict.set_item("environment", c.env.to_string())?;
    dict.set_item("distance", c.distance)?;
    dict.set_item("object_height", c.object_height)?;
    dict.set_item("approach_point", (c.approach_point.x, c.approach_point.y))?;
    dict.set_item("approach_heading", c.approach_heading)?;
    dict.into_py_any(py)
}

/// Labels of library entries offering `property` in `environment`.
#[pyfunction]
fn query_library(library: &str, property: &str, environment: &str) -> PyResult<Vec<String>> {
    let lib = load_library(library)?;
    let env = match environment {
        "free" => EnvironmentType::Free,
        "tunnel" => EnvironmentType::Tunnel,
        "high" => EnvironmentType::High,
        "stairs" => EnvironmentType::Stairs,
        other => return Err(PyValueError::new_err(format!("unknown environment `{other}`"))),
    };
    Ok(lib.query(property, env).iter().map(|e| e.label()).collect())
}

#[pymodule]
fn morphbot(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(run_mission, m)?)?;
    m.add_function(wrap_pyfunction!(synthesize_spec, m)?)?;
    m.add_function(wrap_pyfunction!(characterize_object, m)?)?;
    m.add_function(wrap_pyfunction!(query_library, m)?)?;
    Ok(())
}
