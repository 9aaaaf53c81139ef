//! Python bindings: contributions, joins, provenance histories, the
//! simulator and the log auditor.

use std::collections::{BTreeMap, BTreeSet};

use dcs_core::contribution::{make_contribution, AgentId, Contribution as CoreContribution, Rid};
use dcs_core::dag::{isomorphic as core_isomorphic, observationally_equivalent as core_obs, to_dot, ProvenanceDag};
use dcs_core::log::{read_log as core_read_log, write_log as core_write_log};
use dcs_core::network::Simulation;
use dcs_core::scenario::Scenario;
use dcs_core::semilattice::{join_all, leq as core_leq, SpaceTag, StateSpaceRegistry, Value};
use dcs_core::violations::{self, Regime, ViolationMode};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn space(tag: &str) -> PyResult<SpaceTag> {
    tag.parse().map_err(err)
}

fn rid(s: &str) -> PyResult<Rid> {
    s.parse().map_err(err)
}

fn agent(id: u32) -> PyResult<AgentId> {
    AgentId::new(id).map_err(err)
}

/// Python value to a state-space element: a set of strings, an int, or a
/// dict of string sets, as `tag` says.
fn to_value(tag: SpaceTag, obj: &Bound<'_, PyAny>) -> PyResult<Value> {
    Ok(match tag {
        SpaceTag::Gset => Value::Gset(obj.extract::<BTreeSet<String>>()?),
        SpaceTag::Maxint => Value::Maxint(obj.extract()?),
        SpaceTag::OverwriteRegister => Value::Overwrite(obj.extract()?),
        SpaceTag::GsetMap => Value::gset_map(obj.extract::<BTreeMap<String, BTreeSet<String>>>()?),
    })
}

fn from_value<'py>(py: Python<'py>, v: &Value) -> PyResult<Bound<'py, PyAny>> {
    Ok(match v {
        Value::Gset(s) => s.clone().into_pyobject(py)?.into_any(),
        Value::Maxint(n) | Value::Overwrite(n) => n.into_pyobject(py)?.into_any(),
        Value::GsetMap(m) => m.clone().into_pyobject(py)?.into_any(),
    })
}

/// One immutable contribution. The rid is the sha256 of its content.
#[pyclass(name = "Contribution", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyContribution(CoreContribution);

#[pymethods]
impl PyContribution {
    /// `parents` are hex rids. The creator is trusted to have observed them.
    #[new]
    #[pyo3(signature = (creator, seq, key, space, payload, parents = Vec::new()))]
    fn new(creator: u32, seq: u64, key: &str, space: &str, payload: &Bound<'_, PyAny>, parents: Vec<String>) -> PyResult<Self> {
        let tag = self::space(space)?;
        let parents = parents.iter().map(|p| rid(p)).collect::<PyResult<BTreeSet<_>>>()?;
        let c = make_contribution(agent(creator)?, seq, key, parents.clone(), to_value(tag, payload)?, tag, &parents)
            .map_err(err)?;
        Ok(Self(c))
    }

    #[getter]
    fn rid(&self) -> String {
        self.0.rid().to_string()
    }

    #[getter]
    fn creator(&self) -> u32 {
        self.0.creator().get()
    }

    #[getter]
    fn creator_seq(&self) -> u64 {
        self.0.creator_seq()
    }

    #[getter]
    fn key(&self) -> &str {
        self.0.key()
    }

    #[getter]
    fn space(&self) -> &'static str {
        self.0.payload().space().as_str()
    }

    #[getter]
    fn parents(&self) -> Vec<String> {
        self.0.parents().iter().map(Rid::to_string).collect()
    }

    #[getter]
    fn payload<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        from_value(py, self.0.payload())
    }

    fn __repr__(&self) -> String {
        format!(
            "Contribution(rid={}, creator={}, seq={}, key={:?}, payload={})",
            self.0.rid().short(),
            self.0.creator(),
            self.0.creator_seq(),
            self.0.key(),
            self.0.payload()
        )
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.0.rid() == other.0.rid()
    }

    fn __hash__(&self) -> u64 {
        u64::from_be_bytes(self.0.rid().as_bytes()[..8].try_into().unwrap())
    }
}

/// A sealed provenance history.
#[pyclass(name = "ProvenanceDag", frozen, skip_from_py_object)]
struct PyDag(ProvenanceDag);

#[pymethods]
impl PyDag {
    #[new]
    fn new(contributions: Vec<PyRef<'_, PyContribution>>) -> PyResult<Self> {
        let items: Vec<CoreContribution> = contributions.iter().map(|c| c.0.clone()).collect();
        let dag = ProvenanceDag::from_contributions(&items).map_err(err)?;
        dag.require_sealed().map_err(err)?;
        Ok(Self(dag))
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn rids(&self) -> Vec<String> {
        self.0.vertices().keys().map(Rid::to_string).collect()
    }

    fn edges(&self) -> Vec<(String, String)> {
        self.0.edges().map(|(a, b)| (a.to_string(), b.to_string())).collect()
    }

    fn is_ancestor(&self, ancestor: &str, descendant: &str) -> PyResult<bool> {
        self.0.is_ancestor(&rid(ancestor)?, &rid(descendant)?).map_err(err)
    }

    fn are_concurrent(&self, a: &str, b: &str) -> PyResult<bool> {
        self.0.are_concurrent(&rid(a)?, &rid(b)?).map_err(err)
    }

    fn layers(&self) -> PyResult<Vec<Vec<String>>> {
        let layers = self.0.topological_layers().map_err(err)?;
        Ok(layers.into_iter().map(|l| l.iter().map(Rid::to_string).collect()).collect())
    }

    fn to_dot(&self) -> String {
        to_dot(&self.0)
    }
}

/// Join of `values`, all in the space named by `space`.
#[pyfunction]
fn join<'py>(py: Python<'py>, space: &str, values: Vec<Bound<'py, PyAny>>) -> PyResult<Bound<'py, PyAny>> {
    let tag = self::space(space)?;
    let vals = values.iter().map(|v| to_value(tag, v)).collect::<PyResult<Vec<_>>>()?;
    from_value(py, &join_all(tag, &vals).map_err(err)?)
}

#[pyfunction]
fn leq(space: &str, a: &Bound<'_, PyAny>, b: &Bound<'_, PyAny>) -> PyResult<bool> {
    let tag = self::space(space)?;
    core_leq(&to_value(tag, a)?, &to_value(tag, b)?).map_err(err)
}

#[pyfunction]
fn isomorphic(a: &PyDag, b: &PyDag) -> bool {
    core_isomorphic(&a.0, &b.0).is_some()
}

/// `(equivalent, witness)`; the witness names a query the two answer
/// differently.
#[pyfunction]
fn observationally_equivalent(a: &PyDag, b: &PyDag) -> PyResult<(bool, Option<String>)> {
    let report = core_obs(&a.0, &b.0).map_err(err)?;
    Ok((report.equivalent(), report.witness.map(|w| w.to_string())))
}

#[pyfunction]
fn read_log(text: &str) -> PyResult<Vec<PyContribution>> {
    let records = core_read_log(text, &StateSpaceRegistry::with_violations()).map_err(err)?;
    Ok(records.into_iter().map(PyContribution).collect())
}

#[pyfunction]
fn write_log(contributions: Vec<PyRef<'_, PyContribution>>) -> String {
    core_write_log(contributions.iter().map(|c| &c.0))
}

fn scenario(spec: &str) -> PyResult<Scenario> {
    match spec {
        "concurrent" => Ok(Scenario::concurrent()),
        "causal" => Ok(Scenario::causal()),
        "random" => Ok(Scenario::random(0, 5, 20)),
        _ => match spec.parse::<ViolationMode>() {
            Ok(mode) => Ok(mode.canonical_scenario()),
            Err(_) => Scenario::from_toml(spec).map_err(err),
        },
    }
}

fn mode(name: Option<&str>) -> PyResult<Option<ViolationMode>> {
    name.map(|m| m.parse().map_err(err)).transpose()
}

/// Runs a built-in scenario by name, or one given as TOML text.
#[pyfunction]
#[pyo3(signature = (scenario, seed = 0, mode = None))]
fn simulate<'py>(py: Python<'py>, scenario: &str, seed: u64, mode: Option<&str>) -> PyResult<Bound<'py, PyDict>> {
    let s = self::scenario(scenario)?;
    let mut cfg = s.network.clone();
    cfg.seed = seed;
    let injector = self::mode(mode)?.map(ViolationMode::injector);
    let mut sim = Simulation::new(&s, &cfg).policy(s.policy);
    if let Some(inj) = &injector {
        sim = sim.injector(inj);
    }
    let rec = py.detach(|| sim.run()).map_err(err)?;

    let states = PyDict::new(py);
    for a in &rec.agents {
        let values = PyDict::new(py);
        for (k, v) in a.values() {
            values.set_item(k, from_value(py, &v)?)?;
        }
        states.set_item(a.id().get(), values)?;
    }
    let out = PyDict::new(py);
    out.set_item("scenario", &rec.scenario.name)?;
    out.set_item("seed", seed)?;
    out.set_item("outcome", rec.outcome.to_string())?;
    out.set_item("digest", rec.digest())?;
    out.set_item("states", states)?;
    out.set_item("convergence_failures", rec.convergence_failures())?;
    let created = PyList::empty(py);
    for c in &rec.created {
        created.append(PyContribution(c.clone()))?;
    }
    out.set_item("contributions", created)?;
    Ok(out)
}

/// Fraction of seed pairs whose two runs end in distinguishable states or
/// histories. `mode = None` is the lawful system on a random scenario.
#[pyfunction]
#[pyo3(signature = (mode = None, trials = 20, stream = 0))]
fn ambiguity_rate(py: Python<'_>, mode: Option<&str>, trials: usize, stream: u64) -> PyResult<f64> {
    let (regime, s) = match self::mode(mode)? {
        Some(m) => (Regime::Violation(m), m.canonical_scenario()),
        None => (Regime::Lawful, Scenario::random(stream, 5, 20)),
    };
    py.detach(|| violations::ambiguity_rate(regime, &s, trials, stream)).map_err(err)
}

#[pymodule]
fn dcs(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyContribution>()?;
    m.add_class::<PyDag>()?;
    m.add_function(wrap_pyfunction!(join, m)?)?;
    m.add_function(wrap_pyfunction!(leq, m)?)?;
    m.add_function(wrap_pyfunction!(isomorphic, m)?)?;
    m.add_function(wrap_pyfunction!(observationally_equivalent, m)?)?;
    m.add_function(wrap_pyfunction!(read_log, m)?)?;
    m.add_function(wrap_pyfunction!(write_log, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(ambiguity_rate, m)?)?;
    Ok(())
}
