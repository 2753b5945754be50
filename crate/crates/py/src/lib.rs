//! Python bindings: plans, masks, the alignment filter, duration steering,
//! the simulator and dataset QC.
//!
//! Config arguments take plain dicts with the same fields as the Rust
//! structs; missing fields fall back to defaults.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pythonize::{depythonize, pythonize};
use serde::de::DeserializeOwned;
use serde::Serialize;

use segctl_core::duration::{self, SteerConfig, SteeringState};
use segctl_core::mask::{self, BiasMask};
use segctl_core::medqc::{self, DatasetRecord, DedupConfig, QcConfig};
use segctl_core::msa::{self, AlignerVariant, AlignmentBelief, AttentionObservation, MsaConfig};
use segctl_core::plan::{build_plan, SegmentPlan};
use segctl_core::sim::{self, SimConfig, SimError, SteeringFlags, SuiteSpec};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn sim_err(e: SimError) -> PyErr {
    match e {
        SimError::Config(_) | SimError::Plan(_) => value_err(e),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    pythonize(py, value).map_err(value_err)
}

fn from_py<T: DeserializeOwned + Default>(obj: Option<&Bound<'_, PyAny>>) -> PyResult<T> {
    match obj {
        Some(o) if !o.is_none() => depythonize(o).map_err(value_err),
        _ => Ok(T::default()),
    }
}

/// Segment layout: text length, 1-based boundaries, condition block size
/// and optional per-segment token budgets.
#[pyclass(name = "Plan", module = "segctl", frozen, from_py_object)]
#[derive(Clone)]
struct PyPlan {
    inner: SegmentPlan,
}

#[pymethods]
impl PyPlan {
    #[new]
    #[pyo3(signature = (text_len, boundaries = Vec::new(), cond_block_len = 1, duration_budgets = None))]
    fn new(
        text_len: usize,
        boundaries: Vec<usize>,
        cond_block_len: usize,
        duration_budgets: Option<Vec<i64>>,
    ) -> PyResult<Self> {
        build_plan(
            text_len,
            &boundaries,
            cond_block_len,
            duration_budgets.as_deref(),
        )
        .map(|inner| PyPlan { inner })
        .map_err(value_err)
    }

    #[staticmethod]
    fn from_dict(d: &Bound<'_, PyAny>) -> PyResult<Self> {
        depythonize(d)
            .map(|inner| PyPlan { inner })
            .map_err(value_err)
    }

    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner)
    }

    #[getter]
    fn text_len(&self) -> usize {
        self.inner.text_len()
    }

    #[getter]
    fn boundaries(&self) -> Vec<usize> {
        self.inner.boundaries().to_vec()
    }

    #[getter]
    fn cond_block_len(&self) -> usize {
        self.inner.cond_block_len()
    }

    #[getter]
    fn duration_budgets(&self) -> Option<Vec<usize>> {
        self.inner.duration_budgets().map(<[usize]>::to_vec)
    }

    #[getter]
    fn num_segments(&self) -> usize {
        self.inner.num_segments()
    }

    fn segment_of_text(&self, t: usize) -> PyResult<usize> {
        self.inner.segment_of_text(t).map_err(value_err)
    }

    /// Inclusive (start, end) text span of segment `m`.
    fn segment_span(&self, m: usize) -> PyResult<(usize, usize)> {
        if m == 0 || m > self.inner.num_segments() {
            return Err(value_err(format!("segment {m} out of range")));
        }
        let s = self.inner.segment_span(m);
        Ok((*s.start(), *s.end()))
    }

    fn scaled(&self, factor: f64) -> PyResult<Self> {
        self.inner
            .scaled_budgets(factor)
            .map(|inner| PyPlan { inner })
            .map_err(value_err)
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.inner == other.inner
    }

    fn __repr__(&self) -> String {
        format!(
            "Plan(text_len={}, boundaries={:?}, cond_block_len={}, duration_budgets={})",
            self.inner.text_len(),
            self.inner.boundaries(),
            self.inner.cond_block_len(),
            self.inner
                .duration_budgets()
                .map_or("None".to_string(), |b| format!("{b:?}"))
        )
    }
}

/// Attention mask over `[conditions, text, semantic tokens]`.
#[pyclass(name = "Mask", module = "segctl", frozen)]
struct PyMask {
    inner: BiasMask,
}

#[pymethods]
impl PyMask {
    #[getter]
    fn size(&self) -> usize {
        self.inner.size()
    }

    fn is_visible(&self, row: usize, col: usize) -> PyResult<bool> {
        self.check(row)?;
        self.check(col)?;
        Ok(self.inner.is_visible(row, col))
    }

    fn row(&self, row: usize) -> PyResult<Vec<bool>> {
        self.check(row)?;
        Ok(self.inner.row(row).to_vec())
    }

    /// Additive bias row: 0 where visible, -inf where masked.
    fn bias_row(&self, row: usize) -> PyResult<Vec<f32>> {
        self.check(row)?;
        Ok(self.inner.bias_row(row))
    }

    fn visible_set(&self, row: usize) -> PyResult<Vec<usize>> {
        self.inner
            .visible_set(row)
            .map(|s| s.into_iter().collect())
            .map_err(value_err)
    }

    fn to_list(&self) -> Vec<Vec<bool>> {
        (0..self.inner.size())
            .map(|r| self.inner.row(r).to_vec())
            .collect()
    }

    fn isolated_condition_blocks(&self) -> usize {
        self.inner.isolated_condition_blocks()
    }

    /// (stem, text grid, CSV grid).
    fn dump(&self) -> (String, String, String) {
        let (txt, csv) = mask::dump_mask(&self.inner);
        (mask::dump_stem(&self.inner), txt, csv)
    }

    fn __repr__(&self) -> String {
        format!("Mask({})", mask::dump_stem(&self.inner))
    }
}

impl PyMask {
    fn check(&self, i: usize) -> PyResult<()> {
        if i >= self.inner.size() {
            return Err(value_err(format!(
                "index {i} out of range for size {}",
                self.inner.size()
            )));
        }
        Ok(())
    }
}

/// Mask at step `step`; `seg_s` holds the segment ids of tokens `1..step`.
#[pyfunction]
fn build_mask(plan: &PyPlan, seg_s: Vec<usize>, step: usize, active: usize) -> PyResult<PyMask> {
    mask::build_mask(&plan.inner, &seg_s, step, active)
        .map(|inner| PyMask { inner })
        .map_err(value_err)
}

/// Visibility of the newest semantic row only.
#[pyfunction]
fn current_row(plan: &PyPlan, seg_s: Vec<usize>, active: usize) -> PyResult<Vec<bool>> {
    mask::current_row(&plan.inner, &seg_s, active).map_err(value_err)
}

/// One predict/select/update step. `attention` is indexed
/// `[layer][head][text position]`. Returns a dict with `prior`,
/// `posterior` and the 1-based `head` as (layer, head).
#[pyfunction]
#[pyo3(signature = (posterior, attention, config = None))]
fn msa_step<'py>(
    py: Python<'py>,
    posterior: Vec<f64>,
    attention: Vec<Vec<Vec<f64>>>,
    config: Option<&Bound<'py, PyAny>>,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg: MsaConfig = from_py(config)?;
    let layers = attention.len();
    let heads = attention.first().map_or(0, Vec::len);
    let t = posterior.len();
    if attention
        .iter()
        .any(|l| l.len() != heads || l.iter().any(|h| h.len() != t))
    {
        return Err(value_err(
            "attention must be a full [layer][head][position] array",
        ));
    }
    let flat = attention.into_iter().flatten().flatten().collect();
    let obs = AttentionObservation::new(layers, heads, t, flat).map_err(value_err)?;
    let belief = AlignmentBelief {
        prior: vec![0.0; t],
        posterior,
    };
    let (next, head) = msa::msa_step(&belief, &obs, &cfg).map_err(value_err)?;
    let d = pyo3::types::PyDict::new(py);
    d.set_item("prior", next.prior)?;
    d.set_item("posterior", next.posterior)?;
    d.set_item("head", (head.layer, head.head))?;
    d.set_item("score", head.score)?;
    Ok(d.into_any())
}

#[pyfunction]
fn expected_position(posterior: Vec<f64>) -> f64 {
    msa::expected_position(&posterior)
}

/// Segment after a possible switch from `m` (never more than one ahead).
#[pyfunction]
fn maybe_switch(m: usize, posterior: Vec<f64>, plan: &PyPlan) -> PyResult<usize> {
    if m == 0 || m > plan.inner.num_segments() {
        return Err(value_err(format!("segment {m} out of range")));
    }
    Ok(msa::maybe_switch(m, &posterior, &plan.inner))
}

/// Proportional target correction in tokens for a progress gap `delta_r`.
#[pyfunction]
#[pyo3(signature = (delta_r, config = None))]
fn correction(delta_r: f64, config: Option<&Bound<'_, PyAny>>) -> PyResult<i64> {
    let cfg: SteerConfig = from_py(config)?;
    Ok(duration::correction(delta_r, &cfg))
}

/// Final-segment EOS bias at budget ratio `rho`.
#[pyfunction]
#[pyo3(signature = (rho, config = None))]
fn eos_final_bias(rho: f64, config: Option<&Bound<'_, PyAny>>) -> PyResult<f64> {
    let cfg: SteerConfig = from_py(config)?;
    Ok(cfg.eos.final_bias(rho))
}

/// Duration controller state for one decode.
#[pyclass(name = "Steering", module = "segctl")]
struct PySteering {
    plan: SegmentPlan,
    state: SteeringState,
    cfg: SteerConfig,
}

#[pymethods]
impl PySteering {
    #[new]
    #[pyo3(signature = (plan, config = None))]
    fn new(plan: &PyPlan, config: Option<&Bound<'_, PyAny>>) -> PyResult<Self> {
        let cfg: SteerConfig = from_py(config)?;
        cfg.validate().map_err(value_err)?;
        let state = SteeringState::new(&plan.inner).map_err(value_err)?;
        Ok(PySteering {
            plan: plan.inner.clone(),
            state,
            cfg,
        })
    }

    /// Records token `step_index` (1-based) and returns the step report.
    fn step<'py>(
        &mut self,
        py: Python<'py>,
        posterior: Vec<f64>,
        step_index: usize,
    ) -> PyResult<Bound<'py, PyAny>> {
        if posterior.len() != self.plan.text_len() {
            return Err(value_err(
                "posterior length must equal the plan's text length",
            ));
        }
        let r = duration::steer_step(
            &mut self.state,
            &self.plan,
            &posterior,
            step_index,
            &self.cfg,
        );
        to_py(py, &r)
    }

    fn switch_to(&mut self, segment: usize) -> PyResult<()> {
        self.state.switch_to(segment).map_err(value_err)
    }

    fn eos_bias(&self) -> f64 {
        duration::eos_bias(&self.state, &self.plan, &self.cfg)
    }

    #[getter]
    fn active(&self) -> usize {
        self.state.active
    }

    #[getter]
    fn cursor(&self) -> usize {
        self.state.cursor
    }

    #[getter]
    fn effective_targets(&self) -> Vec<usize> {
        self.state.effective_targets()
    }

    fn state<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.state)
    }
}

#[pyfunction]
fn default_plans() -> Vec<PyPlan> {
    sim::default_plans()
        .into_iter()
        .map(|inner| PyPlan { inner })
        .collect()
}

fn flags(local: bool, eos: bool) -> SteeringFlags {
    SteeringFlags { local, eos }
}

/// One simulated decode. Returns the full result, trace included.
#[pyfunction]
#[pyo3(signature = (plan, variant = "msa", local = true, eos = true, config = None))]
fn simulate<'py>(
    py: Python<'py>,
    plan: &PyPlan,
    variant: &str,
    local: bool,
    eos: bool,
    config: Option<&Bound<'py, PyAny>>,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg: SimConfig = from_py(config)?;
    let variant: AlignerVariant = variant.parse().map_err(value_err)?;
    let plan = plan.inner.clone();
    let res = py
        .detach(|| sim::run_trace(&plan, &cfg, variant, flags(local, eos)))
        .map_err(sim_err)?;
    to_py(py, &res)
}

/// Runs a suite over `repeats` seeds. `kind` picks the preset grid
/// ("alignment" or "duration"); `spec` overrides it field by field.
#[pyfunction]
#[pyo3(signature = (kind = "alignment", repeats = 10, plans = None, spec = None))]
fn run_suite<'py>(
    py: Python<'py>,
    kind: &str,
    repeats: usize,
    plans: Option<Vec<PyPlan>>,
    spec: Option<&Bound<'py, PyAny>>,
) -> PyResult<Bound<'py, PyAny>> {
    let preset = match kind {
        "alignment" => SuiteSpec::alignment(SimConfig::default()),
        "duration" => SuiteSpec::duration(SimConfig::default()),
        other => return Err(value_err(format!("unknown suite kind {other:?}"))),
    };
    let spec = match spec {
        Some(s) if !s.is_none() => {
            let mut base = depythonize::<serde_json::Value>(s).map_err(value_err)?;
            let preset_value = serde_json::to_value(&preset).map_err(value_err)?;
            merge(&mut base, preset_value);
            serde_json::from_value(base).map_err(value_err)?
        }
        _ => preset,
    };
    let plans: Vec<SegmentPlan> = match plans {
        Some(p) => p.into_iter().map(|p| p.inner).collect(),
        None => sim::default_plans(),
    };
    let table = py
        .detach(|| sim::run_suite(&plans, &spec, repeats))
        .map_err(sim_err)?;
    let d = pyo3::types::PyDict::new(py);
    d.set_item("cells", to_py(py, &table.cells)?)?;
    d.set_item("traces", to_py(py, &table.traces)?)?;
    d.set_item(
        "alignment_orderings",
        to_py(py, &sim::alignment_orderings(&table))?,
    )?;
    d.set_item(
        "duration_orderings",
        to_py(py, &sim::duration_orderings(&table))?,
    )?;
    Ok(d.into_any())
}

/// Fills keys missing from `target` with those of `defaults`.
fn merge(target: &mut serde_json::Value, defaults: serde_json::Value) {
    if let (Some(t), serde_json::Value::Object(d)) = (target.as_object_mut(), defaults) {
        for (k, v) in d {
            t.entry(k).or_insert(v);
        }
    }
}

fn records(objs: &Bound<'_, PyAny>) -> PyResult<Vec<DatasetRecord>> {
    depythonize(objs).map_err(value_err)
}

#[pyfunction]
fn parse_jsonl<'py>(py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyAny>> {
    let recs = medqc::parse_jsonl(text).map_err(value_err)?;
    to_py(py, &recs)
}

/// One report per record: id, verdict, violations and warnings.
#[pyfunction]
#[pyo3(signature = (records_, config = None))]
fn validate<'py>(
    py: Python<'py>,
    records_: &Bound<'py, PyAny>,
    config: Option<&Bound<'py, PyAny>>,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg: QcConfig = from_py(config)?;
    let recs = records(records_)?;
    to_py(py, &medqc::validate_all(&recs, &cfg))
}

/// Returns `{"kept": [indices], "dropped": [...]}`.
#[pyfunction]
#[pyo3(signature = (records_, config = None))]
fn dedup<'py>(
    py: Python<'py>,
    records_: &Bound<'py, PyAny>,
    config: Option<&Bound<'py, PyAny>>,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg: DedupConfig = from_py(config)?;
    let recs = records(records_)?;
    let res = medqc::dedup(&recs, &cfg);
    let d = pyo3::types::PyDict::new(py);
    d.set_item("kept", res.kept.clone())?;
    d.set_item("dropped", to_py(py, &res.dropped)?)?;
    Ok(d.into_any())
}

#[pyfunction]
fn stats<'py>(py: Python<'py>, records_: &Bound<'py, PyAny>) -> PyResult<Bound<'py, PyAny>> {
    let recs = records(records_)?;
    to_py(py, &medqc::stats(&recs))
}

#[pyfunction]
#[pyo3(signature = (records_, n, seed = 0))]
fn sample_for_review<'py>(
    py: Python<'py>,
    records_: &Bound<'py, PyAny>,
    n: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let recs = records(records_)?;
    let rep = medqc::sample_for_review(&recs, n, seed).map_err(value_err)?;
    to_py(py, &rep)
}

/// Matching-blocks similarity of two token sequences.
#[pyfunction]
fn similarity(a: Vec<String>, b: Vec<String>) -> PyResult<f64> {
    medqc::similarity(&a, &b).map_err(value_err)
}

#[pymodule]
fn segctl(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPlan>()?;
    m.add_class::<PyMask>()?;
    m.add_class::<PySteering>()?;
    m.add_function(wrap_pyfunction!(build_mask, m)?)?;
    m.add_function(wrap_pyfunction!(current_row, m)?)?;
    m.add_function(wrap_pyfunction!(msa_step, m)?)?;
    m.add_function(wrap_pyfunction!(expected_position, m)?)?;
    m.add_function(wrap_pyfunction!(maybe_switch, m)?)?;
    m.add_function(wrap_pyfunction!(correction, m)?)?;
    m.add_function(wrap_pyfunction!(eos_final_bias, m)?)?;
    m.add_function(wrap_pyfunction!(default_plans, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(run_suite, m)?)?;
    m.add_function(wrap_pyfunction!(parse_jsonl, m)?)?;
    m.add_function(wrap_pyfunction!(validate, m)?)?;
    m.add_function(wrap_pyfunction!(dedup, m)?)?;
    m.add_function(wrap_pyfunction!(stats, m)?)?;
    m.add_function(wrap_pyfunction!(sample_for_review, m)?)?;
    m.add_function(wrap_pyfunction!(similarity, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
