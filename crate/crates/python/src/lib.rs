// SPDX-License-Identifier: Apache-2.0

//! Python bindings. Structured results cross the boundary as JSON and are
//! decoded with the standard `json` module.

use cobalt_core::encode::Width;
use cobalt_core::model::{grade_from_rate, Artifact, Category, CweId, FindingStatus, Language};
use cobalt_core::pipeline::{analyze_artifact, AnalysisConfig, CorpusRun};
use cobalt_core::pyfront::{extract_py_sites, PyKind};
use cobalt_core::{llm, poc, report, Error};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn py_err(e: Error) -> PyErr {
    if e.is_infrastructure() {
        PyRuntimeError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

fn from_json<'py>(py: Python<'py>, value: &impl serde::Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn artifact(source: &str, language: &str, artifact_id: &str) -> PyResult<Artifact> {
    let language = Language::from_flag(language)
        .ok_or_else(|| PyValueError::new_err(format!("unknown language `{language}` (expected c or py)")))?;
    Ok(Artifact {
        artifact_id: artifact_id.to_string(),
        model_id: "python".into(),
        prompt_id: "python".into(),
        category: match language {
            Language::C => Category::Mem,
            Language::Python => Category::Inp,
        },
        language,
        source: source.to_string(),
        prompt_variant: Default::default(),
    })
}

fn config(width: u32) -> PyResult<AnalysisConfig> {
    let width = Width::new(width).map_err(py_err)?;
    Ok(AnalysisConfig { width, ..AnalysisConfig::default() })
}

/// Findings for one source file, as a list of dicts.
#[pyfunction]
#[pyo3(signature = (source, language = "c", width = 32, artifact_id = "input"))]
fn analyze<'py>(py: Python<'py>, source: &str, language: &str, width: u32, artifact_id: &str) -> PyResult<Bound<'py, PyAny>> {
    let result = analyze_artifact(&artifact(source, language, artifact_id)?, &config(width)?).map_err(py_err)?;
    from_json(py, &result.findings)
}

/// C harness for the first solver-proven finding in `source`.
#[pyfunction]
#[pyo3(signature = (source, width = 32))]
fn emit_poc(source: &str, width: u32) -> PyResult<String> {
    let a = artifact(source, "c", "input")?;
    let result = analyze_artifact(&a, &config(width)?).map_err(py_err)?;
    let finding = result
        .findings
        .iter()
        .find(|f| f.status == FindingStatus::SolverSat)
        .ok_or_else(|| PyValueError::new_err("no solver-proven finding"))?;
    poc::emit_poc_c(finding, &a).map_err(py_err)
}

/// Fault class of sanitizer output.
#[pyfunction]
fn triage(output: &str) -> String {
    match serde_json::to_value(poc::triage_sanitizer_output(output)) {
        Ok(serde_json::Value::String(s)) => s,
        _ => String::new(),
    }
}

#[pyfunction]
fn crack_fast_hash(digest: &str, wordlist: Vec<String>) -> PyResult<Option<String>> {
    poc::crack_fast_hash(digest, &wordlist).map_err(py_err)
}

/// (payload, query) for every SQL construction site in Python `source`.
#[pyfunction]
fn injection_payloads(source: &str) -> PyResult<Vec<(String, String)>> {
    extract_py_sites("input", source)
        .iter()
        .filter(|s| s.kind == PyKind::SqlConcat)
        .map(|s| poc::derive_injection_payload(s).map_err(py_err))
        .collect()
}

#[pyfunction]
fn grade(rate: f64) -> PyResult<String> {
    Ok(format!("{:?}", grade_from_rate(rate).map_err(py_err)?))
}

/// Leaderboard of a `report.json` text, as a dict or as markdown.
#[pyfunction]
#[pyo3(signature = (report_json, markdown = false))]
fn leaderboard<'py>(py: Python<'py>, report_json: &str, markdown: bool) -> PyResult<Bound<'py, PyAny>> {
    let run = CorpusRun::from_json(report_json).map_err(py_err)?;
    let board = report::build_leaderboard(&run.results).map_err(py_err)?;
    if markdown {
        Ok(report::leaderboard_markdown(&board).into_pyobject(py)?.into_any())
    } else {
        from_json(py, &board)
    }
}

/// CWE number named by a review response, if it counts as a detection.
#[pyfunction]
fn review_detects(response: &str, cwes: Vec<u16>) -> PyResult<Option<u16>> {
    let cwes = cwes.into_iter().map(CweId::try_from).collect::<Result<Vec<_>, _>>().map_err(py_err)?;
    Ok(llm::detection_rubric(response, &cwes).map(|c| c.number()))
}

#[pymodule]
pub fn cobalt(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_function(wrap_pyfunction!(analyze, m)?)?;
    m.add_function(wrap_pyfunction!(emit_poc, m)?)?;
    m.add_function(wrap_pyfunction!(triage, m)?)?;
    m.add_function(wrap_pyfunction!(crack_fast_hash, m)?)?;
    m.add_function(wrap_pyfunction!(injection_payloads, m)?)?;
    m.add_function(wrap_pyfunction!(grade, m)?)?;
    m.add_function(wrap_pyfunction!(leaderboard, m)?)?;
    m.add_function(wrap_pyfunction!(review_detects, m)?)?;
    Ok(())
}
