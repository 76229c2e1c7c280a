// SPDX-License-Identifier: Apache-2.0

use pyo3::prelude::*;
use pyo3::types::PyList;

fn fixture(rel: &str) -> String {
    let p = std::path::PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(rel);
    std::fs::read_to_string(p).unwrap()
}

#[test]
fn module_round_trip() {
    Python::initialize();
    Python::attach(|py| -> PyResult<()> {
        let module = pyo3::wrap_pymodule!(cobalt::cobalt)(py);
        let m = module.bind(py);

        let findings = m.getattr("analyze")?.call1((fixture("listings/listing1.c"), "c"))?;
        let findings = findings.cast::<PyList>()?;
        assert_eq!(findings.len(), 1);
        let first = findings.get_item(0)?;
        assert_eq!(first.get_item("cwe")?.extract::<u16>()?, 190);
        assert_eq!(first.get_item("witness")?.get_item("n")?.extract::<u64>()?, 1 << 30);

        let clean = m.getattr("analyze")?.call1((fixture("listings/listing2.c"), "c"))?;
        assert_eq!(clean.len()?, 0);

        let fault: String = m.getattr("triage")?.call1((fixture("transcripts/MEM-06.txt"),))?.extract()?;
        assert_eq!(fault, "OOB_READ");

        let err = m.getattr("analyze")?.call1(("x", "rust")).unwrap_err();
        assert!(err.is_instance_of::<pyo3::exceptions::PyValueError>(py));
        Ok(())
    })
    .unwrap();
}
