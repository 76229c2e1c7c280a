// SPDX-License-Identifier: Apache-2.0

use std::path::PathBuf;

use cobalt_core::encode::Width;
use cobalt_core::model::{Artifact, Category, FindingStatus, Language, PromptVariant};
use cobalt_core::pipeline::{analyze_artifact, AnalysisConfig};
use cobalt_core::poc::{
    crack_fast_hash, derive_injection_payload, emit_poc_c, has_unquoted_or, run_poc, triage_sanitizer_output, Fault,
    HashTable, Toolchain,
};
use cobalt_core::pyfront::{extract_py_sites, PyKind};

fn fixture(rel: &str) -> String {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(rel);
    std::fs::read_to_string(p).unwrap()
}

fn c_artifact(id: &str, source: String) -> Artifact {
    Artifact {
        artifact_id: id.into(),
        model_id: "m".into(),
        prompt_id: "MEM-01".into(),
        category: Category::Mem,
        language: Language::C,
        source,
        prompt_variant: PromptVariant::Baseline,
    }
}

fn sat_finding(a: &Artifact, width: Width) -> cobalt_core::pipeline::Finding {
    let cfg = AnalysisConfig { width, ..AnalysisConfig::default() };
    let r = analyze_artifact(a, &cfg).unwrap();
    r.findings.into_iter().find(|f| f.status == FindingStatus::SolverSat).unwrap()
}

#[test]
fn listing_one_harness_text() {
    let a = c_artifact("l1", fixture("listings/listing1.c"));
    let f = sat_finding(&a, Width::W32);
    let src = emit_poc_c(&f, &a).unwrap();
    assert!(src.contains("const uint32_t poc_n = (uint32_t)UINT64_C(1073741824); /* n */"), "{src}");
    assert!(src.contains("const uint32_t size = (uint32_t)((uint32_t)poc_n * (uint32_t)(uint32_t)UINT64_C(4) /* sizeof(int) */);"));
    assert!(src.contains("int *buf = malloc((size_t)size);"));
    assert!(src.contains("#define main cobalt_artifact_main"));
    assert_eq!(src, emit_poc_c(&f, &a).unwrap());
}

#[test]
fn non_sat_findings_are_rejected() {
    let a = c_artifact("m", "void f(char *d, char *s) { strcat(d, s); }\n".into());
    let r = analyze_artifact(&a, &AnalysisConfig::default()).unwrap();
    assert!(emit_poc_c(&r.findings[0], &a).is_err());
}

fn toolchain() -> Option<Toolchain> {
    let t = Toolchain::default();
    if t.available() {
        Some(t)
    } else {
        eprintln!("skipping: no sanitizer toolchain");
        None
    }
}

#[test]
fn listing_one_faults_under_asan() {
    let Some(t) = toolchain() else { return };
    let a = c_artifact("l1", fixture("listings/listing1.c"));
    let f = sat_finding(&a, Width::W32);
    let out = run_poc(&f.finding_id, &emit_poc_c(&f, &a).unwrap(), &t).unwrap();
    assert!(out.ran);
    assert_eq!(out.fault, Fault::HeapBufferOverflow, "{}", out.raw_output);
    assert!(out.raw_output.contains("SUMMARY: AddressSanitizer: heap-buffer-overflow"));
    assert!(out.raw_output.contains("WRITE of size 4"));
}

#[test]
fn wide_witness_wraps_to_tiny_allocation() {
    let Some(t) = toolchain() else { return };
    let a = c_artifact("l1", fixture("listings/listing1.c"));
    let f = sat_finding(&a, Width::W64);
    assert_eq!(f.witness.as_ref().unwrap()["n"], 1u64 << 62);
    let out = run_poc(&f.finding_id, &emit_poc_c(&f, &a).unwrap(), &t).unwrap();
    assert!(out.raw_output.contains("poc: allocating 0 bytes"), "{}", out.raw_output);
    assert_eq!(out.fault, Fault::HeapBufferOverflow, "{}", out.raw_output);
}

#[test]
fn corpus_proofs_fault() {
    let Some(t) = toolchain() else { return };
    for (id, path, fault) in [
        ("mem01-a", "corpus/c/mem01_model-a.c", Fault::HeapBufferOverflow),
        ("mem02-a", "corpus/c/mem02_model-a.c", Fault::HeapBufferOverflow),
        ("int03-b", "corpus/c/int03_model-b.c", Fault::HeapBufferOverflow),
    ] {
        let a = c_artifact(id, fixture(path));
        let f = sat_finding(&a, Width::W32);
        let out = run_poc(&f.finding_id, &emit_poc_c(&f, &a).unwrap(), &t).unwrap();
        assert_eq!(out.fault, fault, "{id}: {}", out.raw_output);
    }
}

#[test]
fn negative_size_into_allocator() {
    let Some(t) = toolchain() else { return };
    let a = c_artifact("m3", "#include <stdlib.h>\nchar *grab(int len) {\n    return malloc(len);\n}\n".into());
    let f = sat_finding(&a, Width::W64);
    assert_eq!(f.detector_id, "c.cast-sign");
    let src = emit_poc_c(&f, &a).unwrap();
    assert!(src.contains("const int32_t poc_len = (int32_t)UINT64_C(4294967295); /* len */"), "{src}");
    let out = run_poc(&f.finding_id, &src, &t).unwrap();
    assert_eq!(out.fault, Fault::AllocSizeTooBig, "{}", out.raw_output);
}

/// Rewrites the captured sanitizer transcripts from live harness runs.
/// `COBALT_REGEN_TRANSCRIPTS=1 cargo test -p cobalt-core --test poc -- --ignored`
#[test]
#[ignore]
fn regenerate_transcripts() {
    if std::env::var_os("COBALT_REGEN_TRANSCRIPTS").is_none() {
        return;
    }
    let t = toolchain().expect("sanitizer toolchain");
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/transcripts");
    let grab = "#include <stdlib.h>\nchar *grab(int len) {\n    return malloc(len);\n}\n".to_string();
    for (name, source, width) in [
        ("MEM-01-A", fixture("listings/listing1.c"), Width::W32),
        ("MEM-01-B", fixture("corpus/c/mem01_model-a.c"), Width::W32),
        ("MEM-03", grab, Width::W64),
    ] {
        let a = c_artifact(name, source);
        let f = sat_finding(&a, width);
        let out = run_poc(&f.finding_id, &emit_poc_c(&f, &a).unwrap(), &t).unwrap();
        std::fs::write(dir.join(format!("{name}.txt")), out.raw_output).unwrap();
    }
}

#[test]
fn captured_transcripts_classify() {
    let expected: std::collections::BTreeMap<String, Fault> =
        serde_json::from_str(&fixture("transcripts/expected.json")).unwrap();
    assert_eq!(expected.len(), 6);
    for (name, fault) in expected {
        let text = fixture(&format!("transcripts/{name}.txt"));
        assert_eq!(triage_sanitizer_output(&text), fault, "{name}");
    }
}

#[test]
fn injection_transcript_matches_derivation() {
    let src = fixture("corpus/py/inp01_model-a.py");
    let site = extract_py_sites("inp01-a", &src)
        .into_iter()
        .find(|s| s.kind == PyKind::SqlConcat)
        .unwrap();
    let (payload, query) = derive_injection_payload(&site).unwrap();
    let transcript = fixture("transcripts/INP-01.txt");
    assert!(transcript.contains(&format!("payload: {payload}\n")));
    assert!(transcript.contains(&format!("query: {query}\n")));
    assert!(has_unquoted_or(&query));
}

fn wordlist() -> Vec<String> {
    fixture("wordlist.txt").lines().map(str::to_string).collect()
}

// Digests computed with Python's hashlib.
const SECRET: &str = "2bb80d537b1da3e38bd30361aa855686bde0eacd7162fef6a25fe97bf527a25b";
const COBALT: &str = "a2bdc78162b620e9e831d1943a8320b320affa98a52441155013b6d6f0f95246";
const LAST: &str = "a2da0649a2aa4622450ccb244f8564cad2de1225d483a80b22227d82cdc4b28d";
const ABSENT: &str = "4853661e00cbab3ca226e9222102dd051eaa0d3c4e81490a52af2a13a774c31f";

#[test]
fn crack_against_wordlist() {
    let words = wordlist();
    assert_eq!(words.len(), 1000);
    let start = std::time::Instant::now();
    assert_eq!(crack_fast_hash(SECRET, &words).unwrap().as_deref(), Some("secret"));
    assert_eq!(crack_fast_hash(COBALT, &words).unwrap().as_deref(), Some("cobalt"));
    assert_eq!(crack_fast_hash(LAST, &words).unwrap().as_deref(), Some("football68"));
    assert_eq!(crack_fast_hash(ABSENT, &words).unwrap(), None);
    assert!(start.elapsed() < std::time::Duration::from_secs(1));

    let table = HashTable::build(&words);
    assert_eq!(table.len(), 1000);
    assert_eq!(table.lookup(&SECRET.to_uppercase()).unwrap(), Some("secret"));
    assert_eq!(table.lookup(ABSENT).unwrap(), None);
    assert!(crack_fast_hash("abc", &words).is_err());
}
