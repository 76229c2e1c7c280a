// SPDX-License-Identifier: Apache-2.0

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cobalt_core::fixtures::{leaderboard_results, overlap_fixture, self_review_inputs};
use cobalt_core::model::Language;
use cobalt_core::pipeline::{CorpusRun, ManifestEntry};
use serde_json::Value;

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn cobalt<I, S>(args: I) -> Output
where
    I: IntoIterator<Item = S>,
    S: AsRef<std::ffi::OsStr>,
{
    Command::new(env!("CARGO_BIN_EXE_cobalt")).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&o.stdout)))
}

fn write_report(path: &Path, run: &CorpusRun) {
    std::fs::write(path, serde_json::to_string(run).unwrap()).unwrap();
}

#[test]
fn gate_on_listings() {
    let l1 = fixtures().join("listings/listing1.c");
    let o = cobalt(["analyze", s(&l1), "--lang", "c", "--gate"]);
    assert_eq!(code(&o), 1, "{}", String::from_utf8_lossy(&o.stderr));
    let findings = json(&o);
    let findings = findings.as_array().unwrap();
    assert_eq!(findings.len(), 1);
    assert_eq!(findings[0]["cwe"], 190);
    assert_eq!(findings[0]["status"], "SOLVER_SAT");
    assert_eq!(findings[0]["severity"]["level"], "CRITICAL");

    let l2 = fixtures().join("listings/listing2.c");
    let o = cobalt(["analyze".as_ref(), l2.as_os_str(), "--lang".as_ref(), "c".as_ref(), "--gate".as_ref()]);
    assert_eq!(code(&o), 0);
    assert_eq!(json(&o), Value::Array(vec![]));

    // Without --gate findings do not change the exit code.
    assert_eq!(code(&cobalt(["analyze".as_ref(), l1.as_os_str()])), 0);
}

#[test]
fn width_and_config() {
    let l1 = fixtures().join("listings/listing1.c");
    let o = cobalt(["analyze".as_ref(), l1.as_os_str(), "--width".as_ref(), "64".as_ref()]);
    assert_eq!(json(&o)[0]["witness"]["n"], 1u64 << 62);

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cobalt.toml");
    std::fs::write(&cfg, "width = 64\n").unwrap();
    let o = cobalt(["--config".as_ref(), cfg.as_os_str(), "analyze".as_ref(), l1.as_os_str()]);
    assert_eq!(json(&o)[0]["witness"]["n"], 1u64 << 62);

    std::fs::write(&cfg, "widht = 64\n").unwrap();
    let o = cobalt(["--config".as_ref(), cfg.as_os_str(), "analyze".as_ref(), l1.as_os_str()]);
    assert_eq!(code(&o), 2);
}

#[test]
fn usage_errors_exit_two() {
    for args in [vec!["frobnicate"], vec!["analyze"], vec!["analyze", "x.c", "--lang", "rust"], vec!["leaderboard", "r.json", "--format", "csv"]] {
        let o = cobalt(&args);
        assert_eq!(code(&o), 2, "{args:?}");
        assert!(o.stdout.is_empty());
        assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"), "{args:?}");
    }
    assert_eq!(code(&cobalt(["analyze", "/no/such/file.c"])), 3);
    assert_eq!(code(&cobalt(["--help"])), 0);
}

#[test]
fn leaderboard_markdown_mean() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("fixture_report.json");
    write_report(&report, &CorpusRun { corpus_root: None, results: leaderboard_results(), errors: vec![] });
    let o = cobalt(["leaderboard".as_ref(), report.as_os_str(), "--format".as_ref(), "md".as_ref()]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    let mean = text.lines().find(|l| l.starts_with("| Mean")).unwrap();
    assert!(mean.contains("55.8%"), "{mean}");
    assert!(text.contains("| gpt-4o | 62.4% |"));

    let a = cobalt(["leaderboard".as_ref(), report.as_os_str()]);
    let b = cobalt(["leaderboard".as_ref(), report.as_os_str()]);
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(json(&a)["mean_rate"], 55.8);
}

#[test]
fn compare_overlap() {
    let dir = tempfile::tempdir().unwrap();
    let (results, tools) = overlap_fixture();
    let report = dir.path().join("report.json");
    write_report(&report, &CorpusRun { corpus_root: None, results, errors: vec![] });
    let tools_path = dir.path().join("tools.json");
    std::fs::write(&tools_path, serde_json::to_string(&tools).unwrap()).unwrap();
    let o = cobalt(["compare".as_ref(), report.as_os_str(), tools_path.as_os_str()]);
    assert_eq!(code(&o), 0);
    let v = json(&o);
    assert_eq!(v["combined_rate"], 7.6);
    assert_eq!(v["sat_missed"]["percentage"], 97.8);
    let md = cobalt(["compare".as_ref(), report.as_os_str(), tools_path.as_os_str(), "--format".as_ref(), "md".as_ref()]);
    assert!(String::from_utf8_lossy(&md.stdout).contains("88/90 (97.8%)"));
}

#[test]
fn run_then_poc() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("report.json");
    let corpus = fixtures().join("corpus");
    let o = cobalt(["run".as_ref(), corpus.as_os_str(), "--out".as_ref(), report.as_os_str(), "--jobs".as_ref(), "3".as_ref()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(json(&o)["vulnerable"], 7);
    let run = CorpusRun::load(&report).unwrap();

    let sat = run.results.iter().flat_map(|r| &r.findings).find(|f| f.artifact_id == "mem01-a").unwrap();
    let harness = dir.path().join("poc.c");
    let o = cobalt([
        "poc".as_ref(),
        "--report".as_ref(),
        report.as_os_str(),
        "--finding".as_ref(),
        sat.finding_id.as_ref(),
        "--out".as_ref(),
        harness.as_os_str(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(std::fs::read_to_string(&harness).unwrap().contains("static void poc_main(void)"));

    let sql = run.results.iter().flat_map(|r| &r.findings).find(|f| f.detector_id.starts_with("py.sql")).unwrap();
    let o = cobalt(["poc".as_ref(), "--report".as_ref(), report.as_os_str(), "--finding".as_ref(), sql.finding_id.as_ref()]);
    assert_eq!(json(&o)["payload"], "' OR '1'='1");

    let o = cobalt(["poc".as_ref(), "--report".as_ref(), report.as_os_str(), "--finding".as_ref(), "nope".as_ref()]);
    assert_eq!(code(&o), 2);
}

#[test]
fn generate_from_replay_store() {
    let dir = tempfile::tempdir().unwrap();
    let f = fixtures();
    let out_corpus = dir.path().join("gen");
    let (prompts, provider, store) = (f.join("prompts.json"), f.join("providers/openai-gpt-4o.toml"), f.join("replay"));
    let base = ["generate", "--prompts", s(&prompts), "--provider", s(&provider), "--mode", "replay"];
    let o = cobalt(base.iter().copied().chain(["--store", s(&store), "--corpus-out", s(&out_corpus)]));
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v = json(&o);
    assert_eq!(v["artifacts"][0]["artifact_id"], "gpt-4o/MEM-01/baseline");

    let report = dir.path().join("report.json");
    let o = cobalt(["run".as_ref(), out_corpus.as_os_str(), "--out".as_ref(), report.as_os_str()]);
    assert_eq!(code(&o), 0);
    let run = CorpusRun::load(&report).unwrap();
    let mem01 = run.results.iter().find(|r| r.artifact_id == "gpt-4o/MEM-01/baseline").unwrap();
    assert!(mem01.has_sat());
    let secure = run.results.iter().find(|r| r.artifact_id == "gpt-4o/MEM-01/secure").unwrap();
    assert!(!secure.vulnerable);

    let empty = dir.path().join("empty-store");
    let o = cobalt(base.iter().copied().chain(["--store", s(&empty)]));
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("openai/gpt-4o/MEM-01.baseline"));
}

#[test]
fn review_from_replay_store() {
    let dir = tempfile::tempdir().unwrap();
    let inputs = self_review_inputs().unwrap();
    let corpus = dir.path().join("v1");
    std::fs::create_dir_all(&corpus).unwrap();
    let mut manifest = Vec::new();
    for (i, input) in inputs.iter().enumerate() {
        let r = &input.result;
        assert_eq!(r.language, Language::C);
        let rel = format!("a{i:03}.c");
        std::fs::write(corpus.join(&rel), &input.source).unwrap();
        manifest.push(ManifestEntry {
            artifact_id: r.artifact_id.clone(),
            model_id: r.model_id.clone(),
            prompt_id: r.prompt_id.clone(),
            category: r.category,
            language: r.language,
            prompt_variant: r.prompt_variant,
            path: rel,
        });
    }
    std::fs::write(corpus.join("manifest.json"), serde_json::to_string(&manifest).unwrap()).unwrap();
    let report = dir.path().join("report.json");
    assert_eq!(code(&cobalt(["run".as_ref(), corpus.as_os_str(), "--out".as_ref(), report.as_os_str()])), 0);

    let mut args: Vec<std::ffi::OsString> = vec!["review".into(), "--report".into(), report.into_os_string()];
    for p in ["mistral-large", "llama-3.3-70b", "gemini-2.5-flash", "claude-3-5-sonnet", "openai-gpt-4o"] {
        args.push("--provider".into());
        args.push(fixtures().join(format!("providers/{p}.toml")).into_os_string());
    }
    args.extend(["--mode".into(), "replay".into(), "--store".into(), fixtures().join("replay").into_os_string()]);
    let o = cobalt(&args);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v = json(&o);
    assert_eq!(v["summary"]["detected"], 70);
    assert_eq!(v["summary"]["reviewed"], 89);
    assert_eq!(v["summary"]["rate"], 78.7);
    assert_eq!(v["summary"]["models"][0]["model_id"], "mistral-large");
    assert_eq!(v["summary"]["models"][0]["rate"], 100.0);
}
