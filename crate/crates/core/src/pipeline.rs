// SPDX-License-Identifier: Apache-2.0

//! Per-artifact orchestration (frontend, encoding, solving,
//! classification) and the corpus runner.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cfront::{scan_c, CandidateSite, SizeExpr, SiteKind};
use crate::encode::{encode_overflow, encode_sign_conversion, Width};
use crate::error::{Error, Result};
use crate::model::{Artifact, Category, CweId, FindingStatus, Language, PromptVariant, Severity};
use crate::pyfront::{extract_py_sites, PySite};
use crate::smt::{emit_smtlib, eval_concrete, solve_builtin, solve_external, Formula, Outcome, SolverVerdict, Witness, DEFAULT_TIMEOUT_MS};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Backend {
    #[default]
    #[serde(alias = "builtin")]
    Builtin,
    #[serde(alias = "external")]
    External,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub width: Width,
    pub backend: Backend,
    pub solver_command: Option<String>,
    pub timeout_ms: u64,
    pub jobs: usize,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            width: Width::default(),
            backend: Backend::Builtin,
            solver_command: None,
            timeout_ms: DEFAULT_TIMEOUT_MS,
            jobs: 1,
        }
    }
}

impl AnalysisConfig {
    pub fn validate(&self) -> Result<()> {
        if self.jobs == 0 {
            return Err(Error::domain("jobs must be at least 1"));
        }
        if self.backend == Backend::External
            && self.solver_command.as_deref().is_none_or(|c| c.trim().is_empty())
        {
            return Err(Error::domain("the external backend needs a solver_command"));
        }
        Ok(())
    }

    /// Parses a TOML config whose keys mirror the struct fields.
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: AnalysisConfig = toml::from_str(text).map_err(|e| Error::domain(format!("bad config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn solve(&self, formula: &Formula) -> Result<SolverVerdict> {
        match self.backend {
            Backend::Builtin => Ok(solve_builtin(formula)),
            Backend::External => {
                let cmd = self
                    .solver_command
                    .as_deref()
                    .ok_or_else(|| Error::domain("the external backend needs a solver_command"))?;
                solve_external(formula, cmd, self.timeout_ms)
            }
        }
    }
}

/// The detector hit a finding came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "language", rename_all = "UPPERCASE")]
pub enum SiteDetail {
    C(CandidateSite),
    Python(PySite),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Finding {
    pub finding_id: String,
    pub artifact_id: String,
    pub detector_id: String,
    pub cwe: CweId,
    pub line: u32,
    pub status: FindingStatus,
    pub severity: Severity,
    pub witness: Option<Witness>,
    pub smtlib: Option<String>,
    pub evidence: String,
    /// Analysis width the formula was built at; absent when no formula.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<u32>,
    pub site: SiteDetail,
}

impl Finding {
    pub fn c_site(&self) -> Option<&CandidateSite> {
        match &self.site {
            SiteDetail::C(s) => Some(s),
            SiteDetail::Python(_) => None,
        }
    }

    pub fn py_site(&self) -> Option<&PySite> {
        match &self.site {
            SiteDetail::Python(s) => Some(s),
            SiteDetail::C(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactResult {
    pub artifact_id: String,
    pub model_id: String,
    pub prompt_id: String,
    pub category: Category,
    pub language: Language,
    #[serde(default)]
    pub prompt_variant: PromptVariant,
    pub findings: Vec<Finding>,
    pub vulnerable: bool,
}

impl ArtifactResult {
    pub fn has_sat(&self) -> bool {
        self.findings.iter().any(|f| f.status == FindingStatus::SolverSat)
    }
}

/// Content hash of the finding's identity. `ordinal` separates sites of
/// one detector on the same line and is omitted for the first.
pub fn finding_id(artifact_id: &str, detector_id: &str, line: u32, ordinal: usize) -> String {
    let mut h = Sha256::new();
    h.update(artifact_id.as_bytes());
    h.update([0]);
    h.update(detector_id.as_bytes());
    h.update([0]);
    h.update(line.to_string().as_bytes());
    if ordinal > 0 {
        h.update([0]);
        h.update(ordinal.to_string().as_bytes());
    }
    hex::encode(&h.finalize()[..8])
}

/// What became of one extracted site.
#[derive(Debug, Clone, PartialEq)]
enum Disposition {
    Safe,
    Sat { witness: Witness, smtlib: String },
    Pattern { smtlib: Option<String> },
}

/// The formula a solvable C site is decided on; `None` for pattern-only
/// site kinds or sites missing the needed type information.
pub fn site_formula(site: &CandidateSite, width: Width) -> Option<Result<Formula>> {
    match site.kind {
        SiteKind::AllocArith => {
            let expr = site.expr.as_ref()?;
            let guards = (!site.guard_bounds.is_empty()).then_some(&site.guard_bounds);
            Some(encode_overflow(expr, width, guards))
        }
        SiteKind::CastSign => {
            let it = site.source_type?;
            let name = site.expr.as_ref()?.vars().into_iter().next()?;
            Some(encode_sign_conversion(&name, it, width))
        }
        SiteKind::IndexUnchecked | SiteKind::UnsafeStrcopy => None,
    }
}

fn dispose_c(site: &CandidateSite, config: &AnalysisConfig) -> Result<Disposition> {
    let solvable = matches!(site.kind, SiteKind::AllocArith | SiteKind::CastSign);
    if solvable && site.guard_found {
        return Ok(Disposition::Safe);
    }
    if !solvable || site.low_confidence {
        return Ok(Disposition::Pattern { smtlib: None });
    }
    // An allocation of a constant size cannot be steered by input.
    if site.kind == SiteKind::AllocArith && site.expr.as_ref().is_some_and(|e| e.vars().is_empty()) {
        return Ok(Disposition::Safe);
    }
    let formula = match site_formula(site, config.width) {
        Some(Ok(f)) => f,
        Some(Err(_)) | None => return Ok(Disposition::Pattern { smtlib: None }),
    };
    let smtlib = emit_smtlib(&formula);
    let verdict = config.solve(&formula)?;
    Ok(match verdict.outcome {
        Outcome::Sat => {
            let witness = verdict.witness.unwrap_or_default();
            // Never surface an unverified witness.
            if eval_concrete(&formula, &witness).unwrap_or(false) {
                Disposition::Sat { witness, smtlib }
            } else {
                Disposition::Pattern { smtlib: Some(smtlib) }
            }
        }
        Outcome::Unsat => Disposition::Safe,
        Outcome::Unknown => Disposition::Pattern { smtlib: Some(smtlib) },
    })
}

struct FindingBuilder<'a> {
    artifact_id: &'a str,
    seen: BTreeMap<(String, u32), usize>,
    out: Vec<Finding>,
}

impl FindingBuilder<'_> {
    #[allow(clippy::too_many_arguments)]
    fn push(
        &mut self,
        detector_id: &str,
        cwe: CweId,
        line: u32,
        evidence: &str,
        status: FindingStatus,
        witness: Option<Witness>,
        smtlib: Option<String>,
        width: u32,
        site: SiteDetail,
    ) {
        let ordinal = self.seen.entry((detector_id.to_string(), line)).or_insert(0);
        let id = finding_id(self.artifact_id, detector_id, line, *ordinal);
        *ordinal += 1;
        self.out.push(Finding {
            finding_id: id,
            artifact_id: self.artifact_id.to_string(),
            detector_id: detector_id.to_string(),
            cwe,
            line,
            status,
            severity: cwe.severity(),
            witness,
            evidence: evidence.to_string(),
            width: smtlib.is_some().then_some(width),
            smtlib,
            site,
        });
    }
}

/// Runs the frontend for the artifact's language and classifies every
/// site. Deterministic for a given config.
pub fn analyze_artifact(artifact: &Artifact, config: &AnalysisConfig) -> Result<ArtifactResult> {
    config.validate()?;
    artifact.validate()?;
    let mut b = FindingBuilder {
        artifact_id: &artifact.artifact_id,
        seen: BTreeMap::new(),
        out: Vec::new(),
    };
    match artifact.language {
        Language::C => {
            for site in scan_c(&artifact.artifact_id, &artifact.source, config.width.bits()) {
                let (status, witness, smtlib) = match dispose_c(&site, config)? {
                    Disposition::Safe => continue,
                    Disposition::Sat { witness, smtlib } => (FindingStatus::SolverSat, Some(witness), Some(smtlib)),
                    Disposition::Pattern { smtlib } => (FindingStatus::PatternMatch, None, smtlib),
                };
                let (det, cwe, line, ev) = (site.detector_id.clone(), site.cwe, site.line, site.evidence.clone());
                b.push(&det, cwe, line, &ev, status, witness, smtlib, config.width.bits(), SiteDetail::C(site));
            }
        }
        Language::Python => {
            for site in extract_py_sites(&artifact.artifact_id, &artifact.source) {
                let (det, cwe, line, ev) = (site.detector_id.clone(), site.cwe, site.line, site.evidence.clone());
                b.push(&det, cwe, line, &ev, FindingStatus::PatternMatch, None, None, config.width.bits(), SiteDetail::Python(site));
            }
        }
    }
    let findings = b.out;
    Ok(ArtifactResult {
        artifact_id: artifact.artifact_id.clone(),
        model_id: artifact.model_id.clone(),
        prompt_id: artifact.prompt_id.clone(),
        category: artifact.category,
        language: artifact.language,
        prompt_variant: artifact.prompt_variant,
        vulnerable: !findings.is_empty(),
        findings,
    })
}

/// One manifest row. `path` is relative to the manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub artifact_id: String,
    pub model_id: String,
    pub prompt_id: String,
    pub category: Category,
    pub language: Language,
    #[serde(default)]
    pub prompt_variant: PromptVariant,
    pub path: String,
}

/// An artifact the runner could not analyze.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactError {
    pub artifact_id: String,
    pub model_id: String,
    pub prompt_id: String,
    pub path: String,
    pub error: String,
}

/// Output of a corpus run; this is what `report.json` holds.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusRun {
    /// Directory holding the manifest the run was made from.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corpus_root: Option<String>,
    pub results: Vec<ArtifactResult>,
    #[serde(default)]
    pub errors: Vec<ArtifactError>,
}

impl CorpusRun {
    /// Reads a results file: either a run object or a bare array of
    /// results.
    pub fn from_json(text: &str) -> Result<CorpusRun> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        if value.is_array() {
            Ok(CorpusRun {
                corpus_root: None,
                results: serde_json::from_value(value)?,
                errors: Vec::new(),
            })
        } else {
            Ok(serde_json::from_value(value)?)
        }
    }

    pub fn load(path: &Path) -> Result<CorpusRun> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Load {
            path: path.to_path_buf(),
            detail: e.to_string(),
        })?;
        CorpusRun::from_json(&text).map_err(|e| Error::Load {
            path: path.to_path_buf(),
            detail: e.to_string(),
        })
    }
}

/// Reads and validates `<root>/manifest.json`. Every bad entry is listed
/// in the error, not only the first.
pub fn load_manifest(corpus_root: &Path) -> Result<Vec<ManifestEntry>> {
    let path = corpus_root.join("manifest.json");
    let load_err = |detail: String| Error::Load {
        path: path.clone(),
        detail,
    };
    let text = std::fs::read_to_string(&path).map_err(|e| load_err(e.to_string()))?;
    let raw: Vec<serde_json::Value> =
        serde_json::from_str(&text).map_err(|e| load_err(format!("not a JSON array of entries: {e}")))?;
    let mut entries = Vec::with_capacity(raw.len());
    let mut problems = Vec::new();
    let mut ids = BTreeSet::new();
    for (i, v) in raw.into_iter().enumerate() {
        let label = v
            .get("artifact_id")
            .and_then(|x| x.as_str())
            .map(|s| format!("entry {i} ({s})"))
            .unwrap_or_else(|| format!("entry {i}"));
        match serde_json::from_value::<ManifestEntry>(v) {
            Ok(e) if !ids.insert(e.artifact_id.clone()) => problems.push(format!("{label}: duplicate artifact_id")),
            Ok(e) if e.artifact_id.is_empty() => problems.push(format!("{label}: empty artifact_id")),
            Ok(e) => entries.push(e),
            Err(err) => problems.push(format!("{label}: {err}")),
        }
    }
    if !problems.is_empty() {
        return Err(load_err(problems.join("; ")));
    }
    Ok(entries)
}

fn load_artifact(root: &Path, e: &ManifestEntry) -> Result<Artifact> {
    let path: PathBuf = root.join(&e.path);
    let source = std::fs::read_to_string(&path).map_err(|err| Error::Load {
        path,
        detail: err.to_string(),
    })?;
    Ok(Artifact {
        artifact_id: e.artifact_id.clone(),
        model_id: e.model_id.clone(),
        prompt_id: e.prompt_id.clone(),
        category: e.category,
        language: e.language,
        source,
        prompt_variant: e.prompt_variant,
    })
}

/// Loads one artifact of the corpus at `corpus_root` by id.
pub fn load_corpus_artifact(corpus_root: &Path, artifact_id: &str) -> Result<Artifact> {
    let entries = load_manifest(corpus_root)?;
    let entry = entries
        .iter()
        .find(|e| e.artifact_id == artifact_id)
        .ok_or_else(|| Error::domain(format!("artifact {artifact_id} is not in {}", corpus_root.display())))?;
    load_artifact(corpus_root, entry)
}

/// Analyzes every manifest entry, on up to `config.jobs` workers. Output
/// order is (model_id, prompt_id, artifact_id) whatever the job count.
/// Unreadable or unanalyzable artifacts become error records; the run
/// continues.
pub fn run_corpus(corpus_root: &Path, config: &AnalysisConfig) -> Result<CorpusRun> {
    config.validate()?;
    let entries = load_manifest(corpus_root)?;
    let work = |e: &ManifestEntry| -> std::result::Result<ArtifactResult, ArtifactError> {
        load_artifact(corpus_root, e)
            .and_then(|a| analyze_artifact(&a, config))
            .map_err(|err| ArtifactError {
                artifact_id: e.artifact_id.clone(),
                model_id: e.model_id.clone(),
                prompt_id: e.prompt_id.clone(),
                path: e.path.clone(),
                error: err.to_string(),
            })
    };
    let outcomes: Vec<_> = if config.jobs == 1 {
        entries.iter().map(work).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.jobs)
            .build()
            .map_err(|e| Error::infra(format!("worker pool: {e}")))?;
        pool.install(|| entries.par_iter().map(work).collect())
    };
    let root = std::fs::canonicalize(corpus_root).unwrap_or_else(|_| corpus_root.to_path_buf());
    let mut run = CorpusRun {
        corpus_root: Some(root.display().to_string()),
        ..CorpusRun::default()
    };
    for o in outcomes {
        match o {
            Ok(r) => run.results.push(r),
            Err(e) => run.errors.push(e),
        }
    }
    run.results
        .sort_by(|a, b| (&a.model_id, &a.prompt_id, &a.artifact_id).cmp(&(&b.model_id, &b.prompt_id, &b.artifact_id)));
    run.errors
        .sort_by(|a, b| (&a.model_id, &a.prompt_id, &a.artifact_id).cmp(&(&b.model_id, &b.prompt_id, &b.artifact_id)));
    Ok(run)
}

/// Rebuilds the formula behind a finding that went to the solver.
pub fn finding_formula(f: &Finding) -> Option<Result<Formula>> {
    let width = Width::new(f.width?).ok()?;
    site_formula(f.c_site()?, width)
}

/// The size expression of an allocation finding, when it has one.
pub fn finding_expr(f: &Finding) -> Option<&SizeExpr> {
    f.c_site().and_then(|s| s.expr.as_ref())
}
