// SPDX-License-Identifier: Apache-2.0

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use cobalt_core::encode::Width;
use cobalt_core::llm::{self, Mode, ProviderConfig, ReviewInput};
use cobalt_core::model::{Artifact, Category, FindingStatus, Language};
use cobalt_core::pipeline::{
    analyze_artifact, load_corpus_artifact, run_corpus, AnalysisConfig, Backend, CorpusRun, ManifestEntry,
};
use cobalt_core::poc::{crack_fast_hash, derive_injection_payload, emit_poc_c, run_poc, Toolchain};
use cobalt_core::report::{build_leaderboard, compare_tools, leaderboard_markdown, overlap_markdown, ToolFinding};
use cobalt_core::Error;
use serde::Serialize;

/// Proves integer-overflow exploits in C and flags insecure patterns in
/// Python.
#[derive(Debug, Parser)]
#[command(name = "cobalt", version)]
struct Cli {
    /// TOML file whose keys mirror the analysis config.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Analyze one source file and print its findings.
    Analyze(AnalyzeArgs),
    /// Analyze every artifact listed in `<corpus>/manifest.json`.
    Run {
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Per-model vulnerability rates and grades.
    Leaderboard {
        report: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Overlap between proven findings and pattern tools.
    Compare {
        report: PathBuf,
        tools: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Turn a finding into a proof of concept.
    Poc(PocArgs),
    /// Generate artifacts from a prompt file.
    Generate(GenerateArgs),
    /// Ask each model to review its own proven artifacts.
    Review(ReviewArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Md,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Lang {
    C,
    #[value(alias = "python")]
    Py,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum BackendArg {
    Builtin,
    External,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Live,
    Replay,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::Live => Mode::Live,
            ModeArg::Replay => Mode::Replay,
        }
    }
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    file: PathBuf,
    /// Defaults to the file extension.
    #[arg(long, value_enum)]
    lang: Option<Lang>,
    #[arg(long, value_parser = ["8", "16", "32", "64"])]
    width: Option<String>,
    #[arg(long, value_enum)]
    backend: Option<BackendArg>,
    #[arg(long)]
    solver_cmd: Option<String>,
    /// Exit with 1 when anything is found.
    #[arg(long)]
    gate: bool,
}

#[derive(Debug, Args)]
struct PocArgs {
    #[arg(long)]
    report: PathBuf,
    #[arg(long)]
    finding: String,
    /// Where to write the C harness.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Compile and run the harness under the sanitizers.
    #[arg(long)]
    run: bool,
    /// Corpus directory; defaults to the one recorded in the report.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// For password-hash findings: the digest to recover.
    #[arg(long, requires = "wordlist")]
    digest: Option<String>,
    #[arg(long)]
    wordlist: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct GenerateArgs {
    #[arg(long)]
    prompts: PathBuf,
    #[arg(long)]
    provider: PathBuf,
    #[arg(long, value_enum)]
    mode: ModeArg,
    #[arg(long)]
    store: PathBuf,
    /// Also write the artifacts and a manifest here, ready for `run`.
    #[arg(long)]
    corpus_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ReviewArgs {
    #[arg(long)]
    report: PathBuf,
    /// One provider config per reviewed model.
    #[arg(long, required = true)]
    provider: Vec<PathBuf>,
    #[arg(long, value_enum)]
    mode: ModeArg,
    #[arg(long)]
    store: PathBuf,
    /// Corpus directory; defaults to the one recorded in the report.
    #[arg(long)]
    corpus: Option<PathBuf>,
}

/// Failure of a subcommand, carrying its exit code.
#[derive(Debug)]
enum Failure {
    Usage(String),
    Infra(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Failure {
        match e {
            Error::Domain(_) => Failure::Usage(e.to_string()),
            _ => Failure::Infra(e.to_string()),
        }
    }
}

type Outcome = Result<ExitCode, Failure>;

fn print_json<T: Serialize>(value: &T) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Failure::Infra(e.to_string()))?;
    print_text(&format!("{text}\n"))
}

fn print_text(text: &str) -> Result<(), Failure> {
    let mut out = std::io::stdout().lock();
    out.write_all(text.as_bytes()).and_then(|_| out.flush()).map_err(|e| Failure::Infra(e.to_string()))
}

/// The serialized name of a unit enum variant.
fn label<T: Serialize>(v: &T) -> String {
    match serde_json::to_value(v) {
        Ok(serde_json::Value::String(s)) => s,
        _ => String::new(),
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::Infra(format!("{}: {e}", path.display())))
}

fn base_config(path: Option<&Path>) -> Result<AnalysisConfig, Failure> {
    match path {
        Some(p) => Ok(AnalysisConfig::from_toml(&read(p)?)?),
        None => Ok(AnalysisConfig::default()),
    }
}

fn analyze(cfg: AnalysisConfig, args: AnalyzeArgs) -> Outcome {
    let mut cfg = cfg;
    if let Some(w) = &args.width {
        let bits: u32 = w.parse().map_err(|_| Failure::Usage(format!("bad width {w}")))?;
        cfg.width = Width::new(bits)?;
    }
    if let Some(b) = args.backend {
        cfg.backend = match b {
            BackendArg::Builtin => Backend::Builtin,
            BackendArg::External => Backend::External,
        };
    }
    if args.solver_cmd.is_some() {
        cfg.solver_command = args.solver_cmd.clone();
    }
    cfg.validate()?;
    let language = match args.lang {
        Some(Lang::C) => Language::C,
        Some(Lang::Py) => Language::Python,
        None => args
            .file
            .extension()
            .and_then(|e| e.to_str())
            .and_then(|e| match e {
                "c" | "h" => Some(Language::C),
                "py" => Some(Language::Python),
                _ => None,
            })
            .ok_or_else(|| Failure::Usage("cannot tell the language; pass --lang c|py".into()))?,
    };
    let name = args.file.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let artifact = Artifact {
        artifact_id: name,
        model_id: "local".into(),
        prompt_id: "local".into(),
        category: match language {
            Language::C => Category::Mem,
            Language::Python => Category::Inp,
        },
        language,
        source: read(&args.file)?,
        prompt_variant: Default::default(),
    };
    let result = analyze_artifact(&artifact, &cfg)?;
    print_json(&result.findings)?;
    for f in &result.findings {
        eprintln!(
            "{}:{}: {} CWE-{} {} {}",
            args.file.display(),
            f.line,
            label(&f.severity.level),
            f.cwe.number(),
            label(&f.status),
            f.detector_id
        );
    }
    Ok(if args.gate && !result.findings.is_empty() { ExitCode::from(1) } else { ExitCode::SUCCESS })
}

fn corpus_dir(explicit: Option<PathBuf>, run: &CorpusRun) -> Result<PathBuf, Failure> {
    explicit
        .or_else(|| run.corpus_root.as_ref().map(PathBuf::from))
        .ok_or_else(|| Failure::Usage("the report records no corpus; pass --corpus".into()))
}

fn poc(args: PocArgs) -> Outcome {
    let run = CorpusRun::load(&args.report)?;
    let (result, finding) = run
        .results
        .iter()
        .find_map(|r| r.findings.iter().find(|f| f.finding_id == args.finding).map(|f| (r, f)))
        .ok_or_else(|| Failure::Usage(format!("no finding {} in {}", args.finding, args.report.display())))?;

    if let Some(site) = finding.py_site() {
        if let (Some(digest), Some(list)) = (&args.digest, &args.wordlist) {
            let words: Vec<String> = read(list)?.lines().map(str::to_string).collect();
            let found = crack_fast_hash(digest, &words)?;
            print_json(&serde_json::json!({"finding_id": finding.finding_id, "digest": digest, "preimage": found}))?;
            return Ok(ExitCode::SUCCESS);
        }
        let (payload, query) = derive_injection_payload(site)?;
        print_json(&serde_json::json!({"finding_id": finding.finding_id, "payload": payload, "query": query}))?;
        return Ok(ExitCode::SUCCESS);
    }
    if finding.status != FindingStatus::SolverSat {
        return Err(Failure::Usage(format!("finding {} has no solver witness", finding.finding_id)));
    }
    let root = corpus_dir(args.corpus, &run)?;
    let artifact = load_corpus_artifact(&root, &result.artifact_id)?;
    let source = emit_poc_c(finding, &artifact)?;
    match &args.out {
        Some(out) => std::fs::write(out, &source).map_err(|e| Failure::Infra(format!("{}: {e}", out.display())))?,
        None if !args.run => print_text(&source)?,
        None => {}
    }
    if args.run {
        let toolchain = Toolchain::default();
        if !toolchain.available() {
            return Err(Failure::Infra(format!("compiler {} is not available", toolchain.compiler)));
        }
        let outcome = run_poc(&finding.finding_id, &source, &toolchain)?;
        print_json(&outcome)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn generate(args: GenerateArgs) -> Outcome {
    let prompts = llm::load_prompts(&args.prompts)?;
    let provider = ProviderConfig::load(&args.provider)?;
    let run = llm::generate_artifacts(&prompts, &provider, args.mode.into(), &args.store)?;
    if let Some(dir) = &args.corpus_out {
        write_corpus(dir, &run.artifacts)?;
    }
    print_json(&run)?;
    for e in &run.errors {
        eprintln!("{} ({}): {}", e.prompt_id, e.variant.as_lower(), e.error);
    }
    Ok(if run.errors.is_empty() { ExitCode::SUCCESS } else { ExitCode::from(3) })
}

fn write_corpus(dir: &Path, artifacts: &[llm::Generated]) -> Result<(), Failure> {
    let io = |e: std::io::Error| Failure::Infra(format!("{}: {e}", dir.display()));
    let mut manifest = Vec::new();
    for g in artifacts {
        let a = &g.artifact;
        let ext = match a.language {
            Language::C => "c",
            Language::Python => "py",
        };
        let rel = format!("{}.{ext}", a.artifact_id.replace(['/', '\\'], "__"));
        std::fs::create_dir_all(dir).map_err(io)?;
        std::fs::write(dir.join(&rel), &a.source).map_err(io)?;
        manifest.push(ManifestEntry {
            artifact_id: a.artifact_id.clone(),
            model_id: a.model_id.clone(),
            prompt_id: a.prompt_id.clone(),
            category: a.category,
            language: a.language,
            prompt_variant: a.prompt_variant,
            path: rel,
        });
    }
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Failure::Infra(e.to_string()))?;
    std::fs::create_dir_all(dir).map_err(io)?;
    std::fs::write(dir.join("manifest.json"), text + "\n").map_err(io)
}

fn review(args: ReviewArgs) -> Outcome {
    let run = CorpusRun::load(&args.report)?;
    let providers = args.provider.iter().map(|p| ProviderConfig::load(p)).collect::<Result<Vec<_>, _>>()?;
    let root = corpus_dir(args.corpus, &run)?;
    let mut inputs = Vec::new();
    for r in run.results.iter().filter(|r| r.has_sat()) {
        let artifact = load_corpus_artifact(&root, &r.artifact_id)?;
        inputs.push(ReviewInput { result: r.clone(), source: artifact.source });
    }
    let out = llm::self_review(&inputs, &providers, args.mode.into(), &args.store)?;
    print_json(&out)?;
    Ok(ExitCode::SUCCESS)
}

fn dispatch(cli: Cli) -> Outcome {
    let cfg = base_config(cli.config.as_deref())?;
    match cli.command {
        Command::Analyze(args) => analyze(cfg, args),
        Command::Run { corpus, out, jobs } => {
            let mut cfg = cfg;
            if let Some(j) = jobs {
                cfg.jobs = j;
            }
            let run = run_corpus(&corpus, &cfg)?;
            let text = serde_json::to_string_pretty(&run).map_err(|e| Failure::Infra(e.to_string()))?;
            std::fs::write(&out, text + "\n").map_err(|e| Failure::Infra(format!("{}: {e}", out.display())))?;
            for e in &run.errors {
                eprintln!("{}: {}", e.artifact_id, e.error);
            }
            print_json(&serde_json::json!({
                "out": out.display().to_string(),
                "artifacts": run.results.len(),
                "vulnerable": run.results.iter().filter(|r| r.vulnerable).count(),
                "errors": run.errors.len(),
            }))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Leaderboard { report, format } => {
            let board = build_leaderboard(&CorpusRun::load(&report)?.results)?;
            match format {
                Format::Json => print_json(&board)?,
                Format::Md => print_text(&leaderboard_markdown(&board))?,
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Compare { report, tools, format } => {
            let run = CorpusRun::load(&report)?;
            let findings: Vec<ToolFinding> = serde_json::from_str(&read(&tools)?)
                .map_err(|e| Failure::Infra(format!("{}: {e}", tools.display())))?;
            let overlap = compare_tools(&run.results, &findings)?;
            match format {
                Format::Json => print_json(&overlap)?,
                Format::Md => print_text(&overlap_markdown(&overlap))?,
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Poc(args) => poc(args),
        Command::Generate(args) => generate(args),
        Command::Review(args) => review(args),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            if !e.use_stderr() {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let text = e.render().to_string();
            eprint!("{text}");
            if !text.contains("Usage:") {
                eprintln!("\n{}", Cli::command().render_usage());
            }
            return ExitCode::from(2);
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Infra(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}
