// SPDX-License-Identifier: Apache-2.0

//! Turns witnesses into runnable proofs: sanitizer harnesses for C
//! findings, crash triage, fast-hash cracking and SQL payloads.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::Read as _;
use std::path::Path;
use std::process::{Command, Stdio};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use wait_timeout::ChildExt;

use crate::cfront::{SiteKind, SizeExpr};
use crate::error::{Error, Result};
use crate::model::{Artifact, FindingStatus, Language};
use crate::pipeline::Finding;
use crate::pyfront::{sql_template, PyKind, PySite, SqlPart};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Fault {
    HeapBufferOverflow,
    AllocSizeTooBig,
    OobRead,
    None,
    /// The runtime refused the operation before harm was done.
    Blocked,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PocOutcome {
    pub finding_id: String,
    pub ran: bool,
    pub fault: Fault,
    pub raw_output: String,
}

const ALLOCATORS: &[&str] = &["malloc", "calloc", "realloc", "alloca"];

/// Elements written past the computed size.
const OVERRUN: u64 = 8;

fn uint(width: u32) -> String {
    format!("uint{width}_t")
}

/// Unsigned arithmetic type wide enough that `uintW_t` operands do not
/// promote to signed `int`.
fn arith(width: u32) -> &'static str {
    if width == 64 {
        "uint64_t"
    } else {
        "uint32_t"
    }
}

fn mask(width: u32) -> u64 {
    if width == 64 {
        u64::MAX
    } else {
        (1u64 << width) - 1
    }
}

struct Renderer<'a> {
    width: u32,
    names: &'a [(String, String)],
}

impl Renderer<'_> {
    fn ident(&self, name: &str) -> &str {
        self.names
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, c)| c.as_str())
            .expect("every variable has a harness name")
    }

    /// C text computing `e` modulo 2^width.
    fn render(&self, e: &SizeExpr) -> String {
        let (w, t, a) = (self.width, uint(self.width), arith(self.width));
        match e {
            SizeExpr::Var { name } => self.ident(name).to_string(),
            SizeExpr::Const { value } => format!("({t})UINT64_C({})", value & mask(w)),
            SizeExpr::SizeOf { type_name, bytes } => format!("({t})UINT64_C({}) /* sizeof({type_name}) */", bytes & mask(w)),
            SizeExpr::Mul { lhs, rhs } => {
                format!("({t})(({a}){} * ({a}){})", self.render(lhs), self.render(rhs))
            }
            SizeExpr::Add { lhs, rhs } => {
                format!("({t})(({a}){} + ({a}){})", self.render(lhs), self.render(rhs))
            }
            SizeExpr::Cast { target_width, signed, inner } => {
                if *target_width >= w {
                    return self.render(inner);
                }
                let narrow = if *signed { format!("int{target_width}_t") } else { uint(*target_width) };
                let via = if *signed { "int64_t" } else { "uint64_t" };
                format!("({t})({via})({narrow})({})", self.render(inner))
            }
        }
    }
}

fn first_sizeof(e: &SizeExpr) -> Option<u64> {
    match e {
        SizeExpr::SizeOf { bytes, .. } => Some(*bytes),
        SizeExpr::Mul { lhs, rhs } | SizeExpr::Add { lhs, rhs } => first_sizeof(lhs).or_else(|| first_sizeof(rhs)),
        SizeExpr::Cast { inner, .. } => first_sizeof(inner),
        SizeExpr::Var { .. } | SizeExpr::Const { .. } => None,
    }
}

fn elem_type(bytes: u64) -> String {
    match bytes {
        1 => "unsigned char".into(),
        2 => "uint16_t".into(),
        4 => "int".into(),
        8 => "uint64_t".into(),
        n => format!("struct {{ unsigned char b[{n}]; }}"),
    }
}

fn harness_names(vars: &[String]) -> Vec<(String, String)> {
    vars.iter()
        .enumerate()
        .map(|(i, v)| {
            let plain = !v.is_empty()
                && v.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
                && !v.starts_with(|c: char| c.is_ascii_digit());
            let c = if plain { format!("poc_{v}") } else { format!("poc_v{i}") };
            (v.clone(), c)
        })
        .collect()
}

fn prelude(finding: &Finding, artifact: &Artifact) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "/* Proof-of-concept for finding {} ({}, {}).", finding.finding_id, finding.cwe, finding.detector_id);
    let _ = writeln!(out, " * Artifact {}, line {}: {}", artifact.artifact_id, finding.line, finding.evidence.replace("*/", "* /"));
    out.push_str(" * Build: gcc -fsanitize=address,undefined -g -O1 -o poc poc.c && ./poc\n */\n");
    out.push_str("#include <stdint.h>\n#include <stdio.h>\n#include <stdlib.h>\n#include <string.h>\n\n");
    out.push_str("/* ---- artifact source ---- */\n#define main cobalt_artifact_main\n");
    out.push_str(&artifact.source);
    if !artifact.source.ends_with('\n') {
        out.push('\n');
    }
    out.push_str("#undef main\n/* ---- end of artifact source ---- */\n\n");
    out
}

/// A standalone translation unit: the artifact source, then a main that
/// replays the site with the witness. Wrap findings allocate the wrapped
/// size and write past it; sign-conversion findings pass the converted
/// value as a size.
pub fn emit_poc_c(finding: &Finding, artifact: &Artifact) -> Result<String> {
    if finding.status != FindingStatus::SolverSat {
        return Err(Error::domain(format!("finding {} has no solver proof", finding.finding_id)));
    }
    if artifact.language != Language::C {
        return Err(Error::domain(format!("artifact {} is not C", artifact.artifact_id)));
    }
    let site = finding
        .c_site()
        .ok_or_else(|| Error::domain(format!("finding {} has no C site", finding.finding_id)))?;
    let witness = finding
        .witness
        .as_ref()
        .ok_or_else(|| Error::domain(format!("finding {} has no witness", finding.finding_id)))?;
    let expr = site
        .expr
        .as_ref()
        .ok_or_else(|| Error::domain(format!("finding {} has no size expression", finding.finding_id)))?;
    let width = finding.width.unwrap_or(32);
    let vars = expr.vars();
    let names = harness_names(&vars);
    let value = |v: &str| {
        witness
            .get(v)
            .copied()
            .ok_or_else(|| Error::domain(format!("witness does not bind {v}")))
    };

    let mut out = prelude(finding, artifact);
    out.push_str("static void poc_main(void) {\n");
    match site.kind {
        SiteKind::AllocArith => {
            let t = uint(width);
            for (v, c) in &names {
                let _ = writeln!(out, "    const {t} {c} = ({t})UINT64_C({}); /* {v} */", value(v)? & mask(width));
            }
            let r = Renderer { width, names: &names };
            let elem_bytes = first_sizeof(expr).unwrap_or(1);
            let elem = elem_type(elem_bytes);
            let _ = writeln!(out, "    /* {expr}, evaluated modulo 2^{width} */");
            let _ = writeln!(out, "    const {t} size = {};", r.render(expr));
            out.push_str("    fprintf(stderr, \"poc: allocating %llu bytes\\n\", (unsigned long long)size);\n");
            let _ = writeln!(out, "    {elem} *buf = malloc((size_t)size);");
            out.push_str("    if (buf == NULL) {\n        fprintf(stderr, \"poc: allocation failed\\n\");\n        return;\n    }\n");
            let _ = writeln!(out, "    const size_t count = (size_t)size / sizeof *buf + {OVERRUN};");
            let store = if matches!(elem_bytes, 1 | 2 | 4 | 8) { "buf[i] = 0x41;" } else { "memset(&buf[i], 0x41, sizeof *buf);" };
            let _ = writeln!(out, "    for (size_t i = 0; i < count; i++) {{\n        {store}\n    }}");
            out.push_str("    free(buf);\n");
        }
        SiteKind::CastSign => {
            let it = site
                .source_type
                .ok_or_else(|| Error::domain("sign-conversion finding without a source type"))?;
            let (v, c) = names.first().ok_or_else(|| Error::domain("sign-conversion finding without a variable"))?;
            let raw = value(v)? & mask(it.width);
            let _ = writeln!(out, "    const int{0}_t {c} = (int{0}_t)UINT64_C({raw}); /* {v} */", it.width);
            out.push_str("    const size_t size = (size_t)");
            out.push_str(c);
            out.push_str(";\n    fprintf(stderr, \"poc: size argument %zu\\n\", size);\n");
            let callee = site.callee.as_deref().unwrap_or("");
            if ALLOCATORS.contains(&callee) {
                // Use the pointer so the allocation is not optimized away.
                out.push_str("    unsigned char *buf = malloc(size);\n");
                out.push_str("    fprintf(stderr, \"poc: got %p\\n\", (void *)buf);\n    free(buf);\n");
            } else {
                let _ = writeln!(out, "    /* {} copies `size` bytes into a real buffer */", if callee.is_empty() { "the sink" } else { callee });
                out.push_str("    unsigned char *dst = malloc(16);\n    if (dst == NULL) {\n        return;\n    }\n");
                let _ = writeln!(out, "    for (size_t i = 0; i < size && i < 16 + {OVERRUN}; i++) {{\n        dst[i] = 0x41;\n    }}");
                out.push_str("    free(dst);\n");
            }
        }
        SiteKind::IndexUnchecked | SiteKind::UnsafeStrcopy => {
            return Err(Error::domain(format!("{} sites carry no witness", site.detector_id)));
        }
    }
    out.push_str("}\n\nint main(void) {\n    poc_main();\n    return 0;\n}\n");
    Ok(out)
}

/// Classifies sanitizer or runtime output by its summary text.
pub fn triage_sanitizer_output(stderr: &str) -> Fault {
    if stderr.contains("allocation-size-too-big") {
        return Fault::AllocSizeTooBig;
    }
    if stderr.contains("heap-buffer-overflow") {
        if stderr.contains("WRITE of size") {
            return Fault::HeapBufferOverflow;
        }
        if stderr.contains("READ of size") {
            return Fault::OobRead;
        }
    }
    let python_rejected = stderr.contains("Traceback (most recent call last)")
        && stderr.lines().any(|l| l.trim_start().starts_with("ValueError"));
    if python_rejected {
        return Fault::Blocked;
    }
    Fault::None
}

/// How to build and run a harness.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Toolchain {
    pub compiler: String,
    pub flags: Vec<String>,
    pub timeout_ms: u64,
}

impl Default for Toolchain {
    fn default() -> Self {
        Toolchain {
            compiler: "gcc".into(),
            flags: ["-fsanitize=address,undefined", "-g", "-O1"].iter().map(|s| s.to_string()).collect(),
            timeout_ms: 60_000,
        }
    }
}

impl Toolchain {
    /// Whether the compiler can build and run a sanitized program here.
    pub fn available(&self) -> bool {
        let Ok(dir) = tempfile::tempdir() else { return false };
        let src = dir.path().join("probe.c");
        if std::fs::write(&src, "int main(void) { return 0; }\n").is_err() {
            return false;
        }
        let exe = dir.path().join("probe");
        let built = Command::new(&self.compiler)
            .args(&self.flags)
            .arg("-o")
            .arg(&exe)
            .arg(&src)
            .stdout(Stdio::null())
            .stderr(Stdio::null())
            .status()
            .is_ok_and(|s| s.success());
        built && Command::new(&exe).stdout(Stdio::null()).stderr(Stdio::null()).status().is_ok_and(|s| s.success())
    }
}

fn run_with_timeout(cmd: &mut Command, timeout: Duration) -> Result<(Option<i32>, String, bool)> {
    let mut child = cmd
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| Error::infra(format!("cannot start {:?}: {e}", cmd.get_program())))?;
    let mut stdout = child.stdout.take().expect("piped");
    let mut stderr = child.stderr.take().expect("piped");
    let out_reader = std::thread::spawn(move || {
        let mut s = String::new();
        let _ = stdout.read_to_string(&mut s);
        s
    });
    let err_reader = std::thread::spawn(move || {
        let mut s = String::new();
        let _ = stderr.read_to_string(&mut s);
        s
    });
    let status = child.wait_timeout(timeout)?;
    let timed_out = status.is_none();
    if timed_out {
        let _ = child.kill();
        let _ = child.wait();
    }
    let out = out_reader.join().unwrap_or_default();
    let err = err_reader.join().unwrap_or_default();
    Ok((status.and_then(|s| s.code()), format!("{out}{err}"), timed_out))
}

/// Compiles `source` with the toolchain in a scratch directory and runs
/// it. A compile failure is an infrastructure error.
pub fn run_poc(finding_id: &str, source: &str, toolchain: &Toolchain) -> Result<PocOutcome> {
    let dir = tempfile::tempdir()?;
    run_poc_in(finding_id, source, toolchain, dir.path())
}

fn run_poc_in(finding_id: &str, source: &str, toolchain: &Toolchain, dir: &Path) -> Result<PocOutcome> {
    let src = dir.join("poc.c");
    let exe = dir.join("poc");
    std::fs::write(&src, source)?;
    let timeout = Duration::from_millis(toolchain.timeout_ms);
    let (code, log, timed_out) = run_with_timeout(
        Command::new(&toolchain.compiler).args(&toolchain.flags).arg("-o").arg(&exe).arg(&src),
        timeout,
    )?;
    if timed_out || code != Some(0) {
        return Err(Error::infra(format!("harness did not compile:\n{log}")));
    }
    let (_, output, timed_out) = run_with_timeout(
        Command::new(&exe).env("ASAN_OPTIONS", "detect_leaks=0:allocator_may_return_null=0"),
        timeout,
    )?;
    let fault = if timed_out { Fault::None } else { triage_sanitizer_output(&output) };
    Ok(PocOutcome {
        finding_id: finding_id.to_string(),
        ran: true,
        fault,
        raw_output: output,
    })
}

fn parse_digest(hex_digest: &str) -> Result<[u8; 32]> {
    let bytes = hex::decode(hex_digest.trim()).map_err(|e| Error::domain(format!("malformed hex digest: {e}")))?;
    bytes
        .try_into()
        .map_err(|b: Vec<u8>| Error::domain(format!("digest has {} bytes, SHA-256 has 32", b.len())))
}

fn sha256(word: &str) -> [u8; 32] {
    Sha256::digest(word.as_bytes()).into()
}

/// First wordlist entry whose SHA-256 equals the digest.
pub fn crack_fast_hash<S: AsRef<str>>(hex_digest: &str, wordlist: &[S]) -> Result<Option<String>> {
    let target = parse_digest(hex_digest)?;
    Ok(wordlist
        .iter()
        .map(AsRef::as_ref)
        .find(|w| sha256(w) == target)
        .map(str::to_string))
}

/// Precomputed digest lookup over a wordlist. Earlier entries win.
#[derive(Debug, Clone, Default)]
pub struct HashTable {
    table: HashMap<[u8; 32], String>,
}

impl HashTable {
    pub fn build<S: AsRef<str>>(wordlist: &[S]) -> HashTable {
        let mut table = HashMap::with_capacity(wordlist.len());
        for w in wordlist {
            table.entry(sha256(w.as_ref())).or_insert_with(|| w.as_ref().to_string());
        }
        HashTable { table }
    }

    pub fn lookup(&self, hex_digest: &str) -> Result<Option<&str>> {
        Ok(self.table.get(&parse_digest(hex_digest)?).map(String::as_str))
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }
}

/// Whether `query` has an `OR` keyword outside every quoted literal.
pub fn has_unquoted_or(query: &str) -> bool {
    let mut quote: Option<char> = None;
    let mut word = String::new();
    let mut found = false;
    for c in query.chars().chain(std::iter::once(' ')) {
        match quote {
            Some(q) if c == q => quote = None,
            Some(_) => {}
            None if c == '\'' || c == '"' => {
                found |= word.eq_ignore_ascii_case("or");
                word.clear();
                quote = Some(c);
            }
            None if c.is_ascii_alphanumeric() || c == '_' => word.push(c),
            None => {
                found |= word.eq_ignore_ascii_case("or");
                word.clear();
            }
        }
    }
    found
}

/// Open quote character at the end of `text`, if a literal is open.
fn open_quote(text: &str) -> Option<char> {
    let mut quote = None;
    for c in text.chars() {
        match quote {
            Some(q) if c == q => quote = None,
            Some(_) => {}
            None if c == '\'' || c == '"' => quote = Some(c),
            None => {}
        }
    }
    quote
}

/// A tautology payload for the site's first interpolated slot and the
/// query it produces. Other slots receive benign values.
pub fn derive_injection_payload(site: &PySite) -> Result<(String, String)> {
    if site.kind != PyKind::SqlConcat {
        return Err(Error::domain(format!("{} is not a SQL construction site", site.detector_id)));
    }
    let template = sql_template(&site.evidence)
        .ok_or_else(|| Error::domain(format!("no interpolation slot in `{}`", site.evidence)))?;
    let mut literal = String::new();
    let mut quotes = Vec::new();
    for p in &template.parts {
        match p {
            SqlPart::Lit(s) => literal.push_str(s),
            SqlPart::Slot(_) => {
                quotes.push(open_quote(&literal));
                literal.push('x');
            }
        }
    }
    let payload = match quotes[0] {
        Some(q) => format!("{q} OR {q}1{q}={q}1"),
        None => "1 OR 1=1".to_string(),
    };
    let query = template.render(|k, _| match (k, quotes[k]) {
        (0, _) => payload.clone(),
        (_, Some(_)) => "x".to_string(),
        (_, None) => "1".to_string(),
    });
    Ok((payload, query))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sql_site(evidence: &str) -> PySite {
        PySite {
            artifact_id: "a".into(),
            detector_id: "py.sql-concat".into(),
            cwe: PyKind::SqlConcat.cwe(),
            line: 1,
            kind: PyKind::SqlConcat,
            evidence: evidence.into(),
        }
    }

    #[test]
    fn quoted_payload() {
        let (p, q) = derive_injection_payload(&sql_site(r#"cur.execute(f"SELECT * FROM users WHERE name = '{name}'")"#)).unwrap();
        assert_eq!(p, "' OR '1'='1");
        assert!(q.ends_with("name = '' OR '1'='1'"), "{q}");
        assert!(has_unquoted_or(&q));
        assert!(!has_unquoted_or("SELECT * FROM users WHERE name = 'x OR y'"));
    }

    #[test]
    fn numeric_and_like_payloads() {
        let (p, q) = derive_injection_payload(&sql_site(r#"cur.execute(f"SELECT * FROM t WHERE id = {uid}")"#)).unwrap();
        assert_eq!(p, "1 OR 1=1");
        assert_eq!(q, "SELECT * FROM t WHERE id = 1 OR 1=1");
        let (p, q) = derive_injection_payload(&sql_site(r#"q = "SELECT * FROM t WHERE n LIKE '%%%s%%' AND k = %d" % (a, b)"#)).unwrap();
        assert_eq!(p, "' OR '1'='1");
        assert_eq!(q, "SELECT * FROM t WHERE n LIKE '%' OR '1'='1%' AND k = 1");
        assert!(has_unquoted_or(&q));
    }

    #[test]
    fn payload_preconditions() {
        assert!(derive_injection_payload(&sql_site(r#"cur.execute("SELECT 1 WHERE a = ?", (a,))"#)).is_err());
        let mut s = sql_site("x");
        s.kind = PyKind::WeakRandom;
        assert!(derive_injection_payload(&s).is_err());
    }

    #[test]
    fn triage_rules() {
        assert_eq!(triage_sanitizer_output(""), Fault::None);
        assert_eq!(
            triage_sanitizer_output("==1==ERROR: AddressSanitizer: heap-buffer-overflow\nREAD of size 4 at 0x1\nSUMMARY: AddressSanitizer: heap-buffer-overflow"),
            Fault::OobRead
        );
        assert_eq!(
            triage_sanitizer_output("==1==ERROR: AddressSanitizer: requested allocation size 0xffffffffffffffff\nSUMMARY: AddressSanitizer: allocation-size-too-big"),
            Fault::AllocSizeTooBig
        );
        assert_eq!(triage_sanitizer_output("Segmentation fault"), Fault::None);
    }

    #[test]
    fn crack_round_trip() {
        let words = ["alpha", "secret", "secret"];
        let d = hex::encode(sha256("secret"));
        assert_eq!(crack_fast_hash(&d, &words).unwrap().as_deref(), Some("secret"));
        assert_eq!(crack_fast_hash(&hex::encode(sha256("absent")), &words).unwrap(), None);
        assert!(crack_fast_hash("zz", &words).is_err());
        assert!(crack_fast_hash("abcd", &words).is_err());
        let t = HashTable::build(&words);
        assert_eq!(t.len(), 2);
        assert_eq!(t.lookup(&d).unwrap(), Some("secret"));
    }
}
