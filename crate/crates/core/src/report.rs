// SPDX-License-Identifier: Apache-2.0

//! Leaderboard aggregation and static-tool overlap statistics.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    grade_from_rate, mean_tenths, percent_tenths, tenths_to_f64, Category, FindingStatus, Grade, Language,
    SeverityLevel,
};
use crate::pipeline::ArtifactResult;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub model_id: String,
    pub total: u64,
    pub vulnerable: u64,
    pub rate: f64,
    pub crit_count: u64,
    pub high_count: u64,
    pub solver_sat_count: u64,
    pub grade: Grade,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusReport {
    /// Sorted by rate descending, then model_id.
    pub rows: Vec<ModelReport>,
    pub mean_rate: f64,
    pub mean_crit: f64,
    pub mean_high: f64,
    pub mean_solver_sat: f64,
    pub category_rates: BTreeMap<Category, f64>,
}

fn gcd(a: u128, b: u128) -> u128 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Half-up tenths of the mean of the percentages `100 * v / t`, computed
/// exactly over rationals.
fn mean_rate_tenths(fracs: &[(u64, u64)]) -> u64 {
    let fracs: Vec<(u128, u128)> = fracs.iter().filter(|f| f.1 > 0).map(|&(v, t)| (v as u128, t as u128)).collect();
    if fracs.is_empty() {
        return 0;
    }
    let (mut num, mut den) = (0u128, 1u128);
    for (v, t) in fracs.iter().copied() {
        let l = den / gcd(den, t) * t;
        num = num * (l / den) + v * (l / t);
        den = l;
        let g = gcd(num, den).max(1);
        num /= g;
        den /= g;
    }
    den *= fracs.len() as u128;
    ((2000 * num + den) / (2 * den)) as u64
}

#[derive(Default)]
struct Tally {
    total: u64,
    vulnerable: u64,
    crit: u64,
    high: u64,
    sat: u64,
    by_category: BTreeMap<Category, (u64, u64)>,
}

/// Groups results by model. Finding counts are per finding; the rate is
/// per artifact.
pub fn build_leaderboard(results: &[ArtifactResult]) -> Result<CorpusReport> {
    if results.is_empty() {
        return Err(Error::domain("cannot build a leaderboard from an empty corpus"));
    }
    let mut seen = BTreeSet::new();
    let mut models: BTreeMap<&str, Tally> = BTreeMap::new();
    for r in results {
        if !seen.insert(r.artifact_id.as_str()) {
            return Err(Error::domain(format!("artifact {} appears twice", r.artifact_id)));
        }
        let t = models.entry(&r.model_id).or_default();
        t.total += 1;
        t.vulnerable += u64::from(r.vulnerable);
        let c = t.by_category.entry(r.category).or_default();
        c.0 += u64::from(r.vulnerable);
        c.1 += 1;
        for f in &r.findings {
            match f.severity.level {
                SeverityLevel::Critical => t.crit += 1,
                SeverityLevel::High => t.high += 1,
                SeverityLevel::Medium => {}
            }
            t.sat += u64::from(f.status == FindingStatus::SolverSat);
        }
    }

    let mut rows = Vec::with_capacity(models.len());
    let mut rate_tenths = Vec::with_capacity(models.len());
    let mut by_category: BTreeMap<Category, Vec<(u64, u64)>> = BTreeMap::new();
    for (model, t) in &models {
        let tenths = percent_tenths(t.vulnerable, t.total);
        let rate = tenths_to_f64(tenths);
        rate_tenths.push(tenths);
        rows.push(ModelReport {
            model_id: model.to_string(),
            total: t.total,
            vulnerable: t.vulnerable,
            rate,
            crit_count: t.crit,
            high_count: t.high,
            solver_sat_count: t.sat,
            grade: grade_from_rate(rate)?,
        });
        for (cat, frac) in &t.by_category {
            by_category.entry(*cat).or_default().push(*frac);
        }
    }
    rows.sort_by(|a, b| b.rate.total_cmp(&a.rate).then_with(|| a.model_id.cmp(&b.model_id)));

    let mean_of = |f: fn(&ModelReport) -> u64| tenths_to_f64(mean_tenths(&rows.iter().map(|r| 10 * f(r)).collect::<Vec<_>>()));
    Ok(CorpusReport {
        mean_rate: tenths_to_f64(mean_tenths(&rate_tenths)),
        mean_crit: mean_of(|r| r.crit_count),
        mean_high: mean_of(|r| r.high_count),
        mean_solver_sat: mean_of(|r| r.solver_sat_count),
        category_rates: by_category
            .into_iter()
            .map(|(c, fracs)| (c, tenths_to_f64(mean_rate_tenths(&fracs))))
            .collect(),
        rows,
    })
}

/// Markdown leaderboard: one row per model and a Mean row.
pub fn leaderboard_markdown(report: &CorpusReport) -> String {
    let mut out = String::new();
    out.push_str("| Model | Vuln | CRIT | HIGH | SAT | Grade |\n");
    out.push_str("|---|---:|---:|---:|---:|:---:|\n");
    for r in &report.rows {
        let _ = writeln!(
            out,
            "| {} | {:.1}% | {} | {} | {} | {} |",
            r.model_id, r.rate, r.crit_count, r.high_count, r.solver_sat_count, r.grade
        );
    }
    let _ = writeln!(
        out,
        "| Mean | {:.1}% | {:.1} | {:.1} | {:.1} | --- |",
        report.mean_rate, report.mean_crit, report.mean_high, report.mean_solver_sat
    );
    if !report.category_rates.is_empty() {
        out.push_str("\n| Category | Mean Rate |\n|---|---:|\n");
        for (c, rate) in &report.category_rates {
            let _ = writeln!(out, "| {c} | {rate:.1}% |");
        }
    }
    out
}

/// A finding reported by a third-party tool, in normalized form.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolFinding {
    pub tool_id: String,
    pub artifact_id: String,
    pub rule_id: String,
    #[serde(default)]
    pub line: Option<u32>,
}

/// `count` of `total`, with the percentage at one decimal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ratio {
    pub count: u64,
    pub total: u64,
    pub percentage: f64,
}

impl Ratio {
    pub fn new(count: u64, total: u64) -> Ratio {
        Ratio {
            count,
            total,
            percentage: tenths_to_f64(percent_tenths(count, total)),
        }
    }
}

impl std::fmt::Display for Ratio {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{} ({:.1}%)", self.count, self.total, self.percentage)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolRow {
    pub tool_id: String,
    pub caught: Ratio,
    pub c: Ratio,
    pub python: Ratio,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapReport {
    pub artifacts: u64,
    /// Artifacts with at least one finding of our own.
    pub flagged: Ratio,
    pub flagged_c: Ratio,
    pub flagged_python: Ratio,
    /// Artifacts with at least one solver-proven finding.
    pub sat_bearing: Ratio,
    pub tools: Vec<ToolRow>,
    /// Union of all tools, over all artifacts.
    pub combined: Ratio,
    pub combined_rate: f64,
    /// Flagged artifacts no tool caught, over flagged artifacts.
    pub cobalt_only: Ratio,
    pub cobalt_only_count: u64,
    pub cobalt_only_c: Ratio,
    pub cobalt_only_python: Ratio,
    /// SAT-bearing artifacts no tool caught, over SAT-bearing artifacts.
    pub sat_missed: Ratio,
}

/// Artifact-level overlap: a tool catches an artifact when it reports at
/// least one finding on it.
pub fn compare_tools(results: &[ArtifactResult], tool_findings: &[ToolFinding]) -> Result<OverlapReport> {
    let by_id: BTreeMap<&str, &ArtifactResult> = results.iter().map(|r| (r.artifact_id.as_str(), r)).collect();
    let unknown: BTreeSet<&str> = tool_findings
        .iter()
        .map(|t| t.artifact_id.as_str())
        .filter(|a| !by_id.contains_key(a))
        .collect();
    if !unknown.is_empty() {
        let list: Vec<&str> = unknown.into_iter().collect();
        return Err(Error::domain(format!(
            "tool findings reference artifacts outside the corpus: {}",
            list.join(", ")
        )));
    }

    let mut per_tool: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for t in tool_findings {
        per_tool.entry(&t.tool_id).or_default().insert(&t.artifact_id);
    }
    let union: BTreeSet<&str> = per_tool.values().flatten().copied().collect();

    let count = |pred: &dyn Fn(&ArtifactResult) -> bool| results.iter().filter(|r| pred(r)).count() as u64;
    let is_lang = |l: Language| move |r: &ArtifactResult| r.language == l;
    let total = results.len() as u64;
    let (n_c, n_py) = (count(&is_lang(Language::C)), count(&is_lang(Language::Python)));
    let flagged = count(&|r| r.vulnerable);
    let flagged_c = count(&|r| r.vulnerable && r.language == Language::C);
    let flagged_py = count(&|r| r.vulnerable && r.language == Language::Python);
    let caught = |r: &ArtifactResult| union.contains(r.artifact_id.as_str());

    let tools = per_tool
        .iter()
        .map(|(tool, arts)| {
            let in_lang = |l: Language| arts.iter().filter(|a| by_id[*a].language == l).count() as u64;
            ToolRow {
                tool_id: tool.to_string(),
                caught: Ratio::new(arts.len() as u64, total),
                c: Ratio::new(in_lang(Language::C), n_c),
                python: Ratio::new(in_lang(Language::Python), n_py),
            }
        })
        .collect();

    let sat_total = count(&|r| r.has_sat());
    let sat_missed = count(&|r| r.has_sat() && !caught(r));
    let only = count(&|r| r.vulnerable && !caught(r));
    let combined = Ratio::new(union.len() as u64, total);
    Ok(OverlapReport {
        artifacts: total,
        flagged: Ratio::new(flagged, total),
        flagged_c: Ratio::new(flagged_c, n_c),
        flagged_python: Ratio::new(flagged_py, n_py),
        sat_bearing: Ratio::new(sat_total, total),
        tools,
        combined_rate: combined.percentage,
        combined,
        cobalt_only: Ratio::new(only, flagged),
        cobalt_only_count: only,
        cobalt_only_c: Ratio::new(count(&|r| r.vulnerable && r.language == Language::C && !caught(r)), flagged_c),
        cobalt_only_python: Ratio::new(
            count(&|r| r.vulnerable && r.language == Language::Python && !caught(r)),
            flagged_py,
        ),
        sat_missed: Ratio::new(sat_missed, sat_total),
    })
}

fn c_py(c: &Ratio, py: &Ratio) -> String {
    format!("{}/{} · {}/{}", c.count, c.total, py.count, py.total)
}

/// Markdown overlap table in detection-rate order: ours, each tool, the
/// union, then the exclusivity rows.
pub fn overlap_markdown(o: &OverlapReport) -> String {
    let mut out = String::new();
    out.push_str("| Tool | Det. Rate | C / Py |\n|---|---:|---|\n");
    let _ = writeln!(out, "| cobalt | {} | {} |", o.flagged, c_py(&o.flagged_c, &o.flagged_python));
    let _ = writeln!(out, "| cobalt (solver-proven) | {} | |", o.sat_bearing);
    for t in &o.tools {
        let _ = writeln!(out, "| {} | {} | {} |", t.tool_id, t.caught, c_py(&t.c, &t.python));
    }
    let _ = writeln!(out, "| Combined | {} | |", o.combined);
    let _ = writeln!(out, "| cobalt-only | {} | {} |", o.cobalt_only, c_py(&o.cobalt_only_c, &o.cobalt_only_python));
    let _ = writeln!(out, "| SAT-only | {} | |", o.sat_missed);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_category_mean() {
        assert_eq!(mean_rate_tenths(&[(1, 3), (1, 3), (1, 3)]), 333);
        assert_eq!(mean_rate_tenths(&[(1, 2), (0, 5)]), 250);
        // 0.5/3 * 100 = 16.666...
        assert_eq!(mean_rate_tenths(&[(1, 2), (0, 1), (0, 1)]), 167);
        assert_eq!(mean_rate_tenths(&[]), 0);
        // 470/700 = 67.142...
        assert_eq!(mean_rate_tenths(&[(76, 100), (73, 100), (71, 100), (69, 100), (64, 100), (59, 100), (58, 100)]), 671);
    }

    #[test]
    fn empty_corpus_is_an_error() {
        assert!(build_leaderboard(&[]).is_err());
    }
}
