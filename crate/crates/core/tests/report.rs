// SPDX-License-Identifier: Apache-2.0

use cobalt_core::fixtures::{leaderboard_results, overlap_fixture, synthetic_finding, synthetic_result, Synthetic};
use cobalt_core::model::{Category, Grade, Language};
use cobalt_core::report::{build_leaderboard, compare_tools, leaderboard_markdown, overlap_markdown, ToolFinding};
use proptest::prelude::*;

#[test]
fn leaderboard_rows_grades_and_means() {
    let report = build_leaderboard(&leaderboard_results()).unwrap();
    let rows: Vec<(&str, f64, Grade, u64, u64, u64)> = report
        .rows
        .iter()
        .map(|r| (r.model_id.as_str(), r.rate, r.grade, r.crit_count, r.high_count, r.solver_sat_count))
        .collect();
    assert_eq!(
        rows,
        vec![
            ("gpt-4o", 62.4, Grade::F, 166, 106, 167),
            ("llama-4-scout", 60.6, Grade::F, 167, 95, 156),
            ("llama-3.3-70b", 58.4, Grade::D, 168, 83, 147),
            ("mistral-large", 57.8, Grade::D, 155, 94, 155),
            ("gpt-4.1", 54.0, Grade::D, 142, 86, 136),
            ("claude-haiku-4.5", 49.2, Grade::D, 155, 81, 152),
            ("gemini-2.5-flash", 48.4, Grade::D, 146, 86, 142),
        ]
    );
    assert_eq!(report.mean_rate, 55.8);
    assert_eq!((report.mean_crit, report.mean_high, report.mean_solver_sat), (157.0, 90.1, 150.7));
    let cats: Vec<(Category, i64)> = report.category_rates.iter().map(|(c, r)| (*c, r.round() as i64)).collect();
    assert_eq!(
        cats,
        vec![(Category::Mem, 67), (Category::Int, 87), (Category::Auth, 44), (Category::Crypto, 25), (Category::Inp, 56)]
    );
    let md = leaderboard_markdown(&report);
    assert!(md.contains("| Mean | 55.8% | 157.0 | 90.1 | 150.7 | --- |"), "{md}");
    assert!(md.contains("| gpt-4o | 62.4% | 166 | 106 | 167 | F |"));
}

#[test]
fn single_clean_model() {
    let results: Vec<_> = (0..10)
        .map(|i| synthetic_result(format!("m/{i}"), "m", Category::Int, Language::C, vec![]))
        .collect();
    let report = build_leaderboard(&results).unwrap();
    assert_eq!(report.rows.len(), 1);
    assert_eq!((report.rows[0].rate, report.rows[0].grade, report.mean_rate), (0.0, Grade::A, 0.0));
}

#[test]
fn degenerate_categories() {
    let mut results = Vec::new();
    for i in 0..4 {
        let id = format!("m/int-{i}");
        results.push(synthetic_result(id.clone(), "m", Category::Int, Language::C, vec![synthetic_finding(&id, Synthetic::SatWrap)]));
        results.push(synthetic_result(format!("m/crypto-{i}"), "m", Category::Crypto, Language::Python, vec![]));
    }
    let report = build_leaderboard(&results).unwrap();
    assert_eq!(report.category_rates.get(&Category::Int), Some(&100.0));
    assert_eq!(report.category_rates.get(&Category::Crypto), Some(&0.0));
    let mut dup = results.clone();
    dup.push(results[0].clone());
    assert!(build_leaderboard(&dup).is_err());
}

#[test]
fn overlap_fixture_numbers() {
    let (results, tools) = overlap_fixture();
    let o = compare_tools(&results, &tools).unwrap();
    assert_eq!(o.artifacts, 250);
    assert_eq!((o.flagged.count, o.flagged.percentage), (162, 64.8));
    assert_eq!((o.sat_bearing.count, o.sat_bearing.percentage), (90, 36.0));
    assert_eq!((o.combined.count, o.combined_rate), (19, 7.6));
    assert_eq!((o.sat_missed.count, o.sat_missed.total, o.sat_missed.percentage), (88, 90, 97.8));
    assert_eq!((o.cobalt_only_count, o.cobalt_only.percentage), (151, 93.2));
    assert_eq!((o.cobalt_only_c.count, o.cobalt_only_c.total), (78, 80));
    assert_eq!((o.cobalt_only_python.count, o.cobalt_only_python.total), (73, 82));
    let rows: Vec<(&str, u64, f64, u64, u64)> = o
        .tools
        .iter()
        .map(|t| (t.tool_id.as_str(), t.caught.count, t.caught.percentage, t.c.count, t.python.count))
        .collect();
    assert_eq!(rows, vec![("bandit", 5, 2.0, 0, 5), ("semgrep", 16, 6.4, 2, 14)]);
    let md = overlap_markdown(&o);
    assert!(md.contains("| SAT-only | 88/90 (97.8%) | |"), "{md}");
    assert!(md.contains("| Combined | 19/250 (7.6%) | |"));
}

#[test]
fn overlap_edge_cases() {
    let (results, _) = overlap_fixture();
    let none = compare_tools(&results, &[]).unwrap();
    assert_eq!(none.combined_rate, 0.0);
    assert_eq!((none.sat_missed.count, none.sat_missed.total), (90, 90));

    let all: Vec<ToolFinding> = results
        .iter()
        .map(|r| ToolFinding { tool_id: "t".into(), artifact_id: r.artifact_id.clone(), rule_id: "r".into(), line: None })
        .collect();
    let every = compare_tools(&results, &all).unwrap();
    assert_eq!(every.sat_missed.count, 0);
    assert_eq!(every.combined_rate, 100.0);

    let stray = ToolFinding { tool_id: "t".into(), artifact_id: "nope".into(), rule_id: "r".into(), line: None };
    assert!(compare_tools(&results, &[stray]).unwrap_err().to_string().contains("nope"));
}

proptest! {
    #[test]
    fn union_dominates_and_is_monotone(picks in proptest::collection::vec((0usize..3, 0usize..250), 0..60)) {
        let (results, _) = overlap_fixture();
        let tools: Vec<ToolFinding> = picks
            .iter()
            .map(|&(t, a)| ToolFinding {
                tool_id: format!("tool{t}"),
                artifact_id: results[a].artifact_id.clone(),
                rule_id: "r".into(),
                line: None,
            })
            .collect();
        let o = compare_tools(&results, &tools).unwrap();
        for t in &o.tools {
            prop_assert!(o.combined.count >= t.caught.count);
        }
        let fewer: Vec<ToolFinding> = tools.iter().filter(|t| t.tool_id != "tool0").cloned().collect();
        let o2 = compare_tools(&results, &fewer).unwrap();
        prop_assert!(o2.combined.count <= o.combined.count);
        prop_assert!(o2.sat_missed.count >= o.sat_missed.count);
        let expect = cobalt_core::model::percent_tenths(o.sat_missed.count, o.sat_missed.total) as f64 / 10.0;
        prop_assert_eq!(o.sat_missed.percentage, expect);
    }

    #[test]
    fn rates_and_grades_consistent(v in 0u64..=500) {
        let results: Vec<_> = (0..500u64)
            .map(|i| {
                let id = format!("m/{i}");
                let f = if i < v { vec![synthetic_finding(&id, Synthetic::Sql)] } else { vec![] };
                synthetic_result(id, "m", Category::Inp, Language::Python, f)
            })
            .collect();
        let r = build_leaderboard(&results).unwrap();
        prop_assert_eq!(r.rows[0].rate, (v as f64) / 5.0);
        prop_assert_eq!(r.rows[0].grade, cobalt_core::model::grade_from_rate(r.rows[0].rate).unwrap());
    }
}
