//! Acceptance suite: one pass/fail line per criterion.

use std::time::{Duration, Instant};

use dirac_bvp::verify::{run_criterion, run_suite, CriterionReport, CRITERIA, DEFAULT_SEED};

/// Wall-clock budgets per criterion, in seconds.
const BUDGETS: [(u32, u64); 9] = [(1, 5), (2, 10), (3, 20), (4, 60), (5, 30), (6, 5), (7, 120), (8, 30), (9, 5)];
const SUITE_BUDGET: Duration = Duration::from_secs(300);

fn line(report: &CriterionReport, elapsed: Duration, budget: Duration) -> bool {
    let in_time = elapsed <= budget;
    let ok = report.passed && in_time;
    println!(
        "criterion {:>2} {:<34} {}  ({:.2}s of {}s)",
        report.id,
        report.title,
        if ok { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64(),
        budget.as_secs()
    );
    for c in &report.checks {
        println!(
            "    {:<4} {:<58} worst {:.6e} {} {:.6e} over {} cases, {} failing",
            if c.passed { "ok" } else { "FAIL" },
            c.name,
            c.lhs,
            c.relation,
            c.rhs,
            c.cases,
            c.failures
        );
    }
    ok
}

#[test]
fn acceptance_criteria() {
    let mut all = true;
    for (id, _) in CRITERIA {
        let budget = Duration::from_secs(BUDGETS.iter().find(|b| b.0 == id).expect("budget").1);
        let start = Instant::now();
        let report = run_criterion(id, DEFAULT_SEED).expect("known criterion");
        all &= line(&report, start.elapsed(), budget);
    }

    let start = Instant::now();
    let first = serde_json::to_string_pretty(&run_suite(DEFAULT_SEED)).expect("serializable");
    let second = serde_json::to_string_pretty(&run_suite(DEFAULT_SEED)).expect("serializable");
    let per_run = start.elapsed() / 2;
    let identical = first == second;
    let ok = identical && per_run <= SUITE_BUDGET;
    println!(
        "criterion 10 {:<34} {}  ({:.2}s per run of {}s, reports identical: {identical})",
        "deterministic verify-all",
        if ok { "PASS" } else { "FAIL" },
        per_run.as_secs_f64(),
        SUITE_BUDGET.as_secs()
    );
    all &= ok;
    assert!(all, "some acceptance criteria failed");
}
