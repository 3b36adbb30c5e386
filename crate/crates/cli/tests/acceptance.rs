//! Acceptance gate: one PASS/FAIL line per criterion, then a single verdict.

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use rbdsde_cli::config::{Mode, RunConfig};
use rbdsde_cli::output::REPORT_FILE;
use rbdsde_cli::run::{run_experiment, Overrides};
use rbdsde_cli::suite::{run_section, Section, DEFAULT_SEED, PICARD_BUDGET};
use rbdsde_core::CheckReport;

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: String) -> Verdict {
    Verdict { passed, detail }
}

fn timed(section: Section) -> (Vec<CheckReport>, Duration) {
    let start = Instant::now();
    let reports = run_section(section, DEFAULT_SEED).expect("section runs");
    (reports, start.elapsed())
}

fn named<'a>(reports: &'a [CheckReport], name: &str) -> Vec<&'a CheckReport> {
    reports.iter().filter(|r| r.name == name).collect()
}

fn all_pass(reports: &[&CheckReport]) -> bool {
    !reports.is_empty() && reports.iter().all(|r| r.passed)
}

fn cases(reports: &[&CheckReport]) -> usize {
    reports.iter().filter_map(|r| r.params.get("case")).map(|c| *c as usize).collect::<BTreeSet<_>>().len()
}

fn worst(reports: &[&CheckReport]) -> f64 {
    reports.iter().map(|r| r.max_violation).fold(0.0, f64::max)
}

fn metric(reports: &[&CheckReport], key: &str) -> f64 {
    reports.iter().filter_map(|r| r.metrics.get(key)).copied().fold(f64::NEG_INFINITY, f64::max)
}

fn snell(reports: &[CheckReport], elapsed: Duration) -> Verdict {
    let oracle = named(reports, "snell_oracle");
    let n = cases(&oracle);
    let ok = all_pass(&oracle)
        && n >= 20
        && oracle.iter().all(|r| r.tolerance <= 1e-12 && r.params["n_steps"] <= 3.0)
        && elapsed < Duration::from_secs(10);
    verdict(ok, format!("{n} instances, worst gap {:e}, {:.2?}", worst(&oracle), elapsed))
}

fn picard(reports: &[CheckReport]) -> Verdict {
    let contraction = named(reports, "picard_contraction");
    let iterations = named(reports, "picard_iterations");
    let exact = named(reports, "picard_exact_fixed_point");
    let max_ratio = metric(&contraction, "max_ratio");
    let max_iter = metric(&iterations, "iterations");
    let ok = all_pass(&contraction)
        && contraction.len() >= 10
        && contraction.iter().all(|r| (r.params["beta"] - 17.0 / 3.0).abs() < 1e-12)
        && max_ratio <= 0.80
        && all_pass(&iterations)
        && iterations.iter().all(|r| r.params["tolerance"] == 1e-10)
        && max_iter <= PICARD_BUDGET as f64
        && all_pass(&exact)
        && exact.iter().all(|r| r.max_violation == 0.0 && r.metrics["iterations"] == 2.0);
    verdict(
        ok,
        format!(
            "{} Lipschitz instances, max ratio {max_ratio:.4}, max iterations {max_iter}, {} exact fixed points",
            contraction.len(),
            exact.len()
        ),
    )
}

fn comparison(reports: &[CheckReport]) -> Verdict {
    let cmp = named(reports, "comparison");
    let refused = cmp.iter().filter(|r| r.metrics.get("refused") != Some(&0.0)).count();
    let ok = all_pass(&cmp) && cmp.len() >= 50 && refused == 0 && cmp.iter().all(|r| r.tolerance <= 1e-10);
    verdict(ok, format!("{} ordered pairs, worst violation {:e}, {refused} refusals", cmp.len(), worst(&cmp)))
}

fn right_continuous(dedicated: &[CheckReport], suite: &[CheckReport]) -> Verdict {
    let zero = named(dedicated, "c_identically_zero");
    let reference = named(dedicated, "c_free_reference");
    let everywhere_zero = named(suite, "c_identically_zero");
    let everywhere_ref = named(suite, "c_free_reference");
    let ok = all_pass(&zero) && all_pass(&reference) && all_pass(&everywhere_zero) && all_pass(&everywhere_ref);
    verdict(
        ok,
        format!(
            "{} dedicated fixtures, {} right-continuous solves suite-wide, max |C| {:e}, mismatched nodes {}",
            cases(&zero),
            everywhere_ref.len(),
            worst(&everywhere_zero),
            metric(&everywhere_ref, "mismatched_nodes")
        ),
    )
}

fn residual(suite: &[CheckReport]) -> Verdict {
    let systems = named(suite, "solution_system");
    let worst_of = |key: &str| systems.iter().filter_map(|r| r.metrics.get(key)).copied().fold(0.0, f64::max);
    let ok = all_pass(&systems)
        && worst_of("one_step_residual") <= 1e-12
        && worst_of("martingale_increments") <= 1e-13
        && worst_of("skorokhod_kc") == 0.0
        && worst_of("minimality_kd") == 0.0
        && worst_of("minimality_c") == 0.0
        && worst_of("barrier_domination") == 0.0
        && worst_of("terminal_condition") <= 1e-12;
    verdict(
        ok,
        format!(
            "{} solver outputs, residual {:e}, martingale {:e}, Skorokhod {:e}",
            systems.len(),
            worst_of("one_step_residual"),
            worst_of("martingale_increments"),
            worst_of("skorokhod_kc")
        ),
    )
}

fn apriori(reports: &[CheckReport]) -> Verdict {
    let estimate = named(reports, "apriori_estimate");
    let trend = named(reports, "apriori_refinement_trend");
    let at_eight =
        estimate.iter().all(|r| r.params["n_steps"] == 8.0 && r.tolerance <= 0.05 && r.params["beta"] == 2.0);
    let ok = all_pass(&estimate) && at_eight && all_pass(&trend);
    let excess = |n: usize| metric(&trend, &format!("excess_n{n}"));
    verdict(ok, format!("excess at N = 4, 8, 16: {:.4}, {:.4}, {:.4}", excess(4), excess(8), excess(16)))
}

fn minimal(reports: &[CheckReport]) -> Verdict {
    let names = [
        "minimal_monotone",
        "minimal_envelope_bound",
        "minimal_freeze",
        "regularization_monotone",
        "regularization_below_envelope",
        "regularization_lipschitz",
    ];
    let groups: Vec<Vec<&CheckReport>> = names.iter().map(|n| named(reports, n)).collect();
    let probes_ok = groups[3..].iter().flatten().all(|r| r.params["pairs"] >= 1000.0);
    let ok = groups.iter().all(|g| all_pass(g)) && probes_ok && groups[2].iter().all(|r| r.max_violation == 0.0);
    verdict(
        ok,
        format!(
            "decrease {:e}, above envelope {:e}, freeze drift {:e}, probe worst {:e}",
            worst(&groups[0]),
            worst(&groups[1]),
            worst(&groups[2]),
            groups[3..].iter().map(|g| worst(g)).fold(0.0, f64::max)
        ),
    )
}

fn american(reports: &[CheckReport], elapsed: Duration) -> Verdict {
    let reference = named(reports, "american_reference");
    let oracle = named(reports, "american_oracle");
    let refinement = named(reports, "american_refinement");
    let zero = named(reports, "american_zero_strike");
    let strikes: BTreeSet<u64> = reference.iter().map(|r| r.params["strike"] as u64).collect();
    let ok = all_pass(&reference)
        && strikes == BTreeSet::from([5, 6])
        && all_pass(&oracle)
        && all_pass(&zero)
        && all_pass(&refinement)
        && elapsed < Duration::from_secs(5);
    verdict(
        ok,
        format!(
            "prices {:?}, oracle gap {:e}, refinement change {:.4}%, {:.2?}",
            reference.iter().map(|r| r.metrics["price"]).collect::<Vec<_>>(),
            worst(&oracle),
            100.0 * worst(&refinement),
            elapsed
        ),
    )
}

fn determinism() -> Verdict {
    let config = RunConfig::from_json(r#"{"mode": "verify_suite"}"#).unwrap();
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let mut bytes = Vec::new();
    let mut exit = Vec::new();
    for d in &dirs {
        let overrides =
            Overrides { mode: Some(Mode::VerifySuite), out: Some(d.path().to_path_buf()), ..Default::default() };
        let outcome = run_experiment(config.clone(), &overrides).expect("suite runs");
        exit.push(outcome.exit_code());
        bytes.push(std::fs::read(d.path().join(REPORT_FILE)).unwrap());
    }
    let ok = bytes[0] == bytes[1] && exit == [0, 0];
    verdict(ok, format!("{} report bytes per run, exit codes {exit:?}", bytes[0].len()))
}

#[test]
fn acceptance_criteria() {
    let (snell_reports, snell_time) = timed(Section::Snell);
    let (picard_reports, _) = timed(Section::Picard);
    let (comparison_reports, _) = timed(Section::Comparison);
    let (rc_reports, _) = timed(Section::RightContinuous);
    let (apriori_reports, _) = timed(Section::Apriori);
    let (minimal_reports, _) = timed(Section::Minimal);
    let (american_reports, american_time) = timed(Section::American);
    let suite: Vec<CheckReport> = [
        &snell_reports,
        &picard_reports,
        &comparison_reports,
        &rc_reports,
        &apriori_reports,
        &minimal_reports,
        &american_reports,
    ]
    .into_iter()
    .flatten()
    .cloned()
    .collect();

    let verdicts = [
        ("1 Snell-oracle equivalence", snell(&snell_reports, snell_time)),
        ("2 Picard contraction", picard(&picard_reports)),
        ("3 Comparison", comparison(&comparison_reports)),
        ("4 Right-continuous degeneracy", right_continuous(&rc_reports, &suite)),
        ("5 Solution-system residual", residual(&suite)),
        ("6 A priori estimate", apriori(&apriori_reports)),
        ("7 Minimal-solution monotonicity", minimal(&minimal_reports)),
        ("8 American claim", american(&american_reports, american_time)),
        ("9 Determinism", determinism()),
    ];
    for (name, v) in &verdicts {
        println!("{} criterion {name}: {}", if v.passed { "PASS" } else { "FAIL" }, v.detail);
    }
    let failed: Vec<&str> = verdicts.iter().filter(|(_, v)| !v.passed).map(|(n, _)| *n).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
