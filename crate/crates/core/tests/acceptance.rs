//! The acceptance criteria, each under its time limit. Prints one line per
//! criterion and fails if any of them fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use dcs_core::experiments::{
    ambiguity_table, crdt_separation, default_policies, performance, proposition_one_check, routing_matrix,
    routing_run, theorem_one_sweep, theorem_three_completeness, theorem_two_matrix,
};
use dcs_core::laws::{run_law, LawCase, LawId};
use dcs_core::network::{run, NetworkConfig};
use dcs_core::policy::routing::{QConfig, RoutingTopology};
use dcs_core::report::ExperimentReport;
use dcs_core::scenario::Scenario;
use dcs_core::semilattice::SpaceTag;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn from_reports(reports: &[ExperimentReport]) -> Outcome {
    let failures: Vec<String> =
        reports.iter().flat_map(|r| r.failures()).map(|c| format!("{}: {}", c.claim, c.measured)).collect();
    let measured: Vec<String> = reports.iter().flat_map(|r| &r.claims).map(|c| c.measured.clone()).collect();
    if failures.is_empty() {
        Outcome { pass: true, detail: measured.join("; ") }
    } else {
        Outcome { pass: false, detail: failures.join("; ") }
    }
}

fn laws(cases: &[LawCase], seed: u64) -> Outcome {
    let outcomes: Vec<_> = cases.iter().map(|c| run_law(c, seed)).collect();
    let bad: Vec<String> = outcomes.iter().filter(|o| !o.ok()).map(|o| o.to_string()).collect();
    let names: Vec<String> = outcomes.iter().map(|o| format!("{}x{}", o.case.name(), o.case.trials)).collect();
    if bad.is_empty() {
        Outcome { pass: true, detail: names.join(" ") }
    } else {
        Outcome { pass: false, detail: bad.join("; ") }
    }
}

fn ac1() -> Outcome {
    laws(&SpaceTag::LAWFUL.map(|s| LawCase::aci(s, 1000)), 0xac1)
}

fn ac2() -> Outcome {
    let seeds: Vec<u64> = (0..100).collect();
    let random = theorem_one_sweep(&Scenario::random(0xac2, 5, 20), &seeds).unwrap();
    let fig = theorem_one_sweep(&Scenario::concurrent(), &seeds[..50]).unwrap();
    let crash = theorem_one_sweep(&Scenario::random(0xac2, 5, 20).with_idle_crash(0), &seeds[..20]).unwrap();
    from_reports(&[random, fig, crash])
}

fn ac3() -> Outcome {
    let seeds: Vec<u64> = (1000..1050).collect();
    let scripted = theorem_two_matrix(&default_policies(0xac3), &Scenario::random(0xac3, 5, 20), &seeds).unwrap();
    let routing = routing_matrix(&routing_run(&RoutingTopology::experiment_default(), QConfig::default(), 500, 0xac3));
    from_reports(&[scripted, routing])
}

fn ac4() -> Outcome {
    from_reports(&[ambiguity_table(100, 0xac4).unwrap()])
}

fn ac5() -> Outcome {
    let report = theorem_three_completeness(100, 0xac5).unwrap();
    let fixtures = laws(&[LawId::T3i, LawId::T3ii, LawId::T3iii, LawId::T3iv, LawId::T3v].map(|id| LawCase::new(id, 50)), 0xac5);
    let r = from_reports(&[report]);
    Outcome { pass: r.pass && fixtures.pass, detail: format!("{}; fixtures: {}", r.detail, fixtures.detail) }
}

fn ac6() -> Outcome {
    let a = crdt_separation().unwrap();
    let b = crdt_separation().unwrap();
    let r = from_reports(std::slice::from_ref(&a.report));
    let same = a.witness == b.witness;
    Outcome { pass: r.pass && same, detail: format!("{}{}", r.detail, if same { "" } else { "; witness not deterministic" }) }
}

fn ac7() -> Outcome {
    from_reports(&[proposition_one_check(200, 8, 0xac7)])
}

fn ac8() -> Outcome {
    laws(&[LawId::L1, LawId::L2, LawId::L3, LawId::L4, LawId::L5].map(|id| LawCase::new(id, 500)), 0xac8)
}

fn ac9() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xac9);
    let mut bad = Vec::new();
    for i in 0..10 {
        let scenario = Scenario::random(rng.gen(), rng.gen_range(2..7), rng.gen_range(1..25));
        let cfg = NetworkConfig {
            drop: rng.gen_range(0.0..0.5),
            duplicate: rng.gen_range(0.0..0.4),
            max_reorder_delay: rng.gen_range(0..8),
            fairness_bound: 12,
            seed: rng.gen(),
            ..NetworkConfig::default()
        };
        let a = run(&scenario, &cfg).unwrap().digest();
        let b = run(&scenario, &cfg).unwrap().digest();
        if a != b {
            bad.push(format!("manifest {i}: {a} vs {b}"));
        }
    }
    Outcome { pass: bad.is_empty(), detail: if bad.is_empty() { "10/10 identical digests".into() } else { bad.join("; ") } }
}

fn ac10() -> Outcome {
    let run = routing_run(&RoutingTopology::experiment_default(), QConfig::default(), 500, 0xac10);
    let report = performance(&run);
    let mut out = from_reports(std::slice::from_ref(&report));
    if out.pass {
        out.detail = format!("{}\n{}", out.detail, report.tables.iter().map(|t| t.to_aligned()).collect::<String>());
    }
    out
}

#[test]
fn acceptance_criteria() {
    let criteria: [(&str, &str, u64, fn() -> Outcome); 10] = [
        ("AC-1", "semilattice laws", 5, ac1),
        ("AC-2", "convergence", 30, ac2),
        ("AC-3", "policy agnosticism", 120, ac3),
        ("AC-4", "ambiguity table", 30, ac4),
        ("AC-5", "axiom removal completeness", 60, ac5),
        ("AC-6", "separation", 10, ac6),
        ("AC-7", "equivalence iff isomorphism", 30, ac7),
        ("AC-8", "lemmas", 120, ac8),
        ("AC-9", "replay determinism", 30, ac9),
        ("AC-10", "routing distinctiveness", 120, ac10),
    ];
    let mut failed = Vec::new();
    for (id, name, limit, f) in criteria {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(f));
        let elapsed = start.elapsed();
        let (pass, detail) = match result {
            Ok(o) => (o.pass, o.detail),
            Err(e) => (false, format!("panicked: {}", e.downcast_ref::<String>().cloned().unwrap_or_default())),
        };
        let in_time = elapsed <= Duration::from_secs(limit);
        let ok = pass && in_time;
        println!(
            "{} {id} {name} ({:.2}s, limit {limit}s){}: {detail}",
            if ok { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            if in_time { "" } else { " OVER TIME" }
        );
        if !ok {
            failed.push(id);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
