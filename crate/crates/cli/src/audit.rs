use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use dcs_core::contribution::{validate_contribution, Contribution, Rid};
use dcs_core::dag::{isomorphic, observationally_equivalent, ProvenanceDag};
use dcs_core::log::read_log;
use dcs_core::semilattice::StateSpaceRegistry;

pub fn load_log(path: &Path) -> Result<Vec<Contribution>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading log {}", path.display()))?;
    // overwrite-register records parse too, so violation-mode logs can be audited
    read_log(&text, &StateSpaceRegistry::with_violations()).with_context(|| format!("parsing log {}", path.display()))
}

/// Findings for one log, and the sealed history when there are none.
pub fn audit(records: &[Contribution]) -> (Vec<String>, Option<ProvenanceDag>) {
    let mut findings = Vec::new();
    let mut known: BTreeMap<Rid, Contribution> = BTreeMap::new();
    for c in records {
        findings.extend(validate_contribution(c, &known).findings.iter().map(ToString::to_string));
        if !c.payload().space().is_lawful() {
            findings.push(format!("NonSemilattice: {} uses {}", c.rid(), c.payload().space().as_str()));
        }
        known.entry(c.rid()).or_insert_with(|| c.clone());
    }
    let dag = match ProvenanceDag::from_contributions(records) {
        Ok(dag) => dag,
        Err(e) => {
            findings.insert(0, e.to_string());
            return (findings, None);
        }
    };
    for r in dag.dangling() {
        findings.push(format!("UnknownParent: {r} is named as a parent but not in the log"));
    }
    if findings.is_empty() {
        (findings, Some(dag))
    } else {
        (findings, None)
    }
}

/// Exit status and printed lines for `verify`.
pub fn verify(a: &Path, b: Option<&Path>) -> Result<(bool, Vec<String>)> {
    let mut lines = Vec::new();
    let (findings_a, dag_a) = audit(&load_log(a)?);
    let Some(b) = b else {
        return Ok(match dag_a {
            Some(dag) => (true, vec![format!("OK: sealed DAG, {} vertices, acyclic", dag.len())]),
            None => (false, findings_a),
        });
    };
    let (findings_b, dag_b) = audit(&load_log(b)?);
    let (Some(ga), Some(gb)) = (dag_a, dag_b) else {
        lines.extend(findings_a.into_iter().map(|f| format!("{}: {f}", a.display())));
        lines.extend(findings_b.into_iter().map(|f| format!("{}: {f}", b.display())));
        return Ok((false, lines));
    };
    let iso = isomorphic(&ga, &gb).is_some();
    let obs = observationally_equivalent(&ga, &gb)?;
    lines.push(if iso { "ISOMORPHIC".into() } else { "NOT ISOMORPHIC".into() });
    match &obs.witness {
        None => lines.push("observationally equivalent".into()),
        Some(w) => lines.push(format!("distinguished by {w}")),
    }
    Ok((iso && obs.equivalent(), lines))
}
