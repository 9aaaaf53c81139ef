//! Experiment reports: claim rows keyed by acceptance criterion, plus
//! tables rendered as aligned text or tab-separated rows.

use std::fmt::Write;

/// One checked claim.
#[derive(Debug, Clone, PartialEq)]
pub struct ClaimRow {
    /// Acceptance criterion id, e.g. `AC-2`.
    pub criterion: String,
    pub claim: String,
    pub measured: String,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub title: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(title: &str, header: &[&str]) -> Self {
        Table { title: title.into(), header: header.iter().map(|h| h.to_string()).collect(), rows: vec![] }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_aligned(&self) -> String {
        let mut widths: Vec<usize> = self.header.iter().map(|h| h.chars().count()).collect();
        for row in &self.rows {
            for (w, cell) in widths.iter_mut().zip(row) {
                *w = (*w).max(cell.chars().count());
            }
        }
        let line = |cells: &[String]| {
            let padded: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
            padded.join("  ").trim_end().to_string()
        };
        let mut out = format!("{}\n{}\n", self.title, line(&self.header));
        let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
        out.push_str(&rule.join("  "));
        out.push('\n');
        for row in &self.rows {
            out.push_str(&line(row));
            out.push('\n');
        }
        out
    }

    /// Tab-separated, with a comment line carrying the manifest digest.
    pub fn to_tsv(&self, manifest_digest: &str) -> String {
        let mut out = format!("# {} manifest={manifest_digest}\n", self.title);
        out.push_str(&self.header.join("\t"));
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join("\t"));
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExperimentReport {
    pub name: String,
    pub scenario: String,
    pub seeds: Vec<u64>,
    pub claims: Vec<ClaimRow>,
    pub tables: Vec<Table>,
}

impl ExperimentReport {
    pub fn new(name: &str, scenario: &str) -> Self {
        ExperimentReport { name: name.into(), scenario: scenario.into(), ..Default::default() }
    }

    pub fn claim(&mut self, criterion: &str, claim: impl Into<String>, measured: impl Into<String>, pass: bool) {
        self.claims.push(ClaimRow { criterion: criterion.into(), claim: claim.into(), measured: measured.into(), pass });
    }

    pub fn passed(&self) -> bool {
        self.claims.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> Vec<&ClaimRow> {
        self.claims.iter().filter(|c| !c.pass).collect()
    }

    pub fn claims_table(&self) -> Table {
        let mut t = Table::new(&format!("{} claims", self.name), &["criterion", "claim", "measured", "result"]);
        for c in &self.claims {
            t.push(vec![
                c.criterion.clone(),
                c.claim.clone(),
                c.measured.clone(),
                if c.pass { "PASS" } else { "FAIL" }.into(),
            ]);
        }
        t
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "experiment: {}  scenario: {}  seeds: {}", self.name, self.scenario, self.seeds.len()).unwrap();
        for t in &self.tables {
            out.push('\n');
            out.push_str(&t.to_aligned());
        }
        out.push('\n');
        out.push_str(&self.claims_table().to_aligned());
        out
    }

    pub fn to_tsv(&self, manifest_digest: &str) -> String {
        let mut out = String::new();
        for t in self.tables.iter().chain(std::iter::once(&self.claims_table())) {
            out.push_str(&t.to_tsv(manifest_digest));
        }
        out
    }
}
