mod audit;
mod manifest;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use dcs_core::experiments::{
    ambiguity_table, crdt_separation, default_policies, performance, proposition_one_check, routing_matrix,
    routing_run,
};
use dcs_core::network::Simulation;
use dcs_core::policy::routing::{QConfig, RoutingTopology};
use dcs_core::record::{tree_digest, ExecutionRecord};
use dcs_core::report::ExperimentReport;
use dcs_core::violations::ViolationMode;

use manifest::{read_tree, resolve_scenario, write_tree, Overrides, RunManifest, BUILD};

#[derive(Parser)]
#[command(name = "dcs", version, about = "Deterministic causal structure: simulate, audit and report")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// Scenario file, or a built-in name (concurrent, causal, random, or a violation mode).
    #[arg(long)]
    scenario: Option<String>,
    /// Base seed. Defaults to 0 and is always printed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of seeds, trials or pairs, depending on the command.
    #[arg(long)]
    seeds: Option<u64>,
    /// TOML overrides: `[network]` fields, `policy`, `[routing]`.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory. The manifest is written there first.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Violation mode to inject.
    #[arg(long)]
    mode: Option<ViolationMode>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its artifacts.
    Simulate(Common),
    /// Audit one contribution log, or compare two.
    Verify { log: PathBuf, other: Option<PathBuf> },
    /// Ambiguity rate per axiom removal.
    Ambiguity(Common),
    /// Isomorphism across ordering and routing policies.
    PolicyMatrix {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 500)]
        tasks: usize,
    },
    /// Routing hop counts, spread and success per policy.
    Performance {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 500)]
        tasks: usize,
    },
    /// Equal values with different histories.
    Separation(Common),
    /// Observational equivalence against isomorphism on random pairs.
    Prop1Check(Common),
    /// Rerun a manifest and compare against the artifacts next to it.
    Replay {
        /// A manifest file or the directory holding `manifest.toml`.
        manifest: PathBuf,
        /// Also write the rerun's artifacts here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(command: Command) -> Result<bool> {
    match command {
        Command::Simulate(c) => simulate(&c),
        Command::Verify { log, other } => {
            let (ok, lines) = audit::verify(&log, other.as_deref())?;
            for l in lines {
                println!("{l}");
            }
            Ok(ok)
        }
        Command::Ambiguity(c) => report_cmd("ambiguity", &c, |m| Ok(vec![ambiguity_table(trials(m, 100), m.seed)?])),
        Command::PolicyMatrix { common, tasks } => report_cmd("policy-matrix", &common, |m| {
            let runs: Vec<u64> = (0..m.seeds.unwrap_or(50)).map(|i| m.seed.wrapping_add(i)).collect();
            let scripted = dcs_core::experiments::theorem_two_matrix(&default_policies(m.seed), &m.scenario, &runs)?;
            let routing = routing_matrix(&routing_run(&RoutingTopology::experiment_default(), qconfig(m)?, tasks, m.seed));
            Ok(vec![scripted, routing])
        }),
        Command::Performance { common, tasks } => report_cmd("performance", &common, |m| {
            let run = routing_run(&RoutingTopology::experiment_default(), qconfig(m)?, tasks, m.seed);
            if let Some(out) = &m.out {
                for r in &run.routers {
                    let path = out.join(format!("qtable-{}.txt", r.mode().as_str()));
                    fs::write(&path, r.table().to_text()).with_context(|| format!("writing {}", path.display()))?;
                }
            }
            Ok(vec![performance(&run)])
        }),
        Command::Separation(c) => report_cmd("separation", &c, |_| {
            let s = crdt_separation()?;
            println!(
                "verdict: values {}, structures {}",
                if s.values_equal { "equal" } else { "differ" },
                if s.isomorphic { "isomorphic" } else { "non-isomorphic" }
            );
            Ok(vec![s.report])
        }),
        Command::Prop1Check(c) => {
            report_cmd("prop1-check", &c, |m| Ok(vec![proposition_one_check(trials(m, 200), 8, m.seed)]))
        }
        Command::Replay { manifest, out } => replay(&manifest, out.as_deref()),
    }
}

fn trials(m: &RunManifest, default: u64) -> usize {
    m.seeds.unwrap_or(default) as usize
}

fn qconfig(m: &RunManifest) -> Result<QConfig> {
    Ok(m.routing)
}

/// Resolves the scenario, applies overrides and the seed, and writes the
/// manifest before anything else.
fn prepare(command: &str, c: &Common, default_scenario: &str) -> Result<RunManifest> {
    let scenario_ref = c
        .scenario
        .clone()
        .or_else(|| c.mode.map(|m| m.as_str().to_string()))
        .unwrap_or_else(|| default_scenario.to_string());
    let mut scenario = resolve_scenario(&scenario_ref)?;
    let overrides = Overrides::load(c.config.as_deref())?;
    overrides.apply(&mut scenario)?;
    scenario.network.seed = c.seed;
    let m = RunManifest {
        command: command.into(),
        scenario_ref,
        seed: c.seed,
        seeds: c.seeds,
        mode: c.mode,
        config: c.config.as_ref().map(|p| p.display().to_string()),
        out: c.out.clone(),
        build: BUILD.into(),
        routing: overrides.routing.unwrap_or_default(),
        scenario,
    };
    if let Some(out) = &m.out {
        m.write_atomic(out)?;
    }
    println!("seed: {}", m.seed);
    Ok(m)
}

fn execute(m: &RunManifest) -> Result<ExecutionRecord> {
    let s = &m.scenario;
    let injector = m.mode.map(ViolationMode::injector);
    let mut sim = Simulation::new(s, &s.network).policy(s.policy);
    if let Some(inj) = &injector {
        sim = sim.injector(inj);
    }
    Ok(sim.run()?)
}

fn simulate(c: &Common) -> Result<bool> {
    let m = prepare("simulate", c, "concurrent")?;
    let rec = execute(&m)?;
    let files = rec.artifacts();
    let digest = tree_digest(&files);
    if let Some(out) = &m.out {
        write_tree(out, &files)?;
        fs::write(out.join("digest.txt"), format!("{digest}\n"))?;
    }
    println!("scenario: {}", m.scenario.name);
    println!("policy: {}", m.scenario.policy);
    println!("contributions: {}", rec.created.len());
    println!("outcome: {}", rec.outcome);
    println!("digest: {digest}");
    let failures = rec.convergence_failures();
    for f in &failures {
        println!("not converged: {f}");
    }
    // violation runs are expected to misbehave; only lawful runs must converge
    Ok(m.mode.is_some() || failures.is_empty())
}

fn replay(path: &Path, out: Option<&Path>) -> Result<bool> {
    let m = RunManifest::load(path)?;
    let dir = if path.is_dir() { path.to_path_buf() } else { path.parent().unwrap_or(Path::new(".")).to_path_buf() };
    let rec = execute(&m)?;
    let files = rec.artifacts();
    let digest = tree_digest(&files);
    if let Some(out) = out {
        let mut again = m.clone();
        again.out = Some(out.to_path_buf());
        again.write_atomic(out)?;
        write_tree(out, &files)?;
    }
    let on_disk = tree_digest(&read_tree(&dir, files.keys())?);
    println!("seed: {}", m.seed);
    if on_disk == digest {
        println!("REPLAY OK {digest}");
        Ok(true)
    } else {
        println!("REPLAY MISMATCH recorded {on_disk} rerun {digest}");
        Ok(false)
    }
}

fn report_cmd(name: &str, c: &Common, run: impl FnOnce(&RunManifest) -> Result<Vec<ExperimentReport>>) -> Result<bool> {
    let m = prepare(name, c, "random")?;
    let digest = m.digest();
    let reports = run(&m)?;
    let text: String = reports.iter().map(ExperimentReport::to_text).collect::<Vec<_>>().join("\n");
    let tsv: String = reports.iter().map(|r| r.to_tsv(&digest)).collect();
    println!("{text}");
    match &m.out {
        Some(out) => {
            fs::write(out.join(format!("{name}.txt")), &text)?;
            fs::write(out.join(format!("{name}.tsv")), &tsv)?;
        }
        None => print!("\n{tsv}"),
    }
    let failed: Vec<String> =
        reports.iter().flat_map(|r| r.failures()).map(|c| format!("{} {}", c.criterion, c.claim)).collect();
    for f in &failed {
        eprintln!("FAILED: {f}");
    }
    Ok(failed.is_empty())
}
