use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use dcs_core::network::NetworkConfig;
use dcs_core::policy::routing::QConfig;
use dcs_core::policy::OperationalPolicy;
use dcs_core::scenario::{Scenario, ScenarioError};
use dcs_core::violations::ViolationMode;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const BUILD: &str = concat!(env!("CARGO_PKG_NAME"), "-", env!("CARGO_PKG_VERSION"));

/// `--config` file: partial network settings, a policy and routing knobs.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Overrides {
    #[serde(default)]
    pub network: Option<toml::Table>,
    #[serde(default)]
    pub policy: Option<OperationalPolicy>,
    #[serde(default)]
    pub routing: Option<QConfig>,
}

impl Overrides {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn apply(&self, scenario: &mut Scenario) -> Result<()> {
        if let Some(patch) = &self.network {
            let mut base = toml::Table::try_from(&scenario.network)?;
            for (k, v) in patch {
                base.insert(k.clone(), v.clone());
            }
            scenario.network = NetworkConfig::deserialize(toml::Value::Table(base)).context("network overrides")?;
        }
        if let Some(p) = self.policy {
            scenario.policy = p;
        }
        Ok(())
    }
}

/// Built-in scenarios, by name.
pub fn builtin(name: &str) -> Option<Scenario> {
    match name {
        "concurrent" => Some(Scenario::concurrent()),
        "causal" => Some(Scenario::causal()),
        "random" => Some(Scenario::random(0, 5, 20)),
        _ => name.parse::<ViolationMode>().ok().map(ViolationMode::canonical_scenario),
    }
}

/// A path, or a built-in name when no such file exists.
pub fn resolve_scenario(spec: &str) -> Result<Scenario, ScenarioError> {
    let path = Path::new(spec);
    if path.exists() {
        return Scenario::load(path);
    }
    builtin(spec).ok_or_else(|| ScenarioError::NotFound(spec.to_string()))
}

/// Everything needed to reproduce one command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// What `--scenario` named.
    pub scenario_ref: String,
    pub seed: u64,
    pub seeds: Option<u64>,
    pub mode: Option<ViolationMode>,
    pub config: Option<String>,
    pub out: Option<PathBuf>,
    pub build: String,
    pub routing: QConfig,
    /// The resolved scenario, overrides applied.
    pub scenario: Scenario,
}

impl RunManifest {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest serializes")
    }

    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let path = if path.is_dir() { path.join("manifest.toml") } else { path.to_path_buf() };
        let text = fs::read_to_string(&path).with_context(|| format!("reading manifest {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing manifest {}", path.display()))
    }

    /// Writes `manifest.toml` into `dir` via a temporary file and a rename.
    pub fn write_atomic(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let tmp = dir.join(".manifest.toml.tmp");
        let mut f = fs::File::create(&tmp)?;
        f.write_all(self.to_toml().as_bytes())?;
        f.sync_all()?;
        fs::rename(&tmp, dir.join("manifest.toml"))?;
        Ok(())
    }
}

/// Writes each artifact under `dir`.
pub fn write_tree(dir: &Path, files: &std::collections::BTreeMap<String, String>) -> Result<()> {
    for (name, body) in files {
        let path = dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

/// Reads back the artifact files named in `names`.
pub fn read_tree<'a>(
    dir: &Path,
    names: impl IntoIterator<Item = &'a String>,
) -> Result<std::collections::BTreeMap<String, String>> {
    let mut out = std::collections::BTreeMap::new();
    for name in names {
        let path = dir.join(name);
        if !path.exists() {
            bail!("missing artifact {}", path.display());
        }
        out.insert(name.clone(), fs::read_to_string(&path)?);
    }
    Ok(out)
}
