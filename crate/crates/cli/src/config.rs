//! Run configuration: a TOML document with one table per concern, overlaid
//! by `section.key=value` overrides from the command line.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use toml::Value;

use vibfano::model::PRESET_MASS;
use vibfano::spectra::{energy_grid, CrossValidationConfig, STATIC_AVERAGE_NODES};
use vibfano::tdse::WavepacketSpec;
use vibfano::{Monomer, ScatteringProblem};

/// Which monomer vibrates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mobile {
    None,
    Alpha,
    Beta,
    Eta,
}

impl Mobile {
    fn monomer(self) -> Option<Monomer> {
        match self {
            Mobile::None => None,
            Mobile::Alpha => Some(Monomer::Alpha),
            Mobile::Beta => Some(Monomer::Beta),
            Mobile::Eta => Some(Monomer::Eta),
        }
    }
}

/// Physical setup. Unset optional fields take the equilateral preset values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProblemSection {
    pub hopping: f64,
    pub n_sites: usize,
    pub mobile: Mobile,
    pub hbar_omega: f64,
    pub mass: f64,
    pub d: Option<f64>,
    pub radius: Option<f64>,
    pub theta0: f64,
    pub angles: Option<[f64; 3]>,
    pub mu_sq: Option<f64>,
    pub exponent: f64,
    pub j_in: usize,
    pub n_vib: Option<usize>,
}

impl Default for ProblemSection {
    fn default() -> Self {
        Self {
            hopping: 1.0,
            n_sites: 1000,
            mobile: Mobile::Alpha,
            hbar_omega: 0.01,
            mass: PRESET_MASS,
            d: None,
            radius: None,
            theta0: 0.0,
            angles: None,
            mu_sq: None,
            exponent: 3.0,
            j_in: 0,
            n_vib: None,
        }
    }
}

impl ProblemSection {
    pub fn to_problem(&self) -> Result<ScatteringProblem> {
        let mut p = ScatteringProblem::preset(self.mobile.monomer().map(|m| (m, self.hbar_omega)));
        if let Some(m) = self.mobile.monomer() {
            p.oscillators[m.index()].mass = self.mass;
        }
        p.hopping = self.hopping;
        p.n_sites = self.n_sites;
        if let Some(d) = self.d {
            p.geometry.d = d;
        }
        if let Some(r) = self.radius {
            p.geometry.radius = r;
        }
        if let Some(a) = self.angles {
            p.geometry.equilibrium_angles = a;
        }
        p.geometry.theta0 = self.theta0;
        if let Some(mu_sq) = self.mu_sq {
            p.mu_sq = mu_sq;
        }
        p.exponent = self.exponent;
        p.j_in = self.j_in;
        if let Some(n) = self.n_vib {
            p.n_vib = n;
        }
        p.validate()?;
        Ok(p)
    }
}

/// Energy grid in incoming band energy: either `energies` or a uniform
/// `points`-grid on `[min, max]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub min: f64,
    pub max: f64,
    pub points: usize,
    pub energies: Option<Vec<f64>>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            min: -1.9,
            max: 1.9,
            points: 400,
            energies: None,
        }
    }
}

impl SweepSection {
    pub fn grid(&self, problem: &ScatteringProblem) -> Result<Vec<f64>> {
        match &self.energies {
            Some(e) if e.is_empty() => bail!("sweep.energies is empty"),
            Some(e) => Ok(e.clone()),
            None => Ok(energy_grid(problem, self.min, self.max, self.points)?),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TdseSection {
    /// Central band energy of the packet.
    pub e_in: f64,
    pub n0: i64,
    pub sigma: f64,
    pub dt: f64,
    /// Propagation time; when unset a packet run stops once the scattering
    /// region is empty and an entropy run stops before the wall reflection.
    pub t_end: Option<f64>,
    /// Vibrational levels propagated; defaults to all of them.
    pub levels: Option<usize>,
    pub n_split: i64,
    /// Population the scattering region may hold at extraction.
    pub empty: f64,
}

impl Default for TdseSection {
    fn default() -> Self {
        Self {
            e_in: 1.0,
            n0: WavepacketSpec::DEFAULT_N0,
            sigma: WavepacketSpec::DEFAULT_SIGMA,
            dt: 0.01,
            t_end: None,
            levels: None,
            n_split: 10,
            empty: 1e-4,
        }
    }
}

impl TdseSection {
    pub fn spec(&self, problem: &ScatteringProblem) -> Result<WavepacketSpec> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            bail!(vibfano::Error::Validation(format!("tdse.dt must be positive, got {}", self.dt)));
        }
        Ok(WavepacketSpec::with_energy(self.n0, self.sigma, self.e_in, problem.hopping)?)
    }

    pub fn levels(&self, problem: &ScatteringProblem) -> usize {
        self.levels.unwrap_or(problem.vib_levels()).min(problem.vib_levels()).max(1)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CrossvalSection {
    pub energies: Vec<f64>,
    pub tolerance: f64,
    pub empty: f64,
    pub level_cutoff: f64,
    pub expected_hash: Option<String>,
}

impl Default for CrossvalSection {
    fn default() -> Self {
        let d = CrossValidationConfig::default();
        Self {
            energies: d.energies,
            tolerance: d.tolerance,
            empty: d.empty,
            level_cutoff: d.level_cutoff,
            expected_hash: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AverageSection {
    pub nodes: usize,
}

impl Default for AverageSection {
    fn default() -> Self {
        Self {
            nodes: STATIC_AVERAGE_NODES,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub directory: PathBuf,
    pub formats: Vec<Format>,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            directory: PathBuf::from("out"),
            formats: vec![Format::Csv, Format::Json],
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub problem: ProblemSection,
    pub sweep: SweepSection,
    pub tdse: TdseSection,
    pub crossval: CrossvalSection,
    pub average: AverageSection,
    pub output: OutputSection,
}

impl RunConfig {
    /// Effective configuration as TOML, every default filled in.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the effective configuration.
    pub fn hash(&self) -> String {
        Sha256::digest(self.to_toml().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn problem(&self) -> Result<ScatteringProblem> {
        self.problem.to_problem()
    }

    pub fn wants(&self, f: Format) -> bool {
        self.output.formats.contains(&f)
    }
}

/// Reads `path` (if any), applies `overrides` and validates the result.
pub fn parse_config(path: Option<&Path>, overrides: &[String]) -> Result<RunConfig> {
    let mut doc = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            text.parse::<toml::Table>()
                .map_err(|e| anyhow!(ConfigError(format!("{}: {e}", p.display()))))?
        }
        None => toml::Table::new(),
    };
    for o in overrides {
        apply_override(&mut doc, o)?;
    }
    let config: RunConfig = Value::Table(doc)
        .try_into()
        .map_err(|e: toml::de::Error| anyhow!(ConfigError(e.to_string())))?;
    let problem = config.problem()?;
    config.sweep.grid(&problem)?;
    Ok(config)
}

/// A malformed document or an unknown key.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "invalid configuration: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

/// Sets a dotted `section.key=value`; the value is read as TOML and falls
/// back to a plain string.
fn apply_override(doc: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| anyhow!(ConfigError(format!("override {assignment:?} is not key=value"))))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(anyhow!(ConfigError(format!("bad override key {key:?}"))));
    }
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()));
    let mut table = doc;
    for part in &path[..path.len() - 1] {
        let entry = table
            .entry(part.to_string())
            .or_insert_with(|| Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| anyhow!(ConfigError(format!("{part} in {key:?} is not a section"))))?;
    }
    table.insert(path[path.len() - 1].to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_the_preset() {
        let c = parse_config(None, &[]).unwrap();
        let p = c.problem().unwrap();
        assert_eq!(p, ScatteringProblem::mobile_alpha(0.01));
        assert_eq!(c.sweep.grid(&p).unwrap().len(), 400);
    }

    #[test]
    fn overrides_reach_nested_fields() {
        let c = parse_config(None, &["problem.n_vib=12".into(), "problem.mobile=none".into()]).unwrap();
        assert_eq!(c.problem.n_vib, Some(12));
        assert_eq!(c.problem.mobile, Mobile::None);
        assert_eq!(c.problem().unwrap().vib_levels(), 1);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = parse_config(None, &["problem.nvib=3".into()]).unwrap_err();
        assert!(err.downcast_ref::<ConfigError>().is_some(), "{err}");
    }

    #[test]
    fn hash_tracks_effective_values() {
        let a = parse_config(None, &[]).unwrap();
        let b = parse_config(None, &["problem.hbar_omega=0.01".into()]).unwrap();
        let c = parse_config(None, &["problem.hbar_omega=0.02".into()]).unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
    }
}
