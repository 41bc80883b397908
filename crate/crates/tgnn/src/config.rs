//! Experiment configuration documents.
//!
//! A configuration is one TOML file whose keys mirror [`ExperimentConfig`].
//! Training keys (`epochs`, `learning_rate`, `batch.*`, `seed`, `bc_mode`,
//! ...) live at the top level; everything else sits in its own table.

use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tgnn_core::mlp::Affine;
use tgnn_core::train::{CollocationCounts, CompositeInputSpec, LossWeights, TrainingConfig};
use tgnn_core::{BoundarySpec, CovarianceSpec, GridSpec, NetworkSpec, TimeSpec, Truncation};

use crate::presets;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldConfig {
    pub variance: f64,
    pub corr_x: f64,
    pub corr_y: f64,
    pub lx: f64,
    pub ly: f64,
    #[serde(default)]
    pub x0: f64,
    #[serde(default)]
    pub y0: f64,
    #[serde(default)]
    pub mean_logk: f64,
    /// Surrogate truncation: exactly one of `modes` and `energy`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modes: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energy: Option<f64>,
    /// Truncation of the Monte Carlo reference; the surrogate's when unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub benchmark_modes: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub benchmark_energy: Option<f64>,
}

impl FieldConfig {
    pub fn covariance(&self) -> CovarianceSpec {
        CovarianceSpec {
            variance: self.variance,
            corr_x: self.corr_x,
            corr_y: self.corr_y,
            lx: self.lx,
            ly: self.ly,
            x0: self.x0,
            y0: self.y0,
            mean_logk: self.mean_logk,
        }
    }

    pub fn truncation(&self) -> Result<Truncation> {
        pick(self.modes, self.energy, "field.modes", "field.energy")?
            .ok_or_else(|| anyhow!("field: set one of `modes` or `energy`"))
    }

    pub fn benchmark_truncation(&self) -> Result<Truncation> {
        match pick(self.benchmark_modes, self.benchmark_energy, "field.benchmark_modes", "field.benchmark_energy")? {
            Some(t) => Ok(t),
            None => self.truncation(),
        }
    }

    pub fn has_separate_benchmark(&self) -> bool {
        self.benchmark_modes.is_some() || self.benchmark_energy.is_some()
    }
}

fn pick(modes: Option<usize>, energy: Option<f64>, a: &str, b: &str) -> Result<Option<Truncation>> {
    match (modes, energy) {
        (Some(_), Some(_)) => bail!("`{a}` and `{b}` are mutually exclusive"),
        (Some(n), None) => Ok(Some(Truncation::Modes(n))),
        (None, Some(e)) => Ok(Some(Truncation::Energy(e))),
        (None, None) => Ok(None),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub nx: usize,
    pub ny: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub hidden: Vec<usize>,
    #[serde(default = "one")]
    pub beta: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Number of reference simulations `R`; zero trains label-free.
    pub realizations: usize,
    pub per_realization: usize,
}

/// Point at which sample PDFs are estimated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeConfig {
    pub t: f64,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UqConfig {
    /// Monte Carlo sample count `M`.
    pub samples: usize,
    /// Seed of the shared input stream; separate from the master seed so
    /// that runs differing only in training share one reference ensemble.
    pub seed: u64,
    /// Evaluated steps; every step when empty.
    #[serde(default)]
    pub steps: Vec<usize>,
    /// Step whose metrics are reported as the headline numbers.
    pub report_step: usize,
    #[serde(default)]
    pub probes: Vec<ProbeConfig>,
    /// Pins the composite variance input during Monte Carlo evaluation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransferConfig {
    /// Target field variance.
    pub variance: f64,
    pub epochs: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub learning_rate: Option<f64>,
    /// Collocation batch size; defaults to the training batch.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch: Option<usize>,
    pub collocation: CollocationCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: String,
    #[serde(flatten)]
    pub training: TrainingConfig,
    #[serde(default)]
    pub weights: LossWeights,
    #[serde(default)]
    pub composite: CompositeInputSpec,
    pub field: FieldConfig,
    pub grid: GridConfig,
    pub time: TimeSpec,
    pub boundary: BoundarySpec,
    pub network: NetworkConfig,
    pub data: DataConfig,
    pub collocation: CollocationCounts,
    pub uq: UqConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transfer: Option<TransferConfig>,
}

impl ExperimentConfig {
    /// Reads a file, or a built-in preset such as `desk/base`.
    pub fn load(source: &str, overrides: &[String]) -> Result<Self> {
        let text = match presets::get(source) {
            Some(t) if !Path::new(source).exists() => t.to_string(),
            _ => std::fs::read_to_string(source).with_context(|| format!("reading config {source}"))?,
        };
        Self::parse(&text, overrides).with_context(|| format!("config {source}"))
    }

    pub fn parse(text: &str, overrides: &[String]) -> Result<Self> {
        let mut value: toml::Table = toml::from_str(text)?;
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        let cfg = from_table(&value)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.training.validate()?;
        self.weights.validate()?;
        if self.composite.enabled {
            self.composite.validate()?;
        }
        let cov = self.field.covariance();
        cov.validate()?;
        let n = self.n_xi()?;
        if n == 0 {
            bail!("field: at least one mode is required");
        }
        if let (Truncation::Modes(a), Truncation::Modes(b)) = (self.field.truncation()?, self.field.benchmark_truncation()?) {
            if b < a {
                bail!("field.benchmark_modes must be at least field.modes");
            }
        }
        self.grid()?;
        self.time.validate()?;
        self.boundary.validate()?;
        if self.network.hidden.is_empty() || self.network.hidden.contains(&0) {
            bail!("network.hidden must list positive layer widths");
        }
        if !(self.network.beta > 0.0 && self.network.beta.is_finite()) {
            bail!("network.beta must be positive");
        }
        if self.data.realizations > 0 {
            let available = self.time.steps * self.grid.nx * self.grid.ny;
            if self.data.per_realization == 0 || self.data.per_realization > available {
                bail!("data.per_realization must be in 1..={available}");
            }
        }
        if self.uq.samples < 2 {
            bail!("uq.samples must be at least 2");
        }
        if self.uq.steps.iter().any(|&s| s == 0 || s > self.time.steps) {
            bail!("uq.steps must lie in 1..={}", self.time.steps);
        }
        if !self.eval_steps().contains(&self.uq.report_step) {
            bail!("uq.report_step must be one of the evaluated steps");
        }
        for p in &self.uq.probes {
            if !(p.t > 0.0 && p.t <= self.time.t_end()) {
                bail!("uq.probes: t must lie in (0, {}]", self.time.t_end());
            }
            if !(p.x >= cov.x0 && p.x <= cov.x0 + cov.lx && p.y >= cov.y0 && p.y <= cov.y0 + cov.ly) {
                bail!("uq.probes: ({}, {}) is outside the domain", p.x, p.y);
            }
            let step = self.probe_step(p);
            if !self.eval_steps().contains(&step) {
                bail!("uq.probes: t = {} falls on step {step}, which is not evaluated", p.t);
            }
        }
        if let Some(v) = self.uq.variance {
            if !self.composite.enabled || !(v > 0.0) {
                bail!("uq.variance needs a composite configuration and a positive value");
            }
        }
        if self.composite.enabled && self.training.bc_mode == tgnn_core::train::BcMode::Hard {
            bail!("composite runs take their end heads as inputs; set bc_mode = \"soft\"");
        }
        if let Some(t) = &self.transfer {
            if !self.composite.enabled {
                bail!("transfer needs a composite configuration");
            }
            if !(t.variance > 0.0) {
                bail!("transfer.variance must be positive");
            }
            if t.collocation.interior == 0 {
                bail!("transfer.collocation.interior must be positive");
            }
            if let Some(lr) = t.learning_rate {
                if !(lr > 0.0) {
                    bail!("transfer.learning_rate must be positive");
                }
            }
            if t.batch == Some(0) {
                bail!("transfer.batch must be positive");
            }
        }
        Ok(())
    }

    /// Surrogate mode count, resolving an energy target through the KLE.
    pub fn n_xi(&self) -> Result<usize> {
        match self.field.truncation()? {
            Truncation::Modes(n) => Ok(n),
            t => Ok(tgnn_core::KleModel::build(self.field.covariance(), t)?.len()),
        }
    }

    pub fn grid(&self) -> Result<GridSpec> {
        let f = &self.field;
        Ok(GridSpec::covering(self.grid.nx, self.grid.ny, f.lx, f.ly, f.x0, f.y0)?)
    }

    pub fn eval_steps(&self) -> Vec<usize> {
        if self.uq.steps.is_empty() {
            (1..=self.time.steps).collect()
        } else {
            self.uq.steps.clone()
        }
    }

    /// Step whose end time is nearest to the probe time.
    pub fn probe_step(&self, p: &ProbeConfig) -> usize {
        ((p.t / self.time.dt).round() as usize).clamp(1, self.time.steps)
    }

    /// Row-major index of the cell containing the probe location.
    pub fn probe_cell(&self, p: &ProbeConfig) -> Result<usize> {
        let g = self.grid()?;
        let col = (((p.x - g.x0) / g.dx).floor() as usize).min(g.nx - 1);
        let row = (((p.y - g.y0) / g.dy).floor() as usize).min(g.ny - 1);
        Ok(g.index(row, col))
    }

    pub fn composite(&self) -> Option<&CompositeInputSpec> {
        self.composite.enabled.then_some(&self.composite)
    }

    /// Composite inputs used for Monte Carlo evaluation.
    pub fn uq_composite(&self) -> Option<CompositeInputSpec> {
        let c = self.composite()?;
        Some(match self.uq.variance {
            Some(v) => c.with_fixed_variance(v),
            None => *c,
        })
    }

    pub fn network_spec(&self, n_xi: usize) -> NetworkSpec {
        let f = &self.field;
        let coords = [
            Affine::unit(0.0, self.time.t_end()),
            Affine::unit(f.x0, f.x0 + f.lx),
            Affine::unit(f.y0, f.y0 + f.ly),
        ];
        let extras = self.composite().map_or(Vec::new(), |c| c.normalizers());
        let mut spec = NetworkSpec::new(n_xi, self.network.hidden.clone(), coords, extras);
        spec.beta = self.network.beta;
        spec
    }

    /// Digest of every semantic field; the name is a label and excluded.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.name.clear();
        digest(&c)
    }
}

/// Hex SHA-256 of the canonical JSON form of `value`.
pub fn digest<T: Serialize>(value: &T) -> String {
    // serde_json maps are ordered, so the encoding is canonical
    let v = serde_json::to_value(value).expect("config values serialize");
    hex::encode(Sha256::digest(v.to_string().as_bytes()))
}

/// Seed of one pipeline stage, derived from the master seed.
pub fn stage_seed(master: u64, stage: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(stage.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest is 32 bytes"))
}

fn from_table(value: &toml::Table) -> Result<ExperimentConfig> {
    let cfg: ExperimentConfig = value.clone().try_into()?;
    // flattened training keys swallow unknown names, so compare round trips
    let back: toml::Table = toml::Table::try_from(&cfg)?;
    let mut unknown = Vec::new();
    unknown_keys(value, &back, "", &mut unknown);
    if !unknown.is_empty() {
        bail!("unknown config keys: {}", unknown.join(", "));
    }
    Ok(cfg)
}

fn unknown_keys(given: &toml::Table, known: &toml::Table, prefix: &str, out: &mut Vec<String>) {
    for (k, v) in given {
        let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match (v, known.get(k)) {
            (_, None) => out.push(path),
            (toml::Value::Table(a), Some(toml::Value::Table(b))) => unknown_keys(a, b, &path, out),
            _ => {}
        }
    }
}

/// Applies one `dotted.key=value` override. The value is read as a TOML
/// literal, falling back to a bare string.
pub fn apply_override(table: &mut toml::Table, text: &str) -> Result<()> {
    let (key, raw) = text
        .split_once('=')
        .ok_or_else(|| anyhow!("override `{text}` is not of the form key=value"))?;
    let key = key.trim();
    let raw = raw.trim();
    let value = match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        bail!("override key `{key}` is malformed");
    }
    let mut node = table;
    for p in &parts[..parts.len() - 1] {
        let entry = node
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = entry
            .as_table_mut()
            .ok_or_else(|| anyhow!("override `{key}`: `{p}` is not a table"))?;
    }
    node.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> String {
        presets::get("desk/base").unwrap().to_string()
    }

    #[test]
    fn presets_parse_and_validate() {
        for name in presets::NAMES {
            let cfg = ExperimentConfig::load(name, &[]).unwrap_or_else(|e| panic!("{name}: {e:#}"));
            assert!(!cfg.name.is_empty());
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = ExperimentConfig::parse(&base(), &["grid.nz=3".into()]).unwrap_err();
        assert!(format!("{err:#}").contains("nz"), "{err:#}");
        let err = ExperimentConfig::parse(&base(), &["epoch=3".into()]).unwrap_err();
        assert!(format!("{err:#}").contains("epoch"), "{err:#}");
    }

    #[test]
    fn overrides_reach_nested_and_flattened_keys() {
        let cfg = ExperimentConfig::parse(
            &base(),
            &["batch.labeled=17".into(), "collocation.interior=999".into(), "weights.pde=2.5".into()],
        )
        .unwrap();
        assert_eq!(cfg.training.batch.labeled, 17);
        assert_eq!(cfg.collocation.interior, 999);
        assert_eq!(cfg.weights.pde, 2.5);
    }

    #[test]
    fn hash_ignores_layout_and_name() {
        let a = ExperimentConfig::parse(&base(), &[]).unwrap();
        let reordered: String = {
            let t: toml::Table = toml::from_str(&base()).unwrap();
            let mut keys: Vec<_> = t.keys().cloned().collect();
            keys.reverse();
            let mut out = toml::Table::new();
            for k in keys {
                out.insert(k.clone(), t[&k].clone());
            }
            format!("\n\n{}", toml::to_string_pretty(&out).unwrap())
        };
        let b = ExperimentConfig::parse(&reordered, &["name=\"other\"".into()]).unwrap();
        assert_eq!(a.hash(), b.hash());
        let c = ExperimentConfig::parse(&base(), &["weights.pde=1.5".into()]).unwrap();
        assert_ne!(a.hash(), c.hash());
        let d = ExperimentConfig::parse(&base(), &["seed=99".into()]).unwrap();
        assert_ne!(a.hash(), d.hash());
    }

    #[test]
    fn round_trip_preserves_the_config() {
        for name in presets::NAMES {
            let a = ExperimentConfig::load(name, &[]).unwrap();
            let b = ExperimentConfig::parse(&a.to_toml().unwrap(), &[]).unwrap();
            assert_eq!(a, b, "{name}");
        }
    }

    #[test]
    fn stage_seeds_differ_by_stage_and_master() {
        assert_ne!(stage_seed(1, "data"), stage_seed(1, "train"));
        assert_ne!(stage_seed(1, "data"), stage_seed(2, "data"));
        assert_eq!(stage_seed(7, "data"), stage_seed(7, "data"));
    }

    #[test]
    fn input_width_counts_composite_inputs() {
        let base = ExperimentConfig::load("desk/base", &[]).unwrap();
        assert_eq!(base.network_spec(10).input_width, 13);
        let comp = ExperimentConfig::load("desk/composite", &[]).unwrap();
        assert_eq!(comp.network_spec(10).input_width, 16);
    }

    #[test]
    fn inconsistent_configs_fail() {
        for o in [
            "field.energy=0.8",
            "uq.report_step=51",
            "data.per_realization=0",
            "network.hidden=[]",
            "composite.enabled=true",
            "epochs=0",
        ] {
            assert!(ExperimentConfig::parse(&base(), &[o.into()]).is_err(), "{o}");
        }
    }
}
