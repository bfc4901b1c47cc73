//! Run configuration read from a TOML file.

use std::fmt;
use std::path::{Path, PathBuf};

use acoustic_topopt::domain::{build_domain, DomainConfig, MaterialOverrides, SimulationDomain};
use acoustic_topopt::objective::{Aggregation, DesignProblem};
use acoustic_topopt::optimizer::{BetaSchedule, LoopConfig, MmaParams};
use acoustic_topopt::targets::{
    default_splitter_bands, equidistant, load_custom_target, rainbow_target, splitter_target, LobeShape,
    SplitterBand, TargetContext, TargetKind, TargetSpec, DEFAULT_GAIN, DEFAULT_LOBE_FWHM_DEG,
};
use acoustic_topopt::Complex64;
use anyhow::{Context, Result};
use serde::Deserialize;

/// Invalid or incomplete configuration (exit code 2).
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn config_err(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    /// Complex volume-source strength as `[re, im]`.
    pub amplitude: [f64; 2],
}

impl Default for SourceConfig {
    fn default() -> Self {
        Self { amplitude: [1e-4, 0.0] }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetConfig {
    pub kind: TargetKind,
    pub band_hz: Option<[f64; 2]>,
    /// Number of equidistant design frequencies over the band.
    #[serde(default = "default_frequency_count")]
    pub frequencies: usize,
    /// Explicit design frequencies; overrides `frequencies`.
    pub frequency_list: Option<Vec<f64>>,
    #[serde(default = "default_angle_range")]
    pub angle_range_deg: [f64; 2],
    #[serde(default = "default_fwhm")]
    pub lobe_fwhm_deg: f64,
    #[serde(default = "default_gain")]
    pub gain: f64,
    pub bands: Option<Vec<SplitterBand>>,
    /// Table for `kind = "custom"`, relative to the config file.
    pub file: Option<PathBuf>,
}

fn default_frequency_count() -> usize {
    8
}
fn default_angle_range() -> [f64; 2] {
    [-50.0, 50.0]
}
fn default_fwhm() -> f64 {
    DEFAULT_LOBE_FWHM_DEG
}
fn default_gain() -> f64 {
    DEFAULT_GAIN
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    /// Density filter radius in cells.
    pub filter_radius_cells: f64,
    pub eta: f64,
    pub aggregation: Aggregation,
    pub max_iterations: usize,
    pub tolerance: f64,
    pub stagnation_window: usize,
    pub stagnation_tolerance: f64,
    pub volume_fraction: Option<f64>,
    pub initial_density: f64,
    pub checkpoint_every: usize,
    pub beta: BetaSchedule,
    pub mma: MmaParams,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        let l = LoopConfig::default();
        Self {
            filter_radius_cells: 3.0,
            eta: 0.5,
            aggregation: Aggregation::Mean,
            max_iterations: l.max_iterations,
            tolerance: l.tolerance,
            stagnation_window: l.stagnation_window,
            stagnation_tolerance: l.stagnation_tolerance,
            volume_fraction: l.volume_fraction,
            initial_density: l.initial_density,
            checkpoint_every: l.checkpoint_every,
            beta: l.beta,
            mma: l.mma,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub sweep: usize,
    /// Sweep band; defaults to the target band.
    pub band_hz: Option<[f64; 2]>,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            sweep: acoustic_topopt::farfield::DEFAULT_SWEEP,
            band_hz: None,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub out_dir: Option<PathBuf>,
    pub threads: Option<usize>,
    pub deterministic: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub domain: DomainConfig,
    #[serde(default)]
    pub material: MaterialOverrides,
    #[serde(default)]
    pub source: SourceConfig,
    pub target: Option<TargetConfig>,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub simulate: SimulateConfig,
    #[serde(default)]
    pub run: RunSection,
}

/// A parsed configuration and the directory relative paths refer to.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub base_dir: PathBuf,
}

/// Parses configuration text, checking that every section in `required`
/// is present.
pub fn parse_config(text: &str, origin: &str, required: &[&str]) -> Result<RunConfig> {
    let table: toml::Table = toml::from_str(text).map_err(|e| config_err(format!("{origin}: {e}")))?;
    for name in required {
        if !table.contains_key(*name) {
            return Err(config_err(format!("{origin}: missing [{name}] section")));
        }
    }
    let mut cfg: RunConfig = toml::from_str(text).map_err(|e| config_err(format!("{origin}: {e}")))?;
    if cfg.material != MaterialOverrides::default() {
        if cfg.domain.material != MaterialOverrides::default() {
            return Err(config_err(format!(
                "{origin}: material given both in [material] and [domain.material]"
            )));
        }
        cfg.domain.material = cfg.material;
    }
    Ok(cfg)
}

pub fn load_config(path: &Path, required: &[&str]) -> Result<LoadedConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| config_err(format!("cannot read config {}: {e}", path.display())))?;
    let config = parse_config(&text, &path.display().to_string(), required)?;
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(LoadedConfig { config, base_dir })
}

impl LoadedConfig {
    pub fn from_config(config: RunConfig, base_dir: impl Into<PathBuf>) -> Self {
        Self {
            config,
            base_dir: base_dir.into(),
        }
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn domain(&self) -> Result<SimulationDomain> {
        build_domain(&self.config.domain).context("invalid [domain] section")
    }

    pub fn amplitude(&self) -> Complex64 {
        let [re, im] = self.config.source.amplitude;
        Complex64::new(re, im)
    }

    fn target_config(&self) -> Result<&TargetConfig> {
        self.config
            .target
            .as_ref()
            .ok_or_else(|| config_err("missing [target] section"))
    }

    fn design_frequencies(&self, band: Option<[f64; 2]>) -> Result<Vec<f64>> {
        let t = self.target_config()?;
        if let Some(list) = &t.frequency_list {
            if list.is_empty() {
                return Err(config_err("target.frequency_list is empty"));
            }
            return Ok(list.clone());
        }
        let band = band.ok_or_else(|| config_err("target.band_hz is required to place design frequencies"))?;
        Ok(equidistant(band, t.frequencies)?)
    }

    /// Band the target covers (the hull of the splitter bands if no band
    /// is given).
    pub fn target_band(&self) -> Result<[f64; 2]> {
        let t = self.target_config()?;
        if let Some(b) = t.band_hz {
            return Ok(b);
        }
        match t.kind {
            TargetKind::Splitter => {
                let bands = self.splitter_bands()?;
                let lo = bands.iter().map(|b| b.band_hz[0]).fold(f64::INFINITY, f64::min);
                let hi = bands.iter().map(|b| b.band_hz[1]).fold(0.0, f64::max);
                Ok([lo, hi])
            }
            _ => Err(config_err(format!("target.band_hz is required for kind = {:?}", t.kind))),
        }
    }

    fn splitter_bands(&self) -> Result<Vec<SplitterBand>> {
        let t = self.target_config()?;
        Ok(t.bands.clone().unwrap_or_else(|| default_splitter_bands().to_vec()))
    }

    pub fn target(&self, domain: &SimulationDomain) -> Result<TargetSpec> {
        let t = self.target_config()?;
        let ctx = TargetContext::from_domain(domain, self.amplitude());
        let shape = LobeShape {
            fwhm_deg: t.lobe_fwhm_deg,
            gain: t.gain,
        };
        let spec = match t.kind {
            TargetKind::Rainbow => {
                let band = self.target_band()?;
                let f = self.design_frequencies(Some(band))?;
                rainbow_target(&f, band, t.angle_range_deg, shape, &ctx)
            }
            TargetKind::Splitter => {
                let f = self.design_frequencies(Some(self.target_band()?))?;
                splitter_target(&f, &self.splitter_bands()?, shape, &ctx)
            }
            TargetKind::Custom => {
                let file = t.file.as_ref().ok_or_else(|| config_err("target.file is required for kind = custom"))?;
                let f = self.design_frequencies(t.band_hz)?;
                load_custom_target(&self.resolve(file), &f, &ctx)
            }
        };
        spec.context("invalid [target] section")
    }

    pub fn loop_config(&self) -> LoopConfig {
        let o = &self.config.optimizer;
        LoopConfig {
            max_iterations: o.max_iterations,
            beta: o.beta,
            tolerance: o.tolerance,
            stagnation_window: o.stagnation_window,
            stagnation_tolerance: o.stagnation_tolerance,
            volume_fraction: o.volume_fraction,
            initial_density: o.initial_density,
            checkpoint_every: o.checkpoint_every,
            mma: o.mma,
        }
    }

    pub fn problem(&self) -> Result<DesignProblem> {
        let domain = self.domain()?;
        let target = self.target(&domain)?;
        let o = &self.config.optimizer;
        let radius = o.filter_radius_cells * domain.h;
        DesignProblem::new(domain, target, self.amplitude(), radius, o.eta, o.aggregation)
            .context("invalid [optimizer] section")
    }

    /// Checks every section needed by a design run without solving
    /// anything.
    pub fn validate_for_design(&self) -> Result<DesignProblem> {
        let problem = self.problem()?;
        self.loop_config().validate().context("invalid [optimizer] section")?;
        Ok(problem)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[domain]
size_m = [0.04, 0.04]
max_frequency_hz = 8575.0
target_radius_m = 0.07
pml_cells = 12
source_clearance_cells = 1.5

[target]
kind = "rainbow"
band_hz = [6000.0, 8000.0]
frequencies = 3
"#;

    #[test]
    fn minimal_config_builds_a_problem() {
        let cfg = LoadedConfig::from_config(parse_config(MINIMAL, "t", &["domain", "target"]).unwrap(), ".");
        let p = cfg.validate_for_design().unwrap();
        assert_eq!(p.target.frequencies, vec![6000.0, 7000.0, 8000.0]);
        assert_eq!(cfg.loop_config(), LoopConfig::default());
    }

    #[test]
    fn missing_section_is_named() {
        let text = MINIMAL.split("[target]").next().unwrap();
        let e = parse_config(text, "t", &["domain", "target"]).unwrap_err();
        assert!(e.downcast_ref::<ConfigError>().is_some());
        assert!(e.to_string().contains("[target]"), "{e}");
    }

    #[test]
    fn unknown_key_is_reported() {
        let text = format!("{MINIMAL}\n[optimizer]\nmax_iteration = 3\n");
        let e = parse_config(&text, "t", &[]).unwrap_err();
        assert!(e.to_string().contains("max_iteration"), "{e}");
    }

    #[test]
    fn material_section_merges_into_domain() {
        let text = format!("{MINIMAL}\n[material]\nrho_air = 1.2\n");
        let c = parse_config(&text, "t", &[]).unwrap();
        assert_eq!(c.domain.material.rho_air, Some(1.2));
    }

    #[test]
    fn splitter_band_defaults_to_hull() {
        let text = MINIMAL.replace("kind = \"rainbow\"\nband_hz = [6000.0, 8000.0]", "kind = \"splitter\"");
        let c = LoadedConfig::from_config(parse_config(&text, "t", &[]).unwrap(), ".");
        assert_eq!(c.target_band().unwrap(), [6500.0, 12000.0]);
    }
}
