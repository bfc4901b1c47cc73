//! Implementations of the `atopt` subcommands.

use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use acoustic_topopt::ablation::ablation_study;
use acoustic_topopt::domain::{DensityField, DomainConfig, SimulationDomain};
use acoustic_topopt::farfield::{
    emission_map, free_field_reference, lobe_metrics, radiation_efficiency, render_rainbow, sweep_directivity,
    DirectivityMap,
};
use acoustic_topopt::objective::DesignProblem;
use acoustic_topopt::optimizer::{format_log, run_design, Checkpoint, DesignObserver, IterationRecord, LOG_HEADER};
use acoustic_topopt::solver::{compare_with_analytic, simulate, SourceSpec};
use acoustic_topopt::targets::TargetKind;
use acoustic_topopt::Complex64;
use anyhow::{bail, Context, Result};
use serde_json::json;

use crate::config::LoadedConfig;

/// Numerical check that did not meet its threshold (exit code 3).
#[derive(Debug)]
pub struct NumericalFailure(pub String);

impl std::fmt::Display for NumericalFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for NumericalFailure {}

pub const BLUEPRINT: &str = "blueprint.txt";
pub const BLUEPRINT_IMAGE: &str = "blueprint.pgm";
pub const DESIGN_VARS: &str = "design_vars.txt";
pub const CONVERGENCE_LOG: &str = "convergence.csv";
pub const SUMMARY: &str = "summary.json";
pub const CHECKPOINT_DIR: &str = "checkpoint";
pub const DIRECTIVITY: &str = "directivity.csv";

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn json_text(v: &serde_json::Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

struct FileObserver<'a> {
    log: File,
    problem: &'a DesignProblem,
    checkpoint_dir: PathBuf,
}

impl DesignObserver for FileObserver<'_> {
    fn on_iteration(&mut self, r: &IterationRecord) -> acoustic_topopt::Result<()> {
        writeln!(self.log, "{}", r.log_line())?;
        self.log.flush()?;
        Ok(())
    }

    fn on_checkpoint(&mut self, cp: &Checkpoint) -> acoustic_topopt::Result<()> {
        cp.save(self.problem, &self.checkpoint_dir)?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct DesignOutput {
    pub blueprint: PathBuf,
    pub log: PathBuf,
    pub summary: PathBuf,
    pub final_phi: f64,
    pub initial_phi: Option<f64>,
}

/// Runs the optimization and writes blueprint, log, checkpoints, target,
/// design-frequency directivity and a summary to `out`.
pub fn cmd_design(cfg: &LoadedConfig, out: &Path, resume: Option<&Path>, deterministic: bool) -> Result<DesignOutput> {
    let problem = cfg.validate_for_design()?;
    let loop_cfg = cfg.loop_config();
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let start = Instant::now();
    let checkpoint = match resume {
        Some(p) => Some(Checkpoint::load(&problem, p).with_context(|| format!("loading checkpoint {}", p.display()))?),
        None => None,
    };
    let log_path = out.join(CONVERGENCE_LOG);
    let earlier = checkpoint.as_ref().map(|c| format_log(&c.history)).unwrap_or_else(|| format!("{LOG_HEADER}\n"));
    write(&log_path, &earlier)?;
    problem.target.save(&out.join("target.csv"))?;
    let mut observer = FileObserver {
        log: OpenOptions::new().append(true).open(&log_path)?,
        problem: &problem,
        checkpoint_dir: out.join(CHECKPOINT_DIR),
    };
    let result = run_design(&problem, &loop_cfg, checkpoint, &mut observer)?;

    let blueprint = out.join(BLUEPRINT);
    result.physical.write_text(&blueprint)?;
    result.physical.write_pgm(&out.join(BLUEPRINT_IMAGE))?;
    DensityField::from_design_vars(&problem.domain, &result.xi)?.write_text(&out.join(DESIGN_VARS))?;
    let design_f = problem.target.included_frequencies();
    let mut map = sweep_directivity(&problem.domain, &result.physical, &design_f, &problem.source)?;
    map.normalize();
    map.write_csv(&out.join("directivity_design.csv"))?;

    let objective = result.objective.clone();
    let final_phi = objective.as_ref().map(|o| o.phi).unwrap_or(f64::NAN);
    let initial_phi = result.history.first().map(|r| r.phi);
    let mut summary = json!({
        "final_phi": objective.as_ref().map(|o| o.phi),
        "initial_phi": initial_phi,
        "per_frequency_phi": objective.as_ref().map(|o| o.per_frequency_phi.clone()),
        "frequencies_hz": design_f,
        "iterations": result.history.len(),
        "final_beta": result.beta,
        "converged": result.converged,
        "selected_iteration": result.selected_iteration,
        "grid": [problem.domain.nx, problem.domain.ny],
        "design_cells": problem.design_len(),
    });
    if !deterministic {
        summary["wall_time_s"] = json!(start.elapsed().as_secs_f64());
    }
    let summary_path = out.join(SUMMARY);
    write(&summary_path, &json_text(&summary))?;
    Ok(DesignOutput {
        blueprint,
        log: log_path,
        summary: summary_path,
        final_phi,
        initial_phi,
    })
}

/// Reads a physical-density blueprint and checks it fits the domain.
pub fn read_blueprint(domain: &SimulationDomain, path: &Path) -> Result<DensityField<f64>> {
    let f = DensityField::read_text(path).with_context(|| format!("reading blueprint {}", path.display()))?;
    f.check_domain(domain)
        .with_context(|| format!("blueprint {} does not fit the configured domain", path.display()))?;
    f.check_bounds()?;
    Ok(f)
}

#[derive(Debug, Clone)]
pub struct SimulateOutput {
    pub map: DirectivityMap,
    pub efficiency: Vec<(f64, f64)>,
}

/// Sweeps the blueprint over a band and writes the directivity map, polar
/// data, per-design-frequency metrics and pressure fields.
pub fn cmd_simulate(
    cfg: &LoadedConfig,
    blueprint: &Path,
    band: Option<[f64; 2]>,
    sweep_n: Option<usize>,
    out: &Path,
) -> Result<SimulateOutput> {
    let problem = cfg.problem()?;
    let domain = &problem.domain;
    let density = read_blueprint(domain, blueprint)?;
    let band = match band.or(cfg.config.simulate.band_hz) {
        Some(b) => b,
        None => cfg.target_band()?,
    };
    let n = sweep_n.unwrap_or(cfg.config.simulate.sweep);
    if n == 0 {
        bail!(crate::config::ConfigError("sweep needs at least one frequency".into()));
    }
    let design_f: Vec<f64> = problem
        .target
        .included_frequencies()
        .into_iter()
        .filter(|f| *f >= band[0] && *f <= band[1])
        .collect();
    let map = emission_map(domain, &density, band, n, &design_f, &problem.source)?;
    map.write_csv(&out.join(DIRECTIVITY))?;
    map.write_polar(&out.join("polar"))?;

    let mut metrics = String::from("f_hz,lobe_angle_deg,lobe_ratio_db,fwhm_lo_deg,fwhm_hi_deg,power_fraction,efficiency\n");
    let mut efficiency = Vec::new();
    let mut raw_design = Vec::new();
    for &f in &design_f {
        let p = simulate(domain, &density, f, &problem.source)?;
        p.write_text(&out.join("pressure"))?;
        let col = acoustic_topopt::farfield::directivity(&p, &domain.arc)?;
        let m = lobe_metrics(&map.angles_deg, &col)?;
        let eff = radiation_efficiency(domain, &p, &density, free_field_reference(domain, f, &problem.source)?)?;
        metrics.push_str(&format!(
            "{f},{},{},{},{},{},{eff}\n",
            m.angle_deg, m.lobe_ratio_db, m.fwhm_deg.0, m.fwhm_deg.1, m.power_fraction
        ));
        efficiency.push((f, eff));
        raw_design.push(col);
    }
    write(&out.join("metrics.csv"), &metrics)?;
    if let (Some(t), false) = (&cfg.config.target, design_f.is_empty()) {
        if t.kind == TargetKind::Splitter {
            let raw = DirectivityMap::new(map.angles_deg.clone(), design_f.clone(), raw_design)?;
            let mut s = String::from("band_lo_hz,band_hi_hz,lobe_angle_deg,power_fraction\n");
            for b in t.bands.clone().unwrap_or_else(|| acoustic_topopt::targets::default_splitter_bands().to_vec()) {
                if let Some(col) = raw.band_column(b.band_hz) {
                    let m = lobe_metrics(&raw.angles_deg, &col)?;
                    s.push_str(&format!("{},{},{},{}\n", b.band_hz[0], b.band_hz[1], m.angle_deg, m.power_fraction));
                }
            }
            write(&out.join("band_metrics.csv"), &s)?;
        }
    }
    Ok(SimulateOutput { map, efficiency })
}

/// Feature ablation of a blueprint.
pub fn cmd_ablate(cfg: &LoadedConfig, blueprint: &Path, out: &Path) -> Result<acoustic_topopt::ablation::AblationReport> {
    let problem = cfg.problem()?;
    let density = read_blueprint(&problem.domain, blueprint)?;
    let (labels, report) = ablation_study(&density, &problem)?;
    report.write_csv(&out.join("ablation.csv"))?;
    labels.write_ppm(&out.join("features.ppm"))?;
    let summary = json!({
        "base_phi": report.base_phi,
        "features": labels.count(),
        "solid_cells": labels.total_area(),
        "all_removed_percent": report.all_removed.delta_phi_percent,
        "source_off_percent": report.source_off.delta_phi_percent,
        "impact_span": report.impact_span(),
    });
    write(&out.join("ablation.json"), &json_text(&summary))?;
    Ok(report)
}

/// Polar colour image of a directivity map.
pub fn cmd_rainbow_plot(map_path: &Path, band: Option<[f64; 2]>, radius_px: usize, out: &Path) -> Result<PathBuf> {
    let map = DirectivityMap::read_csv(map_path).with_context(|| format!("reading {}", map_path.display()))?;
    let band = band.unwrap_or_else(|| {
        let lo = map.frequencies.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = map.frequencies.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        [lo, hi]
    });
    let (w, h, px) = render_rainbow(&map, band, radius_px)?;
    let path = out.join("rainbow.ppm");
    fs::create_dir_all(out)?;
    acoustic_topopt::io::write_ppm(&path, w, h, &px)?;
    Ok(path)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidationResult {
    pub frequency_hz: f64,
    pub l2_coarse: f64,
    pub l2_fine: f64,
    pub arc_coarse: f64,
}

impl ValidationResult {
    pub fn passed(&self) -> bool {
        self.l2_coarse < 0.02 && self.l2_fine * 3.0 <= self.l2_coarse && self.arc_coarse < 0.01
    }
}

fn free_field(config: &DomainConfig, amplitude: Complex64) -> Result<(SimulationDomain, acoustic_topopt::solver::AnalyticComparison)> {
    let d = acoustic_topopt::domain::build_domain(config)?;
    let f = config.max_frequency_hz;
    let p = simulate(&d, &DensityField::zeros(&d), f, &SourceSpec::at_domain_source(&d, amplitude))?;
    let c = compare_with_analytic(&d, &p, amplitude)?;
    Ok((d, c))
}

/// Free-field solve at the highest design frequency compared with the
/// analytic solution, at the configured cell size and at half of it.
pub fn cmd_validate(cfg: &LoadedConfig, out: &Path) -> Result<ValidationResult> {
    let base = &cfg.config.domain;
    let q = cfg.amplitude();
    let (d, coarse) = free_field(base, q)?;
    let mut fine_cfg = base.clone();
    fine_cfg.cell_size_m = Some(0.5 * d.h);
    let (_, fine) = free_field(&fine_cfg, q)?;
    let r = ValidationResult {
        frequency_hz: base.max_frequency_hz,
        l2_coarse: coarse.relative_l2,
        l2_fine: fine.relative_l2,
        arc_coarse: coarse.arc_max_relative,
    };
    let report = json!({
        "frequency_hz": r.frequency_hz,
        "cell_size_m": d.h,
        "relative_l2": r.l2_coarse,
        "relative_l2_half_cell": r.l2_fine,
        "refinement_gain": r.l2_coarse / r.l2_fine,
        "arc_max_relative": r.arc_coarse,
        "passed": r.passed(),
    });
    write(&out.join("validate.json"), &json_text(&report))?;
    println!(
        "f = {} Hz: relative L2 {:.3e}, half cell {:.3e} (gain {:.2}), arc {:.3e}",
        r.frequency_hz,
        r.l2_coarse,
        r.l2_fine,
        r.l2_coarse / r.l2_fine,
        r.arc_coarse
    );
    if !r.passed() {
        return Err(NumericalFailure(format!("solver validation failed: {report}")).into());
    }
    Ok(r)
}
