//! Desired far-field magnitude patterns on the target arc.

use std::f64::consts::PI;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::domain::{MaterialModel, SimulationDomain};
use crate::error::{Error, Result};
use crate::solver::analytic_monopole_2d;

pub const DEFAULT_LOBE_FWHM_DEG: f64 = 20.0;
pub const DEFAULT_GAIN: f64 = 1.2;

/// Relative tolerance used to match frequencies read from files.
const FREQUENCY_MATCH: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetKind {
    Rainbow,
    Splitter,
    Custom,
}

/// Gaussian lobe parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LobeShape {
    pub fwhm_deg: f64,
    /// Ratio of target to free-field pressure magnitude, in power-preserving
    /// sense: the arc carries `gain^2` times the free-field power.
    pub gain: f64,
}

impl Default for LobeShape {
    fn default() -> Self {
        Self {
            fwhm_deg: DEFAULT_LOBE_FWHM_DEG,
            gain: DEFAULT_GAIN,
        }
    }
}

impl LobeShape {
    fn validate(&self) -> Result<()> {
        if !(self.fwhm_deg > 0.0 && self.fwhm_deg.is_finite()) {
            return Err(Error::Config(format!("lobe width must be positive, got {}", self.fwhm_deg)));
        }
        if !(self.gain >= 1.0 && self.gain.is_finite()) {
            return Err(Error::Config(format!("lobe gain must be at least 1, got {}", self.gain)));
        }
        Ok(())
    }
}

/// What a target needs to know about the arc and the source.
#[derive(Debug, Clone)]
pub struct TargetContext {
    pub angles_deg: Vec<f64>,
    pub radius_m: f64,
    pub medium: MaterialModel,
    pub amplitude: Complex64,
}

impl TargetContext {
    pub fn from_domain(domain: &SimulationDomain, amplitude: Complex64) -> Self {
        Self {
            angles_deg: domain.arc.angles_deg(),
            radius_m: domain.arc.radius,
            medium: domain.material,
            amplitude,
        }
    }

    fn span(&self) -> (f64, f64) {
        let lo = self.angles_deg.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = self.angles_deg.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }

    /// Angular quadrature weight (rad) of each arc sample.
    fn dtheta(&self) -> f64 {
        let (lo, hi) = self.span();
        (hi - lo).to_radians() / self.angles_deg.len() as f64
    }

    /// Gaussian lobe magnitudes centred at `center_deg`.
    fn lobe(&self, frequency_hz: f64, center_deg: f64, shape: &LobeShape) -> Result<Vec<f64>> {
        let free = analytic_monopole_2d(frequency_hz, self.radius_m, &self.medium, self.amplitude)?.norm_sqr();
        let width = shape.fwhm_deg;
        let g: Vec<f64> = self
            .angles_deg
            .iter()
            .map(|t| (-4.0 * 2f64.ln() * ((t - center_deg) / width).powi(2)).exp())
            .collect();
        let dt = self.dtheta();
        let norm: f64 = g.iter().sum::<f64>() * dt;
        let scale = shape.gain * shape.gain * free * 2.0 * PI / norm;
        Ok(g.iter().map(|v| (scale * v).sqrt()).collect())
    }
}

/// Per-frequency target magnitudes `|p_target|` at every arc sample.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetSpec {
    pub kind: TargetKind,
    pub band_hz: [f64; 2],
    pub frequencies: Vec<f64>,
    pub angles_deg: Vec<f64>,
    /// `None` marks a frequency that does not enter the objective.
    pub magnitudes: Vec<Option<Vec<f64>>>,
    /// Lobe centre per frequency, where one is defined.
    pub centers_deg: Vec<Option<f64>>,
}

impl TargetSpec {
    /// Frequencies that carry a target, with their magnitudes.
    pub fn included(&self) -> impl Iterator<Item = (f64, &[f64])> + '_ {
        self.frequencies
            .iter()
            .zip(&self.magnitudes)
            .filter_map(|(f, m)| m.as_deref().map(|m| (*f, m)))
    }

    pub fn included_frequencies(&self) -> Vec<f64> {
        self.included().map(|(f, _)| f).collect()
    }

    /// Checks the target is defined on the arc of `domain`.
    pub fn check_arc(&self, domain: &SimulationDomain) -> Result<()> {
        let arc = domain.arc.angles_deg();
        if arc.len() != self.angles_deg.len()
            || arc.iter().zip(&self.angles_deg).any(|(a, b)| (a - b).abs() > 1e-9)
        {
            return Err(Error::Config("target angles do not match the arc samples".into()));
        }
        for (f, m) in self.included() {
            if m.len() != arc.len() {
                return Err(Error::ShapeMismatch {
                    context: "target magnitudes",
                    expected: arc.len(),
                    actual: m.len(),
                });
            }
            if m.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
                return Err(Error::Config(format!("negative or non-finite target at {f} Hz")));
            }
            domain.check_frequency(f)?;
        }
        if self.included().next().is_none() {
            return Err(Error::Config("target excludes every design frequency".into()));
        }
        Ok(())
    }

    /// Writes the comma-separated `(f_hz, theta_deg, magnitude)` table.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let err = |e: csv::Error| Error::parse(path.display().to_string(), e.to_string());
        w.write_record(["f_hz", "theta_deg", "magnitude"]).map_err(err)?;
        for (f, m) in self.included() {
            for (t, v) in self.angles_deg.iter().zip(m) {
                w.write_record([f.to_string(), t.to_string(), v.to_string()]).map_err(err)?;
            }
        }
        let bytes = w.into_inner().map_err(|e| Error::parse(path.display().to_string(), e.to_string()))?;
        crate::io::write_string(path, &String::from_utf8_lossy(&bytes))
    }
}

/// `n` equidistant frequencies covering `band` including both edges.
pub fn equidistant(band: [f64; 2], n: usize) -> Result<Vec<f64>> {
    check_band(band)?;
    match n {
        0 => Err(Error::Config("at least one design frequency is required".into())),
        1 => Ok(vec![0.5 * (band[0] + band[1])]),
        _ => Ok((0..n)
            .map(|k| band[0] + (band[1] - band[0]) * k as f64 / (n - 1) as f64)
            .collect()),
    }
}

fn check_band(band: [f64; 2]) -> Result<()> {
    if !(band[0] > 0.0 && band[1] > band[0] && band[1].is_finite()) {
        return Err(Error::Config(format!(
            "band must satisfy 0 < f_min < f_max, got [{}, {}]",
            band[0], band[1]
        )));
    }
    Ok(())
}

fn check_angle(ctx: &TargetContext, theta: f64) -> Result<()> {
    let (lo, hi) = ctx.span();
    if !(theta >= lo - 1e-9 && theta <= hi + 1e-9) {
        return Err(Error::Config(format!(
            "lobe angle {theta} deg outside the arc span [{lo}, {hi}]"
        )));
    }
    Ok(())
}

/// Lobe centre of the rainbow at frequency `f`.
pub fn rainbow_center(f: f64, band: [f64; 2], angle_range: [f64; 2]) -> f64 {
    angle_range[0] + (f - band[0]) / (band[1] - band[0]) * (angle_range[1] - angle_range[0])
}

/// Lobe steered linearly in frequency from `angle_range[0]` at `band[0]`
/// to `angle_range[1]` at `band[1]`.
pub fn rainbow_target(
    frequencies: &[f64],
    band: [f64; 2],
    angle_range: [f64; 2],
    shape: LobeShape,
    ctx: &TargetContext,
) -> Result<TargetSpec> {
    check_band(band)?;
    shape.validate()?;
    check_angle(ctx, angle_range[0])?;
    check_angle(ctx, angle_range[1])?;
    let mut magnitudes = Vec::with_capacity(frequencies.len());
    let mut centers = Vec::with_capacity(frequencies.len());
    for &f in frequencies {
        if f < band[0] * (1.0 - 1e-12) || f > band[1] * (1.0 + 1e-12) {
            return Err(Error::Config(format!("design frequency {f} Hz outside the band")));
        }
        let c = rainbow_center(f, band, angle_range);
        magnitudes.push(Some(ctx.lobe(f, c, &shape)?));
        centers.push(Some(c));
    }
    Ok(TargetSpec {
        kind: TargetKind::Rainbow,
        band_hz: band,
        frequencies: frequencies.to_vec(),
        angles_deg: ctx.angles_deg.clone(),
        magnitudes,
        centers_deg: centers,
    })
}

/// One band of a splitter: frequencies inside `band_hz` are steered to
/// `center_deg`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitterBand {
    pub band_hz: [f64; 2],
    pub center_deg: f64,
}

/// Low band 6.5–8.4 kHz to +35°, high band 9.4–12 kHz to −35°.
pub fn default_splitter_bands() -> [SplitterBand; 2] {
    [
        SplitterBand {
            band_hz: [6_500.0, 8_400.0],
            center_deg: 35.0,
        },
        SplitterBand {
            band_hz: [9_400.0, 12_000.0],
            center_deg: -35.0,
        },
    ]
}

/// Fixed lobe per band; frequencies outside every band carry no target.
pub fn splitter_target(
    frequencies: &[f64],
    bands: &[SplitterBand],
    shape: LobeShape,
    ctx: &TargetContext,
) -> Result<TargetSpec> {
    shape.validate()?;
    if bands.is_empty() {
        return Err(Error::Config("splitter needs at least one band".into()));
    }
    for b in bands {
        check_band(b.band_hz)?;
        check_angle(ctx, b.center_deg)?;
    }
    let lo = bands.iter().map(|b| b.band_hz[0]).fold(f64::INFINITY, f64::min);
    let hi = bands.iter().map(|b| b.band_hz[1]).fold(0.0, f64::max);
    let mut magnitudes = Vec::with_capacity(frequencies.len());
    let mut centers = Vec::with_capacity(frequencies.len());
    for &f in frequencies {
        match bands.iter().find(|b| f >= b.band_hz[0] && f <= b.band_hz[1]) {
            Some(b) => {
                magnitudes.push(Some(ctx.lobe(f, b.center_deg, &shape)?));
                centers.push(Some(b.center_deg));
            }
            None => {
                magnitudes.push(None);
                centers.push(None);
            }
        }
    }
    Ok(TargetSpec {
        kind: TargetKind::Splitter,
        band_hz: [lo, hi],
        frequencies: frequencies.to_vec(),
        angles_deg: ctx.angles_deg.clone(),
        magnitudes,
        centers_deg: centers,
    })
}

/// Index of the sample closest to `theta`; ties go to the smaller angle.
fn nearest(angles: &[f64], theta: f64) -> usize {
    let mut best = 0;
    for (k, a) in angles.iter().enumerate() {
        let d = (a - theta).abs();
        let db = (angles[best] - theta).abs();
        if d < db || (d == db && *a < angles[best]) {
            best = k;
        }
    }
    best
}

#[derive(Debug, Deserialize)]
struct Row {
    f_hz: f64,
    theta_deg: f64,
    magnitude: f64,
}

/// Reads a `(f_hz, theta_deg, magnitude)` table and resamples it onto the
/// arc angles by nearest angle.
pub fn load_custom_target(path: &Path, frequencies: &[f64], ctx: &TargetContext) -> Result<TargetSpec> {
    let text = std::fs::read_to_string(path)?;
    parse_custom_target(&text, &path.display().to_string(), frequencies, ctx)
}

pub fn parse_custom_target(
    text: &str,
    context: &str,
    frequencies: &[f64],
    ctx: &TargetContext,
) -> Result<TargetSpec> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for (k, r) in reader.deserialize::<Row>().enumerate() {
        let r = r.map_err(|e| Error::parse(context, format!("row {}: {e}", k + 1)))?;
        if !(r.magnitude >= 0.0 && r.magnitude.is_finite()) {
            return Err(Error::parse(context, format!("row {}: magnitude must be non-negative", k + 1)));
        }
        rows.push(r);
    }
    if rows.is_empty() {
        return Err(Error::parse(context, "no target rows"));
    }
    let mut magnitudes = Vec::with_capacity(frequencies.len());
    let mut resampled = false;
    for &f in frequencies {
        let mut pts: Vec<(f64, f64)> = rows
            .iter()
            .filter(|r| (r.f_hz - f).abs() <= FREQUENCY_MATCH * f.abs().max(1.0))
            .map(|r| (r.theta_deg, r.magnitude))
            .collect();
        if pts.is_empty() {
            return Err(Error::Config(format!("{context}: no target rows for design frequency {f} Hz")));
        }
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let angles: Vec<f64> = pts.iter().map(|p| p.0).collect();
        let mags: Vec<f64> = ctx
            .angles_deg
            .iter()
            .map(|&t| {
                let k = nearest(&angles, t);
                if (angles[k] - t).abs() > 1e-9 {
                    resampled = true;
                }
                pts[k].1
            })
            .collect();
        magnitudes.push(Some(mags));
    }
    if resampled {
        log::info!("{context}: target resampled onto the arc by nearest angle");
    }
    let lo = frequencies.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = frequencies.iter().cloned().fold(0.0, f64::max);
    Ok(TargetSpec {
        kind: TargetKind::Custom,
        band_hz: [lo, hi],
        frequencies: frequencies.to_vec(),
        angles_deg: ctx.angles_deg.clone(),
        magnitudes,
        centers_deg: vec![None; frequencies.len()],
    })
}
