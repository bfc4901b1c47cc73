//! Directivity on the target arc, lobe metrics, radiation efficiency and
//! emission maps.

use std::path::Path;

use rayon::prelude::*;

use crate::domain::{DensityField, SimulationDomain, TargetArc};
use crate::error::{Error, Result};
use crate::solver::{radiated_power, simulate, PressureField, SourceSpec};
use crate::targets::equidistant;

/// Default number of sweep frequencies across a band.
pub const DEFAULT_SWEEP: usize = 64;

/// `|p|^2` at each arc sample, in arc order (ascending angle).
pub fn directivity(p: &PressureField, arc: &TargetArc) -> Result<Vec<f64>> {
    if arc.samples.is_empty() {
        return Err(Error::InvalidArgument("target arc has no samples".into()));
    }
    let n = p.values.len();
    if let Some(s) = arc.samples.iter().find(|s| s.stencil.cells.iter().any(|&c| c >= n)) {
        return Err(Error::InvalidArgument(format!(
            "arc sample at {} deg lies outside the pressure grid",
            s.theta_deg
        )));
    }
    Ok(arc
        .samples
        .iter()
        .map(|s| s.stencil.apply(&p.values).norm_sqr())
        .collect())
}

/// Index of the largest value; the first one wins ties.
pub fn peak_index(column: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, v) in column.iter().enumerate() {
        if best.is_none_or(|b| *v > column[b]) {
            best = Some(i);
        }
    }
    best
}

/// Angle of the maximum with parabolic refinement through the two
/// neighbouring samples. `angles` must be ascending and uniformly spaced.
pub fn main_lobe_angle(angles: &[f64], column: &[f64]) -> Result<f64> {
    check_column(angles, column)?;
    let k = peak_index(column).expect("non-empty column");
    if k == 0 || k + 1 == column.len() {
        return Ok(angles[k]);
    }
    let (a, b, c) = (column[k - 1], column[k], column[k + 1]);
    let den = a - 2.0 * b + c;
    let offset = if den < 0.0 { 0.5 * (a - c) / den } else { 0.0 };
    Ok(angles[k] + offset.clamp(-0.5, 0.5) * (angles[k + 1] - angles[k]))
}

fn check_column(angles: &[f64], column: &[f64]) -> Result<()> {
    if column.is_empty() {
        return Err(Error::InvalidArgument("empty directivity column".into()));
    }
    if angles.len() != column.len() {
        return Err(Error::ShapeMismatch {
            context: "directivity column",
            expected: angles.len(),
            actual: column.len(),
        });
    }
    if column.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::InvalidArgument("directivity values must be finite and non-negative".into()));
    }
    Ok(())
}

/// Inclusive index range around the peak where the power stays at or above
/// half the peak.
pub fn fwhm_interval(column: &[f64]) -> Option<(usize, usize)> {
    let k = peak_index(column)?;
    let half = 0.5 * column[k];
    let mut lo = k;
    while lo > 0 && column[lo - 1] >= half {
        lo -= 1;
    }
    let mut hi = k;
    while hi + 1 < column.len() && column[hi + 1] >= half {
        hi += 1;
    }
    Some((lo, hi))
}

/// Main-to-side-lobe power ratio in dB. The side lobe is the largest local
/// maximum outside the half-power interval, skipping the first sample past
/// each edge. Returns `f64::INFINITY` when there is no side lobe.
pub fn lobe_ratio(column: &[f64]) -> f64 {
    let Some((lo, hi)) = fwhm_interval(column) else {
        return f64::INFINITY;
    };
    let peak = column[peak_index(column).unwrap()];
    let n = column.len();
    let mut side = 0.0f64;
    for i in 0..n {
        if i + 1 >= lo && i <= hi + 1 {
            continue;
        }
        let left = if i > 0 { column[i - 1] } else { f64::NEG_INFINITY };
        let right = if i + 1 < n { column[i + 1] } else { f64::NEG_INFINITY };
        if column[i] >= left && column[i] >= right && column[i] > 0.0 {
            side = side.max(column[i]);
        }
    }
    if side > 0.0 && peak > 0.0 {
        10.0 * (peak / side).log10()
    } else {
        f64::INFINITY
    }
}

/// Share of the arc's total power inside the inclusive index interval.
pub fn lobe_power_fraction(column: &[f64], interval: (usize, usize)) -> Result<f64> {
    let (lo, hi) = interval;
    if lo > hi || hi >= column.len() {
        return Err(Error::InvalidArgument(format!(
            "lobe interval {lo}..={hi} outside a column of {}",
            column.len()
        )));
    }
    let total: f64 = column.iter().sum();
    if !(total > 0.0) {
        return Ok(0.0);
    }
    Ok((column[lo..=hi].iter().sum::<f64>() / total).clamp(0.0, 1.0))
}

/// Summary of one directivity column.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LobeMetrics {
    pub angle_deg: f64,
    pub lobe_ratio_db: f64,
    pub fwhm_deg: (f64, f64),
    pub power_fraction: f64,
}

pub fn lobe_metrics(angles: &[f64], column: &[f64]) -> Result<LobeMetrics> {
    let angle_deg = main_lobe_angle(angles, column)?;
    let (lo, hi) = fwhm_interval(column).expect("non-empty column");
    Ok(LobeMetrics {
        angle_deg,
        lobe_ratio_db: lobe_ratio(column),
        fwhm_deg: (angles[lo], angles[hi]),
        power_fraction: lobe_power_fraction(column, (lo, hi))?,
    })
}

/// Power radiated by the identical source with no scatterer.
pub fn free_field_reference(domain: &SimulationDomain, frequency_hz: f64, source: &SourceSpec) -> Result<f64> {
    let empty = DensityField::zeros(domain);
    let p = simulate(domain, &empty, frequency_hz, source)?;
    radiated_power(domain, &p, &empty, domain.power_radius)
}

/// Radiated power of a device solution over the free-field reference.
pub fn radiation_efficiency(
    domain: &SimulationDomain,
    p: &PressureField,
    density: &DensityField<f64>,
    free_field_ref: f64,
) -> Result<f64> {
    if !(free_field_ref > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "free-field reference power must be positive, got {free_field_ref}"
        )));
    }
    Ok(radiated_power(domain, p, density, domain.power_radius)? / free_field_ref)
}

/// Angle by frequency power matrix, stored column-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectivityMap {
    pub angles_deg: Vec<f64>,
    pub frequencies: Vec<f64>,
    /// `power[f][angle]`.
    pub power: Vec<Vec<f64>>,
    pub normalized: bool,
}

impl DirectivityMap {
    pub fn new(angles_deg: Vec<f64>, frequencies: Vec<f64>, power: Vec<Vec<f64>>) -> Result<Self> {
        if power.len() != frequencies.len() {
            return Err(Error::ShapeMismatch {
                context: "directivity map columns",
                expected: frequencies.len(),
                actual: power.len(),
            });
        }
        for col in &power {
            check_column(&angles_deg, col)?;
        }
        Ok(Self {
            angles_deg,
            frequencies,
            power,
            normalized: false,
        })
    }

    /// Scales each column to a maximum of exactly one (zero columns stay
    /// zero).
    pub fn normalize(&mut self) {
        for col in &mut self.power {
            let m = col.iter().cloned().fold(0.0, f64::max);
            if m > 0.0 {
                for v in col.iter_mut() {
                    *v /= m;
                }
            }
        }
        self.normalized = true;
    }

    pub fn column(&self, frequency_hz: f64) -> Option<&[f64]> {
        self.frequencies
            .iter()
            .position(|&f| f == frequency_hz)
            .map(|k| self.power[k].as_slice())
    }

    pub fn metrics(&self) -> Result<Vec<LobeMetrics>> {
        self.power.iter().map(|c| lobe_metrics(&self.angles_deg, c)).collect()
    }

    /// Sum of the columns whose frequency lies in `band` (inclusive).
    pub fn band_column(&self, band: [f64; 2]) -> Option<Vec<f64>> {
        let mut acc: Option<Vec<f64>> = None;
        for (f, col) in self.frequencies.iter().zip(&self.power) {
            if *f >= band[0] && *f <= band[1] {
                match acc.as_mut() {
                    Some(a) => a.iter_mut().zip(col).for_each(|(a, c)| *a += c),
                    None => acc = Some(col.clone()),
                }
            }
        }
        acc
    }

    /// Matrix with one row per angle: the header row lists frequencies and
    /// the first column lists angles.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec![if self.normalized { "theta_deg|normalized" } else { "theta_deg" }.to_string()];
        header.extend(self.frequencies.iter().map(|f| f.to_string()));
        w.write_record(&header).expect("in-memory write");
        for (a, theta) in self.angles_deg.iter().enumerate() {
            let mut row = vec![theta.to_string()];
            row.extend(self.power.iter().map(|c| c[a].to_string()));
            w.write_record(&row).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii output")
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        crate::io::write_string(path, &self.to_csv())
    }

    pub fn parse_csv(text: &str, context: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_reader(text.as_bytes());
        let mut rows = rdr.records();
        let bad = |m: String| Error::parse(context, m);
        let header = rows
            .next()
            .ok_or_else(|| bad("empty directivity map".into()))?
            .map_err(|e| bad(e.to_string()))?;
        let normalized = header.get(0).is_some_and(|h| h.contains("normalized"));
        let num = |s: &str, line: usize| -> Result<f64> {
            s.trim().parse::<f64>().map_err(|e| bad(format!("line {line}: {e}")))
        };
        let frequencies = header.iter().skip(1).map(|s| num(s, 1)).collect::<Result<Vec<_>>>()?;
        let mut angles = Vec::new();
        let mut power = vec![Vec::new(); frequencies.len()];
        for (k, rec) in rows.enumerate() {
            let rec = rec.map_err(|e| bad(e.to_string()))?;
            if rec.len() != frequencies.len() + 1 {
                return Err(bad(format!("line {}: expected {} fields", k + 2, frequencies.len() + 1)));
            }
            angles.push(num(&rec[0], k + 2)?);
            for (c, s) in rec.iter().skip(1).enumerate() {
                power[c].push(num(s, k + 2)?);
            }
        }
        let mut map = Self::new(angles, frequencies, power)?;
        map.normalized = normalized;
        Ok(map)
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        Self::parse_csv(&std::fs::read_to_string(path)?, &path.display().to_string())
    }

    /// One `(angle, normalized power)` file per frequency.
    pub fn write_polar(&self, dir: &Path) -> Result<()> {
        for (f, col) in self.frequencies.iter().zip(&self.power) {
            let m = col.iter().cloned().fold(0.0, f64::max);
            let mut s = String::from("theta_deg,power\n");
            for (a, v) in self.angles_deg.iter().zip(col) {
                let v = if m > 0.0 { v / m } else { 0.0 };
                s.push_str(&format!("{a},{v}\n"));
            }
            crate::io::write_string(&dir.join(format!("polar_f{f}.csv")), &s)?;
        }
        Ok(())
    }
}

/// Sweep frequencies: `n` equidistant samples over `band` merged with the
/// design frequencies, ascending and without duplicates.
pub fn sweep_frequencies(band: [f64; 2], n: usize, include: &[f64]) -> Result<Vec<f64>> {
    let mut f = if n == 1 { vec![0.5 * (band[0] + band[1])] } else { equidistant(band, n)? };
    f.extend_from_slice(include);
    f.sort_by(f64::total_cmp);
    f.dedup();
    Ok(f)
}

/// Raw directivity over a list of frequencies for one layout.
pub fn sweep_directivity(
    domain: &SimulationDomain,
    density: &DensityField<f64>,
    frequencies: &[f64],
    source: &SourceSpec,
) -> Result<DirectivityMap> {
    let power = frequencies
        .par_iter()
        .map(|&f| directivity(&simulate(domain, density, f, source)?, &domain.arc))
        .collect::<Result<Vec<_>>>()?;
    DirectivityMap::new(domain.arc.angles_deg(), frequencies.to_vec(), power)
}

/// Per-frequency max-normalized directivity over a dense sweep of `band`
/// that includes `design_frequencies`.
pub fn emission_map(
    domain: &SimulationDomain,
    density: &DensityField<f64>,
    band: [f64; 2],
    sweep_n: usize,
    design_frequencies: &[f64],
    source: &SourceSpec,
) -> Result<DirectivityMap> {
    let freqs = sweep_frequencies(band, sweep_n, design_frequencies)?;
    let mut map = sweep_directivity(domain, density, &freqs, source)?;
    map.normalize();
    Ok(map)
}

/// Fully saturated colour for a hue in degrees, scaled by `value` in [0, 1].
pub fn hue_to_rgb(hue_deg: f64, value: f64) -> [u8; 3] {
    let h = hue_deg.rem_euclid(360.0) / 60.0;
    let x = 1.0 - (h % 2.0 - 1.0).abs();
    let (r, g, b) = match h as u32 {
        0 => (1.0, x, 0.0),
        1 => (x, 1.0, 0.0),
        2 => (0.0, 1.0, x),
        3 => (0.0, x, 1.0),
        4 => (x, 0.0, 1.0),
        _ => (1.0, 0.0, x),
    };
    let v = value.clamp(0.0, 1.0);
    let q = |c: f64| (c * v * 255.0).round() as u8;
    [q(r), q(g), q(b)]
}

/// Hue for a frequency: red at the lower band edge to violet at the upper.
pub fn frequency_hue(f: f64, band: [f64; 2]) -> f64 {
    if band[1] > band[0] {
        270.0 * ((f - band[0]) / (band[1] - band[0])).clamp(0.0, 1.0)
    } else {
        0.0
    }
}

/// Polar rendering of a map: angle around the bottom-centre origin, one
/// ring per frequency from the lower band edge (inside) to the upper
/// (outside); hue encodes frequency and brightness the column-normalized
/// power. Returns `(width, height, pixels)`.
pub fn render_rainbow(map: &DirectivityMap, band: [f64; 2], radius_px: usize) -> Result<(usize, usize, Vec<[u8; 3]>)> {
    if map.frequencies.is_empty() || map.angles_deg.is_empty() {
        return Err(Error::InvalidArgument("empty directivity map".into()));
    }
    if radius_px < 8 {
        return Err(Error::InvalidArgument(format!("image radius {radius_px} px too small")));
    }
    let mut m = map.clone();
    m.normalize();
    let inner = 0.25 * radius_px as f64;
    let outer = radius_px as f64;
    let width = 2 * radius_px + 1;
    let height = radius_px + 1;
    let amin = map.angles_deg[0];
    let amax = *map.angles_deg.last().unwrap();
    let nf = m.frequencies.len();
    let mut px = vec![[0u8; 3]; width * height];
    for row in 0..height {
        for col in 0..width {
            let dx = col as f64 - radius_px as f64;
            let dy = (height - 1 - row) as f64;
            let r = dx.hypot(dy);
            if r < inner || r > outer {
                continue;
            }
            let theta = dx.atan2(dy).to_degrees();
            if theta < amin || theta > amax {
                continue;
            }
            let t = (r - inner) / (outer - inner);
            let k = if nf == 1 { 0 } else { ((t * (nf - 1) as f64).round() as usize).min(nf - 1) };
            let a = nearest(&m.angles_deg, theta);
            px[col + width * row] = hue_to_rgb(frequency_hue(m.frequencies[k], band), m.power[k][a]);
        }
    }
    Ok((width, height, px))
}

fn nearest(sorted: &[f64], x: f64) -> usize {
    let i = sorted.partition_point(|&v| v < x);
    if i == 0 {
        0
    } else if i == sorted.len() {
        sorted.len() - 1
    } else if (x - sorted[i - 1]) <= (sorted[i] - x) {
        i - 1
    } else {
        i
    }
}
