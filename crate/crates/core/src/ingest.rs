//! Measured open-loop Bode traces and spectra.

use std::fs::File;
use std::io::Read;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::langevin::Spectrum;
use crate::model::{
    cavity_susceptibility, input_phase_shifts, unwrap_phase, CavityParams, GainModel, Port,
    TransferCurve, C64,
};
use crate::units::{hz_to_rad, rad_to_hz};

pub const BODE_HEADER: [&str; 3] = ["frequency_hz", "magnitude_db", "phase_rad"];
pub const SPECTRUM_HEADER: [&str; 2] = ["frequency_hz", "psd"];
/// Samples where the cavity factor is smaller than this are not divided.
pub const MIN_CAVITY_RESPONSE: f64 = 1e-6;
pub const MAX_DROPPED_FRACTION: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BodePoint {
    pub frequency_hz: f64,
    pub magnitude_db: f64,
    /// Unwrapped.
    pub phase_rad: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct BodeTrace {
    pub points: Vec<BodePoint>,
    pub source: String,
}

impl BodeTrace {
    /// Trace from complex samples at positive frequencies (Hz).
    pub fn from_complex(source: &str, frequency_hz: &[f64], values: &[C64]) -> Result<Self> {
        if frequency_hz.len() != values.len() {
            return Err(Error::invalid("values", "one value per frequency"));
        }
        let mut phase: Vec<f64> = values.iter().map(|v| v.arg()).collect();
        unwrap_phase(&mut phase);
        let points = frequency_hz
            .iter()
            .zip(values)
            .zip(phase)
            .map(|((&f, v), ph)| BodePoint {
                frequency_hz: f,
                magnitude_db: 20.0 * v.norm().log10(),
                phase_rad: ph,
            })
            .collect();
        let t = BodeTrace {
            points,
            source: source.to_string(),
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.is_empty() {
            return Err(Error::invalid("trace", "empty trace"));
        }
        for (i, p) in self.points.iter().enumerate() {
            if !(p.frequency_hz > 0.0) || !p.magnitude_db.is_finite() || !p.phase_rad.is_finite() {
                return Err(Error::invalid("trace", format!("bad sample at index {i}")));
            }
            if i > 0 {
                let prev = &self.points[i - 1];
                if p.frequency_hz <= prev.frequency_hz {
                    return Err(Error::invalid(
                        "trace",
                        format!("frequency not increasing at index {i}"),
                    ));
                }
                if (p.phase_rad - prev.phase_rad).abs() >= std::f64::consts::PI {
                    return Err(Error::invalid(
                        "trace",
                        format!("phase jump of pi or more at index {i}"),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn omegas(&self) -> Vec<f64> {
        self.points
            .iter()
            .map(|p| hz_to_rad(p.frequency_hz))
            .collect()
    }

    pub fn complex(&self) -> Vec<C64> {
        self.points
            .iter()
            .map(|p| C64::from_polar(10f64.powf(p.magnitude_db / 20.0), p.phase_rad))
            .collect()
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
        w.write_record(BODE_HEADER).map_err(|e| csv_io(path, e))?;
        for p in &self.points {
            w.write_record([
                p.frequency_hz.to_string(),
                p.magnitude_db.to_string(),
                p.phase_rad.to_string(),
            ])
            .map_err(|e| csv_io(path, e))?;
        }
        w.flush().map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

fn csv_io(path: &Path, e: csv::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source: std::io::Error::other(e),
    }
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Rows of a numeric CSV with a fixed header; `#` lines are comments.
fn read_table<R: Read>(
    reader: R,
    source: &Path,
    header: &[&str],
) -> Result<Vec<(usize, Vec<f64>)>> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: source.to_path_buf(),
        line,
        message,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .has_headers(true)
        .from_reader(reader);
    let found = rdr
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .clone();
    if found.is_empty() {
        return Err(parse_err(1, "empty file".into()));
    }
    if found.iter().ne(header.iter().copied()) {
        return Err(parse_err(
            1,
            format!(
                "expected header `{}`, found `{}`",
                header.join(","),
                found.iter().collect::<Vec<_>>().join(",")
            ),
        ));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            parse_err(line, e.to_string())
        })?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        if rec.len() != header.len() {
            return Err(parse_err(
                line,
                format!("expected {} fields, found {}", header.len(), rec.len()),
            ));
        }
        let mut vals = Vec::with_capacity(header.len());
        for (field, name) in rec.iter().zip(header) {
            if field.is_empty() {
                return Err(parse_err(line, format!("empty `{name}` field")));
            }
            let v: f64 = field
                .parse()
                .map_err(|_| parse_err(line, format!("`{name}` is not a number: `{field}`")))?;
            if !v.is_finite() {
                return Err(parse_err(line, format!("`{name}` is not finite")));
            }
            vals.push(v);
        }
        rows.push((line, vals));
    }
    if rows.is_empty() {
        return Err(parse_err(1, "no data rows".into()));
    }
    let mut prev: Option<f64> = None;
    for (line, vals) in &rows {
        let f = vals[0];
        if !(f > 0.0) {
            return Err(parse_err(
                *line,
                format!("frequency must be positive, got {f}"),
            ));
        }
        if let Some(p) = prev {
            if f <= p {
                return Err(parse_err(
                    *line,
                    format!("frequency {f} does not increase (previous {p})"),
                ));
            }
        }
        prev = Some(f);
    }
    Ok(rows)
}

pub fn parse_bode(path: &Path) -> Result<BodeTrace> {
    parse_bode_reader(open(path)?, path)
}

pub fn parse_bode_reader<R: Read>(reader: R, source: &Path) -> Result<BodeTrace> {
    let rows = read_table(reader, source, &BODE_HEADER)?;
    let mut phase: Vec<f64> = rows.iter().map(|(_, v)| v[2]).collect();
    unwrap_phase(&mut phase);
    let points = rows
        .iter()
        .zip(phase)
        .map(|((_, v), ph)| BodePoint {
            frequency_hz: v[0],
            magnitude_db: v[1],
            phase_rad: ph,
        })
        .collect();
    Ok(BodeTrace {
        points,
        source: source.display().to_string(),
    })
}

/// Spectrum in rad/s; the psd column is kept as given.
pub fn parse_spectrum(path: &Path) -> Result<Spectrum> {
    parse_spectrum_reader(open(path)?, path)
}

pub fn parse_spectrum_reader<R: Read>(reader: R, source: &Path) -> Result<Spectrum> {
    let rows = read_table(reader, source, &SPECTRUM_HEADER)?;
    for (line, v) in &rows {
        if v[1] < 0.0 {
            return Err(Error::Parse {
                path: source.to_path_buf(),
                line: *line,
                message: format!("negative psd {}", v[1]),
            });
        }
    }
    Spectrum::new(
        rows.iter().map(|(_, v)| hz_to_rad(v[0])).collect(),
        rows.iter().map(|(_, v)| v[1]).collect(),
    )
}

/// Cavity part of the open-loop response seen by the electronics.
///
/// Transmission: `sqrt(κ₀κ₁)/κ · χ(ω) e^{−iθ}`. Reflection: `(κ₀/κ) χ(ω) e^{−iθ̄} − 1`.
pub fn cavity_form(p: &CavityParams, port: Port, omega: f64) -> C64 {
    let (theta, theta_bar) = input_phase_shifts(p);
    let chi = cavity_susceptibility(p, omega);
    let k = p.kappa();
    match port {
        Port::Transmission => (p.kappa0 * p.kappa1).sqrt() / k * chi * C64::from_polar(1.0, -theta),
        Port::Reflection => p.kappa0 / k * chi * C64::from_polar(1.0, -theta_bar) - 1.0,
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Decomposition {
    pub gain: GainModel,
    /// Frequencies (Hz) skipped because the cavity factor vanished there.
    pub dropped_hz: Vec<f64>,
    pub source: String,
}

/// Divide the trace by the cavity factor, leaving the electronic filter.
/// Any detection efficiency stays inside the recovered filter.
pub fn decompose_electronic_filter(
    trace: &BodeTrace,
    p: &CavityParams,
    port: Port,
) -> Result<Decomposition> {
    trace.validate()?;
    p.validate()?;
    let mut samples = Vec::with_capacity(trace.len());
    let mut dropped_hz = Vec::new();
    for (w, t) in trace.omegas().into_iter().zip(trace.complex()) {
        let c = cavity_form(p, port, w);
        if c.norm() < MIN_CAVITY_RESPONSE {
            dropped_hz.push(rad_to_hz(w));
        } else {
            samples.push((w, t / c));
        }
    }
    if dropped_hz.len() as f64 > MAX_DROPPED_FRACTION * trace.len() as f64 {
        return Err(Error::InconsistentMeasurement(format!(
            "cavity response below {MIN_CAVITY_RESPONSE:e} at {} of {} samples",
            dropped_hz.len(),
            trace.len()
        )));
    }
    Ok(Decomposition {
        gain: GainModel::tabulated(TransferCurve::new(samples)?)?,
        dropped_hz,
        source: trace.source.clone(),
    })
}

/// Open-loop trace of `gain` times the cavity factor at the given frequencies.
pub fn compose(
    gain: &GainModel,
    p: &CavityParams,
    port: Port,
    frequency_hz: &[f64],
) -> Result<BodeTrace> {
    let values = frequency_hz
        .iter()
        .map(|&f| {
            let w = hz_to_rad(f);
            gain.eval(w).map(|g| g * cavity_form(p, port, w))
        })
        .collect::<Result<Vec<_>>>()?;
    BodeTrace::from_complex("composed", frequency_hz, &values)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PhaseFit {
    /// Slope of the unwrapped phase (s); positive for `e^{iωτ}`.
    pub delay: f64,
    pub intercept: f64,
    pub rms_residual: f64,
    pub samples: usize,
}

/// Straight-line fit of the unwrapped filter phase over `band` (rad/s).
pub fn linear_phase_fit(filter: &TransferCurve, band: (f64, f64)) -> Result<PhaseFit> {
    let pts: Vec<(f64, f64)> = filter
        .omegas()
        .iter()
        .zip(filter.unwrapped_phase())
        .filter(|(w, _)| **w >= band.0 && **w <= band.1)
        .map(|(&w, &ph)| (w, ph))
        .collect();
    if pts.len() < 10 {
        return Err(Error::InsufficientParameters(format!(
            "{} samples in band, need at least 10",
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rms = (pts
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    Ok(PhaseFit {
        delay: slope,
        intercept,
        rms_residual: rms,
        samples: pts.len(),
    })
}

pub fn delay_from_phase(filter: &TransferCurve, band: (f64, f64)) -> Result<f64> {
    linear_phase_fit(filter, band).map(|f| f.delay)
}

/// Lowest frequency (rad/s) where `|filter|` climbs to `1/√2` of its maximum.
pub fn high_pass_corner(filter: &TransferCurve) -> Result<f64> {
    let s: Vec<(f64, f64)> = filter.samples().map(|(w, v)| (w, v.norm())).collect();
    let peak = s.iter().map(|x| x.1).fold(0.0, f64::max);
    let level = peak / std::f64::consts::SQRT_2;
    if s[0].1 >= level {
        return Err(Error::InconsistentMeasurement(
            "no high-pass corner inside the trace".into(),
        ));
    }
    let i = s
        .iter()
        .position(|x| x.1 >= level)
        .expect("peak reaches the level");
    let (a, b) = (s[i - 1], s[i]);
    let t = (level.ln() - a.1.ln()) / (b.1.ln() - a.1.ln());
    Ok((a.0.ln() + t * (b.0.ln() - a.0.ln())).exp())
}

/// First-order high-pass with a pure delay: `A · iω/(ω_c + iω) · e^{i(ωτ + offset)}`.
pub fn high_pass_filter(amplitude: f64, corner: f64, delay: f64, offset: f64, omega: f64) -> C64 {
    let hp = C64::new(0.0, omega) / C64::new(corner, omega);
    amplitude * hp * C64::from_polar(1.0, omega * delay + offset)
}

/// Noise-free open-loop trace of the experiment-like filter, for tests and demos.
pub fn synthetic_trace(
    p: &CavityParams,
    port: Port,
    frequency_hz: &[f64],
    corner: f64,
    delay: f64,
) -> Result<BodeTrace> {
    let values: Vec<C64> = frequency_hz
        .iter()
        .map(|&f| {
            let w = hz_to_rad(f);
            high_pass_filter(1.0, corner, delay, 0.0, w) * cavity_form(p, port, w)
        })
        .collect();
    BodeTrace::from_complex("synthetic", frequency_hz, &values)
}
