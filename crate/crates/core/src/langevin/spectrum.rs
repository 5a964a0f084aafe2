use std::path::Path;

use serde::Serialize;

use super::{assemble_and_solve, mechanical_peak, observable_spectrum, NoiseBasis, Observable};
use crate::error::{Error, Result};
use crate::model::{CavityParams, FeedbackConfig, MechanicsParams, C64};
use crate::numeric::lsq::levenberg_marquardt;
use crate::par::{self, Exec};
use crate::units::{rad_to_hz, TWO_PI};

/// Sampled real spectrum on an increasing angular-frequency grid.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Spectrum {
    pub omega: Vec<f64>,
    pub value: Vec<f64>,
}

impl Spectrum {
    pub fn new(omega: Vec<f64>, value: Vec<f64>) -> Result<Self> {
        if omega.len() != value.len() || omega.len() < 3 {
            return Err(Error::invalid(
                "spectrum",
                "need >= 3 samples with matching lengths",
            ));
        }
        if omega.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid(
                "spectrum",
                "frequencies must be strictly increasing",
            ));
        }
        Ok(Self { omega, value })
    }

    /// Trapezoid area `∫ (S - floor) dω / 2π`.
    pub fn variance(&self, floor: f64) -> f64 {
        let terms = self
            .omega
            .windows(2)
            .zip(self.value.windows(2))
            .map(|(w, v)| 0.5 * (w[1] - w[0]) * (v[0] + v[1] - 2.0 * floor));
        par::compensated_sum(terms) / TWO_PI
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            omega: self.omega.clone(),
            value: self.value.iter().map(|v| v * factor).collect(),
        }
    }
}

/// Position spectrum `S_xx` (units of x_zpf²/(rad/s)) over `band`, with
/// half the samples packed around the mechanical resonance.
pub fn displacement_spectrum(
    p: &CavityParams,
    m: &MechanicsParams,
    fb: &FeedbackConfig,
    band: (f64, f64),
    points: usize,
    exec: Exec,
) -> Result<Spectrum> {
    let (lo, hi) = band;
    if !(lo < hi) || points < 8 {
        return Err(Error::invalid("band", "need lo < hi and at least 8 points"));
    }
    let (we, ge) = mechanical_peak(p, m, fb)?;
    if !(ge > 0.0) {
        return Err(Error::OptomechanicallyUnstable {
            gamma_opt: ge - m.gamma_m,
            neg_gamma_m: -m.gamma_m,
        });
    }
    let half = ge / 2.0;
    let (ua, ub) = (((lo - we) / half).atan(), ((hi - we) / half).atan());
    let n_tan = points / 2;
    let mut grid: Vec<f64> = (0..n_tan)
        .map(|i| we + half * (ua + (ub - ua) * (i as f64 + 0.5) / n_tan as f64).tan())
        .chain((0..points - n_tan).map(|i| lo + (hi - lo) * i as f64 / (points - n_tan - 1) as f64))
        .filter(|w| *w >= lo && *w <= hi)
        .collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let basis = NoiseBasis::new(m.n_th);
    let values: Result<Vec<f64>> = par::map(exec, &grid, |&w| {
        let a = assemble_and_solve(p, m, fb, w)?;
        let b = assemble_and_solve(p, m, fb, -w)?;
        Ok(observable_spectrum(&a, &b, &basis, Observable::Position))
    })
    .into_iter()
    .collect();
    Spectrum::new(grid, values?)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LorentzianFit {
    pub omega_eff: f64,
    pub gamma_eff: f64,
    /// `∫ (S - background) dω / 2π` of the fitted peak.
    pub area: f64,
    pub background: f64,
    pub residual_norm: f64,
}

/// Least-squares Lorentzian (plus flat background) through a single peak.
pub fn lorentzian_extract(s: &Spectrum) -> Result<LorentzianFit> {
    let (imax, &vmax) = s
        .value
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .ok_or_else(|| Error::FitFailed("empty spectrum".into()))?;
    let vmin = s.value.iter().copied().fold(f64::INFINITY, f64::min);
    let h0 = vmax - vmin;
    if !(h0 > 0.0) || imax == 0 || imax == s.value.len() - 1 {
        return Err(Error::FitFailed("no interior peak".into()));
    }
    let c0 = s.omega[imax];
    let above: Vec<f64> = s
        .omega
        .iter()
        .zip(&s.value)
        .filter(|(_, v)| **v > vmin + 0.5 * h0)
        .map(|(w, _)| *w)
        .collect();
    let g0 =
        (above.last().unwrap() - above.first().unwrap()).max(s.omega[imax + 1] - s.omega[imax - 1]);

    for i in 1..s.value.len() - 1 {
        let v = s.value[i];
        if v > s.value[i - 1]
            && v >= s.value[i + 1]
            && (s.omega[i] - c0).abs() > 5.0 * g0
            && v - vmin > 0.1 * h0
        {
            return Err(Error::FitFailed(format!(
                "second peak at {:.6e} rad/s",
                s.omega[i]
            )));
        }
    }

    // p = [height, background, centre offset / g0, width / g0], values scaled by h0
    let ys: Vec<f64> = s.value.iter().map(|v| v / h0).collect();
    let xs = &s.omega;
    let model = |p: &[f64], w: f64| {
        let c = c0 + g0 * p[2];
        let half = 0.5 * g0 * p[3];
        let u = (w - c) / half;
        (p[0] / (1.0 + u * u), u, half)
    };
    let residuals = |p: &[f64]| -> Vec<f64> {
        xs.iter()
            .zip(&ys)
            .map(|(&w, &y)| model(p, w).0 + p[1] - y)
            .collect()
    };
    let jacobian = |p: &[f64]| -> Vec<Vec<f64>> {
        xs.iter()
            .map(|&w| {
                let (_, u, half) = model(p, w);
                let d = 1.0 / (1.0 + u * u);
                let dl_du = -2.0 * p[0] * u * d * d;
                vec![d, 1.0, dl_du * (-g0 / half), dl_du * (-u / p[3])]
            })
            .collect()
    };
    let fit = levenberg_marquardt(vec![1.0, vmin / h0, 0.0, 1.0], residuals, jacobian, 500)?;
    let p = &fit.params;
    if !(p[3] > 0.0) || !(p[0] > 0.0) {
        return Err(Error::FitFailed("non-physical fit parameters".into()));
    }
    let gamma = g0 * p[3];
    let height = p[0] * h0;
    Ok(LorentzianFit {
        omega_eff: c0 + g0 * p[2],
        gamma_eff: gamma,
        area: height * std::f64::consts::PI * gamma / 2.0 / TWO_PI,
        background: p[1] * h0,
        residual_norm: fit.residual_norm * h0,
    })
}

/// Temperature inferred by scaling a reference temperature with the ratio of
/// floor-subtracted variances.
pub fn equipartition_temperature(
    s: &Spectrum,
    reference: &Spectrum,
    t_ref: f64,
    floor: f64,
) -> Result<f64> {
    let same = |a: f64, b: f64| (a - b).abs() <= 1e-9 * a.abs().max(b.abs());
    if !same(s.omega[0], reference.omega[0])
        || !same(*s.omega.last().unwrap(), *reference.omega.last().unwrap())
    {
        return Err(Error::invalid("band", "spectra must share a band"));
    }
    let (v, r) = (s.variance(floor), reference.variance(floor));
    if !(v > 0.0) || !(r > 0.0) {
        return Err(Error::InconsistentMeasurement(format!(
            "non-positive variance after floor subtraction ({v:e}, reference {r:e})"
        )));
    }
    Ok(t_ref * v / r)
}

fn io_err(path: &Path, e: impl Into<std::io::Error>) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source: e.into(),
    }
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: e.to_string(),
    }
}

/// `omega_hz,value` export.
pub fn write_spectrum_csv(path: &Path, s: &Spectrum) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(["omega_hz", "value"])
        .map_err(|e| csv_err(path, e))?;
    for (o, v) in s.omega.iter().zip(&s.value) {
        w.write_record([format!("{:.17e}", rad_to_hz(*o)), format!("{v:.17e}")])
            .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// `omega_hz,re,im` export for complex transfer functions.
pub fn write_complex_csv(path: &Path, omega: &[f64], values: &[C64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(["omega_hz", "re", "im"])
        .map_err(|e| csv_err(path, e))?;
    for (o, v) in omega.iter().zip(values) {
        w.write_record([
            format!("{:.17e}", rad_to_hz(*o)),
            format!("{:.17e}", v.re),
            format!("{:.17e}", v.im),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

pub fn read_spectrum_csv(path: &Path) -> Result<Spectrum> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let headers = r.headers().map_err(|e| csv_err(path, e))?.clone();
    if headers.iter().collect::<Vec<_>>() != ["omega_hz", "value"] {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: "expected header omega_hz,value".into(),
        });
    }
    let (mut omega, mut value) = (Vec::new(), Vec::new());
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let parse = |j: usize| -> Result<f64> {
            rec.get(j)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| Error::Parse {
                    path: path.to_path_buf(),
                    line: i + 2,
                    message: format!("column {} is not a number", j + 1),
                })
        };
        omega.push(parse(0)? * TWO_PI);
        value.push(parse(1)?);
    }
    Spectrum::new(omega, value)
}
