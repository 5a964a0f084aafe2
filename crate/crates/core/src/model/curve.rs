use serde::Serialize;

use super::C64;
use crate::error::{Error, Result};

/// Sampled complex function of angular frequency.
///
/// Interpolation is linear in `(unwrapped phase, ln |value|)` between samples.
/// Evaluation outside the sampled band is an error. For one-sided curves
/// (all samples at positive frequency) negative frequencies are served by the
/// reflection rule `value(-w) = value(w)*`.
#[derive(Clone, Debug, Serialize)]
pub struct TransferCurve {
    omega: Vec<f64>,
    log_mag: Vec<f64>,
    phase: Vec<f64>,
}

impl TransferCurve {
    pub fn new(samples: Vec<(f64, C64)>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::invalid(
                "samples",
                "a transfer curve needs at least two samples",
            ));
        }
        let mut omega = Vec::with_capacity(samples.len());
        let mut log_mag = Vec::with_capacity(samples.len());
        let mut phase: Vec<f64> = Vec::with_capacity(samples.len());
        for (i, &(w, v)) in samples.iter().enumerate() {
            if !w.is_finite() || !v.re.is_finite() || !v.im.is_finite() {
                return Err(Error::invalid(
                    "samples",
                    format!("non-finite sample at index {i}"),
                ));
            }
            if let Some(&prev) = omega.last() {
                if w <= prev {
                    return Err(Error::invalid(
                        "samples",
                        format!("frequency not strictly increasing at index {i}"),
                    ));
                }
            }
            let mag = v.norm();
            if mag == 0.0 {
                return Err(Error::invalid(
                    "samples",
                    format!("zero magnitude at index {i}"),
                ));
            }
            omega.push(w);
            log_mag.push(mag.ln());
            phase.push(v.arg());
        }
        unwrap_phase(&mut phase);
        Ok(Self {
            omega,
            log_mag,
            phase,
        })
    }

    pub fn from_polar(omega: &[f64], magnitude: &[f64], phase: &[f64]) -> Result<Self> {
        let samples = omega
            .iter()
            .zip(magnitude)
            .zip(phase)
            .map(|((&w, &m), &p)| (w, C64::from_polar(m, p)))
            .collect();
        Self::new(samples)
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.omega[0], *self.omega.last().unwrap())
    }

    pub fn is_one_sided(&self) -> bool {
        self.omega[0] > 0.0
    }

    pub fn len(&self) -> usize {
        self.omega.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omega.is_empty()
    }

    pub fn omegas(&self) -> &[f64] {
        &self.omega
    }

    /// Unwrapped phase at the stored samples.
    pub fn unwrapped_phase(&self) -> &[f64] {
        &self.phase
    }

    pub fn samples(&self) -> impl Iterator<Item = (f64, C64)> + '_ {
        self.omega
            .iter()
            .zip(self.log_mag.iter().zip(&self.phase))
            .map(|(&w, (&lm, &ph))| (w, C64::from_polar(lm.exp(), ph)))
    }

    pub fn eval(&self, w: f64) -> Result<C64> {
        let (lo, hi) = self.domain();
        if w >= lo && w <= hi {
            return Ok(self.interp(w));
        }
        if self.is_one_sided() && -w >= lo && -w <= hi {
            return Ok(self.interp(-w).conj());
        }
        Err(Error::OutOfDomain { omega: w, lo, hi })
    }

    fn interp(&self, w: f64) -> C64 {
        let k = self.omega.partition_point(|&x| x <= w);
        let (i, j) = if k == 0 {
            (0, 1)
        } else if k >= self.omega.len() {
            (self.omega.len() - 2, self.omega.len() - 1)
        } else {
            (k - 1, k)
        };
        let t = (w - self.omega[i]) / (self.omega[j] - self.omega[i]);
        let lm = self.log_mag[i] + t * (self.log_mag[j] - self.log_mag[i]);
        let ph = self.phase[i] + t * (self.phase[j] - self.phase[i]);
        C64::from_polar(lm.exp(), ph)
    }
}

/// Remove 2pi jumps so adjacent samples differ by less than pi.
pub fn unwrap_phase(phase: &mut [f64]) {
    use std::f64::consts::{PI, TAU};
    for i in 1..phase.len() {
        let mut d = phase[i] - phase[i - 1];
        while d > PI {
            phase[i] -= TAU;
            d -= TAU;
        }
        while d < -PI {
            phase[i] += TAU;
            d += TAU;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn delay_curve() -> TransferCurve {
        let tau = 1e-6;
        let samples = (1..=200).map(|k| {
            let w = k as f64 * 1e4;
            (w, C64::from_polar(2.0, w * tau))
        });
        TransferCurve::new(samples.collect()).unwrap()
    }

    #[test]
    fn exact_at_nodes_and_linear_phase_between() {
        let c = delay_curve();
        let v = c.eval(1.5e4).unwrap();
        assert!((v - C64::from_polar(2.0, 1.5e-2)).norm() < 1e-14);
        // phase wraps several times over the band; interpolation follows the unwrapped branch
        let v = c.eval(1.995e6).unwrap();
        assert!((v - C64::from_polar(2.0, 1.995)).norm() < 1e-12);
    }

    #[test]
    fn conjugate_reflection() {
        let c = delay_curve();
        let a = c.eval(5.5e4).unwrap();
        let b = c.eval(-5.5e4).unwrap();
        assert_eq!(a.conj(), b);
    }

    #[test]
    fn out_of_domain_is_error() {
        let c = delay_curve();
        assert!(matches!(c.eval(5e3), Err(Error::OutOfDomain { .. })));
        assert!(matches!(c.eval(3e6), Err(Error::OutOfDomain { .. })));
        assert!(matches!(c.eval(0.0), Err(Error::OutOfDomain { .. })));
    }

    #[test]
    fn rejects_non_monotone() {
        let s = vec![(1.0, C64::new(1.0, 0.0)), (1.0, C64::new(1.0, 0.0))];
        assert!(TransferCurve::new(s).is_err());
    }
}
