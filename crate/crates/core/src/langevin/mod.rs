//! Exact frequency-domain solution of the closed-loop linearised system.
//!
//! Unknowns are `(a, a†, b, b†, i_fb)`; each is written as a linear map of the
//! nine input noises in [`NoiseBasis`].

mod occupancy;
mod spectrum;

pub use occupancy::{
    mechanical_peak, phonon_occupancy, phonon_occupancy_detailed, OccupancyResult, QuadratureConfig,
};
pub use spectrum::{
    displacement_spectrum, equipartition_temperature, lorentzian_extract, read_spectrum_csv,
    write_complex_csv, write_spectrum_csv, LorentzianFit, Spectrum,
};

use nalgebra::{SMatrix, SVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{input_phase_shifts, CavityParams, FeedbackConfig, MechanicsParams, Port, C64};

pub const NOISE_LABELS: [&str; 9] = [
    "a_in0",
    "a_in0_conj",
    "a_in1",
    "a_in1_conj",
    "a_prime",
    "a_prime_conj",
    "b_in",
    "b_in_conj",
    "x_vac",
];

/// Input-noise ordering and their (frequency independent) correlations.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NoiseBasis {
    pub labels: [&'static str; 9],
    pub correlator: [[f64; 9]; 9],
}

impl NoiseBasis {
    pub fn new(n_th: f64) -> Self {
        let mut c = [[0.0; 9]; 9];
        c[0][1] = 1.0;
        c[2][3] = 1.0;
        c[4][5] = 1.0;
        c[6][7] = n_th + 1.0;
        c[7][6] = n_th;
        c[8][8] = 1.0;
        Self {
            labels: NOISE_LABELS,
            correlator: c,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "angle")]
pub enum Observable {
    A,
    ADag,
    B,
    BDag,
    Ifb,
    /// Field leaving the first (input) mirror.
    AOut0,
    AOut0Dag,
    /// Field leaving the second mirror.
    AOut1,
    AOut1Dag,
    /// `b + b†` (position in units of x_zpf).
    Position,
    /// `a e^{-iφ} + a† e^{iφ}`.
    CavityQuadrature(f64),
}

impl Observable {
    /// Hermitian-conjugate partner.
    pub fn partner(self) -> Self {
        use Observable::*;
        match self {
            A => ADag,
            ADag => A,
            B => BDag,
            BDag => B,
            AOut0 => AOut0Dag,
            AOut0Dag => AOut0,
            AOut1 => AOut1Dag,
            AOut1Dag => AOut1,
            o => o,
        }
    }
}

/// Transfer coefficients of the five unknowns at one frequency.
#[derive(Clone, Debug)]
pub struct TransferRows {
    pub omega: f64,
    /// Rows in order `(a, a†, b, b†, i_fb)`.
    pub k: SMatrix<C64, 5, 9>,
    gain: C64,
    theta: f64,
    theta_bar: f64,
    kappa0: f64,
    kappa1: f64,
}

type Row = SVector<C64, 9>;

fn unit(j: usize) -> Row {
    let mut r = Row::zeros();
    r[j] = C64::new(1.0, 0.0);
    r
}

impl TransferRows {
    fn base(&self, i: usize) -> Row {
        self.k.row(i).transpose()
    }

    /// Coefficients mapping the noise inputs to `obs` at this frequency.
    pub fn row(&self, obs: Observable) -> [C64; 9] {
        use Observable::*;
        let e = |x: f64| C64::from_polar(1.0, x);
        let r = match obs {
            A => self.base(0),
            ADag => self.base(1),
            B => self.base(2),
            BDag => self.base(3),
            Ifb => self.base(4),
            AOut0 => {
                (self.base(0) * ((2.0 * self.kappa0).sqrt() * e(self.theta))
                    - unit(0)
                    - self.base(4) * self.gain)
                    * e(-self.theta_bar)
            }
            AOut0Dag => {
                (self.base(1) * ((2.0 * self.kappa0).sqrt() * e(-self.theta))
                    - unit(1)
                    - self.base(4) * self.gain)
                    * e(self.theta_bar)
            }
            AOut1 => self.base(0) * C64::from((2.0 * self.kappa1).sqrt()) - unit(2),
            AOut1Dag => self.base(1) * C64::from((2.0 * self.kappa1).sqrt()) - unit(3),
            Position => self.base(2) + self.base(3),
            CavityQuadrature(phi) => self.base(0) * e(-phi) + self.base(1) * e(phi),
        };
        let mut out = [C64::new(0.0, 0.0); 9];
        out.copy_from_slice(r.as_slice());
        out
    }
}

/// Build and solve the 5x5 system at `omega`.
pub fn assemble_and_solve(
    p: &CavityParams,
    m: &MechanicsParams,
    fb: &FeedbackConfig,
    omega: f64,
) -> Result<TransferRows> {
    let (mm, nn, gain, theta, theta_bar) = assemble(p, m, fb, omega)?;
    let lu = mm.lu();
    let k = lu.solve(&nn).ok_or(Error::SingularSystem { omega })?;
    if k.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::SingularSystem { omega });
    }
    Ok(TransferRows {
        omega,
        k,
        gain,
        theta,
        theta_bar,
        kappa0: p.kappa0,
        kappa1: p.kappa1,
    })
}

type System = (SMatrix<C64, 5, 5>, SMatrix<C64, 5, 9>, C64, f64, f64);

fn assemble(p: &CavityParams, m: &MechanicsParams, fb: &FeedbackConfig, w: f64) -> Result<System> {
    let c = |re: f64, im: f64| C64::new(re, im);
    let e = |x: f64| C64::from_polar(1.0, x);
    let i = c(0.0, 1.0);
    let (theta, theta_bar) = input_phase_shifts(p);
    let gw = if fb.gain.is_off() {
        c(0.0, 0.0)
    } else {
        fb.gain.eval(w)?
    };
    let k = p.kappa();
    let g = m.coupling;
    let s0 = (2.0 * p.kappa0).sqrt();
    let s1 = (2.0 * p.kappa1).sqrt();
    let sp = (2.0 * p.kappa_prime).sqrt();

    let mut mm = SMatrix::<C64, 5, 5>::zeros();
    let mut nn = SMatrix::<C64, 5, 9>::zeros();

    mm[(0, 0)] = c(k, p.detuning - w);
    mm[(0, 2)] = -i * g;
    mm[(0, 3)] = -i * g;
    mm[(0, 4)] = -s0 * gw * e(-theta);
    nn[(0, 0)] = s0 * e(-theta);
    nn[(0, 2)] = c(s1, 0.0);
    nn[(0, 4)] = c(sp, 0.0);

    mm[(1, 1)] = c(k, -(p.detuning + w));
    mm[(1, 2)] = i * g;
    mm[(1, 3)] = i * g;
    mm[(1, 4)] = -s0 * gw * e(theta);
    nn[(1, 1)] = s0 * e(theta);
    nn[(1, 3)] = c(s1, 0.0);
    nn[(1, 5)] = c(sp, 0.0);

    mm[(2, 2)] = c(m.gamma_m / 2.0, m.omega_m - w);
    mm[(2, 0)] = -i * g;
    mm[(2, 1)] = -i * g;
    nn[(2, 6)] = c(m.gamma_m.sqrt(), 0.0);

    mm[(3, 3)] = c(m.gamma_m / 2.0, -(m.omega_m + w));
    mm[(3, 0)] = i * g;
    mm[(3, 1)] = i * g;
    nn[(3, 7)] = c(m.gamma_m.sqrt(), 0.0);

    // i = sqrt(eta) (a_out e^{iφ} + a_out† e^{-iφ}) + sqrt(1 - eta) x_vac
    let se = fb.eta.sqrt();
    let ep = e(fb.phi);
    mm[(4, 4)] = c(1.0, 0.0);
    nn[(4, 8)] = c((1.0 - fb.eta).max(0.0).sqrt(), 0.0);
    match fb.port {
        Port::Reflection => {
            mm[(4, 0)] = -se * ep * s0 * e(theta - theta_bar);
            mm[(4, 1)] = -se * ep.conj() * s0 * e(theta_bar - theta);
            mm[(4, 4)] += se * gw * (ep * e(-theta_bar) + ep.conj() * e(theta_bar));
            nn[(4, 0)] = -se * ep * e(-theta_bar);
            nn[(4, 1)] = -se * ep.conj() * e(theta_bar);
        }
        Port::Transmission => {
            mm[(4, 0)] = -se * ep * s1;
            mm[(4, 1)] = -se * ep.conj() * s1;
            nn[(4, 2)] = -se * ep;
            nn[(4, 3)] = -se * ep.conj();
        }
    }
    Ok((mm, nn, gw, theta, theta_bar))
}

/// Largest relative residual `|M K - N| / (|M||K| + |N|)` of a solve.
pub fn solve_residual(
    p: &CavityParams,
    m: &MechanicsParams,
    fb: &FeedbackConfig,
    rows: &TransferRows,
) -> Result<f64> {
    let (mm, nn, ..) = assemble(p, m, fb, rows.omega)?;
    let r = mm * rows.k - nn;
    Ok(r.norm() / (mm.norm() * rows.k.norm() + nn.norm()))
}

/// Cross spectrum `S_{O1 O2}(ω) = K_{O1}(ω) C K_{O2}(-ω)`.
pub fn cross_spectrum(
    at_w: &TransferRows,
    at_minus_w: &TransferRows,
    basis: &NoiseBasis,
    o1: Observable,
    o2: Observable,
) -> C64 {
    let r1 = at_w.row(o1);
    let r2 = at_minus_w.row(o2);
    let mut acc = C64::new(0.0, 0.0);
    for (j, cj) in basis.correlator.iter().enumerate() {
        for (l, &cjl) in cj.iter().enumerate() {
            if cjl != 0.0 {
                acc += r1[j] * cjl * r2[l];
            }
        }
    }
    acc
}

/// `S_O(ω)`, pairing `O` at ω with its conjugate partner at -ω.
pub fn observable_spectrum(
    at_w: &TransferRows,
    at_minus_w: &TransferRows,
    basis: &NoiseBasis,
    obs: Observable,
) -> f64 {
    cross_spectrum(at_w, at_minus_w, basis, obs, obs.partner()).re
}

/// Convenience: solve at ±ω and return `S_O(ω)`.
pub fn spectrum_at(
    p: &CavityParams,
    m: &MechanicsParams,
    fb: &FeedbackConfig,
    obs: Observable,
    omega: f64,
) -> Result<f64> {
    let a = assemble_and_solve(p, m, fb, omega)?;
    let b = assemble_and_solve(p, m, fb, -omega)?;
    Ok(observable_spectrum(&a, &b, &NoiseBasis::new(m.n_th), obs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cooling::cavity_quadrature_spectrum;
    use crate::feedback::{squash_spectrum, with_normalized_gain};
    use crate::model::{zeta_out, GainModel};
    use crate::units::hz_to_rad;

    fn cav() -> CavityParams {
        let k = hz_to_rad(21.5e3);
        let kp = hz_to_rad(1.35e3);
        CavityParams::new((k - kp) / 2.0, (k - kp) / 2.0, kp, hz_to_rad(330e3)).unwrap()
    }

    fn mech(g: f64) -> MechanicsParams {
        MechanicsParams::new(hz_to_rad(343.13e3), hz_to_rad(1.18), 1e3, g).unwrap()
    }

    fn loops() -> Vec<FeedbackConfig> {
        let p = cav();
        let t = FeedbackConfig::new(
            Port::Transmission,
            0.3,
            0.6,
            GainModel::flat(1.0, 750e-9, -3.6478795204733436),
        )
        .unwrap();
        let t = with_normalized_gain(&p, &t, 0.7).unwrap();
        let r = FeedbackConfig::new(
            Port::Reflection,
            -0.8,
            0.4,
            GainModel::flat(0.2, 300e-9, 0.5),
        )
        .unwrap();
        vec![FeedbackConfig::off(), t, r]
    }

    #[test]
    fn decoupled_oscillator_row() {
        let p = cav();
        let m = mech(0.0);
        let w = 2.1e6;
        let rows = assemble_and_solve(&p, &m, &FeedbackConfig::off(), w).unwrap();
        let b = rows.row(Observable::B);
        let expect = m.gamma_m.sqrt() / C64::new(m.gamma_m / 2.0, m.omega_m - w);
        assert!((b[6] - expect).norm() < 1e-14 * expect.norm());
        for (j, z) in b.iter().enumerate() {
            if j != 6 {
                assert_eq!(z.norm(), 0.0);
            }
        }
    }

    #[test]
    fn residual_small() {
        let p = cav();
        let m = mech(hz_to_rad(3e3));
        for fb in loops() {
            for w in [-2.3e6, -1e3, 0.0, 2.07e6, 2.16e6] {
                let rows = assemble_and_solve(&p, &m, &fb, w).unwrap();
                assert!(solve_residual(&p, &m, &fb, &rows).unwrap() < 1e-10);
            }
        }
    }

    #[test]
    fn reality_structure() {
        let p = cav();
        let m = mech(hz_to_rad(3e3));
        let swap = [1, 0, 3, 2, 5, 4, 7, 6, 8];
        for fb in loops() {
            let w = 2.09e6;
            let a = assemble_and_solve(&p, &m, &fb, w).unwrap();
            let b = assemble_and_solve(&p, &m, &fb, -w).unwrap();
            for obs in [
                Observable::A,
                Observable::B,
                Observable::AOut0,
                Observable::AOut1,
                Observable::Ifb,
            ] {
                let r = a.row(obs);
                let q = b.row(obs.partner());
                for j in 0..9 {
                    assert!(
                        (r[j] - q[swap[j]].conj()).norm() < 1e-12 * (1.0 + r[j].norm()),
                        "{obs:?} {j}"
                    );
                }
            }
        }
    }

    #[test]
    fn in_loop_spectrum_matches_squashing() {
        let p = cav();
        let m = mech(0.0);
        for fb in loops() {
            for w in [-2.2e6, 3e4, 2.07e6, 2.5e6] {
                let s = spectrum_at(&p, &m, &fb, Observable::Ifb, w).unwrap();
                let oracle = squash_spectrum(&p, &fb, w).unwrap();
                assert!((s / oracle - 1.0).abs() < 1e-10, "{s} {oracle}");
            }
        }
    }

    #[test]
    fn cavity_quadrature_matches_closed_form() {
        let p = cav();
        let m = mech(0.0);
        for fb in loops() {
            for w in [-2.2e6, -2.07e6, 1e4, 2.07e6] {
                let s = spectrum_at(&p, &m, &fb, Observable::CavityQuadrature(0.0), w).unwrap();
                let oracle = cavity_quadrature_spectrum(&p, &fb, w).unwrap();
                assert!((s / oracle - 1.0).abs() < 1e-10, "{s} {oracle}");
            }
        }
    }

    #[test]
    fn detected_output_follows_zeta_out() {
        // the loop injects g i_fb into a_in0 itself, so zeta_out is the current's
        // response to the amplitude quadrature a_in0 + a_in0^dag
        let p = cav();
        for port in [Port::Transmission, Port::Reflection] {
            let fb = FeedbackConfig::new(port, 0.4, 0.7, GainModel::off()).unwrap();
            for w in [-2.2e6, 3e4, 2.05e6] {
                let z = zeta_out(&p, &fb, w);
                let resp = |g: f64| {
                    let i = assemble_and_solve(&p, &mech(g), &fb, w)
                        .unwrap()
                        .row(Observable::Ifb);
                    0.5 * (i[0] + i[1]) / fb.eta.sqrt()
                };
                let exact = resp(0.0);
                assert!(
                    (exact - z).norm() < 1e-8 * z.norm().max(1.0),
                    "{port:?}: {exact} vs {z}"
                );
                // far from the mechanical resonance a weak coupling barely perturbs it
                if (w.abs() - hz_to_rad(343.13e3)).abs() > 1e5 {
                    assert!((resp(hz_to_rad(50.0)) - z).norm() < 1e-3 * z.norm().max(1.0));
                }
            }
        }
    }

    #[test]
    fn singular_pole_is_error() {
        let p = cav();
        let m = MechanicsParams {
            omega_m: 10.0,
            gamma_m: 0.0,
            n_th: 0.0,
            g0: None,
            coupling: 0.0,
        };
        assert!(matches!(
            assemble_and_solve(&p, &m, &FeedbackConfig::off(), 10.0),
            Err(Error::SingularSystem { .. })
        ));
    }
}
