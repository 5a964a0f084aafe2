//! Bessel functions of the first kind for integer order and their zeros.
//!
//! `J_n(x) = (1/2pi) ∫ cos(n t - x sin t) dt` over one period; the trapezoid
//! rule on a periodic analytic integrand converges geometrically, so a node
//! count a little above `|x| + n` reaches machine precision.

use std::f64::consts::PI;

pub fn bessel_j(n: u32, x: f64) -> f64 {
    let nodes = (2.0 * (x.abs() + n as f64) + 64.0).ceil() as usize;
    let h = 2.0 * PI / nodes as f64;
    let nf = n as f64;
    let mut s = 0.0;
    for k in 0..nodes {
        let t = k as f64 * h;
        s += (nf * t - x * t.sin()).cos();
    }
    s / nodes as f64
}

/// First `count` positive zeros of `J_n`, refined to ~1e-14 relative.
///
/// Zeros are bracketed by scanning with a step well below the asymptotic
/// spacing (pi), then refined with the Illinois variant of regula falsi.
pub fn bessel_j_zeros(n: u32, count: usize) -> Vec<f64> {
    let step = 0.05;
    let mut zeros = Vec::with_capacity(count);
    let mut x0 = if n == 0 { step } else { n as f64 };
    let mut f0 = bessel_j(n, x0);
    while zeros.len() < count {
        let x1 = x0 + step;
        let f1 = bessel_j(n, x1);
        if f1 == 0.0 {
            zeros.push(x1);
        } else if f0.signum() != f1.signum() {
            zeros.push(refine(n, x0, x1, f0, f1));
        }
        x0 = x1;
        f0 = f1;
    }
    zeros
}

fn refine(n: u32, mut a: f64, mut b: f64, mut fa: f64, mut fb: f64) -> f64 {
    let mut side = 0i8;
    for _ in 0..200 {
        let c = (a * fb - b * fa) / (fb - fa);
        let fc = bessel_j(n, c);
        if fc == 0.0 || (b - a).abs() < 1e-15 * c.abs() {
            return c;
        }
        if fc.signum() == fb.signum() {
            b = c;
            fb = fc;
            if side == -1 {
                fa *= 0.5;
            }
            side = -1;
        } else {
            a = c;
            fa = fc;
            if side == 1 {
                fb *= 0.5;
            }
            side = 1;
        }
        if (b - a).abs() < 1e-14 * a.abs().max(1.0) {
            break;
        }
    }
    (a * fb - b * fa) / (fb - fa)
}
