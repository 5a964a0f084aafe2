//! Globally adaptive Gauss-Kronrod (21-point) quadrature.
//!
//! The interval with the largest error estimate is bisected until the summed
//! estimate drops below `max(abs_tol, rel_tol * |I|)`. Seed breakpoints let the
//! caller place narrow resonances on panel boundaries. Panel sums use
//! compensated accumulation in panel order.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::par::{self, Exec};

#[allow(clippy::excessive_precision)]
const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];

#[allow(clippy::excessive_precision)]
const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_958_109_831_074,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

// Gauss 10-point weights for the odd-indexed Kronrod nodes.
#[allow(clippy::excessive_precision)]
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

#[derive(Clone, Copy, Debug)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_panels: usize,
    pub exec: Exec,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self {
            abs_tol: 0.0,
            rel_tol: 1e-10,
            max_panels: 20_000,
            exec: Exec::default(),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
    pub panels: usize,
}

#[derive(Clone, Copy, Debug)]
struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
    abs_value: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn gk21<F>(f: &F, a: f64, b: f64) -> Result<Panel>
where
    F: Fn(f64) -> Result<f64>,
{
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center)?;
    let mut kronrod = fc * WGK[10];
    let mut resabs = fc.abs() * WGK[10];
    let mut gauss = 0.0;
    for (j, (&x, &w)) in XGK[..10].iter().zip(&WGK[..10]).enumerate() {
        let dx = half * x;
        let (fl, fr) = (f(center - dx)?, f(center + dx)?);
        let s = fl + fr;
        kronrod += w * s;
        resabs += w * (fl.abs() + fr.abs());
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    let value = kronrod * half;
    let error = ((kronrod - gauss) * half).abs();
    if !value.is_finite() {
        return Err(Error::QuadratureFailed(format!(
            "non-finite integrand on [{a:e}, {b:e}]"
        )));
    }
    Ok(Panel {
        a,
        b,
        value,
        error,
        abs_value: resabs * half.abs(),
    })
}

/// Integrate `f` over `[a, b]` with optional interior breakpoints.
pub fn integrate<F>(
    f: F,
    a: f64,
    b: f64,
    breakpoints: &[f64],
    opts: QuadOptions,
) -> Result<QuadResult>
where
    F: Fn(f64) -> Result<f64> + Sync,
{
    if !(a < b) {
        return Err(Error::QuadratureFailed(format!(
            "empty interval [{a:e}, {b:e}]"
        )));
    }
    let mut edges: Vec<f64> = std::iter::once(a)
        .chain(breakpoints.iter().copied().filter(|&x| x > a && x < b))
        .chain(std::iter::once(b))
        .collect();
    edges.sort_by(f64::total_cmp);
    edges.dedup();

    let initial: Vec<Result<Panel>> = par::map_range(opts.exec, edges.len() - 1, |i| {
        gk21(&f, edges[i], edges[i + 1])
    });
    let mut heap = BinaryHeap::with_capacity(2 * edges.len());
    for p in initial {
        heap.push(p?);
    }

    let totals = |heap: &BinaryHeap<Panel>| {
        let v = par::compensated_sum(heap.iter().map(|p| p.value));
        let e = par::compensated_sum(heap.iter().map(|p| p.error));
        let m = par::compensated_sum(heap.iter().map(|p| p.abs_value));
        (v, e, m)
    };

    // Cancelling integrands are judged against the integral of |f|.
    let (mut value, mut error, mut mass) = totals(&heap);
    while error
        > opts
            .abs_tol
            .max(opts.rel_tol * value.abs())
            .max(1e3 * f64::EPSILON * mass)
    {
        if heap.len() >= opts.max_panels {
            return Err(Error::QuadratureFailed(format!(
                "panel cap {} reached (value {value:e}, error {error:e})",
                opts.max_panels
            )));
        }
        // Split the worst few panels per round; the batch keeps parallel
        // workers busy without changing the converged answer.
        let batch = if opts.exec.is_parallel() {
            8.min(heap.len())
        } else {
            1
        };
        let worst: Vec<Panel> = (0..batch).filter_map(|_| heap.pop()).collect();
        let halves: Vec<Result<(Panel, Panel)>> = par::map(opts.exec, &worst, |p| {
            let m = 0.5 * (p.a + p.b);
            Ok((gk21(&f, p.a, m)?, gk21(&f, m, p.b)?))
        });
        for h in halves {
            let (l, r) = h?;
            heap.push(l);
            heap.push(r);
        }
        let t = totals(&heap);
        value = t.0;
        error = t.1;
        mass = t.2;
        if worst
            .iter()
            .all(|p| (p.b - p.a) <= 1e-14 * p.a.abs().max(p.b.abs()).max(1e-300))
        {
            return Err(Error::QuadratureFailed(
                "panels shrank below resolution".into(),
            ));
        }
    }
    Ok(QuadResult {
        value,
        error,
        panels: heap.len(),
    })
}

/// Integrate `f` over `[start, +inf)` (or `(-inf, start]` when `toward_negative`)
/// through the substitution `omega = start / t`.
pub fn integrate_tail<F>(
    f: F,
    start: f64,
    toward_negative: bool,
    opts: QuadOptions,
) -> Result<QuadResult>
where
    F: Fn(f64) -> Result<f64> + Sync,
{
    let w0 = start.abs();
    if w0 <= 0.0 {
        return Err(Error::QuadratureFailed("tail start must be nonzero".into()));
    }
    let sign = if toward_negative { -1.0 } else { 1.0 };
    let g = |t: f64| -> Result<f64> {
        if t <= 0.0 {
            return Ok(0.0);
        }
        Ok(f(sign * w0 / t)? * w0 / (t * t))
    };
    integrate(g, 0.0, 1.0, &[0.01, 0.1], opts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_exact() {
        let r = integrate(
            |x| Ok(x * x * x - 2.0 * x),
            0.0,
            2.0,
            &[],
            QuadOptions::default(),
        )
        .unwrap();
        assert!((r.value - 0.0).abs() < 1e-13);
    }

    #[test]
    fn narrow_lorentzian_with_seed() {
        let g: f64 = 1e-3;
        let f = |x: f64| Ok((g / 2.0) / ((x - 0.3).powi(2) + (g / 2.0).powi(2)));
        let r = integrate(
            f,
            -1.0,
            1.0,
            &[0.3 - 5.0 * g, 0.3, 0.3 + 5.0 * g],
            QuadOptions::default(),
        )
        .unwrap();
        let exact = (1.3f64 / (g / 2.0)).atan() + (0.7f64 / (g / 2.0)).atan();
        assert!(
            (r.value - exact).abs() < 1e-9 * exact,
            "{} vs {}",
            r.value,
            exact
        );
    }

    #[test]
    fn tail_of_inverse_square() {
        let r = integrate_tail(|x| Ok(1.0 / (x * x)), 2.0, false, QuadOptions::default()).unwrap();
        assert!((r.value - 0.5).abs() < 1e-12);
        let r = integrate_tail(|x| Ok(1.0 / (x * x)), -2.0, true, QuadOptions::default()).unwrap();
        assert!((r.value - 0.5).abs() < 1e-12);
    }

    #[test]
    fn errors_propagate() {
        let r = integrate(
            |x| {
                if x > 0.5 {
                    Err(Error::NoStablePoint)
                } else {
                    Ok(1.0)
                }
            },
            0.0,
            1.0,
            &[],
            QuadOptions::default(),
        );
        assert!(matches!(r, Err(Error::NoStablePoint)));
    }
}
