//! Levenberg-Marquardt for small dense problems.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct LsqFit {
    pub params: Vec<f64>,
    pub residual_norm: f64,
    pub iterations: usize,
}

/// Minimise `sum r_i(p)^2` where `residuals(p)` returns the residual vector and
/// `jacobian(p)` its row-major Jacobian (`m x n`).
pub fn levenberg_marquardt<R, J>(
    mut p: Vec<f64>,
    residuals: R,
    jacobian: J,
    max_iter: usize,
) -> Result<LsqFit>
where
    R: Fn(&[f64]) -> Vec<f64>,
    J: Fn(&[f64]) -> Vec<Vec<f64>>,
{
    let n = p.len();
    let mut r = DVector::from_vec(residuals(&p));
    let mut cost = r.norm_squared();
    let mut lambda = 1e-3;
    let mut it = 0;
    while it < max_iter {
        it += 1;
        let rows = jacobian(&p);
        let m = rows.len();
        let jm = DMatrix::from_fn(m, n, |i, j| rows[i][j]);
        let jt = jm.transpose();
        let jtj = &jt * &jm;
        let g = &jt * &r;
        let mut improved = false;
        for _ in 0..30 {
            let mut a = jtj.clone();
            for k in 0..n {
                a[(k, k)] += lambda * jtj[(k, k)].max(1e-300);
            }
            let Some(step) = a.lu().solve(&(-&g)) else {
                lambda *= 10.0;
                continue;
            };
            let trial: Vec<f64> = p.iter().zip(step.iter()).map(|(x, d)| x + d).collect();
            let rt = DVector::from_vec(residuals(&trial));
            let ct = rt.norm_squared();
            if ct.is_finite() && ct < cost {
                let rel_step = step
                    .iter()
                    .zip(&trial)
                    .map(|(d, x)| (d / x.abs().max(1e-300)).abs())
                    .fold(0.0, f64::max);
                p = trial;
                r = rt;
                let done = (cost - ct) <= 1e-15 * cost || rel_step < 1e-13;
                cost = ct;
                lambda = (lambda * 0.3).max(1e-12);
                improved = true;
                if done {
                    return Ok(LsqFit {
                        params: p,
                        residual_norm: cost.sqrt(),
                        iterations: it,
                    });
                }
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    if !cost.is_finite() {
        return Err(Error::FitFailed("non-finite residual".into()));
    }
    Ok(LsqFit {
        params: p,
        residual_norm: cost.sqrt(),
        iterations: it,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fits_exponential() {
        let xs: Vec<f64> = (0..20).map(|i| i as f64 * 0.1).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 2.5 * (-1.3 * x).exp()).collect();
        let fit = levenberg_marquardt(
            vec![1.0, -0.5],
            |p| {
                xs.iter()
                    .zip(&ys)
                    .map(|(x, y)| p[0] * (p[1] * x).exp() - y)
                    .collect()
            },
            |p| {
                xs.iter()
                    .map(|x| vec![(p[1] * x).exp(), p[0] * x * (p[1] * x).exp()])
                    .collect()
            },
            200,
        )
        .unwrap();
        assert!((fit.params[0] - 2.5).abs() < 1e-8);
        assert!((fit.params[1] + 1.3).abs() < 1e-8);
    }
}
