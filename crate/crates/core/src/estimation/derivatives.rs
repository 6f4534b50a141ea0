use nalgebra::DMatrix;

use super::Objective;
use crate::error::{Error, Result};

/// Relative step for the central-difference gradient.
pub const GRADIENT_STEP: f64 = 1e-5;
/// Relative step for the central second-difference Hessian.
pub const HESSIAN_STEP: f64 = 1e-4;

fn step_for(rel: f64, x: f64) -> f64 {
    rel * x.abs().max(1.0)
}

/// Central-difference gradient with step `1e-5 * max(1, |x_i|)`.
pub fn gradient_fd<O: Objective + ?Sized>(obj: &O, x: &[f64]) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let h = step_for(GRADIENT_STEP, x[i]);
            probe[i] = x[i] + h;
            let up = obj.value(&probe);
            probe[i] = x[i] - h;
            let down = obj.value(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Central second-difference Hessian with step `1e-4 * max(1, |x_i|)`,
/// returned as `(H + H^T) / 2`.
pub fn numerical_hessian<O: Objective + ?Sized>(obj: &O, x: &[f64]) -> Result<DMatrix<f64>> {
    let k = x.len();
    let h: Vec<f64> = x.iter().map(|&v| step_for(HESSIAN_STEP, v)).collect();
    let f0 = obj.value(x);
    let mut probe = x.to_vec();
    let mut eval = |shifts: &[(usize, f64)]| {
        for &(i, d) in shifts {
            probe[i] = x[i] + d;
        }
        let v = obj.value(&probe);
        for &(i, _) in shifts {
            probe[i] = x[i];
        }
        v
    };
    let mut hess = DMatrix::zeros(k, k);
    for i in 0..k {
        let up = eval(&[(i, h[i])]);
        let down = eval(&[(i, -h[i])]);
        hess[(i, i)] = (up - 2.0 * f0 + down) / (h[i] * h[i]);
        for j in 0..i {
            let pp = eval(&[(i, h[i]), (j, h[j])]);
            let pm = eval(&[(i, h[i]), (j, -h[j])]);
            let mp = eval(&[(i, -h[i]), (j, h[j])]);
            let mm = eval(&[(i, -h[i]), (j, -h[j])]);
            let v = (pp - pm - mp + mm) / (4.0 * h[i] * h[j]);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    let sym = (&hess + hess.transpose()) * 0.5;
    for j in 0..k {
        for i in 0..k {
            if !sym[(i, j)].is_finite() {
                return Err(Error::NonFiniteHessian { row: i, col: j });
            }
        }
    }
    Ok(sym)
}
