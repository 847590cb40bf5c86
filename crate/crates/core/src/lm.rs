//! Projected Levenberg-Marquardt for small, fixed-size parameter vectors.
//!
//! Damping uses Marquardt scaling with the running maximum of `diag(J^T J)`
//! (as MINPACK does), and every trial point is projected onto the box
//! bounds before it is evaluated.

use alloc::vec::Vec;

use crate::math;

pub(crate) trait Problem<const P: usize> {
    fn residual_count(&self) -> usize;

    /// Writes residuals into `out` (length `residual_count`).
    fn residuals(&self, params: &[f64; P], out: &mut [f64]);

    /// Writes the Jacobian row-major, one `[f64; P]` per residual.
    fn jacobian(&self, params: &[f64; P], out: &mut [[f64; P]]);

    fn project(&self, params: &mut [f64; P]);
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmSettings {
    pub max_iterations: usize,
    /// Relative parameter change (in the scaled norm) that counts as converged.
    pub xtol: f64,
    /// Relative cost reduction that counts as converged.
    pub ftol: f64,
}

impl Default for LmSettings {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            xtol: 1e-8,
            ftol: 1e-15,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Termination {
    ParameterChange,
    CostChange,
    ZeroResidual,
    /// No damping level produces a descent step: a stationary point at
    /// machine precision.
    Stalled,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct LmOutcome<const P: usize> {
    pub params: [f64; P],
    /// Sum of squared residuals.
    pub sse: f64,
    pub iterations: usize,
    pub termination: Option<Termination>,
}

fn sse(r: &[f64]) -> f64 {
    r.iter().map(|x| x * x).sum()
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
pub(crate) fn solve<const P: usize>(mut a: [[f64; P]; P], mut b: [f64; P]) -> Option<[f64; P]> {
    for col in 0..P {
        let pivot = (col..P).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if !(a[pivot][col].abs() > 0.0) {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in (col + 1)..P {
            let f = a[row][col] / a[col][col];
            for k in col..P {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; P];
    for row in (0..P).rev() {
        let mut s = b[row];
        for k in (row + 1)..P {
            s -= a[row][k] * x[k];
        }
        x[row] = s / a[row][row];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Solves the damped system, holding fixed every coordinate that sits on a
/// bound and whose step points out of the box, then re-solving over the rest.
/// Returns the unprojected trial point.
fn bounded_step<const P: usize>(
    problem: &impl Problem<P>,
    params: &[f64; P],
    a: [[f64; P]; P],
    grad: [f64; P],
) -> Option<[f64; P]> {
    let mut fixed = [false; P];
    loop {
        let mut a_free = a;
        let mut b = grad.map(|g| -g);
        for i in (0..P).filter(|&i| fixed[i]) {
            for j in 0..P {
                a_free[i][j] = 0.0;
                a_free[j][i] = 0.0;
            }
            a_free[i][i] = 1.0;
            b[i] = 0.0;
        }
        let step = solve(a_free, b)?;
        let mut trial = *params;
        for i in 0..P {
            trial[i] += step[i];
        }
        let mut projected = trial;
        problem.project(&mut projected);
        let mut changed = false;
        for i in 0..P {
            if !fixed[i] && projected[i] != trial[i] && projected[i] == params[i] {
                fixed[i] = true;
                changed = true;
            }
        }
        if !changed {
            return Some(trial);
        }
    }
}

pub(crate) fn minimize<const P: usize>(
    problem: &impl Problem<P>,
    init: [f64; P],
    settings: &LmSettings,
) -> LmOutcome<P> {
    let n = problem.residual_count();
    let mut params = init;
    problem.project(&mut params);

    let mut r = alloc::vec![0.0; n];
    let mut r_trial = alloc::vec![0.0; n];
    let mut jac: Vec<[f64; P]> = alloc::vec![[0.0; P]; n];
    problem.residuals(&params, &mut r);
    let mut cost = sse(&r);

    let mut lambda = 1e-3;
    let mut scale = [0.0f64; P];
    let mut iterations = 0;

    while iterations < settings.max_iterations {
        if cost == 0.0 {
            return LmOutcome { params, sse: cost, iterations, termination: Some(Termination::ZeroResidual) };
        }
        iterations += 1;
        problem.jacobian(&params, &mut jac);
        let mut jtj = [[0.0; P]; P];
        let mut grad = [0.0; P];
        for (row, &ri) in jac.iter().zip(&r) {
            for i in 0..P {
                grad[i] += row[i] * ri;
                for j in i..P {
                    jtj[i][j] += row[i] * row[j];
                }
            }
        }
        for i in 0..P {
            for j in 0..i {
                jtj[i][j] = jtj[j][i];
            }
            scale[i] = scale[i].max(jtj[i][i]);
        }
        let max_scale = scale.iter().copied().fold(0.0, f64::max);
        let floor = if max_scale > 0.0 { max_scale * 1e-15 } else { 1.0 };
        let d: [f64; P] = core::array::from_fn(|i| scale[i].max(floor));

        loop {
            let mut a = jtj;
            for i in 0..P {
                a[i][i] += lambda * d[i];
            }
            let Some(mut trial) = bounded_step(problem, &params, a, grad) else {
                lambda *= 10.0;
                if lambda > 1e16 {
                    return LmOutcome { params, sse: cost, iterations, termination: Some(Termination::Stalled) };
                }
                continue;
            };
            problem.project(&mut trial);
            problem.residuals(&trial, &mut r_trial);
            let trial_cost = sse(&r_trial);

            if trial_cost.is_finite() && trial_cost < cost {
                let mut dx = 0.0;
                let mut x = 0.0;
                for i in 0..P {
                    let s = math::sqrt(d[i]);
                    dx += (s * (trial[i] - params[i])) * (s * (trial[i] - params[i]));
                    x += (s * params[i]) * (s * params[i]);
                }
                let (dx, x) = (math::sqrt(dx), math::sqrt(x));
                let reduction = (cost - trial_cost) / cost;
                params = trial;
                core::mem::swap(&mut r, &mut r_trial);
                cost = trial_cost;
                lambda = (lambda * 0.1).max(1e-12);
                if dx <= settings.xtol * (x + settings.xtol) {
                    return LmOutcome { params, sse: cost, iterations, termination: Some(Termination::ParameterChange) };
                }
                if reduction <= settings.ftol {
                    return LmOutcome { params, sse: cost, iterations, termination: Some(Termination::CostChange) };
                }
                break;
            }
            lambda *= 10.0;
            if lambda > 1e16 {
                return LmOutcome { params, sse: cost, iterations, termination: Some(Termination::Stalled) };
            }
        }
    }
    LmOutcome { params, sse: cost, iterations, termination: None }
}
