//! Damped Newton iteration with a finite-difference Jacobian.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, NewtonFailure, NewtonFailureKind, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JacobianScheme {
    #[default]
    Forward,
    Central,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NewtonOptions {
    pub max_iterations: usize,
    /// Convergence threshold on the infinity norm of the (scaled) residual.
    pub tolerance: f64,
    pub max_halvings: usize,
    /// Per-component difference step `max(fd_floor, fd_relative * |x_i|)`.
    pub fd_relative: f64,
    pub fd_floor: f64,
    pub jacobian: JacobianScheme,
    /// Evaluate Jacobian columns on the rayon pool.
    pub parallel: bool,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            tolerance: 1e-8,
            max_halvings: 8,
            fd_relative: 1e-7,
            fd_floor: 1e-7,
            jacobian: JacobianScheme::Forward,
            parallel: true,
        }
    }
}

/// One line of the per-iteration diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub residual_norm: f64,
    pub step_norm: f64,
    pub damping: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NewtonReport {
    pub solution: Vec<f64>,
    pub residual: Vec<f64>,
    pub iterations: usize,
    pub history: Vec<IterationRecord>,
}

impl NewtonReport {
    pub fn residual_norm(&self) -> f64 {
        inf_norm(&self.residual)
    }
}

pub fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn fd_step(x: f64, opts: &NewtonOptions) -> f64 {
    opts.fd_floor.max(opts.fd_relative * x.abs())
}

/// Finite-difference Jacobian of `f` at `x` given `fx = f(x)`.
pub fn fd_jacobian<F>(f: &F, x: &[f64], fx: &[f64], opts: &NewtonOptions) -> Result<DMatrix<f64>>
where
    F: Fn(&[f64]) -> Result<Vec<f64>> + Sync,
{
    let n = x.len();
    let m = fx.len();
    let column = |j: usize| -> Result<Vec<f64>> {
        let h = fd_step(x[j], opts);
        let mut xp = x.to_vec();
        xp[j] += h;
        let fp = f(&xp)?;
        match opts.jacobian {
            JacobianScheme::Forward => Ok(fp.iter().zip(fx).map(|(a, b)| (a - b) / h).collect()),
            JacobianScheme::Central => {
                let mut xm = x.to_vec();
                xm[j] -= h;
                let fm = f(&xm)?;
                Ok(fp
                    .iter()
                    .zip(&fm)
                    .map(|(a, b)| (a - b) / (2.0 * h))
                    .collect())
            }
        }
    };
    let columns: Vec<Vec<f64>> = if opts.parallel {
        (0..n).into_par_iter().map(column).collect::<Result<_>>()?
    } else {
        (0..n).map(column).collect::<Result<_>>()?
    };
    let mut jac = DMatrix::zeros(m, n);
    for (j, col) in columns.iter().enumerate() {
        for i in 0..m {
            jac[(i, j)] = col[i];
        }
    }
    Ok(jac)
}

/// Solves `f(x) = 0` for square `f`. Each full step is halved up to
/// `max_halvings` times until the trial point is accepted: either the
/// Euclidean residual norm decreases, or the simplified Newton correction
/// `J(x)^-1 f(trial)` is shorter than `(1 - damping/4)` times the step
/// (the affine-invariant natural monotonicity test). Trial points where `f`
/// errors are rejected.
pub fn newton_solve<F>(f: F, guess: &[f64], opts: &NewtonOptions) -> Result<NewtonReport>
where
    F: Fn(&[f64]) -> Result<Vec<f64>> + Sync,
{
    let mut x = guess.to_vec();
    let fail = |kind, x: &[f64], r: &[f64], history: &[IterationRecord]| {
        Error::Newton(Box::new(NewtonFailure {
            kind,
            last_iterate: x.to_vec(),
            last_residual: r.to_vec(),
            history: history.to_vec(),
        }))
    };

    let mut r = f(&x)?;
    if r.len() != x.len() {
        return Err(Error::validation(
            "newton",
            format!(
                "non-square system: {} unknowns, {} residuals",
                x.len(),
                r.len()
            ),
        ));
    }
    if r.iter().any(|v| !v.is_finite()) {
        return Err(fail(NewtonFailureKind::NonFiniteStart, &x, &r, &[]));
    }
    let mut history = vec![IterationRecord {
        iteration: 0,
        residual_norm: inf_norm(&r),
        step_norm: 0.0,
        damping: 0.0,
    }];

    for iteration in 1..=opts.max_iterations {
        if inf_norm(&r) <= opts.tolerance {
            return Ok(NewtonReport {
                solution: x,
                residual: r,
                iterations: iteration - 1,
                history,
            });
        }
        let jac = match fd_jacobian(&f, &x, &r, opts) {
            Ok(j) => j,
            Err(_) => return Err(fail(NewtonFailureKind::JacobianSingular, &x, &r, &history)),
        };
        let rhs = DVector::from_column_slice(&r);
        let lu = jac.lu();
        let step = match lu.solve(&rhs) {
            Some(s) if s.iter().all(|v| v.is_finite()) => s,
            _ => return Err(fail(NewtonFailureKind::JacobianSingular, &x, &r, &history)),
        };

        let merit = l2_norm(&r);
        let step_len = l2_norm(step.as_slice());
        let mut damping = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            let trial: Vec<f64> = x
                .iter()
                .zip(step.iter())
                .map(|(a, s)| a - damping * s)
                .collect();
            if let Ok(rt) = f(&trial) {
                if rt.iter().all(|v| v.is_finite()) {
                    let natural = lu
                        .solve(&DVector::from_column_slice(&rt))
                        .map(|c| l2_norm(c.as_slice()))
                        .unwrap_or(f64::INFINITY);
                    if l2_norm(&rt) < merit || natural < (1.0 - 0.25 * damping) * step_len {
                        accepted = Some((trial, rt));
                        break;
                    }
                }
            }
            damping *= 0.5;
        }
        let Some((xn, rn)) = accepted else {
            return Err(fail(NewtonFailureKind::LineSearchStalled, &x, &r, &history));
        };
        x = xn;
        r = rn;
        history.push(IterationRecord {
            iteration,
            residual_norm: inf_norm(&r),
            step_norm: damping * l2_norm(step.as_slice()),
            damping,
        });
    }
    if inf_norm(&r) <= opts.tolerance {
        return Ok(NewtonReport {
            solution: x,
            residual: r,
            iterations: opts.max_iterations,
            history,
        });
    }
    Err(fail(NewtonFailureKind::MaxIterations, &x, &r, &history))
}
