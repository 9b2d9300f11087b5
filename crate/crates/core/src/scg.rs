//! Scaled conjugate gradient minimization over a flat parameter vector.
//!
//! Møller's construction: curvature along the search direction is estimated
//! from a finite-difference of gradients at a sigma-scaled probe point, and a
//! scale parameter lambda grows or shrinks with the comparison ratio between
//! predicted and actual objective reduction. No line search. Steps with a
//! comparison ratio below 0.25 are rejected and retried with a larger lambda;
//! ratios above 0.75 shrink lambda.

use crate::error::{Error, Result};

/// Optimizer knobs. All values must be positive.
#[derive(Debug, Clone, PartialEq)]
pub struct ScgConfig {
    /// Base scale of the gradient-probe displacement.
    pub sigma0: f64,
    /// Initial value of the scale parameter lambda.
    pub lambda_init: f64,
    pub max_iterations: usize,
    /// Stop when the gradient Euclidean norm falls below this.
    pub grad_tol: f64,
    /// Stop when an accepted step decreases the objective by less than this.
    pub obj_tol: f64,
}

impl Default for ScgConfig {
    fn default() -> Self {
        ScgConfig {
            sigma0: 1e-4,
            lambda_init: 1e-6,
            max_iterations: 2000,
            grad_tol: 1e-8,
            obj_tol: 1e-12,
        }
    }
}

impl ScgConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma0 > 0.0
            && self.lambda_init > 0.0
            && self.grad_tol > 0.0
            && self.obj_tol > 0.0)
        {
            return Err(Error::parameter(
                "scg: sigma0, lambda_init, grad_tol and obj_tol must be positive",
            ));
        }
        if self.max_iterations == 0 {
            return Err(Error::parameter("scg: max_iterations must be positive"));
        }
        Ok(())
    }
}

/// Which stopping rule fired.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConvergedBy {
    Gradient,
    Objective,
    MaxIter,
}

#[derive(Debug, Clone)]
pub struct ScgResult {
    pub params: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub converged_by: ConvergedBy,
}

const UNDERFLOW_GUARD: f64 = 1e-300;

/// Minimizes `oracle` starting from `start`.
///
/// The oracle maps a parameter vector to (objective, gradient). Non-finite
/// oracle output aborts with a numerical error carrying the iteration index.
pub fn minimize<F>(mut oracle: F, start: &[f64], cfg: &ScgConfig) -> Result<ScgResult>
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    cfg.validate()?;
    let n = start.len();
    if n == 0 {
        return Err(Error::parameter("scg: empty parameter vector"));
    }

    let mut w = start.to_vec();
    let (mut fw, mut grad) = checked_eval(&mut oracle, &w, n, 0)?;

    if norm(&grad) < cfg.grad_tol {
        return Ok(ScgResult {
            params: w,
            objective: fw,
            iterations: 0,
            converged_by: ConvergedBy::Gradient,
        });
    }

    // r is the steepest-descent direction -grad; p the conjugate direction.
    let mut r: Vec<f64> = grad.iter().map(|g| -g).collect();
    let mut p = r.clone();
    let mut lambda = cfg.lambda_init;
    let mut lambda_bar = 0.0;
    let mut success = true;
    let mut raw_curvature = 0.0;
    let mut since_restart = 0usize;

    let mut probe = vec![0.0; n];

    for k in 1..=cfg.max_iterations {
        let p_norm2 = dot(&p, &p);
        if p_norm2 < UNDERFLOW_GUARD {
            p.copy_from_slice(&r);
            since_restart = 0;
            success = true;
            continue;
        }
        let p_norm = p_norm2.sqrt();

        if success {
            // Second-order information: curvature of the objective along p
            // from a finite difference of gradients.
            let sigma = cfg.sigma0 / p_norm;
            for ((pr, &wi), &pi) in probe.iter_mut().zip(&w).zip(&p) {
                *pr = wi + sigma * pi;
            }
            let (_, probe_grad) = checked_eval(&mut oracle, &probe, n, k)?;
            raw_curvature = p
                .iter()
                .zip(probe_grad.iter().zip(&grad))
                .map(|(pi, (gs, g))| pi * (gs - g) / sigma)
                .sum();
        }

        // Scale the curvature, forcing it positive definite if necessary.
        let mut delta = raw_curvature + (lambda - lambda_bar) * p_norm2;
        if delta <= 0.0 {
            lambda_bar = 2.0 * (lambda - delta / p_norm2);
            delta = -delta + lambda * p_norm2;
            lambda = lambda_bar;
        }
        if delta < UNDERFLOW_GUARD {
            p.copy_from_slice(&r);
            since_restart = 0;
            success = true;
            continue;
        }

        let mu = dot(&p, &r);
        if mu <= 0.0 {
            // Not a descent direction; fall back to steepest descent.
            p.copy_from_slice(&r);
            since_restart = 0;
            success = true;
            continue;
        }

        let alpha = mu / delta;
        let trial: Vec<f64> = w.iter().zip(&p).map(|(wi, pi)| wi + alpha * pi).collect();
        let (f_trial, g_trial) = checked_eval(&mut oracle, &trial, n, k)?;

        // Comparison ratio between actual and predicted reduction.
        let comparison = 2.0 * delta * (fw - f_trial) / (mu * mu);

        if comparison >= 0.25 {
            let previous_f = fw;
            w = trial;
            fw = f_trial;
            grad = g_trial;
            let r_new: Vec<f64> = grad.iter().map(|g| -g).collect();
            lambda_bar = 0.0;
            success = true;
            since_restart += 1;

            if since_restart >= n || mu.abs() < UNDERFLOW_GUARD {
                p.copy_from_slice(&r_new);
                since_restart = 0;
            } else {
                // Polak-Ribiere-style direction update (Møller's form).
                let beta = (dot(&r_new, &r_new) - dot(&r_new, &r)) / mu;
                for (pi, &ri) in p.iter_mut().zip(&r_new) {
                    *pi = ri + beta * *pi;
                }
            }
            r = r_new;

            if comparison >= 0.75 {
                lambda *= 0.25;
            }

            if norm(&grad) < cfg.grad_tol {
                return Ok(ScgResult {
                    params: w,
                    objective: fw,
                    iterations: k,
                    converged_by: ConvergedBy::Gradient,
                });
            }
            if previous_f - fw < cfg.obj_tol {
                return Ok(ScgResult {
                    params: w,
                    objective: fw,
                    iterations: k,
                    converged_by: ConvergedBy::Objective,
                });
            }
        } else {
            lambda_bar = lambda;
            success = false;
        }

        if comparison < 0.25 {
            lambda += delta * (1.0 - comparison) / p_norm2;
        }
    }

    Ok(ScgResult {
        params: w,
        objective: fw,
        iterations: cfg.max_iterations,
        converged_by: ConvergedBy::MaxIter,
    })
}

fn checked_eval<F>(oracle: &mut F, w: &[f64], n: usize, iteration: usize) -> Result<(f64, Vec<f64>)>
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let (f, g) = oracle(w);
    if g.len() != n {
        return Err(Error::shape(format!(
            "scg: oracle returned gradient of length {}, expected {n}",
            g.len()
        )));
    }
    if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical {
            iteration,
            message: "oracle returned a non-finite objective or gradient".to_string(),
        });
    }
    Ok((f, g))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
