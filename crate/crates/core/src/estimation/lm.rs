//! Levenberg–Marquardt for small dense least-squares problems.

use nalgebra::{DMatrix, DVector};

/// A weighted least-squares problem: minimise `|r(p)|²`.
pub trait LeastSquares {
    fn residuals(&self, p: &DVector<f64>) -> DVector<f64>;
    fn jacobian(&self, p: &DVector<f64>) -> DMatrix<f64>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmConfig {
    pub max_iter: usize,
    /// Stop once the scaled gradient falls below this.
    pub gtol: f64,
    /// A finished run counts as converged when the scaled gradient is below this.
    pub gtol_accept: f64,
    pub xtol: f64,
    pub lambda0: f64,
    /// A fit whose RMS weighted residual is below this is exact to roundoff;
    /// the gradient cosine is meaningless there.
    pub rms_exact: f64,
}

impl Default for LmConfig {
    fn default() -> Self {
        Self {
            max_iter: 300,
            gtol: 1e-10,
            gtol_accept: 1e-6,
            xtol: 1e-14,
            lambda0: 1e-3,
            rms_exact: 1e-9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Gradient,
    SmallStep,
    /// Damping grew without finding a lower SSE.
    Stalled,
    MaxIterations,
    ExactFit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmReport {
    pub params: DVector<f64>,
    pub sse: f64,
    pub iterations: usize,
    pub converged: bool,
    pub termination: Termination,
    /// Largest cosine between the residual vector and a Jacobian column.
    pub gradient_norm: f64,
    /// SSE after every accepted step, starting with the initial point.
    pub sse_history: Vec<f64>,
}

/// Scale-invariant gradient measure (MINPACK's `gnorm`).
pub fn scaled_gradient(j: &DMatrix<f64>, r: &DVector<f64>) -> f64 {
    let rn = r.norm();
    if rn == 0.0 {
        return 0.0;
    }
    let g = j.transpose() * r;
    let mut worst = 0.0f64;
    for (i, gi) in g.iter().enumerate() {
        let cn = j.column(i).norm();
        if cn > 0.0 {
            worst = worst.max(gi.abs() / (cn * rn));
        }
    }
    worst
}

pub fn minimize<P: LeastSquares + ?Sized>(problem: &P, p0: DVector<f64>, cfg: &LmConfig) -> LmReport {
    let n = p0.len();
    let mut p = p0;
    let mut r = problem.residuals(&p);
    let mut sse = r.norm_squared();
    let mut history = vec![sse];
    let mut lambda = cfg.lambda0;
    let mut termination = Termination::MaxIterations;
    let mut iterations = 0;
    let mut j = problem.jacobian(&p);
    let exact_sse = cfg.rms_exact * cfg.rms_exact * r.len() as f64;

    if !sse.is_finite() {
        return LmReport {
            params: p,
            sse,
            iterations: 0,
            converged: false,
            termination: Termination::Stalled,
            gradient_norm: f64::INFINITY,
            sse_history: history,
        };
    }

    'outer: while iterations < cfg.max_iter {
        if sse <= exact_sse {
            termination = Termination::ExactFit;
            break;
        }
        if scaled_gradient(&j, &r) <= cfg.gtol {
            termination = Termination::Gradient;
            break;
        }
        iterations += 1;
        let jt = j.transpose();
        let a = &jt * &j;
        let g = &jt * &r;
        let diag: Vec<f64> = (0..n).map(|i| a[(i, i)].max(1e-300)).collect();
        loop {
            let mut damped = a.clone();
            for (i, d) in diag.iter().enumerate() {
                damped[(i, i)] += lambda * d;
            }
            let Some(chol) = damped.cholesky() else {
                lambda *= 10.0;
                if lambda > 1e20 {
                    termination = Termination::Stalled;
                    break 'outer;
                }
                continue;
            };
            let delta = chol.solve(&(-&g));
            let p_new = &p + &delta;
            let r_new = problem.residuals(&p_new);
            let sse_new = r_new.norm_squared();
            if sse_new.is_finite() && sse_new < sse {
                let small = delta.norm() <= cfg.xtol * (p.norm() + cfg.xtol);
                p = p_new;
                r = r_new;
                sse = sse_new;
                history.push(sse);
                j = problem.jacobian(&p);
                lambda = (lambda / 10.0).max(1e-15);
                if small {
                    termination = Termination::SmallStep;
                    break 'outer;
                }
                break;
            }
            lambda *= 10.0;
            if lambda > 1e20 {
                termination = Termination::Stalled;
                break 'outer;
            }
        }
    }
    let gradient_norm = scaled_gradient(&j, &r);
    LmReport {
        converged: sse <= exact_sse || gradient_norm <= cfg.gtol_accept,
        params: p,
        sse,
        iterations,
        termination,
        gradient_norm,
        sse_history: history,
    }
}

/// Central-difference Jacobian, used to cross-check analytic derivatives.
pub fn numerical_jacobian<P: LeastSquares + ?Sized>(problem: &P, p: &DVector<f64>, rel_step: f64) -> DMatrix<f64> {
    let r0 = problem.residuals(p);
    let mut j = DMatrix::zeros(r0.len(), p.len());
    for k in 0..p.len() {
        let h = rel_step * p[k].abs().max(1.0);
        let mut hi = p.clone();
        let mut lo = p.clone();
        hi[k] += h;
        lo[k] -= h;
        let d = (problem.residuals(&hi) - problem.residuals(&lo)) / (2.0 * h);
        j.set_column(k, &d);
    }
    j
}
