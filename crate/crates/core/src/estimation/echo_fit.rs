use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::dataset::EchoDataset;
use super::lm::{minimize, LeastSquares, LmConfig};
use super::{covariance, FitError, MIN_ECHO_POINTS};
use crate::geometry::PhysicalConstants;
use crate::spindyn::{c13_envelope, EchoParams};

/// Fixed (non-fitted) parts of the echo model.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EchoModel {
    /// Rotation rate and envelope shape; the fitted fields are ignored.
    pub template: EchoParams,
    pub constants: PhysicalConstants,
}

/// The four free echo parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EchoFitParams {
    pub b_perp: f64,
    pub phi0: f64,
    pub contrast: f64,
    pub baseline: f64,
}

impl EchoFitParams {
    pub const NAMES: [&'static str; 4] = ["b_perp", "phi0", "contrast", "baseline"];

    pub fn to_array(self) -> [f64; 4] {
        [self.b_perp, self.phi0, self.contrast, self.baseline]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self {
            b_perp: a[0],
            phi0: a[1],
            contrast: a[2],
            baseline: a[3],
        }
    }

    /// Signal model: `baseline + contrast/2 · envelope · cos φ`.
    pub fn to_echo_params(self, model: &EchoModel) -> EchoParams {
        EchoParams {
            b_perp_gauss: self.b_perp,
            phi0_rad: self.phi0,
            contrast: self.contrast,
            ..model.template
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: EchoFitParams,
    pub sigmas: EchoFitParams,
    pub covariance: [[f64; 4]; 4],
    /// Norm of the weighted residual vector.
    pub residual_norm: f64,
    pub chi2: f64,
    pub dof: usize,
    pub reduced_chi2: f64,
    pub converged: bool,
    pub iterations: usize,
    pub gradient_norm: f64,
    /// Profile-likelihood interval used for `sigmas.b_perp` when the estimate
    /// sits near the `b_perp = 0` boundary.
    pub b_perp_interval: Option<(f64, f64)>,
}

/// Per-point quantities that do not depend on the fitted parameters.
#[derive(Debug, Clone)]
pub(crate) struct EchoCore {
    /// `ω τ` (rad).
    pub x: Vec<f64>,
    pub env: Vec<f64>,
    pub y: Vec<f64>,
    pub w: Vec<f64>,
    /// Phase per gauss prefactor `2π γ_e / ω` (rad/G).
    pub k: f64,
}

impl EchoCore {
    pub fn new(data: &EchoDataset, model: &EchoModel) -> Self {
        let p = model.template;
        let omega = p.omega();
        let rec = data.records();
        Self {
            x: rec.iter().map(|r| omega * r.x * 1e-6).collect(),
            env: rec.iter().map(|r| c13_envelope(&p, &model.constants, r.x)).collect(),
            y: rec.iter().map(|r| r.y).collect(),
            w: rec.iter().map(|r| 1.0 / r.sigma).collect(),
            k: 2.0 * PI * model.constants.gamma_e_mhz_per_g * 1e6 / omega,
        }
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    /// Phase per gauss at point `i`.
    pub fn slope(&self, i: usize, phi0: f64) -> f64 {
        let x = self.x[i];
        self.k * (2.0 * (0.5 * x + phi0).sin() - phi0.sin() - (x + phi0).sin())
    }

    fn slope_dphi0(&self, i: usize, phi0: f64) -> f64 {
        let x = self.x[i];
        self.k * (2.0 * (0.5 * x + phi0).cos() - phi0.cos() - (x + phi0).cos())
    }

    /// Model value and derivatives with respect to (b, φ₀, c, baseline).
    pub fn eval(&self, i: usize, p: &[f64; 4]) -> (f64, [f64; 4]) {
        let [b, phi0, c, base] = *p;
        let g = self.slope(i, phi0);
        let (s, co) = (b * g).sin_cos();
        let e = 0.5 * self.env[i];
        let f = base + c * e * co;
        let d = [
            -c * e * s * g,
            -c * e * s * b * self.slope_dphi0(i, phi0),
            e * co,
            1.0,
        ];
        (f, d)
    }

    #[cfg(test)]
    pub fn sse(&self, p: &[f64; 4]) -> f64 {
        (0..self.len())
            .map(|i| {
                let r = (self.eval(i, p).0 - self.y[i]) * self.w[i];
                r * r
            })
            .sum()
    }

    /// Weighted linear least squares for (contrast, baseline) at fixed (b, φ₀).
    /// Returns `(c, base, sse)`.
    pub fn solve_linear(&self, b: f64, phi0: f64) -> (f64, f64, f64) {
        let h: Vec<f64> = (0..self.len())
            .map(|i| 0.5 * self.env[i] * (b * self.slope(i, phi0)).cos())
            .collect();
        linear_fit(self, &h)
    }

}

/// Model value and analytic gradient with respect to
/// (b_perp, φ₀, contrast, baseline) at every record of `data`.
pub fn echo_prediction(data: &EchoDataset, model: &EchoModel, p: &EchoFitParams) -> Vec<(f64, [f64; 4])> {
    let core = EchoCore::new(data, model);
    let a = p.to_array();
    (0..core.len()).map(|i| core.eval(i, &a)).collect()
}

/// Weighted fit of `y ≈ c h + base`; returns `(c, base, sse)`.
fn linear_fit(core: &EchoCore, h: &[f64]) -> (f64, f64, f64) {
    let (mut shh, mut sh, mut s1, mut shy, mut sy, mut syy) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for i in 0..core.len() {
        let w2 = core.w[i] * core.w[i];
        let (h, y) = (h[i], core.y[i]);
        shh += w2 * h * h;
        sh += w2 * h;
        s1 += w2;
        shy += w2 * h * y;
        sy += w2 * y;
        syy += w2 * y * y;
    }
    let det = shh * s1 - sh * sh;
    let (c, base) = if det.abs() > 1e-12 * shh * s1 {
        ((shy * s1 - sh * sy) / det, (shh * sy - sh * shy) / det)
    } else {
        (0.0, sy / s1)
    };
    // Expand the quadratic form instead of a second pass over the data.
    let sse = syy + c * c * shh + base * base * s1 + 2.0 * c * base * sh - 2.0 * c * shy - 2.0 * base * sy;
    (c, base, sse.max(0.0))
}

/// Echo least squares with some parameters held fixed. When `b` is free it
/// is carried internally as `s` with `b = s²`.
pub(crate) struct EchoProblem<'a> {
    pub core: &'a EchoCore,
    pub fixed: [Option<f64>; 4],
}

impl<'a> EchoProblem<'a> {
    pub fn free(&self) -> Vec<usize> {
        (0..4).filter(|&k| self.fixed[k].is_none()).collect()
    }

    pub fn external(&self, q: &DVector<f64>) -> [f64; 4] {
        let mut out = [0.0; 4];
        let mut it = q.iter();
        for (k, slot) in out.iter_mut().enumerate() {
            *slot = match self.fixed[k] {
                Some(v) => v,
                None => {
                    let v = *it.next().expect("parameter count");
                    if k == 0 {
                        v * v
                    } else {
                        v
                    }
                }
            };
        }
        out
    }

    pub fn internal(&self, p: &[f64; 4]) -> DVector<f64> {
        let v: Vec<f64> = self
            .free()
            .into_iter()
            .map(|k| if k == 0 { p[0].max(0.0).sqrt() } else { p[k] })
            .collect();
        DVector::from_vec(v)
    }
}

impl LeastSquares for EchoProblem<'_> {
    fn residuals(&self, q: &DVector<f64>) -> DVector<f64> {
        let p = self.external(q);
        let c = self.core;
        DVector::from_iterator(c.len(), (0..c.len()).map(|i| (c.eval(i, &p).0 - c.y[i]) * c.w[i]))
    }

    fn jacobian(&self, q: &DVector<f64>) -> DMatrix<f64> {
        let p = self.external(q);
        let free = self.free();
        let c = self.core;
        let mut j = DMatrix::zeros(c.len(), free.len());
        for i in 0..c.len() {
            let (_, d) = c.eval(i, &p);
            for (col, &k) in free.iter().enumerate() {
                let chain = if k == 0 { 2.0 * q[col] } else { 1.0 };
                j[(i, col)] = d[k] * chain * c.w[i];
            }
        }
        j
    }
}

/// Weighted Jacobian in external parameters, for covariance estimates.
pub(crate) fn external_jacobian(core: &EchoCore, p: &[f64; 4]) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(core.len(), 4);
    for i in 0..core.len() {
        let (_, d) = core.eval(i, p);
        for k in 0..4 {
            j[(i, k)] = d[k] * core.w[i];
        }
    }
    j
}

pub(crate) fn wrap_phase(phi: f64) -> f64 {
    phi.rem_euclid(2.0 * PI)
}

/// Number of sign changes of the data about its weighted mean.
fn mean_crossings(core: &EchoCore) -> usize {
    let sw: f64 = core.w.iter().map(|w| w * w).sum();
    let mean = core.y.iter().zip(&core.w).map(|(y, w)| y * w * w).sum::<f64>() / sw;
    let signs: Vec<bool> = core.y.iter().map(|y| *y >= mean).collect();
    signs.windows(2).filter(|w| w[0] != w[1]).count()
}

/// Largest change of the phase per gauss between neighbouring delays,
/// starting from zero phase at τ = 0.
fn max_phase_step(core: &EchoCore, phi0: f64) -> f64 {
    let mut prev = 0.0;
    let mut step = 0.0f64;
    for i in 0..core.len() {
        let g = core.slope(i, phi0);
        step = step.max((g - prev).abs());
        prev = g;
    }
    step
}

/// Whether the fringe at (b, φ₀) is sampled without aliasing: the phase may
/// move by at most π between neighbouring delays.
fn resolvable(core: &EchoCore, b: f64, phi0: f64) -> bool {
    b * max_phase_step(core, phi0) <= PI
}

/// Best nodes of a Cartesian scan in `(u, v) = b (sin φ₀, cos φ₀)`.
///
/// The phase `b G(τ; φ₀) = K (u A(x) + v B(x))` is linear in `(u, v)`, so a
/// uniform grid there samples the correlated (b, φ₀) valley evenly. Spacing
/// keeps the phase change per node below π/4 at every delay. One start is
/// taken from each of 8 sectors of the half plane (φ₀ and φ₀ + π coincide).
fn scan_starts(core: &EchoCore) -> Vec<[f64; 4]> {
    let n = core.len();
    let a: Vec<f64> = core.x.iter().map(|&x| core.k * (2.0 * (0.5 * x).cos() - 1.0 - x.cos())).collect();
    let bv: Vec<f64> = core.x.iter().map(|&x| core.k * (2.0 * (0.5 * x).sin() - x.sin())).collect();
    let amax = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let bmax = bv.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if amax == 0.0 || bmax == 0.0 {
        return Vec::new();
    }
    let b_lim = (0..64)
        .map(|k| PI / max_phase_step(core, k as f64 * PI / 32.0))
        .fold(0.0f64, f64::max);
    const MAX_NODES: f64 = 40_000.0;
    let mut du = 0.25 * PI / amax;
    let mut dv = 0.25 * PI / bmax;
    let nodes = 2.0 * b_lim / du * b_lim / dv;
    if nodes > MAX_NODES {
        let f = (nodes / MAX_NODES).sqrt();
        du *= f;
        dv *= f;
    }
    let nu = (b_lim / du).ceil() as i64;
    let nv = (b_lim / dv).ceil() as i64;
    let mut best = [(f64::INFINITY, [0.0; 4]); 8];
    let mut h = vec![0.0; n];
    for iv in 0..=nv {
        let v = iv as f64 * dv;
        for iu in -nu..=nu {
            let u = iu as f64 * du;
            let b = u.hypot(v);
            if b > b_lim || (iv == 0 && iu < 0) {
                continue;
            }
            let phi0 = u.atan2(v).rem_euclid(PI);
            if !resolvable(core, b, phi0) {
                continue;
            }
            for i in 0..n {
                h[i] = 0.5 * core.env[i] * (u * a[i] + v * bv[i]).cos();
            }
            let (c, base, sse) = linear_fit(core, &h);
            let sector = ((phi0 / PI * 8.0) as usize).min(7);
            if sse < best[sector].0 {
                best[sector] = (sse, [b, phi0, c, base]);
            }
        }
    }
    best.iter().filter(|(s, _)| s.is_finite()).map(|(_, p)| *p).collect()
}

/// Starting points from the fringe-count heuristic over 8 values of φ₀, plus
/// the best node of a coarse (b, φ₀) scan.
fn initial_candidates(core: &EchoCore) -> Vec<[f64; 4]> {
    let crossings = mean_crossings(core) as f64;
    let mut starts = Vec::new();
    let mut b_scale = 0.0f64;
    for k in 0..8 {
        let phi0 = k as f64 * PI / 4.0;
        // Total variation of the phase per gauss, starting from φ(0) = 0.
        let mut tv = 0.0;
        let mut prev = 0.0;
        for i in 0..core.len() {
            let g = core.slope(i, phi0);
            tv += (g - prev).abs();
            prev = g;
        }
        if tv <= 0.0 {
            continue;
        }
        let b_limit = PI / max_phase_step(core, phi0);
        let b0 = (PI * crossings.max(0.5) / tv).min(b_limit);
        b_scale = b_scale.max(b0);
        for m in [0.7, 1.0, 1.4] {
            let b = (b0 * m).min(b_limit);
            let (c, base, _) = core.solve_linear(b, phi0);
            starts.push([b, phi0, c, base]);
        }
    }
    if b_scale > 0.0 {
        starts.extend(scan_starts(core));
    }
    starts
}

/// Run LM from each start and keep the lowest SSE.
pub(crate) fn best_of(problem: &EchoProblem, starts: &[[f64; 4]], cfg: &LmConfig) -> Option<super::lm::LmReport> {
    starts
        .iter()
        .map(|s| minimize(problem, problem.internal(s), cfg))
        .filter(|r| r.sse.is_finite())
        .min_by(|a, b| a.sse.total_cmp(&b.sse))
}

/// Minimum SSE at fixed `b`, re-fitting the other three parameters.
pub(crate) fn profile_b(core: &EchoCore, b: f64, warm: &[[f64; 4]], cfg: &LmConfig) -> (f64, [f64; 4]) {
    let problem = EchoProblem {
        core,
        fixed: [Some(b), None, None, None],
    };
    let mut starts: Vec<[f64; 4]> = warm.iter().map(|w| [b, w[1], w[2], w[3]]).collect();
    for k in 0..8 {
        let phi0 = k as f64 * PI / 4.0;
        let (c, base, _) = core.solve_linear(b, phi0);
        starts.push([b, phi0, c, base]);
    }
    match best_of(&problem, &starts, cfg) {
        Some(r) => (r.sse, problem.external(&r.params)),
        None => (f64::INFINITY, [b, 0.0, 0.0, 0.0]),
    }
}

/// Profile interval `{b ≥ 0 : SSE_prof(b) ≤ sse_min + delta}`.
fn profile_interval(core: &EchoCore, best: &[f64; 4], sse_min: f64, delta: f64, step: f64, cfg: &LmConfig) -> (f64, f64) {
    let thr = sse_min + delta;
    let b_hat = best[0];
    let above = |b: f64, warm: &[f64; 4]| -> (bool, [f64; 4]) {
        let (s, p) = profile_b(core, b, &[*best, *warm], cfg);
        (s > thr, p)
    };
    // Upper edge: expand then bisect.
    let mut h = step.max(1e-9);
    let mut lo = b_hat;
    let mut warm = *best;
    let mut hi = b_hat + h;
    for _ in 0..80 {
        let (out, p) = above(hi, &warm);
        if out {
            break;
        }
        lo = hi;
        warm = p;
        h *= 2.0;
        hi = b_hat + h;
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let (out, p) = above(mid, &warm);
        if out {
            hi = mid;
        } else {
            lo = mid;
            warm = p;
        }
    }
    let upper = 0.5 * (lo + hi);
    // Lower edge, clamped at the physical boundary.
    let lower = if !above(0.0, best).0 {
        0.0
    } else {
        let (mut lo, mut hi) = (0.0, b_hat);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if above(mid, best).0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    };
    (lower, upper)
}

/// Weighted least-squares fit of the echo fringe model.
///
/// `initial` skips the multistart heuristic and starts from the given point.
pub fn fit_echo(data: &EchoDataset, model: &EchoModel, initial: Option<EchoFitParams>) -> Result<FitResult, FitError> {
    fit_echo_with(data, model, initial, &LmConfig::default())
}

pub fn fit_echo_with(
    data: &EchoDataset,
    model: &EchoModel,
    initial: Option<EchoFitParams>,
    cfg: &LmConfig,
) -> Result<FitResult, FitError> {
    if data.len() < MIN_ECHO_POINTS {
        return Err(FitError::TooFewPoints {
            got: data.len(),
            need: MIN_ECHO_POINTS,
        });
    }
    if !(model.template.f_rot_hz.is_finite() && model.template.f_rot_hz > 0.0) {
        return Err(FitError::InvalidModel("rotation frequency must be > 0".into()));
    }
    let core = EchoCore::new(data, model);
    let starts = match initial {
        Some(p) => {
            if !(p.b_perp >= 0.0) {
                return Err(FitError::InvalidInitial(format!("b_perp must be >= 0, got {}", p.b_perp)));
            }
            vec![p.to_array()]
        }
        None => initial_candidates(&core),
    };
    let problem = EchoProblem {
        core: &core,
        fixed: [None; 4],
    };
    let runs: Vec<_> = starts
        .iter()
        .map(|st| minimize(&problem, problem.internal(st), cfg))
        .filter(|r| r.sse.is_finite())
        .collect();
    // Aliased optima fit noise; use them only if nothing else is available.
    let report = runs
        .iter()
        .filter(|r| {
            let q = problem.external(&r.params);
            resolvable(&core, q[0], q[1])
        })
        .min_by(|a, b| a.sse.total_cmp(&b.sse))
        .or_else(|| runs.iter().min_by(|a, b| a.sse.total_cmp(&b.sse)))
        .cloned()
        .ok_or(FitError::NonFinite)?;
    let mut p = problem.external(&report.params);
    p[1] = wrap_phase(p[1]);

    let n = core.len();
    let dof = n - 4;
    let chi2 = report.sse;
    let reduced = chi2 / dof as f64;
    let j = external_jacobian(&core, &p);
    let cov = covariance(&j, reduced);
    let delta = reduced.max(f64::MIN_POSITIVE);

    let sigma_lin = cov.matrix[(0, 0)].max(0.0).sqrt();
    let mut b_interval = None;
    let mut sigma_b = sigma_lin;
    if cov.singular || p[0] < 2.0 * sigma_lin {
        if cov.singular {
            // Degenerate only if b = 0 is not an equally good explanation.
            let (sse0, _) = profile_b(&core, 0.0, &[p], cfg);
            if sse0 > chi2 + delta {
                return Err(FitError::Identifiability(
                    "echo Jacobian is singular at the optimum".into(),
                ));
            }
        }
        let step = if sigma_lin.is_finite() && sigma_lin > 0.0 {
            sigma_lin
        } else {
            1e-3 * (p[0] + 1e-3)
        };
        let (lo, hi) = profile_interval(&core, &p, chi2, delta, step, cfg);
        b_interval = Some((lo, hi));
        sigma_b = 0.5 * (hi - lo);
    }

    let mut m = [[0.0; 4]; 4];
    for (r, row) in m.iter_mut().enumerate() {
        for (c, v) in row.iter_mut().enumerate() {
            *v = cov.matrix[(r, c)];
        }
    }
    let sig = |k: usize| m[k][k].max(0.0).sqrt();
    Ok(FitResult {
        params: EchoFitParams::from_array(p),
        sigmas: EchoFitParams::from_array([sigma_b, sig(1), sig(2), sig(3)]),
        covariance: m,
        residual_norm: chi2.sqrt(),
        chi2,
        dof,
        reduced_chi2: reduced,
        converged: report.converged,
        iterations: report.iterations,
        gradient_norm: report.gradient_norm,
        b_perp_interval: b_interval,
    })
}
