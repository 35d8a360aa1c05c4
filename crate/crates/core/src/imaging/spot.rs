use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{Image, ScanPlane};
use crate::estimation::lm::{minimize, LeastSquares, LmConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpotFitOptions {
    /// Only pixels within this distance of the centre estimate are fitted.
    pub window_um: f64,
    /// Fit passes. Each re-centres the window and radial axis; passes after
    /// the first weight pixels by the previous model instead of the data.
    pub passes: usize,
}

impl Default for SpotFitOptions {
    fn default() -> Self {
        Self {
            window_um: 2.5,
            passes: 3,
        }
    }
}

/// 1/e² radii of a spot along the local radial and azimuthal directions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpotWidth {
    pub radial_um: f64,
    pub azimuthal_um: f64,
    pub center: (f64, f64),
    pub amplitude: f64,
    pub background: f64,
    pub residual_norm: f64,
    pub reduced_chi2: f64,
    pub iterations: usize,
}

impl SpotWidth {
    /// Single-number width: RMS of the two axes.
    pub fn characteristic(&self) -> f64 {
        (0.5 * (self.radial_um.powi(2) + self.azimuthal_um.powi(2))).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SpotFitError {
    #[error("no local maximum within {window_um} µm of ({x}, {v})")]
    NoMaximum { x: f64, v: f64, window_um: f64 },
    #[error("only {0} pixels inside the fit window")]
    TooFewPixels(usize),
    #[error(
        "spot fit did not converge after {iterations} iterations \
         (residual norm {residual_norm:.4}, reduced chi2 {reduced_chi2:.4}, gradient {gradient:.2e})"
    )]
    NotConverged {
        iterations: usize,
        residual_norm: f64,
        reduced_chi2: f64,
        gradient: f64,
    },
}

struct SpotProblem {
    x: Vec<f64>,
    v: Vec<f64>,
    y: Vec<f64>,
    w: Vec<f64>,
    /// Radial unit vector in the image plane.
    e: (f64, f64),
}

impl SpotProblem {
    fn eval(&self, i: usize, p: &[f64]) -> (f64, [f64; 6]) {
        let [cx, cv, wr, wa, a, b] = [p[0], p[1], p[2], p[3], p[4], p[5]];
        let (ex, ey) = self.e;
        let dx = self.x[i] - cx;
        let dv = self.v[i] - cv;
        let ur = dx * ex + dv * ey;
        let ua = -dx * ey + dv * ex;
        let (wr2, wa2) = (wr * wr, wa * wa);
        let g = (-2.0 * (ur * ur / wr2 + ua * ua / wa2)).exp();
        let ag = a * g;
        (
            ag + b,
            [
                4.0 * ag * (ur * ex / wr2 - ua * ey / wa2),
                4.0 * ag * (ur * ey / wr2 + ua * ex / wa2),
                4.0 * ag * ur * ur / (wr2 * wr),
                4.0 * ag * ua * ua / (wa2 * wa),
                g,
                1.0,
            ],
        )
    }
}

impl LeastSquares for SpotProblem {
    fn residuals(&self, p: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.y.len(),
            (0..self.y.len()).map(|i| (self.eval(i, p.as_slice()).0 - self.y[i]) * self.w[i]),
        )
    }

    fn jacobian(&self, p: &DVector<f64>) -> DMatrix<f64> {
        let mut j = DMatrix::zeros(self.y.len(), 6);
        for i in 0..self.y.len() {
            let (_, d) = self.eval(i, p.as_slice());
            for k in 0..6 {
                j[(i, k)] = d[k] * self.w[i];
            }
        }
        j
    }
}

fn radial_axis(plane: ScanPlane, c: (f64, f64)) -> (f64, f64) {
    match plane {
        ScanPlane::Xz => (1.0, 0.0),
        ScanPlane::Xy => {
            let n = c.0.hypot(c.1);
            if n > 0.0 {
                (c.0 / n, c.1 / n)
            } else {
                (1.0, 0.0)
            }
        }
    }
}

fn window(img: &Image, c: (f64, f64), radius: f64, e: (f64, f64)) -> SpotProblem {
    let mut p = SpotProblem {
        x: Vec::new(),
        v: Vec::new(),
        y: Vec::new(),
        w: Vec::new(),
        e,
    };
    for iv in 0..img.nv() {
        for ix in 0..img.nx() {
            let (x, v) = img.coords(ix, iv);
            if (x - c.0).hypot(v - c.1) <= radius {
                let n = img.get(ix, iv) as f64;
                p.x.push(x);
                p.v.push(v);
                p.y.push(n);
                p.w.push(1.0 / n.max(1.0).sqrt());
            }
        }
    }
    p
}

/// Fit `A exp(−2(u_r²/w_r² + u_a²/w_a²)) + B` around `initial_center`, with
/// `u_r` along the direction from the rotation axis to the spot. For `xz`
/// images the radial axis is `x`.
pub fn fit_spot_width(img: &Image, initial_center: (f64, f64), opts: &SpotFitOptions) -> Result<SpotWidth, SpotFitError> {
    let no_max = || SpotFitError::NoMaximum {
        x: initial_center.0,
        v: initial_center.1,
        window_um: opts.window_um,
    };
    // Start from the brightest pixel near the guess.
    let probe = window(img, initial_center, opts.window_um, (1.0, 0.0));
    let k = (0..probe.y.len())
        .max_by(|&a, &b| probe.y[a].total_cmp(&probe.y[b]))
        .ok_or_else(no_max)?;
    let mut sorted = probe.y.clone();
    sorted.sort_by(f64::total_cmp);
    let background = sorted[sorted.len() / 4];
    if !(probe.y[k] > background) {
        return Err(no_max());
    }
    let mut center = (probe.x[k], probe.v[k]);
    let mut params = vec![center.0, center.1, 0.5, 0.5, probe.y[k] - background, background];

    let cfg = LmConfig::default();
    let mut last = None;
    for _ in 0..opts.passes.max(1) {
        let e = radial_axis(img.grid.plane, center);
        let mut problem = window(img, center, opts.window_um, e);
        if problem.y.len() <= 6 {
            return Err(SpotFitError::TooFewPixels(problem.y.len()));
        }
        if last.is_some() {
            // Data weights bias low-count spots narrow; use the model instead.
            for i in 0..problem.y.len() {
                let m = problem.eval(i, &params).0;
                problem.w[i] = 1.0 / m.max(0.5).sqrt();
            }
        }
        let rep = minimize(&problem, DVector::from_vec(params.clone()), &cfg);
        params = rep.params.iter().copied().collect();
        center = (params[0], params[1]);
        last = Some((rep, problem.y.len()));
    }
    let (rep, n) = last.expect("at least one pass");
    let reduced = rep.sse / (n - 6) as f64;
    if !rep.converged {
        return Err(SpotFitError::NotConverged {
            iterations: rep.iterations,
            residual_norm: rep.sse.sqrt(),
            reduced_chi2: reduced,
            gradient: rep.gradient_norm,
        });
    }
    Ok(SpotWidth {
        radial_um: params[2].abs(),
        azimuthal_um: params[3].abs(),
        center,
        amplitude: params[4],
        background: params[5],
        residual_norm: rep.sse.sqrt(),
        reduced_chi2: reduced,
        iterations: rep.iterations,
    })
}
