use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::dataset::RabiDataset;
use super::lm::{minimize, LeastSquares, LmConfig};
use super::{covariance, FitError, MIN_RABI_POINTS};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RabiGuess {
    pub rabi_mhz: f64,
    pub contrast: f64,
    pub baseline: f64,
}

/// Result of `baseline + contrast · sin²(π Ω t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RabiFit {
    pub rabi_mhz: f64,
    pub rabi_sigma_mhz: f64,
    pub contrast: f64,
    pub contrast_sigma: f64,
    pub baseline: f64,
    pub baseline_sigma: f64,
    pub covariance: [[f64; 3]; 3],
    pub residual_norm: f64,
    pub reduced_chi2: f64,
    pub converged: bool,
    pub iterations: usize,
}

struct RabiProblem<'a> {
    t: &'a [f64],
    y: &'a [f64],
    w: &'a [f64],
}

impl RabiProblem<'_> {
    fn eval(t: f64, p: &[f64]) -> (f64, [f64; 3]) {
        let s = (PI * p[0] * t).sin();
        let f = p[2] + p[1] * s * s;
        (f, [p[1] * PI * t * (2.0 * PI * p[0] * t).sin(), s * s, 1.0])
    }

    fn weighted_jacobian(&self, p: &[f64]) -> DMatrix<f64> {
        let mut j = DMatrix::zeros(self.t.len(), 3);
        for (i, t) in self.t.iter().enumerate() {
            let (_, d) = Self::eval(*t, p);
            for k in 0..3 {
                j[(i, k)] = d[k] * self.w[i];
            }
        }
        j
    }

    /// Linear (contrast, baseline) at fixed Ω; returns `(c, base, sse)`.
    fn solve_linear(&self, omega: f64) -> (f64, f64, f64) {
        let (mut shh, mut sh, mut s1, mut shy, mut sy) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for i in 0..self.t.len() {
            let s = (PI * omega * self.t[i]).sin();
            let h = s * s;
            let w2 = self.w[i] * self.w[i];
            shh += w2 * h * h;
            sh += w2 * h;
            s1 += w2;
            shy += w2 * h * self.y[i];
            sy += w2 * self.y[i];
        }
        let det = shh * s1 - sh * sh;
        let (c, base) = if det.abs() > 1e-12 * shh * s1 {
            ((shy * s1 - sh * sy) / det, (shh * sy - sh * shy) / det)
        } else {
            (0.0, sy / s1)
        };
        let sse = self.residuals(&DVector::from_vec(vec![omega, c, base])).norm_squared();
        (c, base, sse)
    }
}

impl LeastSquares for RabiProblem<'_> {
    fn residuals(&self, p: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.t.len(),
            (0..self.t.len()).map(|i| (Self::eval(self.t[i], p.as_slice()).0 - self.y[i]) * self.w[i]),
        )
    }

    fn jacobian(&self, p: &DVector<f64>) -> DMatrix<f64> {
        self.weighted_jacobian(p.as_slice())
    }
}

/// Fit a Rabi scan (x = pulse duration in µs, y = population).
pub fn fit_rabi(data: &RabiDataset, initial: Option<RabiGuess>) -> Result<RabiFit, FitError> {
    if data.len() < MIN_RABI_POINTS {
        return Err(FitError::TooFewPoints {
            got: data.len(),
            need: MIN_RABI_POINTS,
        });
    }
    let t: Vec<f64> = data.records().iter().map(|r| r.x).collect();
    let y: Vec<f64> = data.records().iter().map(|r| r.y).collect();
    let w: Vec<f64> = data.records().iter().map(|r| 1.0 / r.sigma).collect();
    let span = t[t.len() - 1] - t[0];
    if span <= 0.0 {
        return Err(FitError::InvalidData("durations must span a nonzero range".into()));
    }
    let problem = RabiProblem { t: &t, y: &y, w: &w };

    let start = match initial {
        Some(g) => {
            if !(g.rabi_mhz.is_finite() && g.rabi_mhz > 0.0) {
                return Err(FitError::InvalidInitial(format!("rabi_mhz must be > 0, got {}", g.rabi_mhz)));
            }
            vec![g.rabi_mhz, g.contrast, g.baseline]
        }
        None => {
            let min_dt = t.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
            let f_max = 0.5 / min_dt;
            let df = 1.0 / (8.0 * span);
            let n = ((f_max / df).ceil() as usize).clamp(8, 200_000);
            let mut best = (f64::INFINITY, vec![0.0; 3]);
            for k in 1..=n {
                let om = f_max * k as f64 / n as f64;
                let (c, base, sse) = problem.solve_linear(om);
                if sse < best.0 {
                    best = (sse, vec![om, c, base]);
                }
            }
            best.1
        }
    };
    let report = minimize(&problem, DVector::from_vec(start), &LmConfig::default());
    let mut p = report.params.clone();
    if !report.sse.is_finite() {
        return Err(FitError::NonFinite);
    }
    // sin²(πΩt) is even in Ω.
    p[0] = p[0].abs();

    let dof = t.len() - 3;
    let reduced = report.sse / dof as f64;
    let cov = covariance(&problem.weighted_jacobian(p.as_slice()), reduced);
    let m = &cov.matrix;
    let sc = m[(1, 1)].max(0.0).sqrt();
    if cov.singular || p[1].abs() < 2.0 * sc {
        return Err(FitError::Identifiability(
            "contrast consistent with zero; Rabi frequency unconstrained".into(),
        ));
    }
    if p[0] * span < 1.0 {
        return Err(FitError::InvalidData(format!(
            "scan of {span} µs covers less than one oscillation at {:.4} MHz",
            p[0]
        )));
    }
    let mut c3 = [[0.0; 3]; 3];
    for (r, row) in c3.iter_mut().enumerate() {
        for (c, v) in row.iter_mut().enumerate() {
            *v = m[(r, c)];
        }
    }
    Ok(RabiFit {
        rabi_mhz: p[0],
        rabi_sigma_mhz: m[(0, 0)].max(0.0).sqrt(),
        contrast: p[1],
        contrast_sigma: sc,
        baseline: p[2],
        baseline_sigma: m[(2, 2)].max(0.0).sqrt(),
        covariance: c3,
        residual_norm: report.sse.sqrt(),
        reduced_chi2: reduced,
        converged: report.converged,
        iterations: report.iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimation::dataset::Record;
    use crate::spindyn::rabi_population;

    fn scan(omega: f64, c: f64) -> RabiDataset {
        RabiDataset::new(
            (0..41)
                .map(|i| {
                    let t = i as f64 * 0.025;
                    Record::new(t, 0.1 + c * rabi_population(t, omega, 0.0), 0.01)
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn noiseless_exact() {
        let f = fit_rabi(&scan(3.6, 0.3), None).unwrap();
        assert!(f.converged);
        assert!((f.rabi_mhz - 3.6).abs() < 1e-6, "{f:?}");
        assert!((f.contrast - 0.3).abs() < 1e-6);
        assert!((f.baseline - 0.1).abs() < 1e-6);
    }

    #[test]
    fn zero_contrast_is_unidentifiable() {
        assert!(matches!(fit_rabi(&scan(3.6, 0.0), None), Err(FitError::Identifiability(_))));
    }

    #[test]
    fn too_few_points() {
        let d = RabiDataset::new((0..4).map(|i| Record::new(i as f64, 0.0, 0.1)).collect()).unwrap();
        assert!(matches!(fit_rabi(&d, None), Err(FitError::TooFewPoints { .. })));
    }
}
