//! Adaptive Dormand–Prince 5(4) integrator for small fixed-size systems.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub rtol: f64,
    pub atol: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self { rtol: 1e-8, atol: 1e-12 }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OdeError {
    #[error("step size underflow at t = {t}")]
    StepUnderflow { t: f64 },
    #[error("exceeded {max_steps} steps before reaching t = {t_end}")]
    TooManySteps { max_steps: usize, t_end: f64 },
}

const MAX_STEPS: usize = 1_000_000;

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Integrator state that can be advanced piecewise while keeping its step size.
#[derive(Debug, Clone)]
pub struct Stepper<const N: usize> {
    pub t: f64,
    pub y: [f64; N],
    h: f64,
    tol: Tolerance,
    pub steps: usize,
}

impl<const N: usize> Stepper<N> {
    pub fn new(t0: f64, y0: [f64; N], h0: f64, tol: Tolerance) -> Self {
        Self {
            t: t0,
            y: y0,
            h: h0,
            tol,
            steps: 0,
        }
    }

    /// Advance to exactly `t_end`.
    pub fn advance<F>(&mut self, f: &mut F, t_end: f64) -> Result<(), OdeError>
    where
        F: FnMut(f64, &[f64; N]) -> [f64; N],
    {
        let span = t_end - self.t;
        if span <= 0.0 {
            return Ok(());
        }
        let mut k = [[0.0; N]; 7];
        while self.t < t_end {
            if self.steps >= MAX_STEPS {
                return Err(OdeError::TooManySteps {
                    max_steps: MAX_STEPS,
                    t_end,
                });
            }
            let last = self.t + self.h >= t_end;
            let h = if last { t_end - self.t } else { self.h };
            if h <= f64::EPSILON * self.t.abs().max(1.0) && !last {
                return Err(OdeError::StepUnderflow { t: self.t });
            }
            for s in 0..7 {
                let mut ys = self.y;
                for (j, kj) in k.iter().enumerate().take(s) {
                    let a = A[s][j];
                    if a != 0.0 {
                        for i in 0..N {
                            ys[i] += h * a * kj[i];
                        }
                    }
                }
                k[s] = f(self.t + C[s] * h, &ys);
            }
            let mut y_new = self.y;
            let mut err = 0.0f64;
            for i in 0..N {
                let mut dy = 0.0;
                let mut de = 0.0;
                for s in 0..7 {
                    dy += B[s] * k[s][i];
                    de += E[s] * k[s][i];
                }
                y_new[i] += h * dy;
                let scale = self.tol.atol + self.tol.rtol * self.y[i].abs().max(y_new[i].abs());
                err = err.max((h * de).abs() / scale);
            }
            self.steps += 1;
            let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            if err <= 1.0 {
                self.t = if last { t_end } else { self.t + h };
                self.y = y_new;
                if !last {
                    self.h = h * factor;
                }
            } else {
                self.h = h * factor.min(1.0);
            }
        }
        Ok(())
    }
}
