use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::geometry::PhysicalConstants;

/// Parameters of the closed-form Hahn-echo fringe model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EchoParams {
    pub b_perp_gauss: f64,
    pub phi0_rad: f64,
    pub f_rot_hz: f64,
    pub t2_us: f64,
    pub contrast: f64,
    pub envelope_exponent: f64,
    /// Bias magnitude setting the ¹³C Larmor period.
    pub b0_gauss: f64,
    /// Half-width of each revival lobe.
    pub collapse_width_us: f64,
}

impl Default for EchoParams {
    fn default() -> Self {
        Self {
            b_perp_gauss: 0.0,
            phi0_rad: 0.0,
            f_rot_hz: 10_000.0 / 3.0,
            t2_us: 350.0,
            contrast: 1.0,
            envelope_exponent: 4.0,
            b0_gauss: 6.2,
            collapse_width_us: 110.0,
        }
    }
}

impl EchoParams {
    pub fn omega(&self) -> f64 {
        2.0 * PI * self.f_rot_hz
    }
}

/// Echo phase per gauss of `b_perp`: `φ(τ) = b_perp · echo_phase_slope(τ)`.
pub fn echo_phase_slope(p: &EchoParams, c: &PhysicalConstants, tau_us: f64) -> f64 {
    let w = p.omega();
    let x = w * tau_us * 1e-6;
    let k = 2.0 * PI * c.gamma_e_mhz_per_g * 1e6 / w;
    let phi0 = p.phi0_rad;
    k * (2.0 * (0.5 * x + phi0).sin() - phi0.sin() - (x + phi0).sin())
}

pub fn echo_phase(p: &EchoParams, c: &PhysicalConstants, tau_us: f64) -> f64 {
    if p.b_perp_gauss == 0.0 {
        return 0.0;
    }
    p.b_perp_gauss * echo_phase_slope(p, c, tau_us)
}

/// Spacing of ¹³C echo revivals, `2 / (γ₁₃C B₀)`, in µs.
pub fn revival_time_us(b0_gauss: f64, c: &PhysicalConstants) -> f64 {
    2.0 / (c.gamma_c13_khz_per_g * 1e3 * b0_gauss) * 1e6
}

pub fn c13_envelope(p: &EchoParams, c: &PhysicalConstants, tau_us: f64) -> f64 {
    let damping = (-(tau_us / p.t2_us).powf(p.envelope_exponent)).exp();
    let lobe = |dt: f64| (-(dt / p.collapse_width_us).powi(8)).exp();
    let tau_r = revival_time_us(p.b0_gauss, c);
    let comb = if tau_r.is_finite() {
        let k = (tau_us / tau_r).floor();
        (lobe(tau_us - k * tau_r) + lobe(tau_us - (k + 1.0) * tau_r)).min(1.0)
    } else {
        lobe(tau_us)
    };
    damping * comb
}

/// Probability of m_S = 0 after the echo.
pub fn echo_signal(p: &EchoParams, c: &PhysicalConstants, tau_us: f64) -> f64 {
    let fringe = echo_phase(p, c, tau_us).cos();
    (0.5 + 0.5 * p.contrast * c13_envelope(p, c, tau_us) * fringe).clamp(0.0, 1.0)
}
