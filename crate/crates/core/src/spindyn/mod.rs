//! Coherent dynamics of the m_S = 0 ↔ −1 pseudo-spin.
//!
//! States are Bloch vectors with `+z` = m_S = 0. A drive of Rabi frequency Ω
//! (linear, MHz), detuning Δ (MHz) and phase φ rotates the Bloch vector about
//! `(Ω cos φ, Ω sin φ, Δ)` at angular rate `2π √(Ω² + Δ²)` rad/µs.

mod echo;
mod sequence;

pub use echo::{c13_envelope, echo_phase, echo_phase_slope, echo_signal, revival_time_us, EchoParams};
pub use sequence::{
    simulate_sequence, simulate_sequence_with, SequenceOptions, SequenceTrajectory, SpinError, TrajectoryPoint,
};

use std::f64::consts::PI;

use crate::geometry::Vec3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpinState {
    pub bloch: Vec3,
}

impl Default for SpinState {
    fn default() -> Self {
        Self::ground()
    }
}

impl SpinState {
    /// Optically polarised m_S = 0.
    pub fn ground() -> Self {
        Self { bloch: Vec3::z() }
    }

    pub fn excited() -> Self {
        Self { bloch: -Vec3::z() }
    }

    pub fn new(bloch: Vec3) -> Self {
        Self { bloch }
    }

    pub fn population_ms0(&self) -> f64 {
        0.5 * (1.0 + self.bloch.z)
    }

    pub fn population_ms1(&self) -> f64 {
        0.5 * (1.0 - self.bloch.z)
    }

    pub fn is_physical(&self) -> bool {
        self.bloch.norm() <= 1.0 + 1e-9
    }

    /// Scale the transverse coherence by `factor` (pure dephasing).
    pub fn dephase(&self, factor: f64) -> Self {
        Self::new(Vec3::new(self.bloch.x * factor, self.bloch.y * factor, self.bloch.z))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseSpec {
    pub start_us: f64,
    pub duration_us: f64,
    pub rabi_mhz: f64,
    pub detuning_mhz: f64,
    pub phase_rad: f64,
}

impl PulseSpec {
    pub fn resonant(duration_us: f64, rabi_mhz: f64) -> Self {
        Self {
            start_us: 0.0,
            duration_us,
            rabi_mhz,
            detuning_mhz: 0.0,
            phase_rad: 0.0,
        }
    }
}

/// P(m_S = −1) after driving m_S = 0 for `t_us` with constant Ω and Δ.
pub fn rabi_population(t_us: f64, omega_mhz: f64, delta_mhz: f64) -> f64 {
    let gen_sq = omega_mhz * omega_mhz + delta_mhz * delta_mhz;
    if gen_sq == 0.0 {
        return 0.0;
    }
    let s = (PI * gen_sq.sqrt() * t_us).sin();
    (omega_mhz * omega_mhz / gen_sq * s * s).clamp(0.0, 1.0)
}

/// Rotate `v` by `angle` about the unit vector `axis` (Rodrigues).
pub(crate) fn rotate(v: &Vec3, axis: &Vec3, angle: f64) -> Vec3 {
    let (s, c) = angle.sin_cos();
    v * c + axis.cross(v) * s + axis * (axis.dot(v) * (1.0 - c))
}

pub fn apply_pulse(state: &SpinState, pulse: &PulseSpec) -> SpinState {
    let gen = pulse.rabi_mhz.hypot(pulse.detuning_mhz);
    if gen == 0.0 || pulse.duration_us == 0.0 {
        return *state;
    }
    let (sp, cp) = pulse.phase_rad.sin_cos();
    let axis = Vec3::new(pulse.rabi_mhz * cp, pulse.rabi_mhz * sp, pulse.detuning_mhz) / gen;
    SpinState::new(rotate(&state.bloch, &axis, 2.0 * PI * gen * pulse.duration_us))
}

/// Free precession by an accumulated phase `2π ∫Δ dt` (radians) about `+z`.
pub fn precess(state: &SpinState, phase_rad: f64) -> SpinState {
    let (s, c) = phase_rad.sin_cos();
    let b = state.bloch;
    SpinState::new(Vec3::new(b.x * c - b.y * s, b.x * s + b.y * c, b.z))
}
