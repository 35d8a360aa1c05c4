//! Rigid-rotor kinematics and magnetic-field projections.
//!
//! The rotation axis is the lab `z` axis. An NV centre sits at radius
//! `r_nv` from the axis and its quantisation axis makes a fixed polar angle
//! `theta_nv` with `z`; both its position and its axis azimuth advance at
//! `2π f_rot t`. Angles are given in degrees at the interface and converted
//! to radians once, inside the accessors below.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

/// Lab-frame 3-vector. Units depend on context (µm for positions, G for fields).
pub type Vec3 = nalgebra::Vector3<f64>;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum GeometryError {
    #[error("{field}: {reason}")]
    Invalid { field: &'static str, reason: String },
}

fn invalid(field: &'static str, reason: impl Into<String>) -> GeometryError {
    GeometryError::Invalid {
        field,
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RotorGeometry {
    pub f_rot_hz: f64,
    pub r_nv_um: f64,
    pub theta_nv_deg: f64,
    /// NV axis azimuth at the trigger edge.
    pub phi_nv0_deg: f64,
    /// Azimuth of the NV position at the trigger edge.
    pub phi_pos0_deg: f64,
}

impl Default for RotorGeometry {
    fn default() -> Self {
        Self {
            f_rot_hz: 10_000.0 / 3.0,
            r_nv_um: 10.0,
            theta_nv_deg: 54.7,
            phi_nv0_deg: 90.0,
            phi_pos0_deg: 0.0,
        }
    }
}

impl RotorGeometry {
    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(self.f_rot_hz.is_finite() && self.f_rot_hz > 0.0) {
            return Err(invalid("f_rot_hz", "must be finite and > 0"));
        }
        if !(self.r_nv_um.is_finite() && self.r_nv_um >= 0.0) {
            return Err(invalid("r_nv_um", "must be finite and >= 0"));
        }
        if !(0.0..=180.0).contains(&self.theta_nv_deg) {
            return Err(invalid("theta_nv_deg", "must lie in [0, 180]"));
        }
        if !(self.phi_nv0_deg.is_finite() && self.phi_pos0_deg.is_finite()) {
            return Err(invalid("phi_nv0_deg", "azimuths must be finite"));
        }
        Ok(())
    }

    /// Rotation period in seconds.
    pub fn period_s(&self) -> f64 {
        1.0 / self.f_rot_hz
    }

    pub fn period_us(&self) -> f64 {
        1e6 / self.f_rot_hz
    }

    /// Angular rotation rate in rad/s.
    pub fn omega(&self) -> f64 {
        2.0 * PI * self.f_rot_hz
    }

    /// Rotor angle (rad) accumulated since the trigger edge.
    pub fn rotor_angle(&self, t_s: f64) -> f64 {
        self.omega() * t_s
    }

    /// Linear speed of the NV along its orbit in µm/µs.
    pub fn nv_speed_um_per_us(&self) -> f64 {
        self.omega() * self.r_nv_um * 1e-6
    }

    pub fn theta_nv(&self) -> f64 {
        self.theta_nv_deg.to_radians()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FieldConfig {
    pub b0_gauss: f64,
    pub theta_b_deg: f64,
    pub phi_b_deg: f64,
    /// Unit vector of the microwave magnetic field in the lab frame.
    pub mw_dir: [f64; 3],
    pub mw_amp_gauss: f64,
}

impl Default for FieldConfig {
    fn default() -> Self {
        Self {
            b0_gauss: 6.2,
            theta_b_deg: 1.0,
            phi_b_deg: 0.0,
            mw_dir: [1.0, 0.0, 0.0],
            mw_amp_gauss: 1.0,
        }
    }
}

impl FieldConfig {
    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(self.b0_gauss.is_finite() && self.b0_gauss >= 0.0) {
            return Err(invalid("b0_gauss", "must be finite and >= 0"));
        }
        if !(self.theta_b_deg.is_finite() && self.phi_b_deg.is_finite()) {
            return Err(invalid("theta_b_deg", "field angles must be finite"));
        }
        let norm = self.mw_direction().norm();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(invalid(
                "mw_dir",
                format!("must be a unit vector (|mw_dir| = {norm})"),
            ));
        }
        if !(self.mw_amp_gauss.is_finite() && self.mw_amp_gauss >= 0.0) {
            return Err(invalid("mw_amp_gauss", "must be finite and >= 0"));
        }
        Ok(())
    }

    pub fn mw_direction(&self) -> Vec3 {
        Vec3::new(self.mw_dir[0], self.mw_dir[1], self.mw_dir[2])
    }

    /// Static bias field vector in G.
    pub fn bias_vector(&self) -> Vec3 {
        let (st, ct) = self.theta_b_deg.to_radians().sin_cos();
        let (sp, cp) = self.phi_b_deg.to_radians().sin_cos();
        self.b0_gauss * Vec3::new(st * cp, st * sp, ct)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhysicalConstants {
    /// Electron gyromagnetic ratio in MHz/G.
    pub gamma_e_mhz_per_g: f64,
    /// ¹³C gyromagnetic ratio in kHz/G.
    pub gamma_c13_khz_per_g: f64,
    pub d_zfs_ghz: f64,
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self {
            gamma_e_mhz_per_g: 2.802,
            gamma_c13_khz_per_g: 1.075,
            d_zfs_ghz: 2.87,
        }
    }
}

impl PhysicalConstants {
    pub fn validate(&self) -> Result<(), GeometryError> {
        for (name, v) in [
            ("gamma_e_mhz_per_g", self.gamma_e_mhz_per_g),
            ("gamma_c13_khz_per_g", self.gamma_c13_khz_per_g),
            ("d_zfs_ghz", self.d_zfs_ghz),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(name, "must be finite and > 0"));
            }
        }
        Ok(())
    }
}

/// NV position in µm at time `t_s` (seconds after the trigger edge).
pub fn nv_position(g: &RotorGeometry, t_s: f64) -> Vec3 {
    let a = g.rotor_angle(t_s) + g.phi_pos0_deg.to_radians();
    Vec3::new(g.r_nv_um * a.cos(), g.r_nv_um * a.sin(), 0.0)
}

/// Unit vector along the NV axis at time `t_s`.
pub fn nv_axis(g: &RotorGeometry, t_s: f64) -> Vec3 {
    let (st, ct) = g.theta_nv().sin_cos();
    let a = g.rotor_angle(t_s) + g.phi_nv0_deg.to_radians();
    Vec3::new(st * a.cos(), st * a.sin(), ct)
}

/// Fringe phase φ₀ = φ_NV0 − φ_B in radians.
pub fn fringe_phase(g: &RotorGeometry, f: &FieldConfig) -> f64 {
    (g.phi_nv0_deg - f.phi_b_deg).to_radians()
}

/// Amplitude of the rotation-induced AC field, `B₀ sin θ_NV sin θ_B`, in G.
pub fn effective_amplitude(g: &RotorGeometry, f: &FieldConfig) -> f64 {
    f.b0_gauss * g.theta_nv().sin() * f.theta_b_deg.to_radians().sin()
}

/// Time-independent part of `n·B` in G.
pub fn dc_projection(g: &RotorGeometry, f: &FieldConfig) -> f64 {
    f.b0_gauss * g.theta_nv().cos() * f.theta_b_deg.to_radians().cos()
}

/// Effective AC field seen along the NV axis, in G.
pub fn effective_field(g: &RotorGeometry, f: &FieldConfig, t_s: f64) -> f64 {
    effective_amplitude(g, f) * (g.rotor_angle(t_s) + fringe_phase(g, f)).cos()
}

/// `∫ effective_field dt` over `[t0_s, t1_s]`, in G·s.
pub fn integrated_effective_field(g: &RotorGeometry, f: &FieldConfig, t0_s: f64, t1_s: f64) -> f64 {
    let w = g.omega();
    let phi0 = fringe_phase(g, f);
    effective_amplitude(g, f) * ((w * t1_s + phi0).sin() - (w * t0_s + phi0).sin()) / w
}

/// Full Zeeman projection `γ_e (n·B)` in MHz, DC part included.
pub fn zeeman_projection(g: &RotorGeometry, f: &FieldConfig, c: &PhysicalConstants, t_s: f64) -> f64 {
    c.gamma_e_mhz_per_g * nv_axis(g, t_s).dot(&f.bias_vector())
}

/// Transverse microwave field `|n × B_mw|` in G.
pub fn mw_coupling(g: &RotorGeometry, f: &FieldConfig, t_s: f64) -> f64 {
    nv_axis(g, t_s).cross(&f.mw_direction()).norm() * f.mw_amp_gauss
}
