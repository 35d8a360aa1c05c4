use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::geometry::RotorGeometry;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CollectionMode {
    IlluminationOnly,
    /// Illumination and collection through the same objective.
    #[default]
    ConfocalSquared,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BeamProfile {
    /// 1/e² intensity diameter.
    pub waist_diameter_um: f64,
    /// Count rate N_s of a stationary, beam-centred, steady-state bright NV.
    pub peak_counts_per_s: f64,
    pub collection_mode: CollectionMode,
    /// Constant background added to every detection bin.
    pub background_counts_per_s: f64,
}

impl Default for BeamProfile {
    fn default() -> Self {
        Self {
            waist_diameter_um: 0.6,
            peak_counts_per_s: 1e5,
            collection_mode: CollectionMode::ConfocalSquared,
            background_counts_per_s: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BeamError {
    #[error("beam.{field}: {reason}")]
    Invalid { field: &'static str, reason: String },
    #[error("t_pulse ({t_pulse_us} us) exceeds the rotation period ({period_us} us)")]
    PulseTooLong { t_pulse_us: f64, period_us: f64 },
}

impl BeamProfile {
    pub fn validate(&self) -> Result<(), BeamError> {
        if !(self.waist_diameter_um.is_finite() && self.waist_diameter_um > 0.0) {
            return Err(BeamError::Invalid {
                field: "waist_diameter_um",
                reason: "must be finite and > 0".into(),
            });
        }
        for (field, v) in [
            ("peak_counts_per_s", self.peak_counts_per_s),
            ("background_counts_per_s", self.background_counts_per_s),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(BeamError::Invalid {
                    field,
                    reason: "must be finite and >= 0".into(),
                });
            }
        }
        Ok(())
    }

    /// 1/e² intensity radius.
    pub fn waist_radius_um(&self) -> f64 {
        self.waist_diameter_um / 2.0
    }

    /// Relative excitation intensity at lateral `offset_um` from the beam axis.
    pub fn illumination(&self, offset_um: f64) -> f64 {
        let w = self.waist_radius_um();
        (-2.0 * offset_um * offset_um / (w * w)).exp()
    }

    /// Relative collection efficiency at `offset_um`.
    pub fn collection(&self, offset_um: f64) -> f64 {
        match self.collection_mode {
            CollectionMode::IlluminationOnly => 1.0,
            CollectionMode::ConfocalSquared => self.illumination(offset_um),
        }
    }
}

/// Detected-signal weight at `offset_um`: illumination, times collection in confocal mode.
pub fn beam_intensity(b: &BeamProfile, offset_um: f64) -> f64 {
    b.illumination(offset_um) * b.collection(offset_um)
}

/// Distance (µm) between the NV and the beam axis `dt_us` after the NV
/// crosses the beam centre.
pub fn transit_offset(g: &RotorGeometry, dt_us: f64) -> f64 {
    (2.0 * g.r_nv_um * (PI * g.f_rot_hz * dt_us * 1e-6).sin()).abs()
}

/// Duty-cycle bound `N_s t_pulse / T_rot` in counts/s.
pub fn count_rate_bound(b: &BeamProfile, g: &RotorGeometry, t_pulse_us: f64) -> Result<f64, BeamError> {
    let period = g.period_us();
    if !(t_pulse_us >= 0.0 && t_pulse_us <= period) {
        return Err(BeamError::PulseTooLong {
            t_pulse_us,
            period_us: period,
        });
    }
    Ok(b.peak_counts_per_s * t_pulse_us / period)
}

/// Duty-cycle bound reduced by the beam profile averaged over a pulse centred
/// on the beam.
pub fn expected_count_rate(b: &BeamProfile, g: &RotorGeometry, t_pulse_us: f64) -> Result<f64, BeamError> {
    let bound = count_rate_bound(b, g, t_pulse_us)?;
    if t_pulse_us == 0.0 {
        return Ok(0.0);
    }
    let half = t_pulse_us / 2.0;
    let f = |t: f64| beam_intensity(b, transit_offset(g, t));
    let mean = crate::numeric::adaptive_simpson(&f, -half, half, 1e-12) / t_pulse_us;
    Ok(bound * mean)
}
