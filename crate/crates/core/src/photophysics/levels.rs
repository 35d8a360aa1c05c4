use nalgebra::{Matrix5, Vector5};
use serde::{Deserialize, Serialize};

/// Populations of the five-level optical model.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LevelPopulations {
    pub g0: f64,
    pub g1: f64,
    pub e0: f64,
    pub e1: f64,
    pub s: f64,
}

impl LevelPopulations {
    pub fn bright() -> Self {
        Self {
            g0: 1.0,
            ..Self::default()
        }
    }

    pub fn dark() -> Self {
        Self {
            g1: 1.0,
            ..Self::default()
        }
    }

    /// Ground-state mixture with `p_ms0` in m_S = 0.
    pub fn from_spin(p_ms0: f64) -> Self {
        Self {
            g0: p_ms0,
            g1: 1.0 - p_ms0,
            ..Self::default()
        }
    }

    pub fn to_vector(&self) -> Vector5<f64> {
        Vector5::new(self.g0, self.g1, self.e0, self.e1, self.s)
    }

    pub fn from_vector(v: &Vector5<f64>) -> Self {
        Self {
            g0: v[0],
            g1: v[1],
            e0: v[2],
            e1: v[3],
            s: v[4],
        }
    }

    pub fn sum(&self) -> f64 {
        self.g0 + self.g1 + self.e0 + self.e1 + self.s
    }

    pub fn excited(&self) -> f64 {
        self.e0 + self.e1
    }

    /// L1 distance between two population vectors.
    pub fn distance(&self, other: &Self) -> f64 {
        (self.to_vector() - other.to_vector()).abs().sum()
    }
}

/// Transition rates in 1/µs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RateModel {
    pub pump_rate_peak_per_us: f64,
    pub radiative_rate_per_us: f64,
    pub isc_rate_e1_per_us: f64,
    pub isc_rate_e0_per_us: f64,
    pub singlet_decay_per_us: f64,
    pub singlet_branching_to_g0: f64,
}

impl Default for RateModel {
    fn default() -> Self {
        Self {
            pump_rate_peak_per_us: 20.0,
            radiative_rate_per_us: 1.0 / 0.012,
            isc_rate_e1_per_us: 80.0,
            isc_rate_e0_per_us: 8.0,
            singlet_decay_per_us: 1.0 / 0.220,
            singlet_branching_to_g0: 0.8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("rates.{field}: {reason}")]
pub struct RateError {
    pub field: &'static str,
    pub reason: &'static str,
}

impl RateModel {
    pub fn validate(&self) -> Result<(), RateError> {
        for (field, v) in [
            ("pump_rate_peak_per_us", self.pump_rate_peak_per_us),
            ("radiative_rate_per_us", self.radiative_rate_per_us),
            ("isc_rate_e1_per_us", self.isc_rate_e1_per_us),
            ("isc_rate_e0_per_us", self.isc_rate_e0_per_us),
            ("singlet_decay_per_us", self.singlet_decay_per_us),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(RateError {
                    field,
                    reason: "must be finite and >= 0",
                });
            }
        }
        if !(0.0..=1.0).contains(&self.singlet_branching_to_g0) {
            return Err(RateError {
                field: "singlet_branching_to_g0",
                reason: "must lie in [0, 1]",
            });
        }
        Ok(())
    }

    /// Generator `A` of `dp/dt = A p` at relative intensity `intensity`.
    pub fn generator(&self, intensity: f64) -> Matrix5<f64> {
        let kp = self.pump_rate_peak_per_us * intensity;
        let kr = self.radiative_rate_per_us;
        let (k0, k1) = (self.isc_rate_e0_per_us, self.isc_rate_e1_per_us);
        let ks = self.singlet_decay_per_us;
        let b = self.singlet_branching_to_g0;
        #[rustfmt::skip]
        let a = Matrix5::new(
            -kp, 0.0, kr, 0.0, b * ks,
            0.0, -kp, 0.0, kr, (1.0 - b) * ks,
            kp, 0.0, -(kr + k0), 0.0, 0.0,
            0.0, kp, 0.0, -(kr + k1), 0.0,
            0.0, 0.0, k0, k1, -ks,
        );
        a
    }

    /// Exact propagator `exp(A dt)` for constant intensity.
    pub fn propagator(&self, intensity: f64, dt_us: f64) -> Matrix5<f64> {
        (self.generator(intensity) * dt_us).exp()
    }

    /// Stationary populations under constant illumination (`intensity > 0`).
    pub fn steady_state(&self, intensity: f64) -> LevelPopulations {
        let mut a = self.generator(intensity);
        a.row_mut(4).fill(1.0);
        let rhs = Vector5::new(0.0, 0.0, 0.0, 0.0, 1.0);
        let v = a.lu().solve(&rhs).unwrap_or_else(|| LevelPopulations::bright().to_vector());
        LevelPopulations::from_vector(&v)
    }

    /// Photon emission rate per µs for populations `p` (before detection efficiency).
    pub fn emission(&self, p: &LevelPopulations) -> f64 {
        self.radiative_rate_per_us * p.excited()
    }
}

/// Advance populations by `dt_us` at constant relative intensity.
pub fn step_rates(p: &LevelPopulations, m: &RateModel, intensity: f64, dt_us: f64) -> LevelPopulations {
    LevelPopulations::from_vector(&(m.propagator(intensity, dt_us) * p.to_vector()))
}
